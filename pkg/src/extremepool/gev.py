"""Generalized Extreme Value distribution: density/CDF/quantile, maximum
likelihood fitting, delta-method return levels, sampling and the
Kolmogorov-Smirnov goodness-of-fit test.

Parametrization: location mu, scale sigma > 0, shape xi, with
``F(x) = exp(-[1 + xi*(x-mu)/sigma]**(-1/xi))`` on its support and the
Gumbel limit ``exp(-exp(-(x-mu)/sigma))`` for |xi| below GUMBEL_SWITCH.
Positive xi is the heavy-tailed (Frechet) branch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit, prange
from scipy.special import kolmogorov
from scipy.stats import norm

from .errors import CIWarning, EstimationError, SampleSizeWarning, ShapeBoundWarning

# |xi| below this uses the Gumbel branch; avoids cancellation in (.)**(-1/xi).
GUMBEL_SWITCH = 1e-8
# Large-negative finite stand-in for -inf log-likelihood, so the simplex
# can recover from support violations.
LOGLIK_FLOOR = -1e300

# Nelder-Mead settings for fit_gev_mle.
NM_MAX_ITER = 2000
NM_TOL_REL = 1e-10

# Fits on fewer maxima than this are returned flagged non-converged.
MIN_FIT_SIZE = 20

_HESS_COND_LIMIT = 1e12


@dataclass(frozen=True)
class GevParams:
    """GEV parameter triple (mm units for location/scale)."""

    location: float
    scale: float
    shape: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.location):
            raise ValueError(f"location must be finite, got {self.location}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if not np.isfinite(self.shape):
            raise ValueError(f"shape must be finite, got {self.shape}")
        if abs(self.shape) >= 0.5:
            warnings.warn(
                f"|shape| = {abs(self.shape):.3f} >= 0.5: MLE variance is "
                "unreliable this far from zero",
                ShapeBoundWarning,
                stacklevel=2,
            )


@dataclass(frozen=True, eq=False)
class GevFit:
    """Maximum-likelihood fit result with parameter covariance.

    ``covariance`` rows/columns are ordered (location, scale, shape).
    ``converged`` is False when the optimizer, the Hessian conditioning or
    the sample size is not trustworthy; downstream consumers must refuse
    such fits rather than silently proceed.
    """

    params: GevParams
    covariance: np.ndarray
    log_likelihood: float
    n_samples: int
    converged: bool
    n_iterations: int

    def __post_init__(self) -> None:
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (3, 3):
            raise ValueError("covariance must be a 3x3 matrix")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-8 * (1.0 + np.abs(cov).max())):
            raise ValueError("covariance must be symmetric")
        if np.any(np.diag(cov) < 0):
            raise ValueError("covariance diagonal must be nonnegative")
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class ReturnLevelEstimate:
    """T-year return level with a symmetric confidence interval."""

    return_period: float
    level: float
    ci_low: float
    ci_high: float
    confidence: float = 0.95
    method: str = "delta"

    def __post_init__(self) -> None:
        if not self.return_period > 1:
            raise ValueError("return period must exceed 1 year")
        if not (self.ci_low <= self.level <= self.ci_high):
            raise ValueError("interval must contain the level estimate")

    @property
    def width(self) -> float:
        return self.ci_high - self.ci_low


@dataclass(frozen=True)
class KsResult:
    """One-sample Kolmogorov-Smirnov outcome against a fixed GEV."""

    statistic: float
    p_value: float
    passed: bool
    alpha: float = 0.05

    def __post_init__(self) -> None:
        if self.passed != (self.p_value > self.alpha):
            raise ValueError("passed must equal (p_value > alpha)")


def _as_sample(sample) -> np.ndarray:
    arr = np.asarray(sample, dtype=float)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size == 0:
        raise ValueError("sample must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("sample must be finite")
    return arr


def gev_cdf(x, params: GevParams):
    """CDF at ``x`` (scalar or array), honoring the support boundaries."""
    z = (np.asarray(x, dtype=float) - params.location) / params.scale
    xi = params.shape
    if abs(xi) < GUMBEL_SWITCH:
        out = np.exp(-np.exp(-z))
    else:
        t = xi * z
        inside = t > -1.0
        # below the lower endpoint for xi>0, above the upper endpoint for xi<0
        outside_value = 0.0 if xi > 0 else 1.0
        safe = np.where(inside, t, 0.0)
        out = np.where(inside, np.exp(-np.exp(-np.log1p(safe) / xi)), outside_value)
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def gev_quantile(p, params: GevParams):
    """Quantile function; inverse of :func:`gev_cdf` on (0, 1)."""
    parr = np.asarray(p, dtype=float)
    if np.any(parr <= 0.0) or np.any(parr >= 1.0):
        raise ValueError("probability must lie strictly inside (0, 1)")
    loglog = np.log(-np.log(parr))
    xi = params.shape
    if abs(xi) < GUMBEL_SWITCH:
        out = params.location - params.scale * loglog
    else:
        out = params.location + params.scale * np.expm1(-xi * loglog) / xi
    return float(out) if np.isscalar(p) or np.ndim(p) == 0 else out


@njit(cache=True)
def _negloglik(mu: float, sigma: float, xi: float, x: np.ndarray) -> float:
    """Negative GEV log-likelihood; 1e300 outside the support."""
    n = x.shape[0]
    if not sigma > 0.0:
        return 1e300
    if abs(xi) < GUMBEL_SWITCH:
        s_lin = 0.0
        s_exp = 0.0
        for i in range(n):
            z = (x[i] - mu) / sigma
            s_lin += z
            s_exp += np.exp(-z)
        total = n * np.log(sigma) + s_lin + s_exp
    else:
        inv_xi = 1.0 / xi
        s_log = 0.0
        s_pow = 0.0
        for i in range(n):
            t = xi * (x[i] - mu) / sigma
            if t <= -1.0:
                return 1e300
            lt = np.log1p(t)
            s_log += lt
            s_pow += np.exp(-inv_xi * lt)
        total = n * np.log(sigma) + (1.0 + inv_xi) * s_log + s_pow
    if not np.isfinite(total):
        return 1e300
    return total


@njit(cache=True)
def _nm_minimize(x: np.ndarray, p0: np.ndarray, steps: np.ndarray):
    """Nelder-Mead on (mu, log sigma, xi).

    Stops when the simplex function-value spread drops below NM_TOL_REL
    relative to the best value, or after NM_MAX_ITER iterations.
    Returns (mu, sigma, xi, min_negloglik, n_iterations, converged).
    """
    sim = np.empty((4, 3))
    fv = np.empty(4)
    for k in range(4):
        for j in range(3):
            sim[k, j] = p0[j]
        if k > 0:
            sim[k, k - 1] += steps[k - 1]
    for k in range(4):
        fv[k] = _negloglik(sim[k, 0], np.exp(sim[k, 1]), sim[k, 2], x)

    n_iter = 0
    converged = False
    while n_iter < NM_MAX_ITER:
        order = np.argsort(fv)
        sim = sim[order]
        fv = fv[order]
        if fv[3] - fv[0] <= NM_TOL_REL * max(1.0, abs(fv[0])):
            converged = True
            break
        n_iter += 1
        cen = (sim[0] + sim[1] + sim[2]) / 3.0
        xr = cen + (cen - sim[3])
        fr = _negloglik(xr[0], np.exp(xr[1]), xr[2], x)
        if fr < fv[0]:
            xe = cen + 2.0 * (cen - sim[3])
            fe = _negloglik(xe[0], np.exp(xe[1]), xe[2], x)
            if fe < fr:
                sim[3] = xe
                fv[3] = fe
            else:
                sim[3] = xr
                fv[3] = fr
        elif fr < fv[2]:
            sim[3] = xr
            fv[3] = fr
        else:
            shrink = False
            if fr < fv[3]:
                xc = cen + 0.5 * (xr - cen)
                fc = _negloglik(xc[0], np.exp(xc[1]), xc[2], x)
                if fc <= fr:
                    sim[3] = xc
                    fv[3] = fc
                else:
                    shrink = True
            else:
                xc = cen + 0.5 * (sim[3] - cen)
                fc = _negloglik(xc[0], np.exp(xc[1]), xc[2], x)
                if fc < fv[3]:
                    sim[3] = xc
                    fv[3] = fc
                else:
                    shrink = True
            if shrink:
                for k in range(1, 4):
                    sim[k] = sim[0] + 0.5 * (sim[k] - sim[0])
                    fv[k] = _negloglik(sim[k, 0], np.exp(sim[k, 1]), sim[k, 2], x)

    best = np.argmin(fv)
    return sim[best, 0], np.exp(sim[best, 1]), sim[best, 2], fv[best], n_iter, converged


@njit(cache=True, parallel=True)
def _refit_batch(samples: np.ndarray, p0: np.ndarray, steps: np.ndarray):
    """Fit each row of ``samples`` from the same warm start (bootstrap path).

    Rows are independent problems written to disjoint output slots, so the
    result does not depend on the thread schedule.
    """
    n_fits = samples.shape[0]
    out = np.empty((n_fits, 3))
    ok = np.empty(n_fits, np.bool_)
    for b in prange(n_fits):
        mu, sigma, xi, _, _, conv = _nm_minimize(samples[b], p0, steps)
        out[b, 0] = mu
        out[b, 1] = sigma
        out[b, 2] = xi
        ok[b] = conv
    return out, ok


def gev_loglik(params: GevParams, sample) -> float:
    """Log-likelihood of ``sample``; LOGLIK_FLOOR outside the support."""
    arr = _as_sample(sample)
    nll = _negloglik(params.location, params.scale, params.shape, arr)
    if nll >= 1e300:
        return LOGLIK_FLOOR
    return -float(nll)


def gev_sample(params: GevParams, n: int, seed: int) -> np.ndarray:
    """``n`` inverse-CDF draws from a PCG64 stream seeded with ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    u = rng.random(int(n))
    # keep the uniforms strictly inside (0, 1) for the quantile transform
    tiny = 2.0**-53
    return gev_quantile(np.clip(u, tiny, 1.0 - tiny), params)


def _fd_hessian(mu: float, sigma: float, xi: float, x: np.ndarray) -> np.ndarray:
    """Central finite-difference Hessian of the negative log-likelihood,
    in (mu, sigma, xi) space."""
    theta = np.array([mu, sigma, xi])
    h = np.maximum(1e-5, 1e-5 * np.abs(theta))

    def f(t):
        return _negloglik(t[0], t[1], t[2], x)

    hess = np.empty((3, 3))
    f0 = f(theta)
    for i in range(3):
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += h[i]
        tm[i] -= h[i]
        hess[i, i] = (f(tp) - 2.0 * f0 + f(tm)) / h[i] ** 2
    for i in range(3):
        for j in range(i + 1, 3):
            tpp = theta.copy()
            tpm = theta.copy()
            tmp = theta.copy()
            tmm = theta.copy()
            tpp[[i, j]] += h[[i, j]]
            tpm[i] += h[i]
            tpm[j] -= h[j]
            tmp[i] -= h[i]
            tmp[j] += h[j]
            tmm[[i, j]] -= h[[i, j]]
            hess[i, j] = hess[j, i] = (f(tpp) - f(tpm) - f(tmp) + f(tmm)) / (
                4.0 * h[i] * h[j]
            )
    return hess


def _covariance_from_hessian(hess: np.ndarray) -> tuple[np.ndarray, bool]:
    """Invert the observed-information matrix.

    Returns (covariance, trustworthy). A Hessian that is not positive
    definite, or conditioned worse than _HESS_COND_LIMIT, falls back to an
    absolute-eigenvalue pseudo-inverse (keeps the diagonal nonnegative) and
    is flagged untrustworthy.
    """
    hess = 0.5 * (hess + hess.T)
    if not np.all(np.isfinite(hess)):
        return np.zeros((3, 3)), False
    eigvals, eigvecs = np.linalg.eigh(hess)
    if eigvals[0] > 0.0 and eigvals[-1] / eigvals[0] <= _HESS_COND_LIMIT:
        cov = eigvecs @ np.diag(1.0 / eigvals) @ eigvecs.T
        return 0.5 * (cov + cov.T), True
    mags = np.abs(eigvals)
    floor = mags.max() / _HESS_COND_LIMIT if mags.max() > 0 else 1.0
    cov = eigvecs @ np.diag(1.0 / np.maximum(mags, floor)) @ eigvecs.T
    return 0.5 * (cov + cov.T), False


def fit_gev_mle(sample, start: GevParams | None = None) -> GevFit:
    """Fit a GEV by maximum likelihood.

    Nelder-Mead simplex over (mu, log sigma, xi), started from Gumbel
    moment estimates (or ``start`` when given, e.g. for bootstrap refits).
    The sample is pre-sorted so the result depends only on the multiset of
    values. The covariance is the inverse finite-difference Hessian of the
    negative log-likelihood at the optimum.

    Raises EstimationError on a zero-variance sample. Samples smaller than
    MIN_FIT_SIZE are fitted but returned with ``converged=False`` and a
    SampleSizeWarning so pipelines can count them.
    """
    arr = np.sort(_as_sample(sample))
    n = arr.size
    if arr[0] == arr[-1]:
        raise EstimationError("zero variance: all sample values are equal")

    if start is not None:
        p0 = np.array([start.location, np.log(start.scale), start.shape])
        steps = np.array([0.02 * start.scale, 0.02, 0.02])
    else:
        sd = float(np.std(arr, ddof=1))
        sigma0 = np.sqrt(6.0) * sd / np.pi
        mu0 = float(np.mean(arr)) - 0.5772 * sigma0
        p0 = np.array([mu0, np.log(sigma0), 0.1])
        steps = np.array([0.1 * sigma0, 0.1, 0.1])
    if _negloglik(p0[0], np.exp(p0[1]), p0[2], arr) >= 1e300:
        # moment start outside the support; the Gumbel slice never is
        p0[2] = 0.0

    mu, sigma, xi, nll, n_iter, nm_ok = _nm_minimize(arr, p0, steps)

    cov, hess_ok = _covariance_from_hessian(_fd_hessian(mu, sigma, xi, arr))
    size_ok = n >= MIN_FIT_SIZE
    if not size_ok:
        warnings.warn(
            f"sample of {n} maxima is below the minimum of {MIN_FIT_SIZE}; "
            "fit flagged non-converged",
            SampleSizeWarning,
            stacklevel=2,
        )
    return GevFit(
        params=GevParams(float(mu), float(sigma), float(xi)),
        covariance=cov,
        log_likelihood=-float(nll),
        n_samples=int(n),
        converged=bool(nm_ok and hess_ok and size_ok),
        n_iterations=int(n_iter),
    )


def _rl_gradient(params: GevParams, T: float) -> np.ndarray:
    """Gradient of the T-year return level in (mu, sigma, xi)."""
    y = -np.log(1.0 - 1.0 / T)
    logy = np.log(y)
    xi = params.shape
    if abs(xi) < GUMBEL_SWITCH:
        return np.array([1.0, -logy, 0.5 * params.scale * logy**2])
    ypow = y**-xi
    d_sigma = -(1.0 - ypow) / xi
    d_xi = params.scale * (1.0 - ypow) / xi**2 - params.scale * ypow * logy / xi
    return np.array([1.0, d_sigma, d_xi])


def return_level(fit: GevFit, T: float, confidence: float = 0.95) -> ReturnLevelEstimate:
    """T-year return level with a delta-method confidence interval."""
    if not fit.converged:
        raise EstimationError("return level requested from a non-converged fit")
    if not T > 1:
        raise ValueError("return period must exceed 1 year")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    level = gev_quantile(1.0 - 1.0 / T, fit.params)
    grad = _rl_gradient(fit.params, T)
    var = float(grad @ fit.covariance @ grad)
    if var < 0.0:
        warnings.warn(
            f"negative delta-method variance {var:.3e} clamped to zero",
            CIWarning,
            stacklevel=2,
        )
        var = 0.0
    half = norm.ppf(1.0 - (1.0 - confidence) / 2.0) * np.sqrt(var)
    return ReturnLevelEstimate(
        return_period=float(T),
        level=float(level),
        ci_low=float(level - half),
        ci_high=float(level + half),
        confidence=float(confidence),
        method="delta",
    )


def ks_test(sample, params: GevParams, alpha: float = 0.05) -> KsResult:
    """One-sample KS test of ``sample`` against a fully specified GEV.

    D is the supremum distance between the empirical step function and the
    model CDF; the p-value uses the asymptotic Kolmogorov distribution of
    sqrt(n)*D.
    """
    arr = np.sort(_as_sample(sample))
    n = arr.size
    cdf_vals = gev_cdf(arr, params)
    i = np.arange(1, n + 1, dtype=float)
    d_plus = np.max(i / n - cdf_vals)
    d_minus = np.max(cdf_vals - (i - 1.0) / n)
    stat = float(max(d_plus, d_minus))
    p = float(min(1.0, max(0.0, kolmogorov(np.sqrt(n) * stat))))
    return KsResult(statistic=stat, p_value=p, passed=bool(p > alpha), alpha=float(alpha))
