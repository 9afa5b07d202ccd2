"""From histogram to rigorous statement: fit models, quantum error
bars, symmetric-subspace combinatorics, enlargement widths, weight
thresholds, tail quantiles, and the final confidence interval.

Everything here is deterministic arithmetic on fitted densities. The
probability weights involved are astronomically close to one (the
complements run to 10^-150 and below), so every computation stays in
log space; quantities like 1 - 10^-151 are never materialized.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln, log_ndtr, logsumexp

from .errors import BadParameter, DegenerateFit, InsufficientBins, TargetUnreachable

LN10 = math.log(10.0)

MODEL_ONE = 1
MODEL_TWO = 2


@dataclass(frozen=True)
class RegionParams:
    """Inputs of the delta-enlargement and weight-threshold formulas.

    method is "state" or "channel"; they differ in the power of the
    symmetric-subspace dimension. binom_mode "exact" evaluates the
    binomial via log-gamma, "upper-bound" uses (n+1)^(d-1). log10_compat
    additionally evaluates the delta formula with base-10 logarithms,
    which is how the published worked example's delta = 0.1 arises; it
    is not the natural-log default.
    """

    n: int
    eps: float
    d2ab: int
    method: str = "channel"
    binom_mode: str = "exact"
    log10_compat: bool = False

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise BadParameter("eps must be in (0, 1)")
        if self.method not in ("state", "channel"):
            raise BadParameter(f"unknown method {self.method!r}")
        if self.binom_mode not in ("exact", "upper-bound"):
            raise BadParameter(f"unknown binom mode {self.binom_mode!r}")
        if self.n <= 0 or self.d2ab < 1:
            raise BadParameter("n and d2ab must be positive")


def log_sym_dim(n, d, mode="exact"):
    """ln of the symmetric-subspace dimension binom(n+d-1, d-1).

    exact mode goes through log-gamma so n = 10^6 is fine; upper-bound
    mode returns (d-1) ln(n+1), the standard overcount.
    """
    if n < 0 or d < 1:
        raise BadParameter("need n >= 0 and d >= 1")
    if mode == "upper-bound":
        return (d - 1) * math.log(n + 1)
    if mode != "exact":
        raise BadParameter(f"unknown mode {mode!r}")
    return gammaln(n + d) - gammaln(n + 1) - gammaln(d)


def enlargement_delta(rp: RegionParams):
    """Purified-distance enlargement width.

    delta = sqrt((2/n)(ln(2/eps) + k ln s_{2n, d2ab})) with k = 2 for
    the state method and 3 for the channel method. In log10_compat mode
    the logarithms are base 10, reproducing the published 0.1.
    """
    k = 2 if rp.method == "state" else 3
    ln_s = log_sym_dim(2 * rp.n, rp.d2ab, rp.binom_mode)
    ln_term = math.log(2.0 / rp.eps)
    if rp.log10_compat:
        ln_s /= LN10
        ln_term /= LN10
    return math.sqrt((2.0 / rp.n) * (ln_term + k * ln_s))


def weight_threshold(rp: RegionParams):
    """log10 of the tail weight the fitted density must not exceed.

    Returns log10(eps/2) - j log10(s_{2n, d2ab}), j = 1 (state) or
    2 (channel). The required weight itself, 1 - 10^threshold, is far
    too close to one for floating point and is never formed.
    """
    j = 1 if rp.method == "state" else 2
    log10_s = log_sym_dim(2 * rp.n, rp.d2ab, rp.binom_mode) / LN10
    return math.log10(rp.eps / 2.0) - j * log10_s


# ---------------------------------------------------------------------------
# histogram fits

@dataclass(frozen=True)
class FitParams:
    """ln mu(v) = -a2 v^2 - a1 v + m g(v) + c, g = ln v (model one) or
    sign(ln v)|ln v|^p (model two, which reduces to model one at p=1)."""

    model: int
    a2: float
    a1: float
    m: float
    c: float
    p: float = None
    reduced_chi2: float = float("nan")

    def __post_init__(self):
        if self.model not in (MODEL_ONE, MODEL_TWO):
            raise BadParameter("model must be 1 or 2")
        if self.model == MODEL_TWO and self.p is None:
            raise BadParameter("model two needs the exponent p")

    def log_density(self, v):
        """Unnormalized log density at v (vectorized)."""
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lnv = np.log(v)
            if self.model == MODEL_ONE:
                g = lnv
            else:
                g = np.sign(lnv) * np.abs(lnv) ** self.p
        out = -self.a2 * v * v - self.a1 * v + self.m * g + self.c
        return np.where(v > 0, out, -np.inf)


def _fit_rows(hist):
    counts = np.asarray(hist.counts, dtype=float)
    keep = counts > 0
    v = hist.centers[keep]
    pos = v > 0
    keep_idx = np.flatnonzero(keep)[pos]
    v = v[pos]
    y = np.log(np.asarray(hist.density)[keep_idx])
    err = np.asarray(hist.errors, dtype=float)[keep_idx]
    cnt = counts[keep_idx]
    sigma = err / cnt  # delta method: d(ln x) = dx / x
    fallback = np.median(sigma[sigma > 0]) if np.any(sigma > 0) else 1.0
    sigma = np.where(sigma > 0, sigma, fallback)
    return v, y, sigma, cnt


def _weighted_lsq(design, y, sigma):
    w = 1.0 / sigma
    beta, *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)
    resid = (design @ beta - y) / sigma
    return beta, float(np.sum(resid**2))


def fit_histogram(hist, model=MODEL_ONE):
    """Weighted least squares of the log density against the fit model.

    Bin errors from the binning analysis are propagated to log space as
    error/count; empty bins are excluded. Model two wraps the linear
    solve in a golden-section search over the exponent p in [0.5, 3].
    """
    v, y, sigma, cnt = _fit_rows(hist)
    need = 6 if model == MODEL_ONE else 8
    if np.count_nonzero(cnt >= 10) < need:
        raise InsufficientBins(
            f"model {model} needs {need} bins with >= 10 counts"
        )
    npar = 4 if model == MODEL_ONE else 5
    dof = max(len(v) - npar, 1)
    lnv = np.log(v)

    def design_for(p):
        g = lnv if p is None else np.sign(lnv) * np.abs(lnv) ** p
        return np.column_stack([-(v**2), -v, g, np.ones_like(v)])

    if model == MODEL_ONE:
        beta, chi2 = _weighted_lsq(design_for(None), y, sigma)
        p = None
    else:
        def chi2_of(p):
            _, val = _weighted_lsq(design_for(p), y, sigma)
            return val

        res = minimize_scalar(chi2_of, bounds=(0.5, 3.0), method="bounded",
                              options={"xatol": 1e-4})
        p = float(res.x)
        beta, chi2 = _weighted_lsq(design_for(p), y, sigma)
    a2, a1, m, c = (float(b) for b in beta)
    if a2 <= 0:
        raise DegenerateFit(f"fitted a2 = {a2:.3e} <= 0, tail not integrable")
    return FitParams(model, a2, a1, m, c, p, reduced_chi2=chi2 / dof)


@dataclass(frozen=True)
class QuantumErrorBars:
    """Peak position, width at relative height 1/e, and skewness."""

    v0: float
    delta: float
    gamma: float


def quantum_error_bars(fp: FitParams):
    """Closed-form summary of a model-one fit.

    v0 solves the stationarity condition 2 a2 v^2 + a1 v - m = 0;
    delta and gamma are the second- and third-order shape coefficients
    of ln mu around v0.
    """
    if fp.model != MODEL_ONE:
        raise BadParameter("quantum error bars are defined for model one")
    if fp.a2 <= 0:
        raise DegenerateFit("a2 must be positive")
    disc = fp.a1 * fp.a1 + 8.0 * fp.a2 * fp.m
    if disc < 0:
        raise DegenerateFit("no real peak position: a1^2 + 8 a2 m < 0")
    v0 = (-fp.a1 + math.sqrt(disc)) / (4.0 * fp.a2)
    if v0 <= 0:
        raise DegenerateFit(f"peak position {v0:.3e} <= 0")
    delta = (fp.a2 + fp.m / (2.0 * v0 * v0)) ** -0.5
    gamma = fp.m * delta**4 / (6.0 * v0**3)
    return QuantumErrorBars(v0=v0, delta=delta, gamma=gamma)


# ---------------------------------------------------------------------------
# tail quantiles, entirely in log space

_GRID = 16384


def _grid_peak(fp: FitParams, lo, hi):
    v = np.linspace(lo, hi, _GRID)
    ell = fp.log_density(v)
    i = int(np.argmax(ell))
    return v[i], float(ell[i])


def _gauss_scale(fp: FitParams):
    return 1.0 / math.sqrt(2.0 * fp.a2)


def _log_integral_grid(fp: FitParams, lo, hi, n=_GRID):
    """log of the integral of the fitted density over [lo, hi] by
    log-sum-exp trapezoid; exact to quadrature error at any depth."""
    if hi <= lo:
        return -np.inf
    v = np.linspace(lo, hi, n)
    ell = fp.log_density(v)
    dt = (hi - lo) / (n - 1)
    wts = np.full(n, dt)
    wts[0] = wts[-1] = dt / 2.0
    return float(logsumexp(ell, b=wts))


def _log_remainder_beyond(fp: FitParams, t):
    """log of the integral over [t, inf) with the g-term linearized at t.

    The remainder only matters when it is hundreds of e-folds below the
    quantities it is added to, so the linearization error is immaterial;
    the closed Gaussian form with the complementary error function in
    log form keeps it finite at any depth.
    """
    h = 1e-6 * max(t, 1.0)
    g_t = float(fp.log_density(t) + fp.a2 * t * t + fp.a1 * t - fp.c)
    g_slope = (
        float(fp.log_density(t + h) + fp.a2 * (t + h) ** 2 + fp.a1 * (t + h) - fp.c)
        - g_t
    ) / h
    a = fp.a2
    b = fp.a1 - g_slope
    z = math.sqrt(a) * t + b / (2.0 * math.sqrt(a))
    log_erfc = math.log(2.0) + log_ndtr(-z * math.sqrt(2.0))
    return (
        fp.c
        + g_t
        - g_slope * t
        + 0.5 * math.log(math.pi / a)
        - math.log(2.0)
        + b * b / (4.0 * a)
        + log_erfc
    )


def _check_left_integrable(fp: FitParams):
    if fp.model == MODEL_ONE:
        if fp.m <= -1.0:
            raise TargetUnreachable("density is not integrable at v -> 0")
    elif fp.m < 0:
        raise TargetUnreachable("density is not integrable at v -> 0")


def _log_upper_tail(fp, gamma, span):
    body = _log_integral_grid(fp, gamma, gamma + span)
    return np.logaddexp(body, _log_remainder_beyond(fp, gamma + span))


def _log_lower_tail(fp, gamma):
    lo = max(gamma * 1e-9, 1e-300)
    return _log_integral_grid(fp, lo, gamma)


def tail_quantile(fp: FitParams, target_log10, direction="upper", tol=1e-4):
    """Position gamma_E whose tail holds a 10^target_log10 fraction.

    direction "upper": smallest gamma with the mass of [gamma, inf)
    at most 10^target relative to the whole curve (diamond-distance
    style, where large values are bad). direction "lower": mirrored,
    largest gamma with the mass of (0, gamma] at most the target
    (fidelity style). Bisection on gamma to 1e-4; all mass arithmetic
    in natural logs, the target converted from log10.
    """
    if target_log10 > 0:
        raise BadParameter("target must be a log10 of a probability")
    if fp.a2 <= 0:
        raise DegenerateFit("a2 must be positive for an integrable tail")
    if direction not in ("upper", "lower"):
        raise BadParameter(f"unknown direction {direction!r}")
    scale = _gauss_scale(fp)
    peak_v, _ = _grid_peak(fp, scale * 1e-6, max(1.0, 10.0 * scale))
    hi0 = peak_v + 60.0 * scale
    log_total = np.logaddexp(
        _log_integral_grid(fp, 1e-300 if peak_v > 1e-12 else 1e-15, hi0),
        _log_remainder_beyond(fp, hi0),
    )
    target_ln = target_log10 * LN10

    if direction == "upper":
        span = 60.0 * scale

        def excess(gamma):
            return _log_upper_tail(fp, gamma, span) - log_total - target_ln

        lo = 0.0
        if target_log10 == 0.0:
            return 0.0
        hi = peak_v + scale
        while excess(hi) > 0:
            hi = 2.0 * hi + scale
            if hi > 1e6:
                raise TargetUnreachable("upper tail never reaches the target")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if excess(mid) > 0:
                lo = mid
            else:
                hi = mid
        return hi

    _check_left_integrable(fp)

    def excess(gamma):
        return _log_lower_tail(fp, gamma) - log_total - target_ln

    if target_log10 == 0.0:
        return float(hi0)
    lo, hi = 0.0, peak_v
    if excess(hi) < 0:
        # even the whole left half is below target; quantile sits right
        # of the peak, keep doubling toward the upper support edge
        while excess(hi) < 0 and hi < 1e6:
            hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# final report

@dataclass(frozen=True)
class ConfidenceReport:
    figure: str
    method: str
    n: int
    eps: float
    binom_mode: str
    delta: float
    gamma_e: float
    interval: tuple
    fit: FitParams
    qeb: QuantumErrorBars = None
    threshold_log10: float = float("nan")

    def to_json(self):
        fit = {
            "model": self.fit.model,
            "a2": self.fit.a2,
            "a1": self.fit.a1,
            "m": self.fit.m,
            "c": self.fit.c,
            "reduced_chi2": self.fit.reduced_chi2,
        }
        if self.fit.p is not None:
            fit["p"] = self.fit.p
        doc = {
            "figure": self.figure,
            "method": self.method,
            "n": self.n,
            "eps": self.eps,
            "binom_mode": self.binom_mode,
            "delta": self.delta,
            "gamma_E": self.gamma_e,
            "interval": [self.interval[0], self.interval[1]],
            "fit": fit,
            "threshold_log10": self.threshold_log10,
        }
        if self.qeb is not None:
            doc["qeb"] = {
                "v0": self.qeb.v0,
                "delta": self.qeb.delta,
                "gamma": self.qeb.gamma,
            }
        return doc


def assemble_report(fp: FitParams, rp: RegionParams, figure_kind, d_a,
                    qeb: QuantumErrorBars = None):
    """Turn a fitted density into the final confidence interval.

    Diamond distance: [0, gamma_E + d_A delta / 2], upper tail. The
    fidelity figures use the mirrored lower tail and [gamma_E -
    d_A delta, 1]; plain entanglement fidelity reuses the worst-case
    bound, which is conservative for it.
    """
    threshold = weight_threshold(rp)
    delta = enlargement_delta(rp)
    if figure_kind == "diamond-distance":
        gamma_e = tail_quantile(fp, threshold, direction="upper")
        interval = (0.0, min(1.0, gamma_e + d_a * delta / 2.0))
    else:
        gamma_e = tail_quantile(fp, threshold, direction="lower")
        interval = (max(0.0, gamma_e - d_a * delta), 1.0)
    return ConfidenceReport(
        figure=figure_kind,
        method=rp.method,
        n=rp.n,
        eps=rp.eps,
        binom_mode=rp.binom_mode,
        delta=delta,
        gamma_e=gamma_e,
        interval=interval,
        fit=fp,
        qeb=qeb,
        threshold_log10=threshold,
    )
