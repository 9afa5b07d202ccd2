"""Metropolis-Hastings random walks over channels and bipartite states.

The channel walk moves a unitary u on the enlarged space B A' B'; each
point maps to a Choi matrix through the fixed reference purification,
and with a flat likelihood the walk samples the uniform channel
measure. The state walk moves a pure state on (BP) (x) (B'P') whose
first marginal sigma_BP is the sampled bipartite state.

Both jump kernels are symmetric, so the acceptance probability is just
the likelihood ratio. Step sizes are tuned to a target acceptance rate
during a probe phase and frozen before anything is recorded. Error
bars on histogram bins come from a binning analysis, which inflates
the naive standard error by the chain's autocorrelation.

Each chain owns its RNG and mutable state; chains are merged by a pure
fold over their results, so running them in parallel needs no locks.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .channels import ChannelDims, _choi_unchecked
from .errors import BadParameter, RankDeficient, TooFewSamples, TuningFailed
from .tomodata import BipartiteLikelihood, Dataset, Likelihood, Scheme

STEP_MIN = 1e-8
STEP_MAX = 5.0
TUNE_WINDOW = 256
TUNE_MAX_WINDOWS = 100
REORTH_EVERY = 4096


@dataclass
class WalkerConfig:
    """Knobs for one chain. seed is mandatory: runs must be replayable."""

    jump: str = "eiH"  # eiH | elementary-rotation | sphere-gaussian
    step_size: float = 0.01
    n_inner_iter: int = 10  # elementary-rotation only
    n_therm_sweeps: int = 128
    sweep_size: int = 100
    n_samples: int = 8192
    seed: int = 0
    target_acceptance: float = 0.30
    tune: bool = True

    def __post_init__(self):
        if self.step_size <= 0:
            raise BadParameter("step_size must be positive")
        if self.n_samples < 1:
            raise BadParameter("need at least one sample")
        if self.jump not in ("eiH", "elementary-rotation", "sphere-gaussian"):
            raise BadParameter(f"unknown jump kind {self.jump!r}")


@dataclass
class ChainResult:
    fom_samples: np.ndarray
    acceptance_rate: float
    clamp_events: int
    binning: np.ndarray = None  # per-bin count-scale errors, if edges given
    accepted_counts: np.ndarray = None  # accepted steps between records
    rank_rejects: int = 0
    step_size: float = 0.0


def mh_step(current, log_like, jump, rng, current_ll=None):
    """One Metropolis step with a symmetric proposal.

    Returns (next_point, accepted, next_log_like). Pass the cached
    log-likelihood of the current point to avoid re-evaluating it.
    """
    if current_ll is None:
        current_ll = log_like(current)
    proposal = jump(current, rng)
    prop_ll = log_like(proposal)
    if prop_ll >= current_ll or np.log(rng.random()) < prop_ll - current_ll:
        return proposal, True, prop_ll
    return current, False, current_ll


def propose_eiH(u, step, rng):
    """Left-multiply by e^{iH} with H = N + N*, N entrywise Gaussian.

    Each complex entry of N has standard deviation `step` (real and
    imaginary parts step/sqrt(2) each). The density of H is invariant
    under H -> -H, so the kernel is symmetric.
    """
    d = u.shape[0]
    n = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) * (
        step / np.sqrt(2.0)
    )
    h = n + n.conj().T
    w, v = np.linalg.eigh(h)
    return (v * np.exp(1j * w)) @ v.conj().T @ u


_PAULI_AXES = ("x", "y", "z")


def _rotation_2x2(axis, alpha):
    c, s = np.cos(alpha), np.sin(alpha)
    if axis == 0:  # x
        return np.array([[c, 1j * s], [1j * s, c]])
    if axis == 1:  # y
        return np.array([[c, s], [-s, c]])
    return np.array([[c + 1j * s, 0.0], [0.0, c - 1j * s]])  # z


def propose_elementary_rotation(u, step, n_inner_iter, rng):
    """Left-multiply by a product of random two-level rotations.

    Each factor picks indices i<j and an axis uniformly, draws sin(alpha)
    from a Gaussian of width `step` truncated to [-1, 1], and rotates the
    (i, j) plane by e^{i alpha (e_m . sigma)}. Factors are i.i.d. and
    individually symmetric, so the product kernel is symmetric too.
    """
    d = u.shape[0]
    out = np.array(u, dtype=complex)
    for _ in range(n_inner_iter):
        i, j = sorted(rng.choice(d, size=2, replace=False))
        axis = int(rng.integers(3))
        s = rng.normal(0.0, step)
        while abs(s) > 1.0:
            s = rng.normal(0.0, step)
        rot = _rotation_2x2(axis, np.arcsin(s))
        rows = out[[i, j], :]
        out[[i, j], :] = rot @ rows
    return out


def _reorthonormalize(u):
    # QR projection back onto the unitary group; keeps the point within
    # rounding distance of where the walk left it
    q, r = np.linalg.qr(u)
    ph = np.diag(r).copy()
    ph /= np.abs(ph)
    return q * ph


class _ChannelWalker:
    """Mutable chain state for the channel-space walk."""

    def __init__(self, dims: ChannelDims, likelihood, cfg: WalkerConfig):
        self.dims = dims
        self.like = likelihood  # None means flat (prior sampling)
        self.jump = cfg.jump
        self.n_inner_iter = cfg.n_inner_iter
        self.step_size = cfg.step_size
        self.u = np.eye(dims.d_u, dtype=complex)
        self.choi = _choi_unchecked(self.u, dims)
        self.ll = 0.0 if likelihood is None else likelihood(self.choi)
        self.clamp_events = 0
        self._n_steps = 0

    def _eval(self, choi):
        if self.like is None:
            return 0.0
        ll, clamped = self.like(choi, return_clamped=True)
        self.clamp_events += clamped
        return ll

    def step(self, rng):
        if self.jump == "eiH":
            u_new = propose_eiH(self.u, self.step_size, rng)
        else:
            u_new = propose_elementary_rotation(
                self.u, self.step_size, self.n_inner_iter, rng
            )
        choi_new = _choi_unchecked(u_new, self.dims)
        ll_new = self._eval(choi_new)
        self._n_steps += 1
        if self._n_steps % REORTH_EVERY == 0:
            u_new = _reorthonormalize(u_new)
        if ll_new >= self.ll or np.log(rng.random()) < ll_new - self.ll:
            self.u, self.choi, self.ll = u_new, choi_new, ll_new
            return True
        return False


class _StateWalker:
    """Mutable chain state for the purified bipartite-state walk."""

    def __init__(self, d_sys, likelihood, cfg: WalkerConfig):
        self.d_sys = d_sys  # d_B * d_P
        self.like = likelihood
        self.step_size = cfg.step_size
        psi0 = np.eye(d_sys, dtype=complex).reshape(-1)
        self.psi = psi0 / np.linalg.norm(psi0)
        self.sigma = self._marginal(self.psi)
        self.ll = 0.0 if likelihood is None else likelihood(self.sigma)
        self.clamp_events = 0

    def _marginal(self, psi):
        m = psi.reshape(self.d_sys, self.d_sys)
        return m @ m.conj().T

    def _eval(self, sigma):
        if self.like is None:
            return 0.0
        ll, clamped = self.like(sigma, return_clamped=True)
        self.clamp_events += clamped
        return ll

    def step(self, rng):
        g = rng.standard_normal(self.psi.size) + 1j * rng.standard_normal(self.psi.size)
        psi_new = self.psi + self.step_size * g
        psi_new /= np.linalg.norm(psi_new)
        sigma_new = self._marginal(psi_new)
        ll_new = self._eval(sigma_new)
        if ll_new >= self.ll or np.log(rng.random()) < ll_new - self.ll:
            self.psi, self.sigma, self.ll = psi_new, sigma_new, ll_new
            return True
        return False


def tune_step_size(walker, rng, target=0.30, window=TUNE_WINDOW,
                   max_windows=TUNE_MAX_WINDOWS, step_min=STEP_MIN,
                   step_max=STEP_MAX):
    """Multiplicative step tuning toward a target acceptance rate.

    Runs probe windows, scaling the step by 1.1 up or down until the
    window acceptance lands in target +/- 0.1 or the step pins at a
    bound (a flat target pins at the maximum with acceptance ~1, which
    is fine: mixing is unconstrained there). TuningFailed only if after
    the window budget the rate is still outside [0.05, 0.95].
    """
    acc = None
    streak = 0
    for _ in range(max_windows):
        hits = sum(walker.step(rng) for _ in range(window))
        acc = hits / window
        if abs(acc - target) <= 0.1:
            # demand two in-band windows in a row: the walk drifts toward
            # the likelihood peak while tuning, and a single window can
            # pass on transient acceptance that won't hold at equilibrium
            streak += 1
            if streak >= 2:
                return walker.step_size
            continue
        streak = 0
        if acc > target:
            if walker.step_size >= step_max:
                return walker.step_size
            walker.step_size = min(walker.step_size * 1.1, step_max)
        else:
            if walker.step_size <= step_min:
                break
            walker.step_size = max(walker.step_size / 1.1, step_min)
    if acc is not None and 0.05 <= acc <= 0.95:
        return walker.step_size
    raise TuningFailed(
        f"acceptance {acc} at step {walker.step_size} after {max_windows} windows"
    )


def _run_chain(walker, view_point, fom, cfg: WalkerConfig, bin_edges, resample_on=()):
    """Shared chain driver: tune, thermalize, record one fom per sweep."""
    rng = np.random.default_rng(cfg.seed)
    therm_steps = cfg.n_therm_sweeps * cfg.sweep_size
    if cfg.tune:
        tune_step_size(walker, rng, target=cfg.target_acceptance)
        # keep nudging through thermalization: the tuner's estimate is
        # biased wherever the chain hasn't equilibrated yet, and the
        # recording phase should see the equilibrium acceptance. The
        # step is frozen from the first recorded sample on.
        hits = 0
        seen = 0
        for _ in range(therm_steps):
            hits += walker.step(rng)
            seen += 1
            if seen == TUNE_WINDOW:
                acc = hits / seen
                if acc - cfg.target_acceptance > 0.1:
                    walker.step_size = min(walker.step_size * 1.1, STEP_MAX)
                elif acc - cfg.target_acceptance < -0.1:
                    walker.step_size = max(walker.step_size / 1.1, STEP_MIN)
                hits = 0
                seen = 0
    else:
        for _ in range(therm_steps):
            walker.step(rng)
    samples = np.empty(cfg.n_samples)
    accepted_counts = np.zeros(cfg.n_samples, dtype=int)
    accepted_total = 0
    steps_total = 0
    rank_rejects = 0
    last_value = None
    for i in range(cfg.n_samples):
        acc = 0
        for _ in range(cfg.sweep_size):
            acc += walker.step(rng)
        retry = 0
        while True:
            try:
                if acc == 0 and last_value is not None:
                    value = last_value  # nothing accepted: state unchanged
                else:
                    value = fom(view_point(walker))
                break
            except resample_on:
                rank_rejects += 1
                retry += 1
                if retry > 1000:
                    raise
                acc += sum(walker.step(rng) for _ in range(cfg.sweep_size))
        last_value = value
        samples[i] = value
        accepted_counts[i] = acc
        accepted_total += acc
        steps_total += cfg.sweep_size * (1 + retry)
    binning = None
    if bin_edges is not None and cfg.n_samples >= 128:
        binning = bin_error_bars(samples, bin_edges)
    return ChainResult(
        fom_samples=samples,
        acceptance_rate=accepted_total / max(steps_total, 1),
        clamp_events=walker.clamp_events,
        binning=binning,
        accepted_counts=accepted_counts,
        rank_rejects=rank_rejects,
        step_size=walker.step_size,
    )


def run_channel_chain(ds: Dataset, fom, cfg: WalkerConfig, bin_edges=None):
    """Channel-space chain: returns one figure-of-merit value per sweep.

    Starts from the identity unitary, tunes the step during a probe
    phase, thermalizes, then records. An all-zero-counts dataset gives
    prior (uniform-measure) sampling. Figure failures are re-raised
    with the offending sample index attached.
    """
    if cfg.jump == "sphere-gaussian":
        raise BadParameter("sphere-gaussian is the state walker's jump")
    likelihood = Likelihood(ds) if ds.total_n > 0 else None
    walker = _ChannelWalker(ds.dims, likelihood, cfg)
    try:
        return _run_chain(walker, lambda w: w.choi, fom, cfg, bin_edges)
    except Exception as e:
        _tag_sample_context(e)
        raise


def run_state_chain(ds: Dataset, fom_bipartite, cfg: WalkerConfig, bin_edges=None):
    """Bipartite-state chain over purifications of sigma_BP.

    The figure evaluator may raise RankDeficient on the measure-zero
    set where the ancilla marginal degenerates; such record attempts
    are replaced by continuing the walk, and counted.
    """
    if ds.scheme != Scheme.AA:
        raise BadParameter("state walk needs an ancilla-assisted dataset")
    if cfg.jump != "sphere-gaussian":
        raise BadParameter("state walk uses the sphere-gaussian jump")
    likelihood = BipartiteLikelihood(ds) if ds.total_n > 0 else None
    walker = _StateWalker(ds.dims.d_out * ds.d_probe, likelihood, cfg)
    try:
        return _run_chain(
            walker, lambda w: w.sigma, fom_bipartite, cfg, bin_edges,
            resample_on=(RankDeficient,),
        )
    except Exception as e:
        _tag_sample_context(e)
        raise


def _tag_sample_context(e):
    if isinstance(e, (BadParameter, TuningFailed, TooFewSamples)):
        return
    if e.args and isinstance(e.args[0], str) and not e.args[0].startswith("chain:"):
        e.args = (f"chain: {e.args[0]}",) + e.args[1:]


def binning_analysis(stream, return_levels=False):
    """Standard error of the stream mean, robust to autocorrelation.

    Computes the naive standard error of block means over doubling
    block sizes and reports the plateau: the first level whose error
    changes by less than 5% relative, or the deepest level (log2 N - 4,
    so at least 16 blocks) if the sequence keeps rising.
    """
    x = np.asarray(stream, dtype=float)
    n = x.size
    if n < 128:
        raise TooFewSamples(f"binning analysis needs >= 128 samples, got {n}")
    max_level = int(np.floor(np.log2(n))) - 4
    errors = []
    cur = x
    for _ in range(max_level + 1):
        m = cur.size
        errors.append(float(np.std(cur, ddof=1) / np.sqrt(m)))
        if m // 2 < 2:
            break
        cur = 0.5 * (cur[: 2 * (m // 2) : 2] + cur[1 : 2 * (m // 2) : 2])
    errors = np.array(errors)
    est = errors[-1]
    for lvl in range(1, len(errors)):
        if errors[lvl] == 0.0:
            est = 0.0
            break
        if abs(errors[lvl] - errors[lvl - 1]) < 0.05 * errors[lvl]:
            est = errors[lvl]
            break
    if return_levels:
        return est, errors
    return est


def bin_error_bars(samples, bin_edges):
    """Count-scale error bar per histogram bin via binning analysis.

    Each bin's occupation is a 0/1 stream over the chain; the binning
    error of its mean, scaled by the number of samples, is the error on
    the bin count.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    errs = np.empty(len(bin_edges) - 1)
    for k in range(len(bin_edges) - 1):
        hi_edge = bin_edges[k + 1]
        ind = (samples >= bin_edges[k]) & (
            (samples < hi_edge) if k < len(bin_edges) - 2 else (samples <= hi_edge)
        )
        errs[k] = n * binning_analysis(ind.astype(float))
    return errs


@dataclass
class Histogram:
    """Figure-of-merit histogram with binning-analysis error bars.

    counts and errors are on the count scale; density is normalized so
    that sum(density * bin width) = 1 over the histogram range.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    errors: np.ndarray

    @property
    def density(self):
        total = self.counts.sum()
        widths = np.diff(self.bin_edges)
        return self.counts / (total * widths)

    @property
    def density_errors(self):
        total = self.counts.sum()
        widths = np.diff(self.bin_edges)
        return self.errors / (total * widths)

    @property
    def centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def merge_chains(results, bin_edges):
    """Fold chain results into one histogram; errors add in quadrature."""
    bin_edges = np.asarray(bin_edges, dtype=float)
    counts = np.zeros(len(bin_edges) - 1)
    sq_err = np.zeros(len(bin_edges) - 1)
    for r in results:
        c, _ = np.histogram(r.fom_samples, bins=bin_edges)
        counts += c
        err = r.binning if r.binning is not None else bin_error_bars(r.fom_samples, bin_edges)
        sq_err += np.asarray(err) ** 2
    return Histogram(bin_edges, counts, np.sqrt(sq_err))


def auto_bin_edges(results, n_bins=50, pad=1e-9):
    """Common bin edges covering every chain's samples."""
    lo = min(float(np.min(r.fom_samples)) for r in results)
    hi = max(float(np.max(r.fom_samples)) for r in results)
    if hi - lo < 1e-12:
        lo, hi = lo - 1e-6, hi + 1e-6
    return np.linspace(lo - pad, hi + pad, n_bins + 1)


def save_chain_csv(result: ChainResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", "fom_value", "accepted_count_since_last"])
        for i, (v, a) in enumerate(zip(result.fom_samples, result.accepted_counts)):
            w.writerow([i, repr(float(v)), int(a)])


def save_histogram_csv(hist: Histogram, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count", "error", "normalized_density"])
        dens = hist.density
        for k in range(len(hist.counts)):
            w.writerow(
                [
                    repr(float(hist.bin_edges[k])),
                    repr(float(hist.bin_edges[k + 1])),
                    repr(float(hist.counts[k])),
                    repr(float(hist.errors[k])),
                    repr(float(dens[k])),
                ]
            )


def load_histogram_csv(path):
    lo, hi, counts, errors = [], [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            lo.append(float(row["bin_lo"]))
            hi.append(float(row["bin_hi"]))
            counts.append(float(row["count"]))
            errors.append(float(row["error"]))
    edges = np.array(lo + [hi[-1]])
    return Histogram(edges, np.array(counts), np.array(errors))
