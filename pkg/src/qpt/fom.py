"""Figures of merit on channels: diamond distance to a reference,
entanglement fidelity, and worst-case entanglement fidelity.

The two SDP-backed figures are exposed both as one-off functions and as
evaluator objects meant to be called once per Monte Carlo sample. The
diamond program's constraint structure is fixed by the dimensions, so
its evaluator keeps one cached factorization and warm-starts every
solve from the previous sample's solution; the worst-case-fidelity
program has the channel inside the constraint matrix and is rebuilt per
call.

Values are clipped into [0, 1] when they land within solver tolerance
of the boundary; downstream histogram code assumes that codomain.
"""

from dataclasses import dataclass

import numpy as np

from . import qmat, sdpcore
from .channels import ChannelDims, bipartite_to_channel, choi_constraint_residuals, maximally_entangled
from .errors import BadParameter, DimensionMismatch, SolverFailure

CLIP_TOL = 1e-5

DIAMOND = "diamond-distance"
ENT_FID = "entanglement-fidelity"
WORST_FID = "worst-entanglement-fidelity"


@dataclass(frozen=True)
class FigureSpec:
    """Which figure to compute, plus the reference channel for diamond."""

    kind: str
    reference: np.ndarray = None

    def __post_init__(self):
        if self.kind not in (DIAMOND, ENT_FID, WORST_FID):
            raise BadParameter(f"unknown figure kind {self.kind!r}")
        if self.kind == DIAMOND and self.reference is None:
            raise BadParameter("diamond distance needs a reference channel")

    @property
    def direction(self):
        return "smaller-better" if self.kind == DIAMOND else "larger-better"


def _clip(v):
    if -CLIP_TOL <= v < 0.0:
        return 0.0
    if 1.0 < v <= 1.0 + CLIP_TOL:
        return 1.0
    return float(v)


def _check_choi(choi, dims):
    herm, mineig, tr, marg = choi_constraint_residuals(choi, dims)
    if max(herm, -mineig, tr, marg) > 1e-6:
        raise BadParameter(
            f"not a Choi matrix (herm {herm:.2e}, min eig {mineig:.2e}, "
            f"trace dev {tr:.2e}, marginal dev {marg:.2e})"
        )


def _partial_trace_rows(dims):
    # real matrix taking svec(Z on A(x)B) to svec(tr_B Z on A)
    k = dims.d_choi
    cols = []
    for basis in sdpcore.hermitian_basis(k):
        cols.append(sdpcore.svec(qmat.partial_trace(basis, (dims.d_in, dims.d_out), keep=0), dims.d_in))
    return np.array(cols).T


class DiamondDistance:
    """Evaluator for the diamond distance to a fixed reference channel.

    Uses the dual program: minimize the largest eigenvalue of tr_B Z
    over Z >= d_A (Lambda - Lambda_ref), Z >= 0. The optimum equals
    (1/2)||Lambda - Lambda_ref||_diamond; no further normalization.
    Only the right-hand side depends on the sample, so the embedding
    factorization and the previous solution are reused across calls.
    """

    def __init__(self, ref_choi, dims: ChannelDims, tol=1e-7, check_ref=True):
        self.dims = dims
        self.tol = tol
        self.ref = np.asarray(ref_choi, dtype=complex)
        if check_ref:
            _check_choi(self.ref, dims)
        k = dims.d_choi
        ka2 = dims.d_in * dims.d_in
        zlen = k * k
        n = 1 + zlen
        m = ka2 + 2 * zlen
        a = np.zeros((m, n))
        # rows: t I_A - tr_B Z in PSD(d_A); Z - Delta in PSD(k); Z in PSD(k)
        a[:ka2, 0] = -sdpcore.svec(np.eye(dims.d_in), dims.d_in)
        a[:ka2, 1:] = _partial_trace_rows(dims)
        a[ka2 : ka2 + zlen, 1:] = -np.eye(zlen)
        a[ka2 + zlen :, 1:] = -np.eye(zlen)
        c = np.zeros(n)
        c[0] = 1.0
        cones = (("psd", dims.d_in), ("psd", k), ("psd", k))
        self._solver = sdpcore.CachedSolver(c, a, cones)
        self._b = np.zeros(m)
        self._brange = slice(ka2, ka2 + zlen)
        self._warm = None
        self.max_gap = 0.0
        self.n_solves = 0
        self.total_iterations = 0

    def __call__(self, choi):
        delta = self.dims.d_in * (np.asarray(choi, dtype=complex) - self.ref)
        self._b[self._brange] = -sdpcore.svec(delta, self.dims.d_choi)
        sol = self._solver.solve(self._b, warm=self._warm, tol=self.tol)
        if sol.status != "solved":
            raise SolverFailure(
                f"diamond SDP {sol.status} after {sol.iterations} iterations",
                residuals=sol.residuals,
            )
        self._warm = sol.warm
        self.max_gap = max(self.max_gap, sol.residuals[2])
        self.n_solves += 1
        self.total_iterations += sol.iterations
        return _clip(sol.primal)


def diamond_distance(choi, ref_choi, dims: ChannelDims = None, tol=1e-7):
    """(1/2)||Lambda - Lambda_ref||_diamond for two Choi matrices."""
    choi = np.asarray(choi, dtype=complex)
    if dims is None:
        dims = _square_dims(choi)
    return DiamondDistance(ref_choi, dims, tol=tol)(choi)


def _square_dims(choi):
    d = int(round(np.sqrt(choi.shape[0])))
    if d * d != choi.shape[0]:
        raise DimensionMismatch(
            "cannot infer dims from Choi shape; pass ChannelDims explicitly"
        )
    return ChannelDims(d, d)


def entanglement_fidelity(choi, dims: ChannelDims = None):
    """Overlap of the Choi state with the maximally entangled state.

    Closed form: (1/d) sum_{a,b} choi[(a,a),(b,b)]; equals the squared
    fidelity between the Choi state and the identity channel's.
    """
    choi = np.asarray(choi, dtype=complex)
    if dims is None:
        dims = _square_dims(choi)
    if dims.d_in != dims.d_out:
        raise DimensionMismatch("entanglement fidelity needs d_in = d_out")
    d = dims.d_in
    c4 = choi.reshape(d, d, d, d)
    val = np.einsum("aabb->", c4).real / d
    return _clip(val)


class WorstFidelity:
    """Evaluator for the worst-case entanglement fidelity.

    SDP over input states rho_A: minimize mu subject to tr rho_A = 1,
    rho_A >= 0 and the Schur-complement block [[I, w],[w*, mu]] >= 0
    with w = M* (rho_A (x) 1) |Phi~>, where M M* = d_A Lambda_AB via the
    Hermitian square root (well defined for rank-deficient Choi
    matrices, and the unitary freedom in the factor drops out of |w|^2).
    """

    def __init__(self, dims: ChannelDims, tol=1e-7):
        if dims.d_in != dims.d_out:
            raise DimensionMismatch("worst-case fidelity needs d_in = d_out")
        self.dims = dims
        self.tol = tol
        d = dims.d_in
        self._basis = sdpcore.hermitian_basis(d)
        self._phi = np.eye(d, dtype=complex).reshape(-1)  # unnormalized
        self.max_gap = 0.0
        self.n_solves = 0

    def __call__(self, choi):
        d = self.dims.d_in
        k = d * d  # channel space dimension
        m_fac = qmat.mat_sqrt(d * np.asarray(choi, dtype=complex))
        nvar = k + 1  # svec(rho_A) then mu
        rows_zero = 1
        rows_rho = k
        rows_lmi = (k + 1) * (k + 1)
        a = np.zeros((rows_zero + rows_rho + rows_lmi, nvar))
        b = np.zeros(rows_zero + rows_rho + rows_lmi)
        # tr rho_A = 1 (zero cone)
        for j, bas in enumerate(self._basis):
            a[0, j] = np.trace(bas).real
        b[0] = 1.0
        # rho_A itself PSD
        a[rows_zero : rows_zero + rows_rho, :k] = -np.eye(k)
        # LMI block: constant part has the identity corner
        lmi0 = np.zeros((k + 1, k + 1), dtype=complex)
        lmi0[:k, :k] = np.eye(k)
        b[rows_zero + rows_rho :] = sdpcore.svec(lmi0, k + 1)
        mdag = m_fac.conj().T
        for j, bas in enumerate(self._basis):
            w = mdag @ (np.kron(bas, np.eye(d)) @ self._phi)
            lj = np.zeros((k + 1, k + 1), dtype=complex)
            lj[:k, k] = w
            lj[k, :k] = w.conj()
            a[rows_zero + rows_rho :, j] = -sdpcore.svec(lj, k + 1)
        lmu = np.zeros((k + 1, k + 1))
        lmu[k, k] = 1.0
        a[rows_zero + rows_rho :, k] = -sdpcore.svec(lmu, k + 1)
        c = np.zeros(nvar)
        c[k] = 1.0
        cones = (("zero", 1), ("psd", d), ("psd", k + 1))
        sol = sdpcore.CachedSolver(c, a, cones).solve(b, tol=self.tol)
        if sol.status != "solved":
            raise SolverFailure(
                f"worst-fidelity SDP {sol.status} after {sol.iterations} iterations",
                residuals=sol.residuals,
            )
        self.max_gap = max(self.max_gap, sol.residuals[2])
        self.n_solves += 1
        return _clip(sol.primal)


def worst_entanglement_fidelity(choi, dims: ChannelDims = None, tol=1e-7):
    choi = np.asarray(choi, dtype=complex)
    if dims is None:
        dims = _square_dims(choi)
    return WorstFidelity(dims, tol=tol)(choi)


def make_channel_evaluator(figure: FigureSpec, dims: ChannelDims, tol=1e-7):
    """Callable choi -> figure value, with solver state where needed."""
    if figure.kind == DIAMOND:
        return DiamondDistance(figure.reference, dims, tol=tol)
    if figure.kind == WORST_FID:
        return WorstFidelity(dims, tol=tol)

    def ent_fid(choi):
        return entanglement_fidelity(choi, dims)

    ent_fid.max_gap = 0.0
    return ent_fid


class BipartiteFigure:
    """The channel figure pulled back to bipartite output states.

    f(rho_BP) = f_channel(channel reconstructed from rho_BP). Raises
    RankDeficient when the ancilla marginal is too close to singular;
    the state walker treats that as a resample request.
    """

    def __init__(self, figure: FigureSpec, dims: ChannelDims, tol=1e-7, floor=1e-12):
        self.dims = dims
        self.floor = floor
        self._inner = make_channel_evaluator(figure, dims, tol=tol)

    @property
    def max_gap(self):
        return self._inner.max_gap

    def __call__(self, rho_out):
        choi = bipartite_to_channel(rho_out, self.dims.d_out, floor=self.floor)
        return self._inner(choi)


def induced_bipartite_fom(rho_out, figure: FigureSpec, dims: ChannelDims,
                          tol=1e-7, floor=1e-12):
    """One-off version of BipartiteFigure."""
    return BipartiteFigure(figure, dims, tol=tol, floor=floor)(rho_out)


def identity_choi(d):
    """Reference Choi for 'distance to the identity process'."""
    return maximally_entangled(d)
