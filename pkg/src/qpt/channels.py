"""Channel representations and the Choi correspondence.

A channel with input dimension d_in and output dimension d_out is carried
around as its Choi state: the (d_in*d_out) x (d_in*d_out) density matrix
obtained by sending half of a maximally entangled pair through the
channel. Index ordering is always input (x) output, row-major.

The random-walk parametrization works one level up: a channel is a
unitary u on the composite space B A' B' (dimension d_u = d_out * d_in *
d_out) acting on a fixed reference purification. Tracing out A'B' gives
the Choi state. The map u -> choi pushes the Haar measure on U(d_u)
forward to the uniform channel measure that the walkers sample from.
"""

from dataclasses import dataclass, field

import numpy as np

from . import qmat
from .errors import BadParameter, DimensionMismatch, NotUnitary, RankDeficient

UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class ChannelDims:
    """Input/output dimensions plus the derived walker-space dimensions.

    d_env is the dimension of the traced-out copy A'B'; d_u is the
    dimension of the unitary the channel walker moves on.
    """

    d_in: int
    d_out: int

    def __post_init__(self):
        if self.d_in < 1 or self.d_out < 1:
            raise BadParameter(f"dimensions must be >= 1, got {self}")

    @property
    def d_env(self) -> int:
        return self.d_in * self.d_out

    @property
    def d_choi(self) -> int:
        return self.d_in * self.d_out

    @property
    def d_u(self) -> int:
        return self.d_out * self.d_in * self.d_out


def reference_state(dims: ChannelDims):
    """Fixed purification |Psi_0> that the walker unitary acts on.

    Psi_0 = d_in^{-1/2} sum_i |i>_A |0>_B |i>_{A'} |0>_{B'}, a unit
    vector on H_A (x) H_{BA'B'} whose A-marginal is maximally mixed.
    The basis vectors |0>_B |i>_{A'} |0>_{B'} are an arbitrary fixed
    orthonormal choice; any other choice gives the same pushforward
    measure since it differs by a right-multiplication of the unitary.
    """
    da, db = dims.d_in, dims.d_out
    psi = np.zeros((da, dims.d_u), dtype=complex)
    for i in range(da):
        # flat index of (b=0, a'=i, b'=0) in the (B, A', B') ordering
        psi[i, i * db] = 1.0
    return psi.reshape(-1) / np.sqrt(da)


def sample_to_choi(u, dims: ChannelDims):
    """Choi state of the channel parametrized by a walker unitary.

    Equals tr_{A'B'} (1 (x) u) |Psi_0><Psi_0| (1 (x) u^dag). Only the
    d_in columns of u hit by Psi_0's support enter, so the contraction
    is done on that slice directly instead of forming the big projector.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (dims.d_u, dims.d_u):
        raise DimensionMismatch(f"unitary shape {u.shape}, expected {(dims.d_u,) * 2}")
    err = np.max(np.abs(u.conj().T @ u - np.eye(dims.d_u)))
    if err > UNITARY_TOL:
        raise NotUnitary(f"unitarity residual {err:.3e}")
    return _choi_unchecked(u, dims)


def _choi_unchecked(u, dims: ChannelDims):
    # hot path for the walkers, which keep u unitary by construction
    da, db = dims.d_in, dims.d_out
    cols = u[:, [i * db for i in range(da)]]  # u applied to each |v_i>
    # axes of cols.T: (A, then B A' B' flattened); split off B, fuse A'B'
    m = cols.T.reshape(da, db, dims.d_env) / np.sqrt(da)
    choi = np.einsum("abe,cde->abcd", m, m.conj(), optimize=True)
    return np.ascontiguousarray(choi.reshape(da * db, da * db))


def _choi_checked(choi, dims: ChannelDims, tol=1e-8):
    choi = np.asarray(choi, dtype=complex)
    d = dims.d_choi
    if choi.shape != (d, d):
        raise DimensionMismatch(f"Choi shape {choi.shape}, expected {(d, d)}")
    return choi


def choi_constraint_residuals(choi, dims: ChannelDims):
    """Diagnostics for the three Choi-state conditions.

    Returns (hermiticity, min eigenvalue, |trace-1|, input-marginal
    deviation from maximally mixed). All should be ~0 for a valid Choi.
    """
    choi = _choi_checked(choi, dims)
    herm = qmat.asymmetry(choi)
    w = np.linalg.eigvalsh(0.5 * (choi + choi.conj().T))
    tr = abs(float(np.real(np.trace(choi))) - 1.0)
    marg = qmat.partial_trace(choi, (dims.d_in, dims.d_out), keep=0)
    marg_dev = float(np.max(np.abs(marg - np.eye(dims.d_in) / dims.d_in)))
    return herm, float(w[0]), tr, marg_dev


@dataclass(frozen=True)
class ChannelSample:
    """A channel as seen by the walker: unitary plus cached Choi state."""

    dims: ChannelDims
    u: np.ndarray
    choi: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.choi is None:
            object.__setattr__(self, "choi", sample_to_choi(self.u, self.dims))


def apply_channel(choi, rho, dims: ChannelDims):
    """Act on an input state through the Choi state.

    Lambda(rho) = d_in * tr_A(choi . (rho^T (x) 1)); transpose in the
    basis that defines the maximally entangled state.
    """
    choi = _choi_checked(choi, dims)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (dims.d_in, dims.d_in):
        raise DimensionMismatch(f"input state shape {rho.shape}, expected d_in={dims.d_in}")
    c4 = choi.reshape(dims.d_in, dims.d_out, dims.d_in, dims.d_out)
    return dims.d_in * np.einsum("abcd,ac->bd", c4, rho, optimize=True)


def maximally_entangled(d):
    """Choi state of the identity channel: |Phi><Phi|, Phi = d^-1/2 sum |ii>."""
    phi = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
    return np.outer(phi, phi.conj())


def depolarizing(p, d):
    """Choi state of rho -> p rho + (1-p) I/d."""
    if not 0.0 <= p <= 1.0:
        raise BadParameter(f"p must be in [0, 1], got {p}")
    if d < 1:
        raise BadParameter(f"d must be >= 1, got {d}")
    return p * maximally_entangled(d) + (1.0 - p) * np.eye(d * d) / (d * d)


def choi_of_map(kraus, dims: ChannelDims):
    """Choi state from a list of Kraus operators (each d_out x d_in).

    The map must be trace preserving: sum K^dag K = 1 within 1e-8.
    """
    da, db = dims.d_in, dims.d_out
    ks = [np.asarray(k, dtype=complex) for k in kraus]
    for k in ks:
        if k.shape != (db, da):
            raise DimensionMismatch(f"Kraus shape {k.shape}, expected {(db, da)}")
    tp = sum(k.conj().T @ k for k in ks)
    if np.max(np.abs(tp - np.eye(da))) > 1e-8:
        raise BadParameter("Kraus operators are not trace preserving")
    choi = np.zeros((da * db, da * db), dtype=complex)
    for k in ks:
        v = k.T.reshape(-1)  # (1 (x) K) applied to the unnormalized |Phi~>
        choi += np.outer(v, v.conj())
    return choi / da


def bipartite_to_channel(rho_out, d_out, floor=1e-12):
    """Recover a Choi state from a bipartite output state on B (x) P.

    The ancilla marginal rho_P is whitened away:
    choi_BP = rho_P^{-1/2} rho_BP rho_P^{-1/2} / d_P, then the factors
    are swapped so the result is in input (x) output ordering. This is
    the inverse of sigma -> d_P * psi_P^{1/2} sigma psi_P^{1/2}, the map
    that takes a Choi state to the output of the entangled-input scheme.

    Raises RankDeficient when rho_P's smallest eigenvalue is below
    `floor`; the sampling loop treats that as a rejected sample.
    """
    rho_out = np.asarray(rho_out, dtype=complex)
    n = rho_out.shape[0]
    if rho_out.shape != (n, n) or n % d_out != 0:
        raise DimensionMismatch(f"shape {rho_out.shape} incompatible with d_out={d_out}")
    dp = n // d_out
    rho_p = qmat.partial_trace(rho_out, (d_out, dp), keep=1)
    x = qmat.mat_inv_sqrt(rho_p, floor=floor)  # raises RankDeficient
    sandw = qmat.kron(np.eye(d_out), x)
    choi_bp = sandw @ rho_out @ sandw / dp
    choi_bp = 0.5 * (choi_bp + choi_bp.conj().T)
    return swap_factors(choi_bp, d_out, dp)


def swap_factors(m, d1, d2):
    """Reorder an operator on H_1 (x) H_2 to H_2 (x) H_1."""
    m = np.asarray(m)
    if m.shape != (d1 * d2, d1 * d2):
        raise DimensionMismatch(f"shape {m.shape} incompatible with ({d1},{d2})")
    return np.ascontiguousarray(
        m.reshape(d1, d2, d1, d2).transpose(1, 0, 3, 2).reshape(d1 * d2, d1 * d2)
    )
