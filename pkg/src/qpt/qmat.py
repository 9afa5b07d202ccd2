"""Dense complex linear algebra and quantum-information primitives.

Matrices are plain numpy complex arrays (C order, so entries are stored
re,im interleaved and row-major). Everything here is a pure function; no
state is shared between calls.

Tolerances follow one convention: inputs are validated loosely (1e-8) and
outputs are produced tightly (1e-10 or better), so that chains of
operations do not reject their own round-off.
"""

from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    NoConvergence,
    NonHermitian,
    NotPSD,
    NotState,
    RankDeficient,
)

# Input-validation tolerances.
HERM_TOL = 1e-8
PSD_TOL = 1e-10
STATE_TOL = 1e-8


class HermitianEigen(NamedTuple):
    """Eigendecomposition of a Hermitian matrix.

    eigenvalues are real and ascending; eigenvectors holds the matching
    orthonormal eigenvectors as columns.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def asymmetry(m) -> float:
    """Max absolute entry of m - m^dagger."""
    m = np.asarray(m)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def is_hermitian(m, tol=HERM_TOL) -> bool:
    return asymmetry(m) <= tol


def dagger(m):
    return np.asarray(m).conj().T


def eigh(m) -> HermitianEigen:
    """Eigendecomposition of a Hermitian matrix.

    The input is symmetrized internally, so round-off asymmetry up to
    1e-8 is tolerated; anything larger raises NonHermitian.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got shape {m.shape}")
    if asymmetry(m) > HERM_TOL:
        raise NonHermitian(f"asymmetry {asymmetry(m):.3e} exceeds {HERM_TOL:.0e}")
    m = 0.5 * (m + m.conj().T)
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NoConvergence(str(exc)) from exc
    return HermitianEigen(w, v)


def mat_sqrt(m):
    """Hermitian square root of a PSD matrix.

    Eigenvalues in [-1e-10, 0) are clamped to 0 (round-off from products
    of square roots); anything below -1e-10 raises NotPSD.
    """
    w, v = eigh(m)
    if w[0] < -PSD_TOL:
        raise NotPSD(f"min eigenvalue {w[0]:.3e}")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def mat_inv_sqrt(m, floor=1e-12):
    """Inverse Hermitian square root of a strictly positive matrix.

    Raises RankDeficient if the smallest eigenvalue is below `floor`;
    callers in the sampling pipeline treat that as "reject this sample".
    """
    w, v = eigh(m)
    if w[0] < -PSD_TOL:
        raise NotPSD(f"min eigenvalue {w[0]:.3e}")
    if w[0] < floor:
        raise RankDeficient(f"min eigenvalue {w[0]:.3e} below floor {floor:.3e}")
    return (v / np.sqrt(w)) @ v.conj().T


def partial_trace(m, dims, keep):
    """Trace out one tensor factor of an operator on H_X (x) H_Y.

    dims is (d_X, d_Y); keep is 0 to return the X operator (tracing out
    Y) or 1 for the Y operator.
    """
    dx, dy = dims
    m = np.asarray(m)
    if m.shape != (dx * dy, dx * dy):
        raise DimensionMismatch(f"shape {m.shape} does not match dims {dims}")
    if keep not in (0, 1):
        raise DimensionMismatch(f"keep must be 0 or 1, got {keep!r}")
    t = m.reshape(dx, dy, dx, dy)
    if keep == 0:
        return np.einsum("ikjk->ij", t)
    return np.einsum("kikj->ij", t)


def _check_state(m, name):
    m = np.asarray(m, dtype=complex)
    if asymmetry(m) > HERM_TOL:
        raise NotState(f"{name} is not Hermitian")
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if w[0] < -STATE_TOL:
        raise NotState(f"{name} has eigenvalue {w[0]:.3e}")
    tr = float(np.real(np.trace(m)))
    if abs(tr - 1.0) > STATE_TOL:
        raise NotState(f"{name} has trace {tr}")
    return m


def fidelity(s, t) -> float:
    """Uhlmann fidelity F(s, t) = tr sqrt(sqrt(s) t sqrt(s)), in [0, 1]."""
    s = _check_state(s, "first state")
    t = _check_state(t, "second state")
    rs = mat_sqrt(s)
    inner = rs @ t @ rs
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    f = float(np.sum(np.sqrt(np.clip(w, 0.0, None))))
    return min(f, 1.0)


def purified_distance(s, t) -> float:
    """P(s, t) = sqrt(1 - F(s, t)^2)."""
    f = fidelity(s, t)
    return float(np.sqrt(max(0.0, 1.0 - f * f)))


def _singular_values(m):
    m = np.asarray(m, dtype=complex)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected square matrix, got shape {m.shape}")
    if is_hermitian(m):
        # eigen-absolute values; cheaper and exact for the Hermitian case
        return np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))
    return np.linalg.svd(m, compute_uv=False)


def trace_norm(m) -> float:
    """Sum of singular values."""
    return float(np.sum(_singular_values(m)))


def op_norm(m) -> float:
    """Largest singular value."""
    return float(np.max(_singular_values(m)))


def haar_unitary(d, rng):
    """Draw a Haar-distributed d x d unitary.

    QR of a complex Gaussian matrix, with the R diagonal's phases divided
    out. Without the phase correction the QR convention would bias the
    distribution; with it the law is exactly left and right invariant.
    """
    if d < 1:
        raise DimensionMismatch(f"dimension must be >= 1, got {d}")
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    ph = np.diag(r).copy()
    ph /= np.abs(ph)
    return q * ph


def haar_state_vector(d, rng):
    """Uniform unit vector in C^d (Haar pure state)."""
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)


def random_density(d, rng, env=None):
    """Density matrix from tracing a Haar pure state over an environment.

    env defaults to d, which gives the Hilbert-Schmidt measure.
    """
    env = d if env is None else env
    psi = haar_state_vector(d * env, rng).reshape(d, env)
    return psi @ psi.conj().T


def kron(*ops):
    """Tensor product of any number of matrices, left factor outermost."""
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, op)
    return out
