"""Small dense SDP solver: ADMM on the homogeneous self-dual embedding.

Solves min c.x subject to A x + s = b, s in K, where K is a product of
zero cones (equalities), nonnegative orthants, and complex Hermitian
PSD cones. Hermitian blocks are carried in an isometric real coordinate
system (diagonal, then sqrt(2) times the real and imaginary upper
triangles), so the cone projection is an eigenvalue clip and never
leaves the Hermitian subspace.

The sizes here are tiny (tens of rows) but the same program is solved
tens of thousands of times with only b changing, so the linear system
of the splitting step is LU-factorized once per problem structure and
each new b costs one extra back-solve (rank-one update). Warm starting
from the previous sample's solution does the rest.
"""

from dataclasses import dataclass

import numpy as np

from . import qmat
from .errors import BadParameter, DimensionMismatch

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 50000
OVER_RELAX = 1.5


def psd_project(m):
    """Nearest PSD matrix in Frobenius norm: clip eigenvalues at zero."""
    eig = qmat.eigh(np.asarray(m, dtype=complex))
    w = np.clip(eig.eigenvalues, 0.0, None)
    v = eig.eigenvectors
    return (v * w) @ v.conj().T


_SQ2 = np.sqrt(2.0)
_TRIU = {}  # k -> cached strict-upper index pair, hot path below


def _triu(k):
    if k not in _TRIU:
        _TRIU[k] = np.triu_indices(k, 1)
    return _TRIU[k]


def svec(h, k):
    """Isometric real coordinates of a Hermitian k x k matrix.

    Layout: k diagonal entries, then sqrt(2) Re of the strict upper
    triangle (row-major), then sqrt(2) Im of the same. Frobenius inner
    products are preserved, so PSD projection commutes with the map.
    """
    h = np.asarray(h)
    iu = _triu(k)
    out = np.empty(k * k)
    out[:k] = np.real(np.diag(h))
    upper = h[iu]
    nu = upper.size
    out[k : k + nu] = _SQ2 * np.real(upper)
    out[k + nu :] = _SQ2 * np.imag(upper)
    return out


def smat(x, k):
    """Inverse of svec."""
    x = np.asarray(x, dtype=float)
    if x.size != k * k:
        raise DimensionMismatch(f"expected {k * k} coordinates, got {x.size}")
    h = np.zeros((k, k), dtype=complex)
    h[np.diag_indices(k)] = x[:k]
    iu = _triu(k)
    nu = len(iu[0])
    upper = (x[k : k + nu] + 1j * x[k + nu :]) / _SQ2
    h[iu] = upper
    h[(iu[1], iu[0])] = upper.conj()
    return h


def hermitian_basis(k):
    """Orthonormal Hermitian basis matching svec coordinates."""
    out = []
    for i in range(k * k):
        e = np.zeros(k * k)
        e[i] = 1.0
        out.append(smat(e, k))
    return out


def cone_width(cone):
    kind, size = cone
    if kind == "psd":
        return size * size
    if kind in ("zero", "nonneg"):
        return size
    raise BadParameter(f"unknown cone kind {kind!r}")


@dataclass(frozen=True)
class ConicProblem:
    """min c.x  s.t.  A x + s = b,  s in the product cone `cones`.

    cones is a list of ("zero", n) / ("nonneg", n) / ("psd", k) tuples;
    a psd cone of size k occupies k*k consecutive rows in svec layout.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: tuple

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        object.__setattr__(self, "cones", tuple(self.cones))
        m = sum(cone_width(cn) for cn in self.cones)
        if self.A.shape != (m, self.c.size) or self.b.size != m:
            raise DimensionMismatch(
                f"A is {self.A.shape}, want ({m}, {self.c.size}); b has {self.b.size}"
            )

    def describe(self):
        lines = [f"vars {self.c.size}  rows {self.b.size}"]
        lines += [f"  cone {kind} {size}" for kind, size in self.cones]
        return "\n".join(lines)


@dataclass
class ConicSolution:
    primal: float
    dual: float
    iterations: int
    residuals: tuple  # (primal, dual, gap), all relative
    status: str  # solved | max_iters | infeasible
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray

    @property
    def warm(self):
        return self.x, self.y, self.s


def _psd_clip(h):
    # eigenvalue clip without the validation of psd_project; smat output
    # is Hermitian by construction
    w, v = np.linalg.eigh(h)
    if w[0] >= 0.0:
        return h
    np.clip(w, 0.0, None, out=w)
    return (v * w) @ v.conj().T


def _smat_stack(x, k):
    # batched smat: x is (count, k*k)
    h = np.zeros((x.shape[0], k, k), dtype=complex)
    rng = np.arange(k)
    h[:, rng, rng] = x[:, :k]
    iu = _triu(k)
    nu = len(iu[0])
    upper = (x[:, k : k + nu] + 1j * x[:, k + nu :]) / _SQ2
    h[:, iu[0], iu[1]] = upper
    h[:, iu[1], iu[0]] = upper.conj()
    return h


def _svec_stack(h, k):
    out = np.empty((h.shape[0], k * k))
    rng = np.arange(k)
    out[:, :k] = h[:, rng, rng].real
    iu = _triu(k)
    nu = len(iu[0])
    upper = h[:, iu[0], iu[1]]
    out[:, k : k + nu] = _SQ2 * upper.real
    out[:, k + nu :] = _SQ2 * upper.imag
    return out


def _projection_plan(cones, offset=0):
    """Group the cone blocks for batched projection.

    Same-size PSD blocks share one stacked eigendecomposition per
    iteration, which is where the solve spends its time.
    """
    plan = []
    psd = {}
    at = offset
    for kind, size in cones:
        w = cone_width((kind, size))
        if kind == "zero":
            pass  # dual cone is the whole space: identity
        elif kind == "nonneg":
            plan.append(("nonneg", slice(at, at + w), None))
        else:
            psd.setdefault(size, []).append(at)
        at += w
    for k, starts in psd.items():
        idx = np.concatenate([np.arange(s, s + k * k) for s in starts])
        plan.append(("psd", idx.reshape(len(starts), k * k), k))
    return plan


def _apply_plan(plan, y, out):
    # out starts as a copy of y, so zero blocks are already in place
    for kind, where, k in plan:
        if kind == "nonneg":
            np.clip(y[where], 0.0, None, out=out[where])
        else:
            h = _smat_stack(y[where], k)
            w, v = np.linalg.eigh(h)
            if w[:, 0].min() >= 0.0:
                continue
            np.clip(w, 0.0, None, out=w)
            proj = (v * w[:, None, :]) @ v.conj().transpose(0, 2, 1)
            out[where] = _svec_stack(proj, k)
    return out


def _project_dual_cone(y, cones):
    # dual of the slack cone, blockwise: zero -> free, nonneg and psd
    # are self-dual
    out = np.empty_like(y)
    at = 0
    for kind, size in cones:
        w = cone_width((kind, size))
        blk = y[at : at + w]
        if kind == "zero":
            out[at : at + w] = blk
        elif kind == "nonneg":
            out[at : at + w] = np.maximum(blk, 0.0)
        else:
            out[at : at + w] = svec(_psd_clip(smat(blk, size)), size)
        at += w
    return out


class CachedSolver:
    """Solver bound to a fixed (c, A, cones) structure with varying b.

    The splitting step's matrix I + [[0, A^T], [-A, 0]] depends only on
    the structure; it is factorized here once. Each solve() with a new
    right-hand side performs a rank-one correction for the (c, b) column
    of the embedding.
    """

    def __init__(self, c, A, cones):
        self.c = np.asarray(c, dtype=float)
        self.A = np.asarray(A, dtype=float)
        self.cones = tuple(cones)
        m, n = self.A.shape
        self.m, self.n = m, n
        big = np.eye(n + m)
        big[:n, n:] = self.A.T
        big[n:, :n] = -self.A
        # I + skew has singular values >= 1, so the explicit inverse is
        # safe here and one matmul per iteration beats lu_solve overhead
        self._minv = np.linalg.inv(big)
        # x-part is free, cone blocks start at row n of the embedding
        self._plan = _projection_plan(self.cones, offset=n)

    def problem(self, b):
        return ConicProblem(self.c, self.A, b, self.cones)

    def solve(self, b, warm=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
              over_relax=OVER_RELAX):
        b = np.asarray(b, dtype=float)
        n, m = self.n, self.m
        nm = n + m
        # run the iteration on b scaled to the size of c; the cones are
        # homogeneous, so this only rescales (x, s), and it cuts the
        # iteration count several-fold on badly balanced instances.
        # Stopping is still tested on the original problem's residuals.
        sigma = 1.0 / max(np.linalg.norm(b), 1e-10)
        sigma = min(max(sigma, 1e-8), 1e8)
        h = np.concatenate([self.c, sigma * b])
        g = self._minv @ h
        denom = 1.0 + h @ g

        def embed_solve(w, omega):
            # (I + Q)(z, zeta) = (w, omega) via Sherman-Morrison
            t = self._minv @ (w - omega * h)
            z = t - g * ((h @ t) / denom)
            return z, omega + h @ z

        u = np.zeros(nm + 1)
        v = np.zeros(nm + 1)
        if warm is None:
            u[-1] = 1.0
        else:
            x0, y0, s0 = warm
            u[:n] = sigma * x0
            u[n:nm] = y0
            u[-1] = 1.0
            v[n:nm] = sigma * s0

        bnorm = 1.0 + np.linalg.norm(b)
        cnorm = 1.0 + np.linalg.norm(self.c)
        best = None
        status = "max_iters"
        it = 0
        alpha = over_relax
        for it in range(1, max_iter + 1):
            z, zeta = embed_solve(u[:nm] + v[:nm], u[-1] + v[-1])
            tz = alpha * z + (1.0 - alpha) * u[:nm]
            tzeta = alpha * zeta + (1.0 - alpha) * u[-1]
            w = tz - v[:nm]
            womega = tzeta - v[-1]
            unew = _apply_plan(self._plan, w, w.copy())
            utau = womega if womega > 0.0 else 0.0
            v[:nm] -= tz
            v[:nm] += unew
            v[-1] += utau - tzeta
            u[:nm] = unew
            u[-1] = utau
            if it % 25 == 0 or it == max_iter:
                tau = u[-1]
                kappa = v[-1]
                if tau <= 1e-12 * max(kappa, 1.0):
                    if kappa > 1e-9:
                        status = "infeasible"
                        best = self._extract(u, v, bnorm, cnorm, b, sigma, scale=False)
                        break
                    continue
                sol = self._extract(u, v, bnorm, cnorm, b, sigma)
                best = sol
                if max(sol[3]) <= tol:
                    status = "solved"
                    break
        if best is None:
            best = self._extract(u, v, bnorm, cnorm, b, sigma)
        x, y, s, res = best
        return ConicSolution(
            primal=float(self.c @ x),
            dual=float(-b @ y),
            iterations=it,
            residuals=res,
            status=status,
            x=x,
            y=y,
            s=s,
        )

    def _extract(self, u, v, bnorm, cnorm, b, sigma, scale=True):
        n, m = self.n, self.m
        tau = u[-1] if (scale and u[-1] > 1e-12) else 1.0
        x = u[:n] / (tau * sigma)
        y = u[n : n + m] / tau
        s = v[n : n + m] / (tau * sigma)
        pri = np.linalg.norm(self.A @ x + s - b) / bnorm
        dua = np.linalg.norm(self.A.T @ y + self.c) / cnorm
        px = self.c @ x
        dy = -b @ y
        gap = abs(px - dy) / (1.0 + abs(px) + abs(dy))
        return x, y, s, (float(pri), float(dua), float(gap))


def solve(p: ConicProblem, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, warm=None):
    """One-off solve. For repeated solves with changing b, hold on to a
    CachedSolver instead."""
    return CachedSolver(p.c, p.A, p.cones).solve(
        p.b, warm=warm, tol=tol, max_iter=max_iter
    )
