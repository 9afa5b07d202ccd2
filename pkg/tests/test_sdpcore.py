"""Conic solver: embeddings, projections, and solve-quality oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from qpt import qmat, sdpcore
from qpt.errors import DimensionMismatch
from qpt.sdpcore import CachedSolver, ConicProblem, smat, svec


def _rand_herm(k, rng):
    a = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
    return 0.5 * (a + a.conj().T)


def _lambda_max_problem(a):
    """min t  s.t.  t I - a >= 0, as a one-variable conic problem."""
    k = a.shape[0]
    col = -svec(np.eye(k), k)
    return ConicProblem([1.0], col.reshape(-1, 1), -svec(a, k), [("psd", k)])


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
@settings(max_examples=80, deadline=None)
def test_svec_round_trip(seed, k):
    h = _rand_herm(k, np.random.default_rng(seed))
    assert np.max(np.abs(smat(svec(h, k), k) - h)) < 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
@settings(max_examples=60, deadline=None)
def test_svec_preserves_inner_products(seed, k):
    rng = np.random.default_rng(seed)
    a, b = _rand_herm(k, rng), _rand_herm(k, rng)
    hs = float(np.real(np.trace(a.conj().T @ b)))
    assert abs(np.dot(svec(a, k), svec(b, k)) - hs) < 1e-10 * max(1.0, abs(hs))


def test_smat_size_guard():
    with pytest.raises(DimensionMismatch):
        smat(np.zeros(5), 2)


def test_hermitian_basis_orthonormal():
    basis = sdpcore.hermitian_basis(3)
    assert len(basis) == 9
    for i, e in enumerate(basis):
        for j, f in enumerate(basis):
            hs = float(np.real(np.trace(e.conj().T @ f)))
            assert abs(hs - (1.0 if i == j else 0.0)) < 1e-12


def test_psd_project_oracles():
    assert np.allclose(sdpcore.psd_project(np.diag([1.0, -1.0])), np.diag([1.0, 0.0]))
    rng = np.random.default_rng(1)
    a = rng.standard_normal((3, 3))
    psd = a @ a.T
    assert np.allclose(sdpcore.psd_project(psd), psd)
    h = _rand_herm(4, rng)
    once = sdpcore.psd_project(h)
    assert np.max(np.abs(sdpcore.psd_project(once) - once)) < 1e-10


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_batched_projection_matches_blockwise(seed):
    """The stacked-eigh cone projection is the blockwise one, exactly."""
    rng = np.random.default_rng(seed)
    cones = (("psd", 3), ("psd", 4), ("psd", 4), ("nonneg", 3), ("zero", 2))
    m = sum(sdpcore.cone_width(c) for c in cones)
    y = 3 * rng.standard_normal(m)
    ref = sdpcore._project_dual_cone(y.copy(), cones)
    plan = sdpcore._projection_plan(cones)
    out = sdpcore._apply_plan(plan, y, y.copy())
    assert np.max(np.abs(out - ref)) < 1e-13


def test_lambda_max_oracle():
    sol = sdpcore.solve(_lambda_max_problem(np.diag([1.0, 3.0, 2.0])))
    assert sol.status == "solved"
    assert abs(sol.primal - 3.0) < 1e-6


def test_lambda_max_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = _rand_herm(4, rng)
        sol = sdpcore.solve(_lambda_max_problem(a))
        want = float(np.linalg.eigvalsh(a)[-1])
        assert sol.status == "solved"
        assert abs(sol.primal - want) < 1e-6


def test_trace_norm_sdp():
    """min (tr P + tr Q)/2 s.t. [[P, M], [M^dag, Q]] >= 0 equals ||M||_1."""
    m = np.diag([1.0, -2.0])
    k = 2
    basis = sdpcore.hermitian_basis(k)
    cols = []
    for e in basis:  # P block
        big = np.zeros((2 * k, 2 * k), dtype=complex)
        big[:k, :k] = e
        cols.append(-svec(big, 2 * k))
    for e in basis:  # Q block
        big = np.zeros((2 * k, 2 * k), dtype=complex)
        big[k:, k:] = e
        cols.append(-svec(big, 2 * k))
    off = np.zeros((2 * k, 2 * k), dtype=complex)
    off[:k, k:] = m
    off[k:, :k] = m.conj().T
    b = svec(off, 2 * k)
    c = np.concatenate([0.5 * svec(np.eye(k), k), 0.5 * svec(np.eye(k), k)])
    # diagonal svec coordinates carry the traces; off-diagonals cost 0
    c[k:k * k] = 0.0
    c[k * k + k :] = 0.0
    prob = ConicProblem(c, np.array(cols).T, b, [("psd", 2 * k)])
    sol = sdpcore.solve(prob)
    assert sol.status == "solved"
    assert abs(sol.primal - qmat.trace_norm(m)) < 1e-6


def test_weak_duality_and_residuals():
    sol = sdpcore.solve(_lambda_max_problem(np.diag([-1.0, 0.5, 2.5])))
    assert sol.dual <= sol.primal + 1e-6
    assert max(sol.residuals) <= sdpcore.DEFAULT_TOL


def test_objective_rescaling():
    a = _rand_herm(3, np.random.default_rng(3))
    base = sdpcore.solve(_lambda_max_problem(a))
    p = _lambda_max_problem(a)
    scaled = sdpcore.solve(ConicProblem(10.0 * p.c, p.A, p.b, p.cones))
    assert abs(scaled.primal - 10.0 * base.primal) < 1e-5


def test_zero_cone_equality():
    # min x subject to x = 1 exactly
    prob = ConicProblem([1.0], [[1.0]], [1.0], [("zero", 1)])
    sol = sdpcore.solve(prob)
    assert sol.status == "solved"
    assert abs(sol.primal - 1.0) < 1e-6


def test_nonneg_cone():
    # max x subject to x <= 2
    prob = ConicProblem([-1.0], [[1.0]], [2.0], [("nonneg", 1)])
    sol = sdpcore.solve(prob)
    assert sol.status == "solved"
    assert abs(sol.primal + 2.0) < 1e-6


def test_infeasible_flagged():
    # s = -1 with s >= 0 and no variable to fix it
    prob = ConicProblem([1.0], [[0.0]], [-1.0], [("nonneg", 1)])
    sol = sdpcore.solve(prob, max_iter=20000)
    assert sol.status != "solved"


def test_cached_solver_matches_one_off_and_warm_start():
    rng = np.random.default_rng(11)
    a = _rand_herm(4, rng)
    p = _lambda_max_problem(a)
    solver = CachedSolver(p.c, p.A, p.cones)
    cold = solver.solve(p.b)
    assert abs(cold.primal - sdpcore.solve(p).primal) < 1e-6
    warm = solver.solve(p.b, warm=cold.warm)
    assert abs(warm.primal - cold.primal) < 1e-6
    assert warm.iterations < cold.iterations
    # nearby instance reuses the factorization and the previous solution
    near = solver.solve(p.b + 1e-3 * rng.standard_normal(p.b.size), warm=cold.warm)
    assert near.status == "solved"


def test_problem_shape_guard_and_describe():
    with pytest.raises(DimensionMismatch):
        ConicProblem([1.0], np.zeros((3, 1)), np.zeros(4), [("psd", 2)])
    p = _lambda_max_problem(np.eye(2))
    assert "psd" in p.describe()
