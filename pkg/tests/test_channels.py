"""Choi-state plumbing: walker parametrization, application, recovery."""

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from qpt import channels, qmat
from qpt.channels import ChannelDims
from qpt.errors import BadParameter, DimensionMismatch, NotUnitary, RankDeficient


DIMS22 = ChannelDims(2, 2)


def test_dims_derived_quantities():
    d = ChannelDims(2, 3)
    assert d.d_env == 6 and d.d_choi == 6 and d.d_u == 3 * 2 * 3
    with pytest.raises(BadParameter):
        ChannelDims(0, 2)


def test_reference_state_normalized_with_uniform_marginal():
    for dims in (DIMS22, ChannelDims(3, 2)):
        psi = channels.reference_state(dims)
        assert abs(np.linalg.norm(psi) - 1) < 1e-12
        rho = np.outer(psi, psi.conj())
        marg = qmat.partial_trace(rho, (dims.d_in, dims.d_u), keep=0)
        assert np.allclose(marg, np.eye(dims.d_in) / dims.d_in)


def test_identity_unitary_gives_reset_channel():
    # u = 1 leaves B in |0>, so the channel sends everything to |0><0|
    choi = channels.sample_to_choi(np.eye(DIMS22.d_u), DIMS22)
    want = np.kron(np.eye(2) / 2, np.diag([1.0, 0.0]))
    assert np.allclose(choi, want)
    rho = channels.apply_channel(choi, np.eye(2) / 2, DIMS22)
    assert np.allclose(rho, np.diag([1.0, 0.0]))


def test_sample_to_choi_rejects_non_unitary():
    with pytest.raises(NotUnitary):
        channels.sample_to_choi(1.01 * np.eye(DIMS22.d_u), DIMS22)
    with pytest.raises(DimensionMismatch):
        channels.sample_to_choi(np.eye(3), DIMS22)


@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(2, 3))
@settings(max_examples=60, deadline=None)
def test_haar_sample_satisfies_choi_constraints(seed, da, db):
    dims = ChannelDims(da, db)
    u = qmat.haar_unitary(dims.d_u, np.random.default_rng(seed))
    herm, mineig, tr, marg = channels.choi_constraint_residuals(
        channels.sample_to_choi(u, dims), dims
    )
    assert herm < 1e-9 and mineig > -1e-9 and tr < 1e-9 and marg < 1e-9


def test_left_multiplication_changes_choi_keeps_constraints():
    rng = np.random.default_rng(4)
    u = qmat.haar_unitary(DIMS22.d_u, rng)
    v = qmat.haar_unitary(DIMS22.d_u, rng)
    c1 = channels.sample_to_choi(u, DIMS22)
    c2 = channels.sample_to_choi(v @ u, DIMS22)
    assert np.max(np.abs(c1 - c2)) > 1e-3  # genuinely different channel
    herm, mineig, tr, marg = channels.choi_constraint_residuals(c2, DIMS22)
    assert herm < 1e-9 and mineig > -1e-9 and tr < 1e-9 and marg < 1e-9


def test_mean_choi_over_haar_is_maximally_mixed():
    # E[choi] = I/(d_in d_out); 4000 draws, entrywise ~5 MC sigma gate
    rng = np.random.default_rng(12)
    n = 4000
    acc = np.zeros((4, 4), dtype=complex)
    for _ in range(n):
        acc += channels.sample_to_choi(qmat.haar_unitary(8, rng), DIMS22)
    dev = np.max(np.abs(acc / n - np.eye(4) / 4))
    assert dev < 5 * 0.25 / np.sqrt(n)


def test_apply_channel_oracles():
    # identity channel Choi = maximally entangled projector
    phi = channels.maximally_entangled(2)
    rho = np.array([[0.7, 0.1j], [-0.1j, 0.3]])
    assert np.allclose(channels.apply_channel(phi, rho, DIMS22), rho)
    dep0 = channels.depolarizing(0.0, 2)
    assert np.allclose(
        channels.apply_channel(dep0, np.diag([1.0, 0.0]), DIMS22), np.eye(2) / 2
    )
    dep = channels.depolarizing(0.9, 2)
    out = channels.apply_channel(dep, np.diag([1.0, 0.0]), DIMS22)
    assert np.allclose(out, np.diag([0.95, 0.05]))


def test_apply_channel_linear_and_trace_preserving():
    rng = np.random.default_rng(8)
    choi = channels.sample_to_choi(qmat.haar_unitary(8, rng), DIMS22)
    r1, r2 = qmat.random_density(2, rng), qmat.random_density(2, rng)
    lhs = channels.apply_channel(choi, 0.3 * r1 + 0.7 * r2, DIMS22)
    rhs = 0.3 * channels.apply_channel(choi, r1, DIMS22) + 0.7 * channels.apply_channel(
        choi, r2, DIMS22
    )
    assert np.max(np.abs(lhs - rhs)) < 1e-12
    assert abs(np.trace(lhs).real - 1.0) < 1e-10


def test_depolarizing_choi_spectrum():
    dep = channels.depolarizing(0.9, 2)
    assert np.allclose(np.sort(np.linalg.eigvalsh(dep)), [0.025, 0.025, 0.025, 0.925])
    assert np.allclose(channels.depolarizing(1.0, 2), channels.maximally_entangled(2))
    assert np.allclose(channels.depolarizing(0.0, 2), np.eye(4) / 4)
    with pytest.raises(BadParameter):
        channels.depolarizing(1.5, 2)


def test_choi_of_map_round_trip():
    """apply_channel(choi_of_map(K), rho) = sum_k K rho K^dag to 1e-9."""
    rng = np.random.default_rng(21)
    for _ in range(10):
        a = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
        # two Kraus operators normalized to a channel: sum K^dag K = 1
        k1, k2 = a[:, :2], a[:, 2:]
        norm = qmat.mat_inv_sqrt(k1.conj().T @ k1 + k2.conj().T @ k2)
        k1, k2 = k1 @ norm, k2 @ norm
        choi = channels.choi_of_map([k1, k2], DIMS22)
        rho = qmat.random_density(2, rng)
        direct = k1 @ rho @ k1.conj().T + k2 @ rho @ k2.conj().T
        assert np.max(np.abs(channels.apply_channel(choi, rho, DIMS22) - direct)) < 1e-9


def test_bipartite_to_channel_round_trip():
    rng = np.random.default_rng(31)
    lam = channels.sample_to_choi(qmat.haar_unitary(8, rng), DIMS22)
    sig = qmat.random_density(2, rng)
    root = qmat.kron(np.eye(2), qmat.mat_sqrt(sig).conj())
    # forward map of the entangled-input scheme, in B (x) P ordering
    rho_bp = 2 * root @ channels.swap_factors(lam, 2, 2) @ root
    back = channels.bipartite_to_channel(rho_bp, 2)
    assert np.max(np.abs(back - lam)) < 1e-9


def test_bipartite_to_channel_identity_fixture():
    rho = channels.swap_factors(channels.maximally_entangled(2), 2, 2)
    assert np.allclose(
        channels.bipartite_to_channel(rho, 2), channels.maximally_entangled(2)
    )


def test_bipartite_to_channel_rank_guard():
    # P-marginal diag(1, 1e-15): below the 1e-12 floor
    bad = np.diag([0.5, 1e-15, 0.5, 0.0])
    bad = bad / np.trace(bad)
    with pytest.raises(RankDeficient):
        channels.bipartite_to_channel(bad, 2, floor=1e-12)


def test_swap_factors_involution():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    assert np.allclose(channels.swap_factors(channels.swap_factors(m, 2, 3), 3, 2), m)
    a, b = qmat.random_density(2, rng), qmat.random_density(3, rng)
    assert np.allclose(channels.swap_factors(np.kron(a, b), 2, 3), np.kron(b, a))


def test_channel_sample_caches_choi():
    u = qmat.haar_unitary(8, np.random.default_rng(6))
    cs = channels.ChannelSample(DIMS22, u)
    assert np.allclose(cs.choi, channels.sample_to_choi(u, DIMS22))


def _factored_state_draw(dims, rng):
    # sigma_AB = d_A sigma_A^(1/2) Lambda sigma_A^(1/2), the two factors
    # drawn independently from their own marginal measures
    sig_a = qmat.random_density(dims.d_in, rng, env=dims.d_out * dims.d_env)
    lam = channels.sample_to_choi(qmat.haar_unitary(dims.d_u, rng), dims)
    root = qmat.kron(qmat.mat_sqrt(sig_a), np.eye(dims.d_out))
    return dims.d_in * root @ lam @ root


def test_factored_measure_matches_joint_measure():
    """Purity moments of the factored draw match direct bipartite draws.

    The factored route samples the input marginal and the channel
    separately; the joint route traces half of a Haar pure state on the
    doubled space. Their eigenvalue statistics must agree.
    """
    rng = np.random.default_rng(17)
    n = 3000
    dims = DIMS22
    stats = {"fac": [], "dir": []}
    for _ in range(n):
        s = _factored_state_draw(dims, rng)
        w = np.linalg.eigvalsh(s)
        stats["fac"].append((np.sum(w**2), np.sum(w**3), w[-1]))
        t = qmat.random_density(4, rng)
        w = np.linalg.eigvalsh(t)
        stats["dir"].append((np.sum(w**2), np.sum(w**3), w[-1]))
    fac = np.array(stats["fac"])
    dire = np.array(stats["dir"])
    for k in range(3):
        err = np.sqrt(fac[:, k].var() / n + dire[:, k].var() / n)
        assert abs(fac[:, k].mean() - dire[:, k].mean()) < 4 * err
