"""Figures of merit against the depolarizing closed forms.

Depolarizing with strength p at dimension d has half diamond distance
(1-p)(1-1/d^2) to the identity and entanglement fidelity p+(1-p)/d^2,
which for this family equals the worst-case value.
"""

import numpy as np
import pytest

from qpt import channels, fom, qmat
from qpt.channels import ChannelDims
from qpt.errors import BadParameter, DimensionMismatch, RankDeficient


DIMS22 = ChannelDims(2, 2)


def test_figure_spec_guards():
    with pytest.raises(BadParameter):
        fom.FigureSpec("no-such-figure")
    with pytest.raises(BadParameter):
        fom.FigureSpec(fom.DIAMOND)  # diamond needs a reference
    assert fom.FigureSpec(fom.DIAMOND, fom.identity_choi(2)).direction == "smaller-better"
    assert fom.FigureSpec(fom.ENT_FID).direction == "larger-better"


def test_diamond_distance_depolarizing_closed_form():
    ref = fom.identity_choi(2)
    for p in (0.5, 0.8, 0.9, 0.99):
        got = fom.diamond_distance(channels.depolarizing(p, 2), ref)
        assert abs(got - (1 - p) * 0.75) < 1e-5
    got3 = fom.diamond_distance(channels.depolarizing(0.96, 3), fom.identity_choi(3))
    assert abs(got3 - 0.04 * (1 - 1 / 9)) < 2e-6


def test_diamond_distance_self_is_zero():
    ref = fom.identity_choi(2)
    assert fom.diamond_distance(ref, ref) < 1e-7


def test_diamond_distance_symmetric():
    rng = np.random.default_rng(4)
    a = channels.sample_to_choi(qmat.haar_unitary(8, rng), DIMS22)
    b = channels.sample_to_choi(qmat.haar_unitary(8, rng), DIMS22)
    assert abs(fom.diamond_distance(a, b) - fom.diamond_distance(b, a)) < 1e-5


def test_diamond_evaluator_reports_gap():
    dd = fom.DiamondDistance(fom.identity_choi(2), DIMS22)
    dd(channels.depolarizing(0.9, 2))
    assert 0 < dd.max_gap < 1e-6
    assert dd.n_solves == 1


def test_diamond_rejects_invalid_reference():
    with pytest.raises(BadParameter):
        fom.DiamondDistance(np.eye(4), DIMS22)  # trace 4, not a Choi state


def test_entanglement_fidelity_closed_form():
    for d in (2, 3):
        for p in (0.0, 0.5, 0.9, 1.0):
            got = fom.entanglement_fidelity(channels.depolarizing(p, d))
            assert abs(got - (p + (1 - p) / d**2)) < 1e-12


def test_worst_fidelity_depolarizing_equals_entanglement_fidelity():
    for d, p in ((2, 0.9), (3, 0.96)):
        choi = channels.depolarizing(p, d)
        fe = fom.entanglement_fidelity(choi)
        fw = fom.worst_entanglement_fidelity(choi)
        assert abs(fw - fe) < 1e-5


def test_worst_fidelity_never_exceeds_entanglement_fidelity():
    rng = np.random.default_rng(23)
    ev = fom.WorstFidelity(DIMS22)
    for _ in range(10):
        choi = channels.sample_to_choi(qmat.haar_unitary(8, rng), DIMS22)
        assert ev(choi) <= fom.entanglement_fidelity(choi) + 1e-6


def test_values_stay_in_codomain():
    rng = np.random.default_rng(15)
    dd = fom.DiamondDistance(fom.identity_choi(2), DIMS22)
    fw = fom.WorstFidelity(DIMS22)
    for _ in range(5):
        choi = channels.sample_to_choi(qmat.haar_unitary(8, rng), DIMS22)
        assert 0.0 <= dd(choi) <= 1.0
        assert 0.0 <= fw(choi) <= 1.0
        assert 0.0 <= fom.entanglement_fidelity(choi) <= 1.0


def test_make_channel_evaluator_dispatch():
    spec = fom.FigureSpec(fom.ENT_FID)
    ev = fom.make_channel_evaluator(spec, DIMS22)
    assert abs(ev(channels.depolarizing(0.9, 2)) - 0.925) < 1e-12
    assert ev.max_gap == 0.0


def test_bipartite_figure_consistent_with_channel_route():
    """Pulling the figure back through the output state changes nothing."""
    sigma = np.array([[0.6, 0.1], [0.1, 0.4]])
    from qpt import tomodata

    psi = tomodata.aa_input_state(sigma)
    choi = channels.depolarizing(0.9, 2)
    rho_bp = tomodata.output_state(choi, psi, DIMS22)
    spec = fom.FigureSpec(fom.DIAMOND, fom.identity_choi(2))
    bf = fom.BipartiteFigure(spec, DIMS22)
    assert abs(bf(rho_bp) - fom.diamond_distance(choi, fom.identity_choi(2))) < 1e-5


def test_bipartite_figure_rank_guard():
    spec = fom.FigureSpec(fom.ENT_FID)
    bf = fom.BipartiteFigure(spec, DIMS22)
    rank_def = np.diag([0.5, 0.0, 0.5, 0.0])  # singular probe marginal
    with pytest.raises(RankDeficient):
        bf(rank_def)


def test_entanglement_fidelity_needs_square_dims():
    with pytest.raises(DimensionMismatch):
        fom.entanglement_fidelity(np.eye(6) / 6, ChannelDims(2, 3))


def test_evaluator_solve_time_budget():
    import time

    dd = fom.DiamondDistance(fom.identity_choi(3), ChannelDims(3, 3))
    dd(channels.depolarizing(0.96, 3))  # cold solve, cache warm-up
    t0 = time.perf_counter()
    dd(channels.depolarizing(0.9, 3))
    assert time.perf_counter() - t0 < 1.0  # well under the 1s gate
