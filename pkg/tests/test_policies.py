import math

import numpy as np
import pytest

from sdglab.coefficients import const_matrix, const_scalar, const_vector
from sdglab.grids import ValueField
from sdglab.model import ActionSets, DomainSpec, GameProblem
from sdglab.policies import (
    BangBangPolicy,
    CandidateControlSet,
    ConstantPolicy,
    ConstantResponder,
    FeedbackAlphaPolicy,
    FeedbackBetaPolicy,
    OccupancyPolicy,
    build_alpha_selector,
    build_beta_selector,
    make_feedback_policy,
    submartingale_test,
    supermartingale_test,
)
from sdglab.simulate import ControlAdaptedSpec, SimConfig, simulate_to_exit

SQRT2 = math.sqrt(2.0)
EPS = 1e-6


def _twin_beta_problem():
    """Two responder actions with identical coefficients; ties everywhere."""
    m = const_matrix([[SQRT2]])
    return GameProblem(
        actions=ActionSets(("a0",), ("b0", "b1")),
        domain=DomainSpec("box", 1, (0.0,), (1.0,)),
        sigma=((m, m),),
        b=((const_vector([0.0]), const_vector([0.0])),),
        c=((const_scalar(0.0), const_scalar(0.0)),),
        f=((const_scalar(1.0), const_scalar(1.0)),),
        g=const_scalar(0.0),
        K0=2.0,
        delta=0.5,
    )


def test_beta_selector_margins_and_outside_default(solved_analytic, analytic_problem):
    sel = build_beta_selector(analytic_problem, solved_analytic.value_, EPS)
    assert sel.role == "beta"
    assert np.all(sel.margins <= 1e-12)
    # singleton responder: only action 0 exists
    assert np.all(sel.beta_table == 0)
    out = sel.beta_at(np.array([0, 0]), np.array([[0.5], [1.7]]))
    assert out[1] == sel.default_action
    with pytest.raises(ValueError):
        sel.alpha_at(np.array([[0.5]]))


def test_alpha_selector_roundtrip(solved_game, game_problem):
    sel = build_alpha_selector(game_problem, solved_game.value_, EPS)
    assert sel.role == "alpha"
    acts = sel.alpha_at(solved_game.value_.grid.coords[solved_game.value_.grid.interior])
    assert set(np.unique(acts)) <= {0, 1}
    with pytest.raises(ValueError):
        sel.beta_at(np.array([0]), np.array([[0.5, 0.0]]))


def test_least_index_tie_break():
    from sdglab.pde import IsaacsSolver

    p = _twin_beta_problem()
    solver = IsaacsSolver(h=1 / 32).fit(p)
    sel = build_beta_selector(p, solver.value_, EPS)
    # both actions feasible at every node; the first one must win
    assert np.all(sel.beta_table == 0)


def test_selector_preconditions_reject_bad_inputs(solved_analytic, analytic_problem):
    v = solved_analytic.value_
    zero = ValueField.zeros(v.grid)
    with pytest.raises(ValueError, match="supersolution"):
        build_beta_selector(analytic_problem, zero, EPS)
    doubled = v.copy()
    doubled.values *= 2.0
    with pytest.raises(ValueError, match="subsolution"):
        build_alpha_selector(analytic_problem, doubled, EPS)
    with pytest.raises(ValueError):
        build_beta_selector(analytic_problem, v, 0.0)


def test_selector_csv_deterministic(tmp_path, solved_game, game_problem):
    bsel = build_beta_selector(game_problem, solved_game.value_, EPS)
    asel = build_alpha_selector(game_problem, solved_game.value_, EPS)
    for sel, head in ((bsel, "x1,beta_for_alpha0"), (asel, "x1,alpha")):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        sel.to_csv(p1)
        sel.to_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert p1.read_text().splitlines()[0].startswith(head)


def test_scripted_policies():
    x = np.zeros((3, 1))
    bb = BangBangPolicy([0.5, 1.0], [0, 1, 0])
    assert bb.select(0, 0.2, x)[0] == 0
    assert bb.select(0, 0.7, x)[0] == 1
    assert bb.select(0, 1.2, x)[0] == 0
    with pytest.raises(ValueError):
        BangBangPolicy([0.5], [0])
    occ = OccupancyPolicy(0, 2, 0.25, period=1.0)
    assert occ.select(0, 0.1, x)[0] == 2
    assert occ.select(0, 0.9, x)[0] == 0
    with pytest.raises(ValueError):
        OccupancyPolicy(0, 1, 1.5)
    assert list(ConstantResponder(1).respond(np.array([0, 0]), 0, 0.0, x)) == [1, 1]
    assert list(ConstantPolicy(1).select(0, 0.0, x)) == [1, 1, 1]


def test_feedback_policy_role_and_lag_checks(solved_game, game_problem):
    bsel = build_beta_selector(game_problem, solved_game.value_, EPS)
    asel = build_alpha_selector(game_problem, solved_game.value_, EPS)
    with pytest.raises(ValueError):
        FeedbackAlphaPolicy(bsel)
    with pytest.raises(ValueError):
        FeedbackBetaPolicy(asel)
    with pytest.raises(ValueError):
        FeedbackBetaPolicy(bsel, lag_n=-1)
    with pytest.raises(ValueError):
        make_feedback_policy(bsel, 0)
    assert isinstance(make_feedback_policy(bsel, 2), FeedbackBetaPolicy)
    assert isinstance(make_feedback_policy(asel, 2), FeedbackAlphaPolicy)
    assert make_feedback_policy(asel, 2).lag_n == 2


class _Recorder:
    """Leader policy that logs the state argument it is shown."""

    def __init__(self, lag_n):
        self.lag_n = lag_n
        self.seen = []

    def select(self, k, t, x):
        self.seen.append((t, x.copy()))
        return np.zeros(x.shape[0], dtype=int)


def test_lagged_policy_sees_frozen_state():
    # wide domain so no path exits during the run
    p = GameProblem(
        actions=ActionSets(("a0",), ("b0",)),
        domain=DomainSpec("box", 1, (-50.0,), (50.0,)),
        sigma=((const_matrix([[SQRT2]]),),),
        b=((const_vector([0.0]),),),
        c=((const_scalar(0.0),),),
        f=((const_scalar(0.0),),),
        g=const_scalar(0.0),
        K0=2.0,
        delta=0.5,
    )
    spec = ControlAdaptedSpec.baseline(p)
    rec = _Recorder(lag_n=2)
    cfg = SimConfig(dt=0.05, t_max=1.0, n_paths=4, seed=0)
    simulate_to_exit(p, spec, [0.0], rec, ConstantResponder(0), cfg)
    by_cell = {}
    for t, x in rec.seen:
        by_cell.setdefault(int(2 * t + 1e-9), []).append(x)
    # within each lag cell the state argument is identical; across the
    # first boundary it moves
    for xs in by_cell.values():
        for x in xs[1:]:
            assert np.array_equal(x, xs[0])
    assert not np.array_equal(by_cell[0][0], by_cell[1][0])


def test_candidate_set_validation():
    with pytest.raises(ValueError):
        CandidateControlSet([])
    cs = CandidateControlSet([ConstantPolicy(0, name="hold"), ConstantPolicy(1)])
    assert len(cs) == 2
    assert cs.names() == ["hold", "const1"]


def test_super_and_submartingale_drift(solved_game, game_problem):
    v = solved_game.value_
    bsel = build_beta_selector(game_problem, v, EPS)
    asel = build_alpha_selector(game_problem, v, EPS)
    spec = ControlAdaptedSpec.baseline(game_problem)
    cfg = SimConfig(dt=1e-3, t_max=2.0, n_paths=2000, seed=11)
    cps = (0.25, 0.5, 1.0)
    sup = supermartingale_test(
        game_problem, spec, [0.5], v, ConstantPolicy(0), FeedbackBetaPolicy(bsel), cfg, cps, EPS
    )
    assert sup.passed
    assert sup.side == "super"
    sub = submartingale_test(
        game_problem, spec, [0.5], v, FeedbackAlphaPolicy(asel), ConstantResponder(0), cfg, cps, EPS
    )
    assert sub.passed
    assert "drift" in sub.summary()
    with pytest.raises(ValueError):
        supermartingale_test(
            game_problem, spec, [0.5], v, ConstantPolicy(0), FeedbackBetaPolicy(bsel), cfg, (), EPS
        )
