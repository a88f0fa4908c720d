import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdglab.coefficients import const_matrix, const_scalar, const_vector
from sdglab.grids import DomainGrid
from sdglab.model import (
    ActionSets,
    DomainSpec,
    GameProblem,
    build_barrier,
    diffusion_matrix,
    effective_drift,
    validate_problem,
)

SQRT2 = math.sqrt(2.0)


def test_action_sets_reject_empty_and_collisions():
    with pytest.raises(ValueError):
        ActionSets((), ("b0",))
    with pytest.raises(ValueError):
        ActionSets(("a0",), ("b0",), ("a0",))
    acts = ActionSets(("a0", "a1"), ("b0",), ("p0",))
    assert (acts.n_alpha, acts.n_beta, acts.n_alpha2) == (2, 1, 1)


def test_box_membership_and_distance():
    dom = DomainSpec("box", 2, (0.0, 0.0), (1.0, 2.0))
    pts = np.array([[0.5, 1.0], [0.0, 1.0], [-0.1, 1.0], [0.5, 2.5]])
    assert list(dom.contains(pts)) == [True, False, False, False]
    d = dom.boundary_distance(pts)
    assert d[0] == pytest.approx(0.5)
    assert d[1] == pytest.approx(0.0)
    assert d[2] == pytest.approx(-0.1)


def test_ball_membership_and_distance():
    dom = DomainSpec("ball", 2, center=(1.0, 1.0), radius=0.5)
    assert dom.contains(np.array([[1.0, 1.2]]))[0]
    assert not dom.contains(np.array([[1.0, 1.5]]))[0]
    assert dom.boundary_distance(np.array([[1.0, 1.0]]))[0] == pytest.approx(0.5)
    lo, up = dom.bounding_box()
    assert np.allclose(lo, [0.5, 0.5]) and np.allclose(up, [1.5, 1.5])


def test_domain_rejects_bad_specs():
    with pytest.raises(ValueError):
        DomainSpec("box", 1, (1.0,), (0.0,))
    with pytest.raises(ValueError):
        DomainSpec("ball", 2, center=(0.0,), radius=1.0)
    with pytest.raises(ValueError):
        DomainSpec("pentagon", 2)


def _singleton(sigma=SQRT2, bdrift=0.0, c=0.0, f=1.0, delta=0.5, d1=1):
    return GameProblem(
        actions=ActionSets(("a0",), ("b0",)),
        domain=DomainSpec("box", 1, (0.0,), (1.0,)),
        sigma=((const_matrix([[sigma] + [0.0] * (d1 - 1)]),),),
        b=((const_vector([bdrift]),),),
        c=((const_scalar(c),),),
        f=((const_scalar(f),),),
        g=const_scalar(0.0),
        K0=2.0,
        delta=delta,
        d=1,
        d1=d1,
    )


def test_problem_shape_checks():
    with pytest.raises(ValueError):
        _singleton(delta=0.0)
    with pytest.raises(ValueError):
        GameProblem(
            actions=ActionSets(("a0", "a1"), ("b0",)),
            domain=DomainSpec("box", 1, (0.0,), (1.0,)),
            sigma=((const_matrix([[1.0]]),),),  # one row, two alphas declared
            b=((const_vector([0.0]),),),
            c=((const_scalar(0.0),),),
            f=((const_scalar(0.0),),),
            g=const_scalar(0.0),
            K0=1.0,
            delta=0.5,
        )


def test_noise_dimension_at_least_state_dimension():
    with pytest.raises(ValueError):
        GameProblem(
            actions=ActionSets(("a0",), ("b0",)),
            domain=DomainSpec("box", 2, (0.0, 0.0), (1.0, 1.0)),
            sigma=((const_matrix([[1.0], [0.0]]),),),
            b=((const_vector([0.0, 0.0]),),),
            c=((const_scalar(0.0),),),
            f=((const_scalar(0.0),),),
            g=const_scalar(0.0),
            K0=1.0,
            delta=0.5,
            d=2,
            d1=1,
        )


def test_diffusion_matrix_is_half_sigma_sigma_t():
    p = _singleton(sigma=SQRT2)
    a = diffusion_matrix(p, 0, 0, [0.5])
    assert a.shape == (1, 1)
    assert a[0, 0] == pytest.approx(1.0)


def test_diffusion_matrix_symmetric_psd_2d():
    sig = const_matrix([[1.0, 0.3], [0.0, 0.8]])
    p = GameProblem(
        actions=ActionSets(("a0",), ("b0",)),
        domain=DomainSpec("box", 2, (0.0, 0.0), (1.0, 1.0)),
        sigma=((sig,),),
        b=((const_vector([0.0, 0.0]),),),
        c=((const_scalar(0.0),),),
        f=((const_scalar(0.0),),),
        g=const_scalar(0.0),
        K0=2.0,
        delta=0.1,
        d=2,
        d1=2,
    )
    a = diffusion_matrix(p, 0, 0, [0.5, 0.5])
    assert np.allclose(a, a.T)
    assert np.all(np.linalg.eigvalsh(a) >= 0)


def test_effective_drift_identity_configuration():
    p = _singleton(bdrift=0.7)
    out = effective_drift(p, 0, 0, [0.5], r=1.0, pi=[0.0])
    assert np.allclose(out, [0.7])


def test_effective_drift_scales_and_adds_measure_term():
    p = _singleton(bdrift=1.0)
    out = effective_drift(p, 0, 0, [0.5], r=2.0, pi=[0.5])
    assert np.allclose(out, [4.0 * (1.0 + SQRT2 * 0.5)])


def test_effective_drift_rejects_out_of_range_controls():
    p = _singleton()
    with pytest.raises(ValueError):
        effective_drift(p, 0, 0, [0.5], r=3.0, pi=[0.0])
    with pytest.raises(ValueError):
        effective_drift(p, 0, 0, [0.5], r=1.0, pi=[2.0])


def test_validate_problem_passes_on_good_problem():
    p = _singleton()
    grid = DomainGrid.build(p.domain, 1 / 32)
    rep = validate_problem(p, grid)
    assert rep.passed
    assert rep.discount_margin >= 0
    assert "PASS" in rep.summary()


def test_validate_problem_flags_ellipticity_violation():
    p = _singleton(sigma=0.5, delta=0.5)  # a = 0.125 < delta
    grid = DomainGrid.build(p.domain, 1 / 32)
    rep = validate_problem(p, grid)
    assert not rep.passed
    assert rep.ellipticity_lower_margin < 0


def test_validate_problem_flags_negative_discount():
    p = _singleton(c=-0.1)
    grid = DomainGrid.build(p.domain, 1 / 32)
    rep = validate_problem(p, grid)
    assert not rep.passed
    assert rep.discount_margin < 0


def test_barrier_nonnegative_and_generator_negative():
    p = _singleton(bdrift=0.5)
    grid = DomainGrid.build(p.domain, 1 / 32)
    psi = build_barrier(p, grid)
    vals = psi(grid.coords)
    assert np.all(vals >= -1e-12)
    gen = psi.generator_value(p, 0, 0, grid.coords)
    assert np.all(gen <= -1.0 + 1e-9)
    assert psi.upper_bound(p) >= vals.max() - 1e-12


@given(
    r=st.floats(0.5, 2.0),
    pi=st.floats(-1.0, 1.0),
    bdrift=st.floats(-1.0, 1.0),
)
def test_effective_drift_formula(r, pi, bdrift):
    p = _singleton(bdrift=bdrift)
    out = effective_drift(p, 0, 0, [0.5], r=r, pi=[pi])
    expect = r * r * (bdrift + SQRT2 * pi)
    assert out[0] == pytest.approx(expect, rel=1e-12, abs=1e-12)
