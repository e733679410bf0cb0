import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from underwater import fbp
from underwater.model import ModelParams, constants, validate

import oracles


param_sets = st.builds(
    ModelParams,
    r=st.floats(0.005, 0.10),
    mu=st.floats(0.11, 0.30),
    sigma=st.floats(0.08, 0.7),
    c=st.floats(0.2, 3.0),
    lam=st.floats(0.01, 0.3),
    L=st.floats(0.5, 40.0),
)


# ---------------------------------------------------------------- ratio

def test_ratio_rhs_is_one_at_one(canonical_constants):
    # b1*(1-b2) + (b1-1)*b2 = b1 - b2, so the rhs equals 1 exactly at rho=1
    assert fbp.ratio_rhs(1.0, canonical_constants) == pytest.approx(1.0, rel=1e-14)


def test_ratio_tends_to_one_as_L_vanishes(canonical):
    params = validate(ModelParams(**{**canonical.__dict__, "L": 1e-8}))
    rho = fbp.solve_ratio(constants(params), params)
    assert rho > 0.999


def test_canonical_ratio_frozen(canonical_sol):
    # oracle bisection at 40 digits: rho = 0.85813051185342106642...
    assert canonical_sol.rho == pytest.approx(0.85813051185342106642, rel=1e-13)


def test_bisection_bracket_shrinks_monotonically(canonical, canonical_constants):
    trace = []
    rho = fbp.solve_ratio(canonical_constants, canonical, trace=trace)
    assert len(trace) > 30
    assert all(b - a > 0 for a, b in zip(trace[1:], trace[:-1]))
    target = canonical.c / (canonical.c + canonical.r * canonical.L)
    assert abs(fbp.ratio_rhs(rho, canonical_constants) - target) <= 1e-13


# ------------------------------------------------------------ boundaries

def test_canonical_boundaries_frozen(canonical_sol):
    # oracle: y0 = 0.98324789115836393771, yl = 1.145802273170207952
    assert canonical_sol.y0 == pytest.approx(0.98324789115836393771, rel=1e-13)
    assert canonical_sol.yl == pytest.approx(1.145802273170207952, rel=1e-13)


def test_second_set_boundaries_frozen(second_sol):
    # oracle run on (r=0.03, mu=0.08, sigma=0.25, c=1, lam=0.05, L=5)
    assert second_sol.rho == pytest.approx(0.9202160328812661, rel=1e-13)
    assert second_sol.y0 == pytest.approx(1.1453496015878375, rel=1e-13)
    assert second_sol.yl == pytest.approx(1.2446529517657512, rel=1e-13)


def test_boundaries_match_oracle(rgtl, rgtl_sol):
    rho, y0, yl = oracles.boundaries(rgtl.r, rgtl.mu, rgtl.sigma, rgtl.c, rgtl.lam, rgtl.L)
    assert rgtl_sol.rho == pytest.approx(float(rho), rel=1e-12)
    assert rgtl_sol.y0 == pytest.approx(float(y0), rel=1e-12)
    assert rgtl_sol.yl == pytest.approx(float(yl), rel=1e-12)


def test_value_matching_at_y0(canonical_sol):
    sol = canonical_sol
    inner = sol.constants.safe_level * sol.y0 * (1.0 - 1.0 / sol.constants.b1)
    outer = fbp.mhat(sol, math.nextafter(sol.y0, sol.yl))
    assert outer == pytest.approx(inner, rel=1e-10)


def test_boundary_conditions(canonical_sol):
    sol, p, k = canonical_sol, canonical_sol.params, canonical_sol.constants
    assert fbp.mhat(sol, 0.0) == 0.0
    assert abs(fbp.mhat_d1(sol, sol.y0)) <= 1e-12 * k.safe_level
    assert fbp.mhat_d1(sol, sol.yl) == pytest.approx(-p.L, rel=1e-12)
    assert fbp.mhat(sol, sol.yl) == pytest.approx(1.0 / p.lam - p.L * sol.yl, rel=1e-12)


def test_inner_value_at_y0(canonical_sol):
    sol, k = canonical_sol, canonical_sol.constants
    expect = k.safe_level * sol.y0 * (1.0 - 1.0 / k.b1)
    assert fbp.mhat(sol, sol.y0) == pytest.approx(expect, rel=1e-13)


def test_derivative_at_origin(canonical_sol):
    assert fbp.mhat_d1(canonical_sol, 0.0) == pytest.approx(
        canonical_sol.constants.safe_level, rel=1e-14
    )


def test_second_derivative_jump(canonical_sol):
    sol = canonical_sol
    jump = fbp.mhat_d2(sol, sol.y0, side="right") - fbp.mhat_d2(sol, sol.y0, side="left")
    assert jump == pytest.approx(fbp.d2_jump(sol), rel=1e-10)
    assert fbp.d2_jump(sol) == pytest.approx(
        -1.0 / (sol.constants.delta * sol.y0**2), rel=1e-15
    )


def test_coefficient_signs(canonical_sol, second_sol, rgtl_sol):
    for sol in (canonical_sol, second_sol, rgtl_sol):
        assert 0.0 < sol.rho < 1.0
        assert sol.y0 == pytest.approx(sol.rho * sol.yl, rel=1e-14)
        assert sol.d_in < 0.0
        assert sol.d1 < 0.0
        assert sol.d2 < 0.0
        assert sol.d_in == pytest.approx(
            -(sol.params.c / (sol.params.r * sol.constants.b1))
            * sol.y0 ** (1.0 - sol.constants.b1),
            rel=1e-14,
        )


# ------------------------------------------------------------ shape

def _region_grids(sol, n=1000):
    inner = np.linspace(sol.y0 * 1e-4, sol.y0, n, endpoint=False)[1:]
    outer = np.linspace(sol.y0, sol.yl, n + 1, endpoint=False)[1:]
    return inner, outer


def test_concavity_and_slope_split(canonical_sol):
    sol = canonical_sol
    inner, outer = _region_grids(sol)
    assert np.all(fbp.mhat_d2(sol, inner) < 0.0)
    assert np.all(fbp.mhat_d2(sol, outer) < 0.0)
    assert np.all(fbp.mhat_d1(sol, inner) > 0.0)
    assert np.all(fbp.mhat_d1(sol, outer) < 0.0)


def test_upper_envelope(canonical_sol):
    sol = canonical_sol
    y = np.linspace(0.0, sol.yl, 4001)
    m = fbp.mhat(sol, y)
    env = fbp.upper_envelope(sol, y)
    assert np.all(m <= env + 1e-12 * np.maximum(1.0, np.abs(env)))
    # tangency: equality at the ends, matching one-sided slopes
    assert m[0] == env[0] == 0.0
    assert m[-1] == pytest.approx(env[-1], rel=1e-12)
    assert fbp.mhat_d1(sol, 0.0) == pytest.approx(sol.constants.safe_level, rel=1e-13)
    assert fbp.mhat_d1(sol, sol.yl) == pytest.approx(-sol.params.L, rel=1e-12)


def test_ode_residual_small(canonical_sol, second_sol):
    for sol in (canonical_sol, second_sol):
        inner, outer = _region_grids(sol, n=1000)
        for grid in (inner, outer):
            res = fbp.ode_residual(sol, grid)
            scale = np.maximum(1.0, np.abs(sol.params.lam * fbp.mhat(sol, grid)))
            assert np.max(np.abs(res) / scale) <= 1e-9


# ------------------------------------------------------------ errors

def test_domain_rejected(canonical_sol):
    with pytest.raises(ValueError, match="outside"):
        fbp.mhat(canonical_sol, -0.1)
    with pytest.raises(ValueError, match="outside"):
        fbp.mhat(canonical_sol, canonical_sol.yl * 1.01)


def test_side_flag_required_at_y0(canonical_sol):
    with pytest.raises(ValueError, match="side"):
        fbp.mhat_d2(canonical_sol, canonical_sol.y0)
    with pytest.raises(ValueError, match="side"):
        fbp.mhat_d3(canonical_sol, canonical_sol.y0)


def test_d2_rejects_origin(canonical_sol):
    with pytest.raises(ValueError, match="positive"):
        fbp.mhat_d2(canonical_sol, 0.0)


# ------------------------------------------------------------ properties

@given(param_sets)
@settings(max_examples=30, deadline=None)
def test_solution_invariants_hold_generally(params):
    params = validate(params)
    sol = fbp.solve(params)
    k = sol.constants
    assert 0.0 < sol.rho < 1.0
    assert 0.0 < sol.y0 < sol.yl
    # value matching and smooth fit
    inner = k.safe_level * sol.y0 * (1.0 - 1.0 / k.b1)
    outer = fbp.mhat(sol, math.nextafter(sol.y0, sol.yl))
    assert outer == pytest.approx(inner, rel=1e-9)
    assert abs(fbp.mhat_d1(sol, sol.y0)) <= 1e-11 * k.safe_level
    # concavity + ODE on a coarse grid
    inner_g, outer_g = _region_grids(sol, n=60)
    assert np.all(fbp.mhat_d2(sol, inner_g) < 0.0)
    assert np.all(fbp.mhat_d2(sol, outer_g) < 0.0)
    for grid in (inner_g, outer_g):
        res = fbp.ode_residual(sol, grid)
        scale = np.maximum(1.0, np.abs(params.lam * fbp.mhat(sol, grid)))
        assert np.max(np.abs(res) / scale) <= 1e-9
    env = fbp.upper_envelope(sol, outer_g)
    assert np.all(fbp.mhat(sol, outer_g) <= env + 1e-10 * np.maximum(1.0, np.abs(env)))
