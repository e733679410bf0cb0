import numpy as np
import pytest

from underwater import dual, fbp, mc, penalty as pen


TWO_STEP = pen.StepPenalty((0.0, -2.0), (1.0, 2.0))


@pytest.fixture(scope="module")
def indicator_sol(canonical):
    return pen.solve_penalized(canonical, pen.StepPenalty.indicator())


@pytest.fixture(scope="module")
def two_step_sol(canonical):
    return pen.solve_penalized(canonical, TWO_STEP)


# ------------------------------------------------------------ validation

def test_penalty_validation():
    with pytest.raises(ValueError, match="decreasing"):
        pen.StepPenalty((-1.0, 0.0), (1.0, 2.0))
    with pytest.raises(ValueError, match="at or below 0"):
        pen.StepPenalty((0.5,), (1.0,))
    with pytest.raises(ValueError, match="increasing"):
        pen.StepPenalty((0.0, -1.0), (2.0, 1.0))
    with pytest.raises(ValueError, match="equal length"):
        pen.StepPenalty((0.0,), (1.0, 2.0))
    with pytest.raises(ValueError, match="non-negative"):
        pen.StepPenalty((0.0,), (-1.0,))


def test_thresholds_must_exceed_cutoff(canonical):
    with pytest.raises(ValueError, match="above -L"):
        pen.solve_penalized(canonical, pen.StepPenalty((0.0, -10.0), (1.0, 2.0)))


def test_weight_shape():
    ind = pen.StepPenalty.indicator()
    assert ind.weight(0.5) == 0.0
    assert ind.weight(0.0) == 0.0
    assert ind.weight(-0.5) == 1.0
    assert np.all(TWO_STEP.weight(np.array([1.0, -1.0, -2.0, -3.0]))
                  == np.array([0.0, 1.0, 1.0, 2.0]))


# ------------------------------------------------------------ reduction

def test_indicator_reduces_to_baseline(canonical_sol, indicator_sol):
    sol, ms = canonical_sol, indicator_sol
    assert ms.y_bounds[0] == pytest.approx(sol.y0, rel=1e-9)
    assert ms.y_out == pytest.approx(sol.yl, rel=1e-9)
    assert ms.coef1[0] == pytest.approx(sol.d_in, rel=1e-9)
    assert ms.coef1[1] == pytest.approx(sol.d1, rel=1e-9)
    assert ms.coef2[1] == pytest.approx(sol.d2, rel=1e-9)
    assert ms.coef2[0] == 0.0


def test_indicator_value_and_policy_match_baseline(canonical_sol, indicator_sol):
    sol, ms = canonical_sol, indicator_sol
    for w in np.linspace(-9.9, 49.9, 97):
        w = float(w)
        assert pen.value_penalized(ms, w) == pytest.approx(
            dual.value(sol, w, 0.0), rel=1e-9, abs=1e-12
        )
        if w != 0.0:
            assert pen.pi_penalized(ms, w) == pytest.approx(
                dual.pi_star(sol, w), rel=1e-9
            )


# ------------------------------------------------------------ boundaries

def test_boundary_values(canonical, two_step_sol):
    lam = canonical.lam
    assert pen.value_penalized(two_step_sol, canonical.safe_level, 2.0) == 2.0
    assert pen.value_penalized(two_step_sol, 70.0, 0.0) == 0.0
    assert pen.value_penalized(two_step_sol, -canonical.L, 1.0) == 1.0 + 2.0 / lam
    assert pen.value_penalized(two_step_sol, -42.0, 0.0) == 2.0 / lam


def test_negative_accrual_rejected(two_step_sol):
    with pytest.raises(ValueError, match="non-negative"):
        pen.value_penalized(two_step_sol, 0.0, -0.5)


def test_dual_continuity_at_internal_boundaries(two_step_sol):
    ms = two_step_sol
    for yk in ms.y_bounds:
        below = pen.mhat_penalized(ms, np.nextafter(yk, 0.0))
        above = pen.mhat_penalized(ms, np.nextafter(yk, ms.y_out))
        assert above == pytest.approx(below, rel=1e-10)
        s_below = pen.mhat_penalized_d1(ms, np.nextafter(yk, 0.0))
        s_above = pen.mhat_penalized_d1(ms, np.nextafter(yk, ms.y_out))
        assert s_above == pytest.approx(s_below, rel=1e-8, abs=1e-10)


def test_terminal_conditions(canonical, two_step_sol):
    ms = two_step_sol
    lam, L = canonical.lam, canonical.L
    assert pen.mhat_penalized(ms, 0.0) == 0.0
    assert pen.mhat_penalized(ms, ms.y_out) == pytest.approx(
        2.0 / lam - L * ms.y_out, rel=1e-12
    )
    assert pen.mhat_penalized_d1(ms, ms.y_out) == pytest.approx(-L, rel=1e-12)


def test_boundaries_dual_to_thresholds(two_step_sol):
    ms = two_step_sol
    for wk, yk in zip(ms.penalty.thresholds, ms.y_bounds):
        assert pen.mhat_penalized_d1(ms, yk) == pytest.approx(wk, abs=1e-10)
        assert pen.invert_penalized(ms, wk) == pytest.approx(yk, rel=1e-12)


# ------------------------------------------------------------ shape

def test_concavity_per_segment(two_step_sol):
    ms = two_step_sol
    edges = (0.0,) + ms.y_bounds + (ms.y_out,)
    for lo, hi in zip(edges[:-1], edges[1:]):
        grid = np.linspace(lo, hi, 40)[1:-1]
        for y in grid:
            assert pen.mhat_penalized_d2(ms, float(y)) < 0.0


def test_segment_ode_residual(canonical, two_step_sol):
    ms = two_step_sol
    p, k = canonical, ms.constants
    edges = (0.0,) + ms.y_bounds + (ms.y_out,)
    for seg, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        src = ms.source_level(seg)
        for y in np.linspace(lo, hi, 25)[1:-1]:
            y = float(y)
            res = (
                p.lam * pen.mhat_penalized(ms, y)
                - (p.lam - p.r) * y * pen.mhat_penalized_d1(ms, y)
                - k.delta * y * y * pen.mhat_penalized_d2(ms, y)
                - p.c * y - src
            )
            assert abs(res) <= 1e-9 * max(1.0, abs(p.lam * pen.mhat_penalized(ms, y)))


def test_primal_convexity(two_step_sol):
    ms = two_step_sol
    grid = np.linspace(-9.9, 49.5, 300)
    vals = np.array([pen.value_penalized(ms, float(w)) for w in grid])
    d2 = np.diff(vals, 2)
    assert np.all(d2 > -1e-9)
    assert np.all(np.diff(vals) < 0.0)


# ------------------------------------------------------------ invariants

def test_two_step_value_between_scaled_baselines(canonical_sol, two_step_sol):
    lo = dual.value(canonical_sol, -1.0, 0.0)
    v = pen.value_penalized(two_step_sol, -1.0)
    assert lo < v < 2.0 * lo


def test_scaling_homogeneity(canonical, two_step_sol):
    ms3 = pen.solve_penalized(canonical, TWO_STEP.scaled(3.0))
    for w in np.linspace(-9.5, 49.0, 41):
        w = float(w)
        a = pen.value_penalized(ms3, w)
        b = 3.0 * pen.value_penalized(two_step_sol, w)
        assert abs(a - b) <= 1e-10 * max(1.0, abs(b))


def test_monotone_in_penalty(canonical, canonical_sol, indicator_sol, two_step_sol):
    # indicator <= two-step pointwise, so the values order the same way
    for w in np.linspace(-9.0, 45.0, 31):
        w = float(w)
        assert (
            pen.value_penalized(indicator_sol, w)
            <= pen.value_penalized(two_step_sol, w) + 1e-12
        )


def test_pi_jump_at_thresholds(two_step_sol):
    ms = two_step_sol
    for k_thr, wk in enumerate(ms.penalty.thresholds, start=1):
        left = pen.pi_penalized(ms, wk, side="left")
        right = pen.pi_penalized(ms, wk, side="right")
        assert left - right == pytest.approx(
            pen.pi_jump_at_threshold(ms, k_thr), rel=1e-10
        )
        assert left > right


def test_pi_requires_side_at_threshold(two_step_sol):
    with pytest.raises(ValueError, match="side"):
        pen.pi_penalized(two_step_sol, -2.0)


def test_pi_vanishes_at_safe_level(two_step_sol):
    assert pen.pi_penalized(two_step_sol, 49.999999) == pytest.approx(0.0, abs=1e-5)


# ------------------------------------------------------------ degenerate

def test_zero_penalty_trivial(canonical):
    ms = pen.solve_penalized(canonical, pen.StepPenalty((0.0,), (0.0,)))
    assert ms.trivial
    assert pen.value_penalized(ms, -3.0, 1.5) == 1.5
    assert pen.pi_penalized(ms, -3.0) == 0.0


# ------------------------------------------------------------ simulation

def test_strategy_tables(canonical, two_step_sol):
    strat = pen.penalized_strategy(two_step_sol)
    for w in (-6.0, -3.0, -1.0, -0.2):
        assert strat.allocation(w) == pytest.approx(
            pen.pi_penalized(two_step_sol, w), rel=1e-5
        )
    k = two_step_sol.constants
    for w in (1.0, 25.0):
        assert strat.allocation(w) == pytest.approx(
            (canonical.mu - canonical.r) / canonical.sigma**2
            * (k.b1 - 1.0) * (k.safe_level - w),
            rel=1e-12,
        )


def test_mc_consistency_two_step(canonical, two_step_sol):
    strat = pen.penalized_strategy(two_step_sol)
    cfg = mc.SimConfig(w0=-1.0, n_paths=20_000, dt=1e-3, seed=17)
    est = mc.simulate(canonical, strat, cfg, penalty=TWO_STEP)
    target = pen.value_penalized(two_step_sol, -1.0)
    assert abs(est.mean - target) <= 3.0 * est.stderr + 0.05
