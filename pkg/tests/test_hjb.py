import numpy as np
import pytest

from underwater import dual, fbp, hjb


@pytest.fixture(scope="module")
def canonical_grid(canonical):
    spec = hjb.grid_for_params(canonical, 1000)
    return spec, hjb.solve_grid(canonical, spec)


def test_grid_contains_zero_node(canonical):
    spec = hjb.grid_for_params(canonical, 1000)
    w = spec.nodes()
    assert 0.0 in w
    assert w[0] == -canonical.L
    assert w[-1] == pytest.approx(canonical.safe_level, rel=1e-15)
    assert spec.h == pytest.approx((canonical.safe_level + canonical.L) / (spec.n + 1))
    steps = np.diff(w)
    assert np.allclose(steps, spec.h, rtol=1e-9)


def test_grid_snapping_is_minimal(canonical):
    # canonical span is 60 with L = 10, so n+1 must be a multiple of 6
    assert hjb.grid_for_params(canonical, 1000).n == 1001
    assert hjb.grid_for_params(canonical, 4000).n == 4001


def test_boundary_values_pinned(canonical, canonical_grid):
    _, gs = canonical_grid
    assert gs.values[0] == 1.0 / canonical.lam
    assert gs.values[-1] == 0.0
    assert np.all(gs.values >= -1e-12)
    assert np.all(gs.values <= 1.0 / canonical.lam + 1e-12)


def test_matches_closed_form(canonical, canonical_sol, canonical_grid):
    spec, gs = canonical_grid
    err = hjb.max_error_vs_closed_form(canonical, spec, sol=canonical_sol, grid_sol=gs)
    assert err <= 1e-4  # n ~ 1000 already sits far below the desk-scale gate


def test_grid_convergence_factor(canonical, canonical_sol):
    errs = []
    for n in (250, 500, 1000):
        spec = hjb.grid_for_params(canonical, n)
        errs.append(hjb.max_error_vs_closed_form(canonical, spec, sol=canonical_sol))
    assert errs[0] / errs[1] >= 1.7
    assert errs[1] / errs[2] >= 1.7


def test_policy_iteration_monotone(canonical_grid):
    _, gs = canonical_grid
    # values never rise between successive evaluations beyond tolerance
    assert gs.max_increase <= 1e-8
    assert gs.sup_steps[-1] <= 1e-10
    assert gs.residual <= 1e-8


def test_m_matrix_structure(canonical, canonical_grid):
    spec, gs = canonical_grid
    w_int = spec.nodes()[1:-1]
    assert hjb.is_m_matrix(canonical, w_int, spec.h, gs.policies)
    assert hjb.is_m_matrix(canonical, w_int, spec.h, np.zeros(spec.n))
    assert hjb.is_m_matrix(canonical, w_int, spec.h, np.full(spec.n, gs.pi_cap))


def test_grid_policy_matches_feedback_form(canonical, canonical_sol, canonical_grid):
    spec, gs = canonical_grid
    w_int = spec.nodes()[1:-1]
    for wq in (-8.0, -4.0, -1.0, 2.0, 10.0, 30.0):
        i = int(np.argmin(np.abs(w_int - wq)))
        exact = dual.pi_star(canonical_sol, float(w_int[i]))
        assert gs.policies[i] == pytest.approx(exact, rel=5e-3)


def test_cap_never_binds_at_optimum(canonical_grid):
    spec, gs = canonical_grid
    w_int = spec.nodes()[1:-1]
    # allow the documented small neighbourhood of -L, and the interface
    # node whose row ignores its policy
    interior = (w_int > -spec.w_lo * 0.0 - 9.9) & (w_int != 0.0)
    assert not np.any(gs.cap_binding & interior)


def test_zero_policy_returns_no_trade_value(canonical, canonical_sol):
    spec = hjb.grid_for_params(canonical, 2000)
    m0 = hjb.policy_evaluation(canonical, spec, np.zeros(spec.n))
    w = spec.nodes()
    exact_nt = hjb.no_trade_value(canonical, w)
    assert np.max(np.abs(m0 - exact_nt)) <= 0.05  # first-order at the kink
    closed = hjb.closed_form_on_grid(canonical_sol, w)
    assert np.all(m0 >= closed - 1e-8)


def test_non_convergence_reported(canonical):
    spec = hjb.grid_for_params(canonical, 300, max_iters=2)
    with pytest.raises(RuntimeError, match="did not converge"):
        hjb.solve_grid(canonical, spec)


def test_closed_form_residual_small(canonical, canonical_sol, second, second_sol):
    for params, sol in ((canonical, canonical_sol), (second, second_sol)):
        grid = np.linspace(-params.L, params.safe_level, 2002)[1:-1]
        res, scale = hjb.closed_form_residuals(params, sol, grid)
        assert np.max(np.abs(res) / scale) <= 1e-8
        assert hjb.residual_of_closed_form(params, sol, grid) <= 1e-6


def test_corrupted_solution_caught_by_residual(canonical, canonical_sol):
    from dataclasses import replace

    bad = replace(canonical_sol, y0=canonical_sol.y0 * 1.01)
    grid = np.linspace(-canonical.L, canonical.safe_level, 500)[1:-1]
    res, scale = hjb.closed_form_residuals(canonical, bad, grid)
    assert np.max(np.abs(res) / scale) > 1e-4


def test_second_set_oracle(second, second_sol):
    spec = hjb.grid_for_params(second, 1000)
    err = hjb.max_error_vs_closed_form(second, spec, sol=second_sol)
    assert err <= 1e-4


def test_rgtl_set_oracle(rgtl, rgtl_sol):
    spec = hjb.grid_for_params(rgtl, 1000)
    err = hjb.max_error_vs_closed_form(rgtl, spec, sol=rgtl_sol)
    assert err <= 5e-4
