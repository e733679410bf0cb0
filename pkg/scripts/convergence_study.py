"""Grid-refinement study: how fast the finite-difference solver closes in
on the closed form, and where the discrete policy sits relative to the
feedback rule.

    python3 scripts/convergence_study.py [n_base]
"""

import sys

import numpy as np

from underwater import dual, fbp, hjb
from underwater.model import ModelParams, validate

PARAMS = validate(ModelParams(r=0.02, mu=0.06, sigma=0.20, c=1.0, lam=0.04, L=10.0))


def main():
    n_base = int(sys.argv[1]) if len(sys.argv) > 1 else 250
    sol = fbp.solve(PARAMS)
    print(f"closed form: rho={sol.rho:.12f} y0={sol.y0:.12f} yl={sol.yl:.12f}")
    print(f"{'n':>6} {'h':>10} {'iters':>6} {'max|err|':>12} {'ratio':>7}")
    prev = None
    for level in range(5):
        spec = hjb.grid_for_params(PARAMS, n_base * 2**level)
        gs = hjb.solve_grid(PARAMS, spec)
        err = hjb.max_error_vs_closed_form(PARAMS, spec, sol=sol, grid_sol=gs)
        ratio = f"{prev / err:7.2f}" if prev else "      -"
        print(f"{spec.n:>6} {spec.h:>10.5f} {gs.iterations:>6} {err:>12.3e} {ratio}")
        prev = err
    w_int = spec.nodes()[1:-1]
    print("\npolicy vs feedback rule at the finest level:")
    for wq in (-8.0, -4.0, -1.0, -0.1, 0.1, 2.0, 20.0, 45.0):
        i = int(np.argmin(np.abs(w_int - wq)))
        exact = dual.pi_star(sol, float(w_int[i]))
        print(f"  w={w_int[i]:8.3f}  grid={gs.policies[i]:10.4f}  "
              f"closed={exact:10.4f}  rel={abs(gs.policies[i]/exact-1):.2e}")


if __name__ == "__main__":
    main()
