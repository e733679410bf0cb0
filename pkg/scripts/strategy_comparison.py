"""Monte Carlo strategy shoot-out with common random numbers: the optimal
rule against the ruin-minimizing, constant and no-trading benchmarks.

    python3 scripts/strategy_comparison.py [n_paths] [dt]
"""

import sys

from underwater import dual, fbp, mc
from underwater.model import ModelParams, constants, validate

PARAMS = validate(ModelParams(r=0.02, mu=0.06, sigma=0.20, c=1.0, lam=0.04, L=10.0))


def main():
    n_paths = int(sys.argv[1]) if len(sys.argv) > 1 else 50_000
    dt = float(sys.argv[2]) if len(sys.argv) > 2 else 1e-3
    sol = fbp.solve(PARAMS)
    consts = constants(PARAMS)
    strategies = [
        mc.optimal_strategy(sol),
        mc.ruin_min_strategy(consts, PARAMS),
        mc.constant_strategy(20.0, PARAMS),
        mc.zero_strategy(PARAMS),
    ]
    for w0 in (-2.0, 0.0, 10.0):
        closed = dual.value(sol, w0, 0.0)
        print(f"\nw0 = {w0:g}   closed form = {closed:.4f} years")
        cfg = mc.SimConfig(w0=w0, n_paths=n_paths, dt=dt, seed=7)
        table = mc.compare(PARAMS, strategies, cfg)
        print(f"  {'strategy':<14} {'mean':>9} {'stderr':>8} {'excess':>8} "
              f"{'ruined':>7} {'safe':>6}")
        for name, est in table.items():
            print(f"  {name:<14} {est.mean:>9.4f} {est.stderr:>8.4f} "
                  f"{est.mean - closed:>+8.4f} "
                  f"{est.n_ruin / est.n_paths:>7.2%} "
                  f"{est.n_safe / est.n_paths:>6.2%}")


if __name__ == "__main__":
    main()
