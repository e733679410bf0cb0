"""Monte Carlo estimator of the expected penalized time below zero.

Each path draws an exponential death time, then walks the wealth SDE

    dW = (r*W + (mu-r)*pi(W) - c) dt + sigma*pi(W) dB

with explicit Euler steps, the control evaluated at the step's left
endpoint.  The running cost accumulates weight(W_left) * dt (the plain
occupation time uses weight = 1{w<0}); the path stops at death, at the
first crossing of -L (terminal payoff f(-L)/lam), at the first crossing of
the safe level c/r (no further cost can accrue), or at the t_max safety
cap.  Crossings are detected by post-step comparison, so the estimator
carries an O(sqrt(dt)) boundary bias that the dt-refinement tests make
visible.

Randomness: each path owns a splitmix64 stream keyed by mixing the root
seed with the path index, and normals come from the Box-Muller transform
of consecutive stream outputs.  Same (seed, path index) => same variates,
independent of batch sizes, thread scheduling or the strategy being
simulated, which is what makes common-random-number comparisons and
bitwise reproducibility work.  Per-path results land in per-path slots and
are reduced in a fixed order afterwards.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from . import dual, fbp
from .model import ModelParams, MarketConstants, risk_ratio

N_TABLE = 4097  # nodes per interpolation table; curvature error ~ (L/4096)^2


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls.

    t_max defaults to 20 expected lifetimes and must stay >= 10/lam; paths
    that reach it are counted and reported, and a warning fires if they
    exceed 0.1% of the total.
    """

    w0: float
    a0: float = 0.0
    dt: float = 1e-3
    n_paths: int = 10_000
    seed: int = 0
    t_max: float | None = None

    def resolved_t_max(self, params: ModelParams) -> float:
        t = self.t_max if self.t_max is not None else 20.0 / params.lam
        if t < 10.0 / params.lam:
            raise ValueError("t_max must be at least 10 expected lifetimes / lam")
        return t

    def validated(self) -> "SimConfig":
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.a0 < 0.0:
            raise ValueError("a0 must be non-negative")
        return self


@dataclass(frozen=True)
class Strategy:
    """Feedback allocation rule, tabulated for the simulation kernel.

    Two uniform linear-interpolation tables, one per side of w = 0, so a
    discontinuity of the rule at 0 (the optimal rule jumps there) is
    represented exactly.  Linear rules are exact in the tables.
    """

    name: str
    neg_x: np.ndarray = field(repr=False)   # grid on [-L, 0]
    neg_v: np.ndarray = field(repr=False)
    pos_x: np.ndarray = field(repr=False)   # grid on [0, c/r]
    pos_v: np.ndarray = field(repr=False)

    def allocation(self, w):
        """Vectorized lookup, mainly for tests and reports."""
        w = np.asarray(w, dtype=float)
        neg = np.interp(np.clip(w, self.neg_x[0], 0.0), self.neg_x, self.neg_v)
        pos = np.interp(np.clip(w, 0.0, self.pos_x[-1]), self.pos_x, self.pos_v)
        out = np.where(w < 0.0, neg, pos)
        return out if out.ndim else float(out)


def _tables(params: ModelParams, neg_fn, pos_fn, n_tab: int = N_TABLE):
    neg_x = np.linspace(-params.L, 0.0, n_tab)
    pos_x = np.linspace(0.0, params.safe_level, n_tab)
    return neg_x, neg_fn(neg_x), pos_x, pos_fn(pos_x)


def optimal_strategy(sol: fbp.FbpSolution, n_tab: int = N_TABLE) -> Strategy:
    """The allocation attaining the minimum; the w = 0 entry of the
    negative table carries the left limit, so the jump at 0 is exact."""
    params, k = sol.params, sol.constants
    rr = risk_ratio(params)

    def neg_fn(ws):
        out = np.empty_like(ws)
        for i, w in enumerate(ws):
            if w <= -params.L:
                y = sol.yl
            elif w == 0.0:
                y = sol.y0
            else:
                y = dual.invert(sol, float(w))
            out[i] = -rr * y * fbp.mhat_d2(sol, y, side="right")
        return out

    def pos_fn(ws):
        return rr * (params.safe_level - ws) / (k.p - 1.0)

    return Strategy("optimal", *_tables(params, neg_fn, pos_fn, n_tab))


def ruin_min_strategy(consts: MarketConstants, params: ModelParams) -> Strategy:
    """Benchmark that minimizes the probability of lifetime ruin; linear,
    so two nodes per side are exact, but full tables keep the kernel
    uniform."""
    rr = risk_ratio(params)

    def fn(ws):
        return rr * (consts.safe_level - ws) / (consts.p - 1.0)

    return Strategy("ruin_min", *_tables(params, fn, fn))


def constant_strategy(level: float, params: ModelParams) -> Strategy:
    def fn(ws):
        return np.full_like(ws, float(level))

    return Strategy(f"constant({level:g})", *_tables(params, fn, fn))


def zero_strategy(params: ModelParams) -> Strategy:
    def fn(ws):
        return np.zeros_like(ws)

    return Strategy("zero", *_tables(params, fn, fn))


@dataclass(frozen=True)
class SimEstimate:
    """Estimator output; mean includes the initial accrual a0."""

    mean: float
    stderr: float
    n_paths: int
    n_death: int
    n_ruin: int
    n_safe: int
    n_tmax: int
    min_wealth_stats: dict


_U64 = np.uint64
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO53 = 9007199254740992.0


@njit(cache=True, inline="always")
def _mix64(z):
    """splitmix64 finalizer: bijective 64-bit avalanche mix."""
    z = (z ^ (z >> _U64(30))) * _U64(_MIX1)
    z = (z ^ (z >> _U64(27))) * _U64(_MIX2)
    return z ^ (z >> _U64(31))


@njit(cache=True, inline="always")
def _next_uniform(state):
    """Advance a splitmix64 stream by its odd increment; uniform in (0, 1]."""
    state = state + _U64(_GOLDEN)
    z = _mix64(state)
    return state, ((z >> _U64(11)) + _U64(1)) / _TWO53


@njit(cache=True, parallel=True)
def _run_paths(w0, dt, n_paths, seed, max_steps, lam, r, excess, sigma, c,
               ruin_level, safe_level,
               neg_x0, neg_dx, neg_v, pos_x0, pos_dx, pos_v,
               thresholds, levels, ruin_payoff,
               payoffs, min_wealth, end_state):
    n_neg = neg_v.shape[0]
    n_pos = pos_v.shape[0]
    n_thr = thresholds.shape[0]
    sqdt = math.sqrt(dt)
    for i in prange(n_paths):
        state = _mix64(_U64(seed) + _U64(i) * _U64(_GOLDEN))
        state, u = _next_uniform(state)
        t_death = -math.log(u) / lam
        w = w0
        acc = 0.0
        w_min = w0
        status = 0  # 0 death, 1 ruin, 2 safe, 3 t_max
        have_spare = False
        spare = 0.0
        j = 0
        while True:
            t = j * dt
            if t >= t_death:
                status = 0
                break
            if j >= max_steps:
                status = 3
                break
            # running cost at the left endpoint
            weight = 0.0
            for q in range(n_thr):
                if w < thresholds[q]:
                    weight = levels[q]
                else:
                    break
            step = dt
            dies = t + dt >= t_death
            if dies:
                step = t_death - t
            acc += weight * step
            if dies:
                status = 0
                break
            # allocation lookup (left endpoint)
            if w < 0.0:
                x = (w - neg_x0) / neg_dx
                idx = int(x)
                if idx < 0:
                    idx = 0
                elif idx > n_neg - 2:
                    idx = n_neg - 2
                frac = x - idx
                pi = neg_v[idx] * (1.0 - frac) + neg_v[idx + 1] * frac
            else:
                x = (w - pos_x0) / pos_dx
                idx = int(x)
                if idx < 0:
                    idx = 0
                elif idx > n_pos - 2:
                    idx = n_pos - 2
                frac = x - idx
                pi = pos_v[idx] * (1.0 - frac) + pos_v[idx + 1] * frac
            if have_spare:
                z = spare
                have_spare = False
            else:
                state, u1 = _next_uniform(state)
                state, u2 = _next_uniform(state)
                radius = math.sqrt(-2.0 * math.log(u1))
                angle = 6.283185307179586 * u2
                z = radius * math.cos(angle)
                spare = radius * math.sin(angle)
                have_spare = True
            w = w + (r * w + excess * pi - c) * dt + sigma * pi * sqdt * z
            j += 1
            if w < w_min:
                w_min = w
            if w <= ruin_level:
                acc += ruin_payoff
                status = 1
                break
            if w >= safe_level:
                status = 2
                break
        payoffs[i] = acc
        min_wealth[i] = w_min
        end_state[i] = status


def _min_wealth_summary(min_wealth: np.ndarray) -> dict:
    qs = np.quantile(min_wealth, [0.05, 0.25, 0.5, 0.75, 0.95])
    return {
        "min": float(np.min(min_wealth)),
        "mean": float(np.mean(min_wealth)),
        "q05": float(qs[0]),
        "q25": float(qs[1]),
        "q50": float(qs[2]),
        "q75": float(qs[3]),
        "q95": float(qs[4]),
    }


def simulate(params: ModelParams, strategy: Strategy, config: SimConfig,
             penalty=None) -> SimEstimate:
    """Estimate the expected penalized occupation payoff under a strategy.

    ``penalty`` is an optional StepPenalty; None means the plain indicator
    weight with terminal ruin payoff 1/lam.
    """
    config = config.validated()
    t_max = config.resolved_t_max(params)
    if penalty is None:
        thresholds = np.array([0.0])
        levels = np.array([1.0])
        ruin_payoff = 1.0 / params.lam
    else:
        thresholds = np.asarray(penalty.thresholds, dtype=float)
        levels = np.asarray(penalty.levels, dtype=float)
        ruin_payoff = levels[-1] / params.lam if len(levels) else 0.0
    # immediate absorption outside the open band
    if config.w0 >= params.safe_level:
        return SimEstimate(
            mean=config.a0, stderr=0.0, n_paths=config.n_paths,
            n_death=0, n_ruin=0, n_safe=config.n_paths, n_tmax=0,
            min_wealth_stats=_min_wealth_summary(np.full(1, float(config.w0))),
        )
    if config.w0 <= -params.L:
        return SimEstimate(
            mean=config.a0 + ruin_payoff, stderr=0.0, n_paths=config.n_paths,
            n_death=0, n_ruin=config.n_paths, n_safe=0, n_tmax=0,
            min_wealth_stats=_min_wealth_summary(np.full(1, float(config.w0))),
        )
    n = config.n_paths
    payoffs = np.empty(n)
    min_wealth = np.empty(n)
    end_state = np.empty(n, dtype=np.int8)
    max_steps = int(math.ceil(t_max / config.dt))
    _run_paths(
        float(config.w0), float(config.dt), n, np.uint64(config.seed),
        max_steps, params.lam, params.r, params.mu - params.r, params.sigma,
        params.c, -params.L, params.safe_level,
        strategy.neg_x[0], strategy.neg_x[1] - strategy.neg_x[0], strategy.neg_v,
        strategy.pos_x[0], strategy.pos_x[1] - strategy.pos_x[0], strategy.pos_v,
        thresholds, levels, ruin_payoff,
        payoffs, min_wealth, end_state,
    )
    return _finalize(config, t_max, payoffs, min_wealth, end_state)


def _finalize(config: SimConfig, t_max: float, payoffs: np.ndarray,
              min_wealth: np.ndarray, end_state: np.ndarray) -> SimEstimate:
    """Reduce per-path slots in a fixed order; a0 is added exactly once at
    the end so shifting it leaves every other statistic bit-identical."""
    n = len(payoffs)
    n_tmax = int(np.sum(end_state == 3))
    if n_tmax > 0.001 * n:
        warnings.warn(
            f"{n_tmax} of {n} paths hit t_max={t_max}; dt or the strategy "
            "looks pathological", RuntimeWarning
        )
    mean0 = float(np.mean(payoffs))
    if n > 1:
        stderr = float(np.std(payoffs, ddof=1) / math.sqrt(n))
    else:
        stderr = 0.0
    return SimEstimate(
        mean=config.a0 + mean0,
        stderr=stderr,
        n_paths=n,
        n_death=int(np.sum(end_state == 0)),
        n_ruin=int(np.sum(end_state == 1)),
        n_safe=int(np.sum(end_state == 2)),
        n_tmax=n_tmax,
        min_wealth_stats=_min_wealth_summary(min_wealth),
    )


def compare(params: ModelParams, strategies: list, config: SimConfig,
            penalty=None) -> dict:
    """Common-random-numbers comparison: every strategy sees the same
    per-path variates because path streams are keyed by (seed, index)."""
    if len(strategies) < 2:
        raise ValueError("compare needs at least two strategies")
    return {s.name: simulate(params, s, config, penalty) for s in strategies}
