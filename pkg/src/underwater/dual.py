"""Primal value function and optimal strategy via Legendre inversion.

The value of the game started at wealth w with accrued time-below-zero a is
m(w) + a, where m is the convex dual of mhat:

    m(w) = max_{y >= 0} (mhat(y) - w*y),   y* = I(w) = -m'(w).

For w in [0, c/r] the inversion is explicit, giving the power branch
m(w) = beta_l * (c/r - w)**p.  For w in [-L, 0) the optimizer y solves
mhat'(y) = w on [y0, yl] and is found by bracketed root finding; all primal
derivatives there are computed through dual coordinates (m' = -y,
m'' = -1/mhat''), never by differencing an interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq

from . import fbp
from .model import MarketConstants, ModelParams, risk_ratio


@dataclass(frozen=True)
class ValuePoint:
    """A sampled point of the solution along the wealth axis.

    m2 is one-sided at w = 0 (the side that built the point); pi_star is
    the optimal allocation and pi_ruin the ruin-probability-minimizing
    benchmark, which share the same closed form on (0, c/r).
    """

    w: float
    y: float
    m: float
    m1: float
    m2: float
    pi_star: float
    pi_ruin: float


def invert(sol: fbp.FbpSolution, w: float) -> float:
    """Dual variable y = I(w) solving mhat'(y) = w, for w in [-L, c/r].

    Closed form on [0, c/r]; bracketed root on [y0, yl] for negative w.
    """
    p, k = sol.params, sol.constants
    cr = k.safe_level
    if not (-p.L <= w <= cr):
        raise ValueError(f"w={w!r} outside [{-p.L!r}, {cr!r}]")
    if w >= 0.0:
        # invert the inner-region derivative (c/r)*(1 - (y/y0)^(b1-1)) = w
        return sol.y0 * (1.0 - w / cr) ** (1.0 / (k.b1 - 1.0))
    if w == -p.L:
        return sol.yl
    f = lambda y: fbp.mhat_d1(sol, y) - w
    f_lo, f_hi = f(sol.y0), f(sol.yl)
    if f_lo <= 0.0:  # w within roundoff of 0: mhat'(y0) = 0 up to ~1e-15*c/r
        return sol.y0
    if f_hi >= 0.0:  # w within roundoff of -L
        return sol.yl
    y = brentq(f, sol.y0, sol.yl, xtol=1e-300, rtol=8.9e-16)
    # one Newton polish step; mhat'' < 0 so this is well conditioned
    y2 = fbp.mhat_d2(sol, y, side="right" if y == sol.y0 else None)
    step = (fbp.mhat_d1(sol, y) - w) / y2
    y_pol = y - step
    if sol.y0 < y_pol < sol.yl:
        y = y_pol
    return y


def m_value(sol: fbp.FbpSolution, w: float) -> float:
    """m(w) = M_L(w, a) - a, in years, defined on all of R."""
    p, k = sol.params, sol.constants
    cr = k.safe_level
    if w >= cr:
        return 0.0
    if w <= -p.L:
        return 1.0 / p.lam
    if w > 0.0:
        return sol.beta_l * (cr - w) ** k.p
    y = invert(sol, w)
    return fbp.mhat(sol, y) - w * y


def value(sol: fbp.FbpSolution, w: float, a: float = 0.0) -> float:
    """Minimum expected time below zero, M_L(w, a) = m(w) + a."""
    if a < 0.0:
        raise ValueError("accrued occupation time a must be non-negative")
    return m_value(sol, w) + a


def m1(sol: fbp.FbpSolution, w: float) -> float:
    """m'(w) = -I(w) on [-L, c/r]; 0 on the constant pieces outside."""
    p, k = sol.params, sol.constants
    if -p.L <= w <= k.safe_level:
        return -invert(sol, w)
    return 0.0


def m2(sol: fbp.FbpSolution, w: float, side: str | None = None) -> float:
    """m''(w) = -1/mhat''(I(w)) on (-L, c/r) \\ {0}; side flag at w = 0.

    On (0, c/r) this equals the power branch beta_l*p*(p-1)*(c/r-w)**(p-2);
    the dual route is used so the two stay consistent by construction of y.
    """
    p, k = sol.params, sol.constants
    if not (-p.L < w < k.safe_level):
        raise ValueError(f"w={w!r} outside ({-p.L!r}, {k.safe_level!r})")
    if w == 0.0 and side is None:
        raise ValueError('m\'\' jumps at w = 0; pass side="left" or side="right"')
    y = invert(sol, w)
    if w == 0.0:
        # w = 0- corresponds to the outer region y > y0, w = 0+ to the inner
        y_side = "right" if side == "left" else "left"
        return -1.0 / fbp.mhat_d2(sol, y, side=y_side)
    return -1.0 / fbp.mhat_d2(sol, y, side=None if y != sol.y0 else "left")


def m3(sol: fbp.FbpSolution, w: float, side: str | None = None) -> float:
    """m'''(w) = mhat'''(y) / mhat''(y)^3 at y = I(w)."""
    p, k = sol.params, sol.constants
    if not (-p.L < w < k.safe_level):
        raise ValueError(f"w={w!r} outside ({-p.L!r}, {k.safe_level!r})")
    if w == 0.0 and side is None:
        raise ValueError('m\'\'\' jumps at w = 0; pass side="left" or side="right"')
    y = invert(sol, w)
    y_side = None
    if w == 0.0:
        y_side = "right" if side == "left" else "left"
    elif y == sol.y0:
        y_side = "left"
    return fbp.mhat_d3(sol, y, side=y_side) / fbp.mhat_d2(sol, y, side=y_side) ** 3


def pi_star(sol: fbp.FbpSolution, w: float, side: str | None = None) -> float:
    """Optimal risky allocation (wealth units) in feedback form.

    (mu-r)/sigma^2 * (c/r - w)/(p - 1) on (0, c/r); through dual
    coordinates, -(mu-r)/sigma^2 * y * mhat''(y), on (-L, 0).  The two
    limits at w = 0 differ by (mu-r)/(sigma^2*delta*y0) > 0.
    """
    p, k = sol.params, sol.constants
    cr = k.safe_level
    if not (-p.L < w < cr):
        raise ValueError(f"w={w!r} outside ({-p.L!r}, {cr!r})")
    rr = risk_ratio(p)
    if w > 0.0 or (w == 0.0 and side == "right"):
        return rr * (cr - w) / (k.p - 1.0)
    if w == 0.0:
        if side != "left":
            raise ValueError('pi* jumps at w = 0; pass side="left" or side="right"')
        return -rr * sol.y0 * fbp.mhat_d2(sol, sol.y0, side="right")
    y = invert(sol, w)
    return -rr * y * fbp.mhat_d2(sol, y, side="right" if y == sol.y0 else None)


def pi_star_jump(sol: fbp.FbpSolution) -> float:
    """pi*(0-) - pi*(0+) = (mu-r)/(sigma^2*delta*y0)."""
    return risk_ratio(sol.params) / (sol.constants.delta * sol.y0)


def pi_ruin(consts: MarketConstants, params: ModelParams, w: float) -> float:
    """Ruin-probability-minimizing allocation: (mu-r)/sigma^2*(c/r-w)/(p-1).

    Linear in w; independent of both L and the ruin level.
    """
    return risk_ratio(params) * (consts.safe_level - w) / (consts.p - 1.0)


def hjb_residual(sol: fbp.FbpSolution, w: float, side: str | None = None) -> float:
    """Residual of the primal HJB equation at w (not 0, -L, or c/r):

    lam*m - 1{w<0} - (r*w - c)*m' + delta*(m')^2/m''.
    """
    p, k = sol.params, sol.constants
    mm = m_value(sol, w)
    mm1 = m1(sol, w)
    mm2 = m2(sol, w, side)
    ind = 1.0 if w < 0.0 else 0.0
    return p.lam * mm - ind - (p.r * w - p.c) * mm1 + k.delta * mm1**2 / mm2


def value_point(sol: fbp.FbpSolution, w: float, side: str | None = None) -> ValuePoint:
    """Bundle (w, y, m, m', m'', pi*, pi_ruin); side needed only at w = 0."""
    y = invert(sol, w)
    return ValuePoint(
        w=w,
        y=y,
        m=m_value(sol, w),
        m1=-y,
        m2=m2(sol, w, side),
        pi_star=pi_star(sol, w, side),
        pi_ruin=pi_ruin(sol.constants, sol.params, w),
    )
