"""Closed-form solution of the dual free-boundary problem.

The concave function mhat solves, on (0, y_outer),

    lam * mhat = (lam - r) * y * mhat' + delta * y^2 * mhat'' + c*y + 1{y > y0},

with mhat(0) = 0, mhat'(y0) = 0, mhat(y_outer) = 1/lam - L*y_outer and
mhat'(y_outer) = -L.  On [0, y0] (the "inner" region, dual to wealth in
[0, c/r]) the solution is

    mhat(y) = (c/r) * y * (1 - (y/y0)^(b1-1) / b1),

and on (y0, y_outer] (dual to wealth in [-L, 0))

    mhat(y) = y * (c/r - k1*(y/yL)^(b1-1) - k2*(y/yL)^(b2-1)) + 1/lam,

with k1 = (1-b2)/(b1-b2)*(c/r+L) and k2 = (b1-1)/(b1-b2)*(c/r+L).

The free boundaries come from a scalar equation for rho = y0/y_outer whose
right-hand side is strictly increasing on (0, 1), so bracketed bisection is
safe; y0 then follows in closed form from value matching at y0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import MarketConstants, ModelParams, constants as make_constants, validate


@dataclass(frozen=True)
class FbpSolution:
    """Free boundaries and region coefficients of mhat.

    rho     y0 / y_outer in (0, 1)
    y0      inner free boundary, dual to wealth 0
    yl      outer free boundary, dual to wealth -L
    d_in    coefficient of y**b1 on [0, y0]  (negative)
    d1, d2  coefficients of y**b1 and y**b2 on (y0, yl]  (both negative)
    """

    rho: float
    y0: float
    yl: float
    d_in: float
    d1: float
    d2: float
    constants: MarketConstants
    params: ModelParams

    @property
    def beta_l(self) -> float:
        """Coefficient of the positive-wealth value branch beta*(c/r - w)**p."""
        k = self.constants
        return self.y0 / (k.p * k.safe_level ** (k.p - 1.0))


def ratio_rhs(rho, consts: MarketConstants):
    """Right-hand side of the free-boundary ratio equation; strictly
    increasing on (0, 1) with limit -inf at 0+ and value 1 at rho = 1."""
    b1, b2 = consts.b1, consts.b2
    return (
        b1 * (1.0 - b2) * rho ** (b1 - 1.0) + (b1 - 1.0) * b2 * rho ** (b2 - 1.0)
    ) / (b1 - b2)


def _ratio_rhs_deriv(rho, consts: MarketConstants):
    b1, b2 = consts.b1, consts.b2
    return (
        b1 * (b1 - 1.0) * (1.0 - b2) * rho ** (b1 - 2.0)
        + (b1 - 1.0) * b2 * (b2 - 1.0) * rho ** (b2 - 2.0)
    ) / (b1 - b2)


def solve_ratio(consts: MarketConstants, params: ModelParams, trace: list | None = None):
    """Solve ratio_rhs(rho) = c/(c + r*L) for rho in (0, 1).

    Bisection down to a relative bracket width of ~1e-15 followed by a few
    Newton polish steps; monotonicity of the right-hand side guarantees the
    bracket.  If ``trace`` is a list, successive bracket widths are appended
    to it (they halve every step).
    """
    target = params.c / (params.c + params.r * params.L)
    lo, hi = 0.5, 1.0
    # walk lo down until the rhs is below target (rhs -> -inf as rho -> 0+)
    while ratio_rhs(lo, consts) > target:
        lo *= 0.5
        if lo < 1e-300:
            raise RuntimeError("failed to bracket the free-boundary ratio")
    for _ in range(80):
        if trace is not None:
            trace.append(hi - lo)
        mid = 0.5 * (lo + hi)
        if ratio_rhs(mid, consts) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    rho = 0.5 * (lo + hi)
    for _ in range(3):
        f = ratio_rhs(rho, consts) - target
        df = _ratio_rhs_deriv(rho, consts)
        step = f / df
        rho_new = rho - step
        if not (0.0 < rho_new < 1.0):
            break
        rho = rho_new
    return rho


def solve_boundaries(rho, consts: MarketConstants, params: ModelParams) -> FbpSolution:
    """Recover y0 from value matching at y0, then y_outer = y0/rho and the
    region coefficients."""
    b1, b2 = consts.b1, consts.b2
    cr = consts.safe_level
    crl = cr + params.L
    bracket = (
        -cr / b1
        + (1.0 - b2) / (b1 - b2) * crl * rho ** (b1 - 1.0)
        + (b1 - 1.0) / (b1 - b2) * crl * rho ** (b2 - 1.0)
    )
    if bracket <= 0.0:
        raise RuntimeError(
            "non-positive denominator recovering y0; upstream ratio solve is wrong"
        )
    y0 = 1.0 / (params.lam * bracket)
    yl = y0 / rho
    d_in = -(params.c / (params.r * b1)) * y0 ** (1.0 - b1)
    d1 = -((1.0 - b2) / (b1 - b2)) * yl ** (1.0 - b1) * crl
    d2 = -((b1 - 1.0) / (b1 - b2)) * yl ** (1.0 - b2) * crl
    return FbpSolution(
        rho=rho, y0=y0, yl=yl, d_in=d_in, d1=d1, d2=d2,
        constants=consts, params=params,
    )


def solve(params: ModelParams) -> FbpSolution:
    """validate -> constants -> ratio -> boundaries in one call."""
    params = validate(params)
    consts = make_constants(params)
    rho = solve_ratio(consts, params)
    return solve_boundaries(rho, consts, params)


def _check_domain(sol: FbpSolution, y):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0.0) or np.any(y > sol.yl * (1.0 + 1e-12)):
        raise ValueError(f"y outside [0, y_outer={sol.yl!r}]")
    return y


def mhat(sol: FbpSolution, y):
    """Evaluate mhat; inner form on [0, y0], outer form on (y0, y_outer]."""
    y = _check_domain(sol, y)
    k = sol.constants
    cr = k.safe_level
    crl = cr + sol.params.L
    inner = cr * y * (1.0 - np.power(y / sol.y0, k.b1 - 1.0) / k.b1)
    with np.errstate(divide="ignore"):
        u = np.where(y > 0.0, y / sol.yl, 1.0)  # dummy 1.0 never used below
        outer = (
            y
            * (
                cr
                - (1.0 - k.b2) / (k.b1 - k.b2) * crl * np.power(u, k.b1 - 1.0)
                - (k.b1 - 1.0) / (k.b1 - k.b2) * crl * np.power(u, k.b2 - 1.0)
            )
            + 1.0 / sol.params.lam
        )
    out = np.where(y <= sol.y0, inner, outer)
    return out if out.ndim else float(out)


def mhat_d1(sol: FbpSolution, y):
    """First derivative of mhat (continuous across y0 by smooth fit)."""
    y = _check_domain(sol, y)
    k = sol.constants
    cr = k.safe_level
    crl = cr + sol.params.L
    inner = cr * (1.0 - np.power(y / sol.y0, k.b1 - 1.0))
    with np.errstate(divide="ignore"):
        u = np.where(y > 0.0, y / sol.yl, 1.0)
        outer = (
            cr
            - k.b1 * (1.0 - k.b2) / (k.b1 - k.b2) * crl * np.power(u, k.b1 - 1.0)
            - (k.b1 - 1.0) * k.b2 / (k.b1 - k.b2) * crl * np.power(u, k.b2 - 1.0)
        )
    out = np.where(y <= sol.y0, inner, outer)
    return out if out.ndim else float(out)


def _resolve_side(sol: FbpSolution, y, side):
    """Map a side flag to a region mask.  mhat'' and mhat''' jump at y0, so
    an evaluation exactly at y0 must say which limit it wants."""
    y = np.asarray(y, dtype=float)
    at_kink = y == sol.y0
    if np.any(at_kink) and side is None:
        raise ValueError('y == y0 is double-valued; pass side="left" or side="right"')
    if side not in (None, "left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    use_inner = y < sol.y0
    if side == "left":
        use_inner = use_inner | at_kink
    return use_inner


def mhat_d2(sol: FbpSolution, y, side=None):
    """Second derivative of mhat; strictly negative on (0, y0) u (y0, yl).

    Jumps by -1/(delta*y0^2) across y0 (inner minus outer limits differ by
    the indicator in the governing ODE).
    """
    y = _check_domain(sol, y)
    if np.any(y == 0.0):
        raise ValueError("mhat'' diverges as y -> 0+; y must be positive")
    use_inner = _resolve_side(sol, y, side)
    k = sol.constants
    cr = k.safe_level
    crl = cr + sol.params.L
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = -cr * (k.b1 - 1.0) * np.power(y, k.b1 - 2.0) / sol.y0 ** (k.b1 - 1.0)
        u = y / sol.yl
        outer = (
            -(1.0 / sol.yl)
            * (k.b1 - 1.0) * (1.0 - k.b2) / (k.b1 - k.b2)
            * crl
            * (k.b1 * np.power(u, k.b1 - 2.0) - k.b2 * np.power(u, k.b2 - 2.0))
        )
    out = np.where(use_inner, inner, outer)
    return out if out.ndim else float(out)


def mhat_d3(sol: FbpSolution, y, side=None):
    """Third derivative of mhat (one-sided at y0, like mhat'')."""
    y = _check_domain(sol, y)
    if np.any(y == 0.0):
        raise ValueError("mhat''' diverges as y -> 0+; y must be positive")
    use_inner = _resolve_side(sol, y, side)
    k = sol.constants
    cr = k.safe_level
    crl = cr + sol.params.L
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = (
            -cr * (k.b1 - 1.0) * (k.b1 - 2.0)
            * np.power(y, k.b1 - 3.0) / sol.y0 ** (k.b1 - 1.0)
        )
        u = y / sol.yl
        outer = (
            -(1.0 / sol.yl**2)
            * (k.b1 - 1.0) * (1.0 - k.b2) / (k.b1 - k.b2)
            * crl
            * (
                k.b1 * (k.b1 - 2.0) * np.power(u, k.b1 - 3.0)
                - k.b2 * (k.b2 - 2.0) * np.power(u, k.b2 - 3.0)
            )
        )
    out = np.where(use_inner, inner, outer)
    return out if out.ndim else float(out)


def mhat_derivs(sol: FbpSolution, y, side=None):
    """(mhat', mhat'', mhat''') at y; side picks the limit at y == y0."""
    return mhat_d1(sol, y), mhat_d2(sol, y, side), mhat_d3(sol, y, side)


def upper_envelope(sol: FbpSolution, y):
    """min((c/r)*y, 1/lam - L*y): mhat stays below it, tangent at 0 and yl."""
    y = np.asarray(y, dtype=float)
    out = np.minimum(
        sol.constants.safe_level * y, 1.0 / sol.params.lam - sol.params.L * y
    )
    return out if out.ndim else float(out)


def ode_residual(sol: FbpSolution, y, side=None):
    """lam*mhat - (lam-r)*y*mhat' - delta*y^2*mhat'' - c*y - 1{y > y0}."""
    y = np.asarray(y, dtype=float)
    p, k = sol.params, sol.constants
    m = mhat(sol, y)
    m1 = mhat_d1(sol, y)
    m2 = mhat_d2(sol, y, side)
    use_inner = _resolve_side(sol, y, side)
    source = np.where(use_inner, 0.0, 1.0)
    out = p.lam * m - (p.lam - p.r) * y * m1 - k.delta * y * y * m2 - p.c * y - source
    return out if out.ndim else float(out)


def d2_jump(sol: FbpSolution) -> float:
    """Closed-form jump mhat''(y0+) - mhat''(y0-) = -1/(delta*y0^2)."""
    return -1.0 / (sol.constants.delta * sol.y0**2)
