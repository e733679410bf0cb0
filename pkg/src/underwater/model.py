"""Model inputs and the derived market constants shared by every formula.

All rates are continuous, annualized rates; the library does no unit
conversion.  An individual consumes at net rate c, invests in a riskless
asset earning r and a risky asset with drift mu and volatility sigma, and
dies at an exponential time with hazard rate lam.  Wealth at or above the
safe level c/r never needs the risky asset again; wealth at or below -L
ends the game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ModelParams:
    """Market and mortality inputs.

    r      riskless rate per year (> 0 so the safe level c/r is finite)
    mu     risky-asset drift per year (must exceed r)
    sigma  risky-asset volatility per sqrt-year (> 0)
    c      net consumption rate per year (> 0)
    lam    mortality hazard rate per year (> 0); 1/lam is expected
           remaining lifetime
    L      ruin-cutoff depth in wealth units (> 0); hitting -L ends the
           game with penalty 1/lam
    """

    r: float
    mu: float
    sigma: float
    c: float
    lam: float
    L: float

    @property
    def safe_level(self) -> float:
        return self.c / self.r


@dataclass(frozen=True)
class MarketConstants:
    """Derived quantities that appear in all closed-form expressions.

    delta       half squared Sharpe ratio, ((mu - r) / sigma)^2 / 2
    b1, b2      roots of delta*B^2 - (r - lam + delta)*B - lam = 0,
                with b1 > 1 and b2 < 0
    p           dual exponent b1 / (b1 - 1) > 1 of the positive-wealth
                value branch
    safe_level  c / r
    """

    delta: float
    b1: float
    b2: float
    p: float
    safe_level: float


def validate(raw: ModelParams) -> ModelParams:
    """Return ``raw`` unchanged iff every model constraint holds.

    Raises ValueError naming the first violated constraint.
    """
    for name in ("r", "mu", "sigma", "c", "lam", "L"):
        v = getattr(raw, name)
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite")
    if raw.r < 0.0:
        raise ValueError("r must be non-negative")
    if raw.r == 0.0:
        raise ValueError("safe level undefined")  # c/r diverges
    if not raw.mu > raw.r:
        raise ValueError("mu must exceed r")
    if not raw.sigma > 0.0:
        raise ValueError("sigma must be positive")
    if not raw.c > 0.0:
        raise ValueError("c must be positive")
    if not raw.lam > 0.0:
        raise ValueError("lambda must be positive")
    if not raw.L > 0.0:
        raise ValueError("L must be positive")
    return raw


def constants(params: ModelParams) -> MarketConstants:
    """Compute delta, the characteristic roots b1 > 1 and b2 < 0, and p.

    The discriminant (r - lam + delta)^2 + 4*delta*lam is always positive,
    so both roots are real.  b2 is recovered from the product identity
    b1*b2 = -lam/delta, which avoids cancellation when r - lam + delta is
    large and positive.
    """
    delta = 0.5 * ((params.mu - params.r) / params.sigma) ** 2
    q = params.r - params.lam + delta
    disc = math.sqrt(q * q + 4.0 * delta * params.lam)
    b1 = (q + disc) / (2.0 * delta)
    b2 = -params.lam / (delta * b1)
    p = b1 / (b1 - 1.0)
    return MarketConstants(
        delta=delta, b1=b1, b2=b2, p=p, safe_level=params.c / params.r
    )


def risk_ratio(params: ModelParams) -> float:
    """(mu - r) / sigma^2, the prefactor of every feedback allocation."""
    return (params.mu - params.r) / params.sigma**2


def params_from_dict(doc: dict) -> ModelParams:
    """Build validated ModelParams from a JSON-style mapping.

    Expects exactly the keys r, mu, sigma, c, lambda, L.
    """
    required = {"r", "mu", "sigma", "c", "lambda", "L"}
    missing = required - doc.keys()
    if missing:
        raise ValueError(f"missing parameter fields: {sorted(missing)}")
    extra = doc.keys() - required
    if extra:
        raise ValueError(f"unknown parameter fields: {sorted(extra)}")
    raw = ModelParams(
        r=float(doc["r"]),
        mu=float(doc["mu"]),
        sigma=float(doc["sigma"]),
        c=float(doc["c"]),
        lam=float(doc["lambda"]),
        L=float(doc["L"]),
    )
    return validate(raw)
