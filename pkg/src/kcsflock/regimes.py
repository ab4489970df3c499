"""Decay-regime descriptions for the flocking envelope checks.

Regime 1: heavy-tailed initial data, beta < 1 -> algebraic velocity alignment
          with exponent 1 - (D/2 (gamma-1) + beta gamma).
Regime 2: exponential-tail initial data, beta < 1 -> asymptotic alignment; we
          evaluate the regime-1 envelope at a derived moment order (all
          polynomial moments are finite) and flag the rate as derived.
Regime 3: beta = 1, kappa > 1, compact velocity support with exponential
          spatial tail -> algebraic alignment with exponent -2 kappa, effective
          radius R_x(t) = (1/alpha + 1) p_inf + t/alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

# fallback moment order used when regime 2 borrows the regime-1 envelope
DERIVED_D_REGIME2 = 8.0


def min_moment_order(beta: float, gamma: float) -> float:
    """Smallest admissible D for the algebraic regime: max{2(3 - beta gamma)/(gamma - 1), 4}."""
    return max(2.0 * (3.0 - beta * gamma) / (gamma - 1.0), 4.0)


@dataclass(frozen=True)
class RegimeSpec:
    """Which decay regime is under test, with its free parameters.

    gamma defaults to 1/beta when beta > 0 (the choice minimizing the moment
    requirement) and to 2 when beta = 0; regime 2 defaults D to a derived value
    since every polynomial moment is finite there.
    """

    regime: int  # 1, 2 or 3
    beta: float
    kappa: float
    gamma: Optional[float] = None
    D: Optional[float] = None
    alpha: Optional[float] = None
    p_inf: Optional[float] = None
    C1: Optional[float] = None

    def __post_init__(self):
        if self.regime not in (1, 2, 3):
            raise ValueError(f"regime must be 1, 2 or 3, got {self.regime}")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError("beta must lie in [0, 1]")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.regime in (1, 2):
            if self.beta >= 1.0:
                raise ValueError("regimes 1 and 2 require beta < 1")
            if self.gamma is None:
                g = 1.0 / self.beta if self.beta > 0 else 2.0
                object.__setattr__(self, "gamma", g)
            if self.gamma <= 1.0:
                raise ValueError("gamma must exceed 1")
            if self.regime == 2 and self.D is None:
                object.__setattr__(self, "D", DERIVED_D_REGIME2)
            if self.D is None:
                raise ValueError("regime 1 requires the moment order D")
            bound = min_moment_order(self.beta, self.gamma)
            if not self.D > bound:
                raise ValueError(
                    f"regime {self.regime} requires D > {bound:g}, got D = {self.D:g}"
                )
            if self.regime == 2 and (self.alpha is None or self.alpha <= 0):
                raise ValueError("regime 2 requires alpha > 0")
        else:
            if self.beta != 1.0:
                raise ValueError("regime 3 requires beta = 1")
            if not self.kappa > 1.0:
                raise ValueError("regime 3 requires kappa > 1")
            if self.alpha is None or self.alpha <= 0:
                raise ValueError("regime 3 requires alpha > 0")
            if self.p_inf is None or self.p_inf <= 0:
                raise ValueError("regime 3 requires p_inf > 0")
        if self.C1 is not None and not (self.C1 > 0 and math.isfinite(self.C1)):
            raise ValueError("C1 must be positive and finite")

    def with_C1(self, c1: float) -> "RegimeSpec":
        return RegimeSpec(
            regime=self.regime,
            beta=self.beta,
            kappa=self.kappa,
            gamma=self.gamma,
            D=self.D,
            alpha=self.alpha,
            p_inf=self.p_inf,
            C1=c1,
        )
