"""Step-size rule families used by Q-learning and the stochastic VI solver.

Each rule carries symbolic metadata about its series (divergent sum, square
summability) so schedule validity is asserted analytically, not numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Harmonic:
    """a_k = c / (k + k0)."""

    c: float = 1.0
    k0: float = 1.0

    def __post_init__(self):
        if self.c <= 0 or self.k0 <= 0:
            raise ValueError("harmonic rule needs c > 0 and k0 > 0")

    def __call__(self, k):
        return self.c / (k + self.k0)

    def values(self, start: int, count: int) -> np.ndarray:
        return self.c / (np.arange(start, start + count, dtype=float) + self.k0)

    # sum c/(k+k0) diverges, sum c^2/(k+k0)^2 converges
    sum_diverges = True
    square_summable = True


@dataclass(frozen=True)
class Constant:
    """a_k = c."""

    c: float = 1.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("constant rule needs c > 0")

    def __call__(self, k):
        return self.c

    def values(self, start: int, count: int) -> np.ndarray:
        return np.full(count, float(self.c))

    sum_diverges = True
    square_summable = False


StepRule = Harmonic | Constant


def robbins_monro(rule: StepRule) -> bool:
    """True when the rule satisfies sum a_k = inf and sum a_k^2 < inf."""
    return rule.sum_diverges and rule.square_summable
