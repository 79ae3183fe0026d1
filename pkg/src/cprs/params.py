"""Model parameters for the slowdown contact process."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ModelAssumptionError

SYMMETRIC = "symmetric"
ASYMMETRIC = "asymmetric"
VARIANTS = (SYMMETRIC, ASYMMETRIC)


@dataclass(frozen=True)
class Params:
    """Full dynamic specification: (lambda1, lambda2, r, d, variant).

    ``lambda1`` is the birth rate from wild-only sites, ``lambda2`` the
    reduced rate from mixed sites, ``r`` the sterile release rate. The
    model assumes lambda2 < lambda1; equality is admitted for degenerate
    testing and exposed through :attr:`degenerate_rates`.
    """

    lambda1: float
    lambda2: float
    r: float
    d: int = 1
    variant: str = SYMMETRIC

    def __post_init__(self):
        # zero lambda1 is admitted for degenerate pure-death tests
        if self.lambda1 < 0:
            raise ModelAssumptionError("lambda1 must be nonnegative")
        if self.lambda2 < 0:
            raise ModelAssumptionError("lambda2 must be nonnegative")
        if self.r < 0:
            raise ModelAssumptionError("r must be nonnegative")
        if self.lambda2 > self.lambda1:
            raise ModelAssumptionError(
                f"lambda2={self.lambda2} exceeds lambda1={self.lambda1}; "
                "the model requires lambda2 <= lambda1"
            )
        if self.d < 1:
            raise ModelAssumptionError("dimension must be >= 1")
        if self.variant not in VARIANTS:
            raise ModelAssumptionError(f"variant must be one of {VARIANTS}")

    @property
    def symmetric(self) -> bool:
        return self.variant == SYMMETRIC

    @property
    def degenerate_rates(self) -> bool:
        """True when lambda2 == lambda1 (outside the model assumption)."""
        return self.lambda2 == self.lambda1

    def birth_intensity(self, n1: int, n3: int):
        """lambda1 * n1 + lambda2 * n3."""
        return self.lambda1 * n1 + self.lambda2 * n3

    def with_variant(self, variant: str) -> "Params":
        return Params(self.lambda1, self.lambda2, self.r, self.d, variant)

    def with_r(self, r: float) -> "Params":
        return Params(self.lambda1, self.lambda2, r, self.d, self.variant)
