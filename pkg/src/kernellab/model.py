"""Operator parameters and the closed-form radial fields.

The operator is ``A = (1 + r^alpha) Laplace + b r^(alpha-1) d/dr - c r^beta``
acting on radial functions in dimension ``N``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class HypothesisError(ValueError):
    """Raised when operator parameters violate a standing hypothesis."""


@dataclass(frozen=True)
class OperatorParams:
    """Validated parameter tuple ``(N, alpha, beta, b, c)``.

    ``xi`` and ``gamma`` are derived on construction.
    """

    dim_N: int
    alpha: float
    beta: float
    b: float = 0.0
    c: float = 1.0
    xi: float = field(init=False)
    gamma: float = field(init=False)

    def __post_init__(self):
        N, alpha, beta, c = self.dim_N, self.alpha, self.beta, self.c
        if isinstance(N, bool) or int(N) != N:
            raise HypothesisError(f"N must be an integer (got N={N!r})")
        for name in ("alpha", "beta", "b", "c"):
            if not np.isfinite(getattr(self, name)):
                raise HypothesisError(f"{name} must be finite")
        if N <= 2:
            raise HypothesisError(f"hypothesis N > 2 violated (got N={N})")
        if alpha <= 2:
            raise HypothesisError(f"hypothesis alpha > 2 violated (got alpha={alpha})")
        if beta <= alpha - 2:
            raise HypothesisError(
                f"hypothesis beta > alpha - 2 violated (got beta={beta}, alpha={alpha})"
            )
        if c <= 0:
            raise HypothesisError(f"hypothesis c > 0 violated (got c={c})")
        object.__setattr__(self, "dim_N", int(N))
        for name in ("alpha", "beta", "b", "c"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "xi", (beta - alpha) / 2.0 + 1.0)
        object.__setattr__(self, "gamma", (beta - alpha + 2.0) / (beta + alpha - 2.0))

    @property
    def decay_power(self) -> float:
        """Exponent ``(N-1)/2 + (beta-alpha)/4`` of the algebraic decay factor."""
        return (self.dim_N - 1) / 2.0 + (self.beta - self.alpha) / 4.0

    def with_b(self, b: float) -> "OperatorParams":
        return OperatorParams(self.dim_N, self.alpha, self.beta, b, self.c)


def validate_params(N, alpha, beta, b=0.0, c=1.0) -> OperatorParams:
    """Check the standing hypotheses and return a parameter record."""
    return OperatorParams(N, alpha, beta, b, c)


def _r(r):
    return np.asarray(r, dtype=float)


def potential_U(p: OperatorParams, r):
    """Potential of the symmetric form, bounded from below on ``r >= 0``."""
    r = _r(r)
    ra = r**p.alpha
    drift = (0.5 * p.b) * r ** (p.alpha - 2.0) * (
        (ra / (1.0 + ra)) * (0.5 * p.b - p.alpha) + p.dim_N + p.alpha - 2.0
    )
    return drift + p.c * r**p.beta


def weight_phi(p: OperatorParams, r):
    """Similarity weight ``(1 + r^alpha)^(b / (2 alpha))``."""
    return (1.0 + _r(r) ** p.alpha) ** (p.b / (2.0 * p.alpha))


def mu_density(p: OperatorParams, r):
    """Density of the weighted measure, ``1 / (1 + r^alpha)``."""
    return 1.0 / (1.0 + _r(r) ** p.alpha)


def drift_coefficient(p: OperatorParams, r):
    """Radial drift coefficient ``b r^(alpha-1)``."""
    return p.b * _r(r) ** (p.alpha - 1.0)


class FieldKind(enum.Enum):
    POTENTIAL_U = "potential_U"
    WEIGHT_PHI = "weight_phi"
    MU_DENSITY = "mu_density"
    DRIFT_COEFFICIENT = "drift_coefficient"


_FIELDS = {
    FieldKind.POTENTIAL_U: potential_U,
    FieldKind.WEIGHT_PHI: weight_phi,
    FieldKind.MU_DENSITY: mu_density,
    FieldKind.DRIFT_COEFFICIENT: drift_coefficient,
}


@dataclass(frozen=True)
class ScalarField:
    """A named radial field bound to a parameter set."""

    kind: FieldKind
    params: OperatorParams

    def __call__(self, r):
        return _FIELDS[self.kind](self.params, r)
