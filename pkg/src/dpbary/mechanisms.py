"""Differential-privacy primitives and exact budget accounting.

Samplers take an explicit numpy Generator; one generator must not be shared
across threads without external coordination.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

FractionLike = Union[Fraction, float, int]


@dataclass(frozen=True)
class PrivacyBudget:
    """(epsilon, delta) privacy parameters; delta = 0 means pure DP."""

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")

    @property
    def is_pure(self) -> bool:
        return self.delta == 0.0


@dataclass(frozen=True)
class NoiseSpec:
    """Mechanism choice plus an optional empirical noise-shrink multiplier.

    ``heuristic_multiplier`` scales the noise *scale*; any value below 1
    voids the formal guarantee and must mark the output as non-strict.
    """

    mechanism: str = "discrete_laplace"
    scale: float = 1.0
    heuristic_multiplier: float = 1.0

    def __post_init__(self):
        if self.mechanism not in ("discrete_laplace", "gaussian"):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not 0.0 < self.heuristic_multiplier <= 1.0:
            raise ValueError("heuristic_multiplier must lie in (0, 1]")

    @property
    def strict(self) -> bool:
        return self.heuristic_multiplier == 1.0


def noise_shrink_factor(d: int) -> float:
    """The empirical (240 d)^(1/d) noise shrink, as a multiplier in (0, 1]."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return float(min(1.0, (240.0 * d) ** (-1.0 / d)))


def sample_discrete_laplace(scale: float, rng: np.random.Generator, size=None):
    """Two-sided geometric noise with Pr[Z = z] proportional to exp(-|z|/b).

    Sampled as the difference of two i.i.d. geometric variables, which has
    exactly the discrete Laplace law with parameter q = exp(-1/b).
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    q = math.exp(-1.0 / scale)
    p = 1.0 - q
    if p >= 1.0:  # scale so small the distribution is a point mass at 0
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    g1 = rng.geometric(p, size=size)
    g2 = rng.geometric(p, size=size)
    if size is None:
        return int(g1 - g2)
    return (g1 - g2).astype(np.int64)


def gaussian_sigma(l2_sensitivity: float, budget: PrivacyBudget) -> float:
    """Noise standard deviation sigma with sigma^2 = sens^2 * 2 ln(1.25/delta) / eps^2."""
    if budget.delta <= 0:
        raise ValueError("the Gaussian mechanism requires delta > 0")
    if l2_sensitivity < 0:
        raise ValueError("sensitivity must be nonnegative")
    if budget.epsilon >= 1:
        warnings.warn(
            "Gaussian mechanism calibration is only formally valid for epsilon < 1; "
            f"got epsilon={budget.epsilon}",
            stacklevel=2,
        )
    return l2_sensitivity * math.sqrt(2.0 * math.log(1.25 / budget.delta)) / budget.epsilon


def gaussian_mechanism(
    v,
    l2_sensitivity: float,
    budget: PrivacyBudget,
    rng: np.random.Generator,
    heuristic_multiplier: float = 1.0,
) -> np.ndarray:
    """Add i.i.d. Gaussian noise calibrated to the L2 sensitivity."""
    v = np.asarray(v, dtype=np.float64)
    sigma = gaussian_sigma(l2_sensitivity, budget) * heuristic_multiplier
    if sigma == 0.0:
        return v.copy()
    return v + rng.normal(0.0, sigma, size=v.shape)


def exponential_mechanism(
    utilities,
    sensitivity: float,
    epsilon: float,
    rng: np.random.Generator,
) -> int:
    """Sample an index with probability proportional to exp(eps*u/(2*sens))."""
    utilities = np.asarray(utilities, dtype=np.float64)
    if utilities.size < 1:
        raise ValueError("need at least one candidate")
    if not np.all(np.isfinite(utilities)):
        raise ValueError("utilities must be finite")
    if sensitivity <= 0:
        raise ValueError("sensitivity must be positive")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    logits = epsilon * utilities / (2.0 * sensitivity)
    logits -= np.max(logits)
    probs = np.exp(logits)
    probs /= probs.sum()
    return int(rng.choice(utilities.size, p=probs))


def exponential_selection_probabilities(utilities, sensitivity: float, epsilon: float) -> np.ndarray:
    """Closed-form selection probabilities of the exponential mechanism."""
    utilities = np.asarray(utilities, dtype=np.float64)
    logits = epsilon * utilities / (2.0 * sensitivity)
    logits -= np.max(logits)
    probs = np.exp(logits)
    return probs / probs.sum()


def amplified_epsilon(base_epsilon: float, sampling_fraction: float) -> float:
    """Privacy amplification by uniform subsampling: ln(1 + q(e^eps - 1))."""
    if not 0.0 < sampling_fraction <= 1.0:
        raise ValueError("sampling fraction must lie in (0, 1]")
    if base_epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return math.log1p(sampling_fraction * math.expm1(base_epsilon))


@dataclass
class LedgerEntry:
    label: str
    epsilon: Fraction
    delta: Fraction
    group: Optional[str] = None


@dataclass
class BudgetLedger:
    """Exact (rational-arithmetic) record of privacy charges.

    Entries in the same ``group`` ran on disjoint data, so they compose in
    parallel (the group costs the maximum of its members); entries without a
    group, and distinct groups, compose sequentially (costs add).
    """

    entries: list = field(default_factory=list)

    def charge(self, label: str, epsilon: FractionLike, delta: FractionLike = 0, group: str | None = None):
        self.entries.append(LedgerEntry(label, Fraction(epsilon), Fraction(delta), group))

    def extend(self, other: "BudgetLedger", group: str | None = None, prefix: str = ""):
        for e in other.entries:
            self.entries.append(
                LedgerEntry(prefix + e.label, e.epsilon, e.delta, group if group is not None else e.group)
            )

    def total(self) -> PrivacyBudget:
        eps = Fraction(0)
        delta = Fraction(0)
        groups: dict[str, tuple[Fraction, Fraction]] = {}
        for e in self.entries:
            if e.group is None:
                eps += e.epsilon
                delta += e.delta
            else:
                ge, gd = groups.get(e.group, (Fraction(0), Fraction(0)))
                groups[e.group] = (max(ge, e.epsilon), max(gd, e.delta))
        for ge, gd in groups.values():
            eps += ge
            delta += gd
        return PrivacyBudget(float(eps), float(delta))

    def total_exact(self) -> tuple[Fraction, Fraction]:
        budget = self.total()
        # recompute in exact arithmetic (total() already used Fractions; re-derive)
        eps = Fraction(0)
        delta = Fraction(0)
        groups: dict[str, tuple[Fraction, Fraction]] = {}
        for e in self.entries:
            if e.group is None:
                eps += e.epsilon
                delta += e.delta
            else:
                ge, gd = groups.get(e.group, (Fraction(0), Fraction(0)))
                groups[e.group] = (max(ge, e.epsilon), max(gd, e.delta))
        for ge, gd in groups.values():
            eps += ge
            delta += gd
        assert float(eps) == budget.epsilon
        return eps, delta

    def matches(self, declared: PrivacyBudget) -> bool:
        """Exact equality between the ledger total and a declared budget."""
        eps, delta = self.total_exact()
        return eps == Fraction(declared.epsilon) and delta == Fraction(declared.delta)

    def to_records(self) -> list[dict]:
        return [
            {
                "label": e.label,
                "epsilon": str(e.epsilon),
                "delta": str(e.delta),
                "group": e.group,
            }
            for e in self.entries
        ]
