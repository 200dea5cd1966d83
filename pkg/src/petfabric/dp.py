"""Laplace-mechanism differential privacy over the encoded integer domain.

Two deployment models:

* local (LDP): each sensor perturbs its own encoded value before it is
  published, so no downstream party ever sees the raw reading. Noise is
  rounded to the nearest integer because the wire format carries integers;
  rounding is symmetric, so sums stay unbiased.
* global (GDP): a trusted aggregator computes the exact aggregate first and
  adds a single real-valued Laplace draw to the terminal result.

A k-ary randomized-response mechanism over {0..q} is provided as an
alternative local mechanism for categorical treatment of the encoded domain.

Noise scales live in encoded units: scale b = sensitivity / epsilon, where
the sensitivity defaults to the encoded-domain width q for sum queries.
Noisy values are never clamped back into [0, q] -- clamping biases sums.
Every draw flows through an injected numpy Generator so runs reproduce
exactly from a seed; parallel runs use independently seeded generators
(seed = master_seed + run_index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codec import EncodingParams


@dataclass(frozen=True)
class PrivacyBudget:
    """Privacy parameter epsilon plus query sensitivity in encoded units."""

    epsilon: float
    sensitivity: int

    def __post_init__(self) -> None:
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon}")
        if self.sensitivity < 1:
            raise ValueError(f"sensitivity must be a positive integer, got {self.sensitivity}")

    @property
    def scale(self) -> float:
        """Laplace scale b = sensitivity / epsilon."""
        return self.sensitivity / self.epsilon

    @classmethod
    def for_sum(cls, epsilon: float, width: int) -> "PrivacyBudget":
        """Budget for a sum query: one record moves the sum by at most q."""
        return cls(epsilon=epsilon, sensitivity=width)

    @classmethod
    def for_mean(cls, epsilon: float, width: int, n: int) -> "PrivacyBudget":
        """Budget for a mean over n records: sensitivity ceil(q / n)."""
        if n < 1:
            raise ValueError(f"mean needs at least one record, got n={n}")
        return cls(epsilon=epsilon, sensitivity=math.ceil(width / n))


@dataclass(frozen=True)
class NoisySum:
    """A privatized aggregate in encoded units, plus the budget that shaped it."""

    value: float
    n: int
    budget: PrivacyBudget


def sample_laplace(scale: float, rng: np.random.Generator, size=None):
    """Draw from Laplace(0, scale) by inverse CDF.

    With u uniform on (-1/2, 1/2): draw = -scale * sgn(u) * ln(1 - 2|u|).
    Returns a float when size is None, otherwise an ndarray of shape size.
    """
    if not (scale > 0 and math.isfinite(scale)):
        raise ValueError(f"Laplace scale must be positive and finite, got {scale}")
    if size is None:
        u = rng.random()
        while u == 0.0:  # u - 1/2 == -1/2 would hit log(0)
            u = rng.random()
        u -= 0.5
        return -scale * math.copysign(1.0, u) * math.log1p(-2.0 * abs(u))
    u = rng.random(size)
    while True:
        zero = u == 0.0
        if not zero.any():
            break
        u[zero] = rng.random(int(zero.sum()))
    u -= 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def ldp_perturb(x: int, budget: PrivacyBudget, rng: np.random.Generator) -> int:
    """Perturb one freshly encoded value at the sensor: x + round(Lap(b)).

    The result may leave [0, q]; it is intentionally not clamped.
    """
    return x + round(sample_laplace(budget.scale, rng))


def ldp_perturb_array(xs, budget: PrivacyBudget, rng: np.random.Generator) -> np.ndarray:
    """Vector form of ldp_perturb for batch experiments (int64 output)."""
    xs = np.asarray(xs, dtype=np.int64)
    noise = np.rint(sample_laplace(budget.scale, rng, size=xs.shape))
    return xs + noise.astype(np.int64)


def gdp_aggregate(
    xs: Sequence[int],
    budget: PrivacyBudget,
    aggregator: str,
    rng: np.random.Generator,
) -> NoisySum:
    """Aggregate exactly, then add a single Laplace draw at the trusted node.

    The caller chooses budget.sensitivity for the query: the full encoded
    width q for a sum, ceil(q/n) for a mean (see PrivacyBudget.for_sum /
    for_mean). The aggregate is computed in exact integer arithmetic before
    the one noise draw is added.
    """
    if len(xs) == 0:
        raise ValueError("gdp_aggregate needs at least one value")
    if aggregator not in ("sum", "mean"):
        raise ValueError(f"unknown aggregator {aggregator!r}, expected 'sum' or 'mean'")
    exact = sum(int(v) for v in xs)
    agg = exact if aggregator == "sum" else exact / len(xs)
    noisy = agg + sample_laplace(budget.scale, rng)
    return NoisySum(value=noisy, n=len(xs), budget=budget)


def krr_perturb(x: int, epsilon: float, p: EncodingParams, rng: np.random.Generator) -> int:
    """k-ary randomized response over the encoded domain {0..q}.

    Keeps x with probability e^eps / (e^eps + q), otherwise reports a uniform
    draw from the other q values; this satisfies epsilon-LDP on the encoded
    domain. The keep probability is evaluated as 1 / (1 + q * e^-eps) so very
    large epsilon cannot overflow.
    """
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ValueError(f"epsilon must be positive and finite, got {epsilon}")
    q = p.q
    if not 0 <= x <= q:
        raise ValueError(f"encoded value {x} outside [0, {q}]")
    keep = 1.0 / (1.0 + q * math.exp(-epsilon))
    if rng.random() < keep:
        return x
    other = int(rng.integers(0, q))
    return other if other < x else other + 1
