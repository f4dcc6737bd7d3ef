"""Entropy analysis of skip-step conditionals.

All entropies are reported in bits.  The functions here quantify the
serial/parallel dichotomy numerically: skip conditionals p(S_k | S_1) carry
high entropy on expanding (serial) chains and low entropy on bucket-quantized
(parallel) chains, with Fano and min-entropy bounds sandwiching every case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tasks import TabularMarkovModel, TaskError, skip_conditional

DIST_TOL = 1e-10


class DistributionError(ValueError):
    """Raised for invalid probability vectors."""


@dataclass(frozen=True)
class DiscreteDistribution:
    """Validated probability vector over a finite support."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float).copy()
        _validate_probs(probs)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def support_size(self) -> int:
        return int(self.probs.size)


@dataclass(frozen=True)
class SensitivityProfile:
    """Mean reference-outcome probability as a function of neighborhood radius."""

    radii: tuple[int, ...]
    mean_reference_prob: tuple[float, ...]
    reference_outcome: int
    k: int


def _validate_probs(probs: np.ndarray) -> np.ndarray:
    if probs.ndim != 1 or probs.size < 1:
        raise DistributionError("distribution must be a non-empty vector")
    if np.any(probs < 0.0):
        raise DistributionError("probabilities must be non-negative")
    if abs(probs.sum() - 1.0) > DIST_TOL:
        raise DistributionError("probabilities must sum to 1 within 1e-10")
    return probs


def _as_probs(dist) -> np.ndarray:
    if isinstance(dist, DiscreteDistribution):
        return dist.probs
    return _validate_probs(np.asarray(dist, dtype=float))


def _xlog2x(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    np.log2(p, out=out, where=p > 0.0)
    return p * out


def shannon_entropy(dist) -> float:
    """H = -sum p log2 p, with 0 log 0 = 0."""
    return float(-np.sum(_xlog2x(_as_probs(dist))))


def binary_entropy(p: float) -> float:
    """Entropy of a Bernoulli(p) coin, in bits."""
    if not 0.0 <= p <= 1.0:
        raise DistributionError("binary entropy needs p in [0, 1]")
    arr = np.array([p, 1.0 - p])
    return float(-np.sum(_xlog2x(arr)))


def fano_upper_bound(p_max: float, m: int) -> float:
    """H <= H_b(p_max) + (1 - p_max) * log2(m - 1) for a maximal atom p_max."""
    if not 0.0 < p_max <= 1.0:
        raise DistributionError("p_max must lie in (0, 1]")
    if m < 1:
        raise DistributionError("support size must be >= 1")
    if m == 1:
        return 0.0
    return binary_entropy(p_max) + (1.0 - p_max) * float(np.log2(m - 1))


def min_entropy_lower_bound(p_max: float) -> float:
    """-log2 p_max, a lower bound on the Shannon entropy."""
    if not 0.0 < p_max <= 1.0:
        raise DistributionError("p_max must lie in (0, 1]")
    return float(-np.log2(p_max))


def _punctured_ball(s1: int, radius: int, m: int) -> np.ndarray:
    """States at circular distance 1..radius from s1."""
    offsets = np.arange(1, radius + 1)
    neighbors = np.concatenate([(s1 + offsets) % m, (s1 - offsets) % m])
    return np.unique(neighbors[neighbors != s1])


def sensitivity_profile(
    model: TabularMarkovModel, s1: int, k: int, radii
) -> SensitivityProfile:
    """Expected probability of s1's reference outcome under perturbed starts.

    The reference outcome is the mode of the exact skip conditional from s1;
    for each radius the probability of reproducing it is averaged over starts
    drawn uniformly from the punctured circular ball around s1.
    """
    radii = tuple(int(r) for r in radii)
    if any(r < 1 for r in radii):
        raise TaskError("radii must be >= 1 state unit")
    if list(radii) != sorted(set(radii)):
        raise TaskError("radii must be strictly ascending")
    reference = int(np.argmax(skip_conditional(model, s1, k)))
    power = np.linalg.matrix_power(model.transition, k - 1)
    means = []
    for radius in radii:
        ball = _punctured_ball(s1, radius, model.m)
        if ball.size == 0:
            raise TaskError(f"punctured ball of radius {radius} is empty for m={model.m}")
        means.append(float(power[ball, reference].mean()))
    return SensitivityProfile(
        radii=radii,
        mean_reference_prob=tuple(means),
        reference_outcome=reference,
        k=k,
    )


def mean_skip_entropy(model: TabularMarkovModel, k: int, radius: int) -> float:
    """E over starts and their punctured-ball neighbors of H(S_k | S_1 = s1')."""
    if not 2 <= k <= model.length:
        raise TaskError(f"step index k={k} out of range [2, {model.length}]")
    if radius < 1:
        raise TaskError("radius must be >= 1 state unit")
    power = np.linalg.matrix_power(model.transition, k - 1)
    row_entropy = -np.sum(_xlog2x(power), axis=1)
    total = 0.0
    for s1 in range(model.m):
        ball = _punctured_ball(s1, radius, model.m)
        total += float(model.initial[s1]) * float(row_entropy[ball].mean())
    return total


def skip_entropy_gap(
    serial: TabularMarkovModel, parallel: TabularMarkovModel, k: int, radius: int = 1
) -> float:
    """Serial mean skip entropy minus parallel mean skip entropy, in bits."""
    if serial.m != parallel.m:
        raise TaskError("serial and parallel models must share the state count")
    if serial.length != parallel.length:
        raise TaskError("serial and parallel models must share the length")
    return mean_skip_entropy(serial, k, radius) - mean_skip_entropy(parallel, k, radius)


def coarsen_distribution(dist, mesh: int) -> DiscreteDistribution:
    """Push a distribution forward through the bucket map s -> floor(s/mesh)."""
    probs = _as_probs(dist)
    m = probs.size
    if mesh < 1 or m % mesh != 0:
        raise DistributionError(f"mesh {mesh} must divide the support size {m}")
    coarse = probs.reshape(m // mesh, mesh).sum(axis=1)
    return DiscreteDistribution(coarse)


def coarsen_model(model: TabularMarkovModel, mesh: int) -> TabularMarkovModel:
    """Lump states into buckets of width mesh.

    The initial law sums within buckets; transition mass is summed over
    destination buckets and averaged over source states, keeping the matrix
    row-stochastic.
    """
    if mesh < 1 or model.m % mesh != 0:
        raise TaskError(f"mesh {mesh} must divide the state count {model.m}")
    if mesh == 1:
        return model
    m_eps = model.m // mesh
    initial = model.initial.reshape(m_eps, mesh).sum(axis=1)
    dest = model.transition.reshape(model.m, m_eps, mesh).sum(axis=2)
    transition = dest.reshape(m_eps, mesh, m_eps).mean(axis=1)
    return TabularMarkovModel(m=m_eps, initial=initial, transition=transition, length=model.length)


def coarsen_states(obj, mesh: int):
    """Coarsen a model or a distribution with the same quantization map."""
    if isinstance(obj, TabularMarkovModel):
        return coarsen_model(obj, mesh)
    return coarsen_distribution(obj, mesh)


def profile_csv_rows(profile: SensitivityProfile, kind: str, m: int, a_or_w: int, eta: float):
    """Rows in the shared analysis CSV layout."""
    rows = []
    for radius, value in zip(profile.radii, profile.mean_reference_prob):
        rows.append((kind, m, a_or_w, repr(eta), profile.k, radius, repr(value)))
    return rows


ANALYSIS_CSV_HEADER = ("kind", "m", "a_or_w", "eta", "k", "epsilon", "value")
