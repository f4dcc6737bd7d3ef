"""Independent reference implementations used to pin expected test values.

Everything here is deliberately brute force (explicit enumeration, direct
products, high-precision arithmetic) and shares no code path with the
package's forward-backward / matrix-power machinery.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

from diffusionlab.posterior import MASK


def enumerate_posteriors(initial, transition, tokens):
    """Masked-position marginals by explicit summation over all completions."""
    initial = np.asarray(initial, dtype=float)
    transition = np.asarray(transition, dtype=float)
    tokens = np.asarray(tokens, dtype=np.int64)
    m = initial.size
    length = tokens.size
    masked = [i for i in range(length) if tokens[i] == MASK]
    marginals = np.zeros((length, m))
    total = 0.0
    for fill in itertools.product(range(m), repeat=len(masked)):
        seq = tokens.copy()
        for pos, val in zip(masked, fill):
            seq[pos] = val
        prob = initial[seq[0]]
        for t in range(1, length):
            prob *= transition[seq[t - 1], seq[t]]
        total += prob
        for t in range(length):
            marginals[t, seq[t]] += prob
    if total <= 0.0:
        raise ZeroDivisionError("observations have probability zero")
    return marginals / total


def enumerate_posteriors_fast(initial, transition, tokens):
    """Vectorized variant of enumerate_posteriors for the full acceptance sweep.

    Same brute-force semantics (materialize every completion, weight by the
    explicit probability product); only the bookkeeping is array-based.
    """
    initial = np.asarray(initial, dtype=float)
    transition = np.asarray(transition, dtype=float)
    tokens = np.asarray(tokens, dtype=np.int64)
    m = initial.size
    length = tokens.size
    masked = np.flatnonzero(tokens == MASK)
    n_masked = masked.size
    if n_masked == 0:
        completions = tokens[None, :]
    else:
        fills = np.array(list(itertools.product(range(m), repeat=n_masked)), dtype=np.int64)
        completions = np.tile(tokens, (fills.shape[0], 1))
        completions[:, masked] = fills
    probs = initial[completions[:, 0]]
    for t in range(1, length):
        probs = probs * transition[completions[:, t - 1], completions[:, t]]
    total = probs.sum()
    if total <= 0.0:
        raise ZeroDivisionError("observations have probability zero")
    marginals = np.zeros((length, m))
    for t in range(length):
        np.add.at(marginals[t], completions[:, t], probs)
    return marginals / total


def enumerate_joint(initial, transition, tokens, pos_a, pos_b):
    """Joint law of two positions given the observed tokens, by enumeration."""
    initial = np.asarray(initial, dtype=float)
    transition = np.asarray(transition, dtype=float)
    tokens = np.asarray(tokens, dtype=np.int64)
    m = initial.size
    length = tokens.size
    masked = [i for i in range(length) if tokens[i] == MASK]
    joint = np.zeros((m, m))
    total = 0.0
    for fill in itertools.product(range(m), repeat=len(masked)):
        seq = tokens.copy()
        for pos, val in zip(masked, fill):
            seq[pos] = val
        prob = initial[seq[0]]
        for t in range(1, length):
            prob *= transition[seq[t - 1], seq[t]]
        total += prob
        joint[seq[pos_a], seq[pos_b]] += prob
    return joint / total


def enumerate_skip(transition, s1, hops):
    """Row of T^hops via explicit summation over all intermediate paths."""
    transition = np.asarray(transition, dtype=float)
    m = transition.shape[0]
    out = np.zeros(m)
    for path in itertools.product(range(m), repeat=hops):
        prob = transition[s1, path[0]]
        for a, b in zip(path, path[1:]):
            prob *= transition[a, b]
        out[path[-1]] += prob
    return out


def pass_at_k_enumeration(n: int, c: int, k: int) -> Fraction:
    """P(some correct in a k-subset) by counting all C(n, k) subsets."""
    samples = [1] * c + [0] * (n - c)
    hits = 0
    total = 0
    for subset in itertools.combinations(range(n), k):
        total += 1
        hits += int(any(samples[i] for i in subset))
    return Fraction(hits, total)


def high_precision_entropy_bits(probs, digits: int = 50) -> float:
    """Shannon entropy via mpmath at `digits` working precision."""
    import mpmath

    with mpmath.workdps(digits):
        acc = mpmath.mpf(0)
        for p in probs:
            if p > 0:
                mp = mpmath.mpf(repr(float(p)))
                acc -= mp * mpmath.log(mp, 2)
        return float(acc)


def random_stochastic_matrix(m: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(m), size=m)


def random_model_arrays(m: int, rng: np.random.Generator):
    initial = rng.dirichlet(np.ones(m))
    transition = random_stochastic_matrix(m, rng)
    return initial, transition


def answer_match_probability(model, s1: int, answer_positions, answer_tokens) -> float:
    """P(trajectory hits the given tokens at the answer positions | S_1 = s1).

    Direct dynamic program over the chain, independent of the package's
    inference code.
    """
    answer = {int(p): int(t) for p, t in zip(answer_positions, answer_tokens)}
    dist = np.zeros(model.m)
    dist[s1] = 1.0
    if 0 in answer:
        keep = np.zeros(model.m)
        keep[answer[0]] = dist[answer[0]]
        dist = keep
    for t in range(1, model.length):
        dist = dist @ model.transition
        if t in answer:
            keep = np.zeros(model.m)
            keep[answer[t]] = dist[answer[t]]
            dist = keep
    return float(dist.sum())
