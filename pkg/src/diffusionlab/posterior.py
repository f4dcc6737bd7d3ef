"""Exact masked-token posteriors for tabular Markov models.

Given a sequence with some positions observed and the rest masked, the
forward-backward recursion below computes the exact per-position conditional
law of every masked token.  This is the ground-truth counterpart of the
masked-token predictor a denoising language model is trained to approximate;
using exact inference isolates decoding-strategy behavior from model quality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tasks import TabularMarkovModel

MASK = -1

POSTERIOR_TOL = 1e-10


class ContradictionError(ValueError):
    """Observed tokens have probability zero under the model."""


@dataclass(frozen=True)
class MaskedSequence:
    """A token vector of length L where MASK (-1) marks unknown positions."""

    tokens: np.ndarray

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int64).copy()
        if tokens.ndim != 1 or tokens.size < 1:
            raise ValueError("tokens must be a non-empty 1-d vector")
        if np.any(tokens < MASK):
            raise ValueError("tokens must be state ids or MASK (-1)")
        tokens.setflags(write=False)
        object.__setattr__(self, "tokens", tokens)

    @property
    def length(self) -> int:
        return int(self.tokens.size)

    @property
    def mask_set(self) -> np.ndarray:
        return np.flatnonzero(self.tokens == MASK)

    @property
    def observed_set(self) -> np.ndarray:
        return np.flatnonzero(self.tokens != MASK)

    def with_tokens(self, positions, values) -> "MaskedSequence":
        tokens = self.tokens.copy()
        tokens[np.asarray(positions, dtype=np.int64)] = np.asarray(values, dtype=np.int64)
        return MaskedSequence(tokens)

    def to_text(self) -> str:
        return " ".join("_" if t == MASK else str(int(t)) for t in self.tokens)

    @classmethod
    def from_text(cls, text: str) -> "MaskedSequence":
        tokens = [MASK if tok == "_" else int(tok) for tok in text.split()]
        return cls(np.array(tokens, dtype=np.int64))

    @classmethod
    def fully_masked(cls, length: int) -> "MaskedSequence":
        return cls(np.full(length, MASK, dtype=np.int64))


@dataclass(frozen=True)
class PosteriorTable:
    """Per-position marginals over states, with argmax and confidence.

    Unmasked positions carry point masses on their observed token, so the
    table always describes the full sequence.
    """

    marginals: np.ndarray
    mask: np.ndarray

    @property
    def confidence(self) -> np.ndarray:
        return self.marginals.max(axis=1)

    @property
    def argmax(self) -> np.ndarray:
        # np.argmax returns the first maximum: ties break to the smaller id.
        return self.marginals.argmax(axis=1)

    def to_csv_rows(self):
        rows = [("position", "state", "probability")]
        length, m = self.marginals.shape
        for i in range(length):
            for s in range(m):
                rows.append((i, s, repr(float(self.marginals[i, s]))))
        return rows


def _indicator_columns(model: TabularMarkovModel, seq: MaskedSequence) -> np.ndarray:
    e = np.ones((seq.length, model.m))
    for i in seq.observed_set:
        tok = int(seq.tokens[i])
        if not 0 <= tok < model.m:
            raise ValueError(f"observed token {tok} at position {i} outside [0, {model.m})")
        e[i] = 0.0
        e[i, tok] = 1.0
    return e


def masked_posteriors(model: TabularMarkovModel, seq: MaskedSequence) -> PosteriorTable:
    """Exact conditional law of every position given the observed tokens.

    Forward and backward passes are renormalized per position, so no
    probability underflows even at length 256; a zero normalizer means the
    observations are jointly impossible and raises ContradictionError.
    """
    if seq.length != model.length:
        raise ValueError(
            f"sequence length {seq.length} does not match model length {model.length}"
        )
    e = _indicator_columns(model, seq)
    length, m = seq.length, model.m
    t = model.transition

    alpha = np.empty((length, m))
    vec = model.initial * e[0]
    norm = vec.sum()
    if norm <= 0.0:
        raise ContradictionError("observed tokens have probability 0 under the model")
    alpha[0] = vec / norm
    for i in range(1, length):
        vec = (alpha[i - 1] @ t) * e[i]
        norm = vec.sum()
        if norm <= 0.0:
            raise ContradictionError("observed tokens have probability 0 under the model")
        alpha[i] = vec / norm

    beta = np.empty((length, m))
    beta[length - 1] = 1.0
    for i in range(length - 2, -1, -1):
        vec = t @ (e[i + 1] * beta[i + 1])
        peak = vec.max()
        if peak <= 0.0:
            raise ContradictionError("observed tokens have probability 0 under the model")
        beta[i] = vec / peak

    marginals = alpha * beta
    norms = marginals.sum(axis=1, keepdims=True)
    if np.any(norms <= 0.0):
        raise ContradictionError("observed tokens have probability 0 under the model")
    marginals /= norms
    mask = seq.tokens == MASK
    # Pin observed positions to exact point masses.
    for i in seq.observed_set:
        marginals[i] = 0.0
        marginals[i, int(seq.tokens[i])] = 1.0
    marginals.setflags(write=False)
    return PosteriorTable(marginals=marginals, mask=mask)


def sequence_log_likelihood(model: TabularMarkovModel, states) -> float:
    """Chain-rule log-probability of a fully observed trajectory.

    Returns -inf when any factor is zero.
    """
    states = np.asarray(states, dtype=np.int64)
    if states.ndim != 1 or states.size != model.length:
        raise ValueError(f"trajectory must be fully observed with length {model.length}")
    if np.any(states < 0) or np.any(states >= model.m):
        raise ValueError("trajectory states out of range")
    factors = np.empty(model.length)
    factors[0] = model.initial[states[0]]
    factors[1:] = model.transition[states[:-1], states[1:]]
    if np.any(factors == 0.0):
        return float("-inf")
    return float(np.sum(np.log(factors)))


def greedy_fill(model: TabularMarkovModel, seq: MaskedSequence) -> np.ndarray:
    """One-shot parallel decode: argmax of each masked posterior at once.

    Argmax ties break toward the smaller state id.
    """
    if seq.mask_set.size == 0:
        return seq.tokens.copy()
    table = masked_posteriors(model, seq)
    filled = seq.tokens.copy()
    masked = seq.mask_set
    filled[masked] = table.argmax[masked]
    return filled
