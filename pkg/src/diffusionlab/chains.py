"""Evaluation metrics over step-segmented token chains.

A chain is an ordered list of steps, each a list of token ids.  Scores are
computed against deterministic seeded random unit-vector embeddings, so every
metric is exactly reproducible; absolute values are not comparable to scores
built on learned embeddings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .posterior import sequence_log_likelihood
from .tasks import TabularMarkovModel


class ChainError(ValueError):
    """Raised for malformed chains or invalid metric inputs."""


@dataclass(frozen=True)
class StepChain:
    """Ordered reasoning steps over an integer token vocabulary."""

    steps: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.steps) < 1:
            raise ChainError("a chain needs at least one step")
        steps = tuple(tuple(int(t) for t in step) for step in self.steps)
        if any(len(step) == 0 for step in steps):
            raise ChainError("every step needs at least one token")
        if any(t < 0 for step in steps for t in step):
            raise ChainError("token ids must be non-negative")
        object.__setattr__(self, "steps", steps)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def flatten(self) -> list[int]:
        return [t for step in self.steps for t in step]

    def to_text(self) -> str:
        return "\n".join(" ".join(str(t) for t in step) for step in self.steps) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "StepChain":
        steps = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            steps.append(tuple(int(tok) for tok in line.split()))
        return cls(tuple(steps))


@dataclass
class Embedder:
    """Deterministic token embeddings: seeded random unit vectors."""

    dimension: int = 32
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def token_vector(self, token: int) -> np.ndarray:
        token = int(token)
        if token not in self._cache:
            rng = np.random.default_rng((self.seed, token))
            vec = rng.standard_normal(self.dimension)
            vec /= np.linalg.norm(vec)
            vec.setflags(write=False)
            self._cache[token] = vec
        return self._cache[token]

    def step_vector(self, tokens) -> np.ndarray:
        tokens = list(tokens)
        if not tokens:
            raise ChainError("cannot embed an empty step")
        mean = np.mean([self.token_vector(t) for t in tokens], axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-12:
            raise ChainError("step embedding degenerated to the zero vector")
        return mean / norm


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ChainError("vectors must share a dimension")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ChainError("cosine similarity is undefined for the zero vector")
    return float(np.dot(u, v) / (nu * nv))


def _normalized_best_cosine(vec: np.ndarray, candidates: list[np.ndarray]) -> float:
    best = max(cosine_similarity(vec, c) for c in candidates)
    return (1.0 + best) / 2.0


def step_alignment(step_tokens, source: StepChain, embedder: Embedder) -> float:
    """(1 + best cosine between the step and any source step) / 2."""
    if source.n_steps < 1:
        raise ChainError("source chain is empty")
    vec = embedder.step_vector(step_tokens)
    candidates = [embedder.step_vector(s) for s in source.steps]
    return _normalized_best_cosine(vec, candidates)


def reasoning_alignment(hypothesis: StepChain, reference: StepChain, embedder: Embedder) -> float:
    """Mean per-step alignment of the hypothesis against the reference chain."""
    scores = [step_alignment(step, reference, embedder) for step in hypothesis.steps]
    return float(np.mean(scores))


def repetition_word(hypothesis: StepChain, embedder: Embedder) -> float:
    """Penalty for repeated steps: 1 minus the best pairwise token overlap.

    A chain whose every step is novel scores near 1; an exact repeat of an
    earlier step scores 0.  Single-step chains score 1 by convention, since
    no pair exists.
    """
    if hypothesis.n_steps < 2:
        return 1.0
    step_token_vectors = [
        [embedder.token_vector(t) for t in step] for step in hypothesis.steps
    ]
    best = -np.inf
    for i in range(1, hypothesis.n_steps):
        for j in range(i):
            aligns = [
                _normalized_best_cosine(tok_vec, step_token_vectors[j])
                for tok_vec in step_token_vectors[i]
            ]
            best = max(best, float(np.mean(aligns)))
    return 1.0 - best


def informativeness(hypothesis: StepChain, source: StepChain, embedder: Embedder) -> float:
    """Mean of source-to-hypothesis and hypothesis-to-source alignments."""
    forward = np.mean(
        [step_alignment(step, hypothesis, embedder) for step in source.steps]
    )
    backward = np.mean(
        [step_alignment(step, source, embedder) for step in hypothesis.steps]
    )
    return float((forward + backward) / 2.0)


def token_entropy(tokens) -> float:
    """Empirical unigram entropy of a flat token list, in bits."""
    tokens = list(tokens)
    if not tokens:
        raise ChainError("token entropy needs a non-empty token list")
    _, counts = np.unique(np.asarray(tokens), return_counts=True)
    probs = counts / counts.sum()
    return float(-np.sum(probs * np.log2(probs)))


def perplexity(model: TabularMarkovModel, trajectory) -> float:
    """exp of the mean negative log-likelihood per token under the model.

    A zero-probability factor yields the infinite-perplexity sentinel.
    """
    log_prob = sequence_log_likelihood(model, trajectory)
    if log_prob == float("-inf"):
        return float("inf")
    n = len(np.asarray(trajectory))
    return float(math.exp(-log_prob / n))


CHAIN_METRICS = ("reasoning_alignment", "repetition_word", "informativeness", "token_entropy")


def metric_batch_rows(
    chains: dict[str, StepChain],
    embedder: Embedder,
    source: StepChain | None = None,
    reference: StepChain | None = None,
    model: TabularMarkovModel | None = None,
):
    """CSV rows (chain id, metric, value) for a batch of chains."""
    rows = [("chain", "metric", "value")]
    for chain_id in sorted(chains):
        chain = chains[chain_id]
        if reference is not None:
            rows.append(
                (chain_id, "reasoning_alignment", repr(reasoning_alignment(chain, reference, embedder)))
            )
        rows.append((chain_id, "repetition_word", repr(repetition_word(chain, embedder))))
        if source is not None:
            rows.append(
                (chain_id, "informativeness", repr(informativeness(chain, source, embedder)))
            )
        rows.append((chain_id, "token_entropy", repr(token_entropy(chain.flatten()))))
        if model is not None and len(chain.flatten()) == model.length:
            rows.append((chain_id, "perplexity", repr(perplexity(model, chain.flatten()))))
    return rows
