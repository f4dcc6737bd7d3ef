"""Masked-diffusion decoding over exact posteriors.

The decoder iteratively commits masked positions under a remasking strategy:

* ``low_confidence``: commit the highest-confidence masked positions first.
* ``random``: commit uniformly chosen masked positions.
* ``revision``: like low_confidence, but each step first re-opens up to
  ``revision_budget`` of the least confident already-committed tokens so
  extra steps keep refining (and can degrade) a finished sequence.

Generation is scheduled over contiguous blocks processed left to right, each
receiving its share of the step budget.  An optional early-stopping rule
halts decoding once consecutive prediction snapshots overlap above a
threshold for a patience window, committing the stabilized snapshot.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .posterior import MASK, MaskedSequence, PosteriorTable, masked_posteriors
from .tasks import TabularMarkovModel

STRATEGIES = ("low_confidence", "random", "revision")


class DecodeConfigError(ValueError):
    """Raised for invalid decoding configurations."""


class EmptyComparisonError(ValueError):
    """Overlap ratio requested over an empty position set: no evidence."""


@dataclass(frozen=True)
class EarlyStop:
    enabled: bool = False
    threshold: float = 0.99
    patience: int = 3

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise DecodeConfigError("early-stop threshold must lie in (0, 1]")
        if self.patience < 1:
            raise DecodeConfigError("early-stop patience must be >= 1")


@dataclass(frozen=True)
class DecodeConfig:
    total_steps: int
    block_length: int = 32
    temperature: float = 0.0
    strategy: str = "low_confidence"
    revision_budget: int = 0
    early_stop: EarlyStop = field(default_factory=EarlyStop)
    seed: int = 0
    max_length: int = 512

    def __post_init__(self):
        if self.total_steps < 1:
            raise DecodeConfigError("total_steps must be >= 1")
        if self.block_length < 1:
            raise DecodeConfigError("block_length must be >= 1")
        if self.block_length > self.max_length:
            raise DecodeConfigError("block_length must not exceed max_length")
        if self.temperature < 0.0:
            raise DecodeConfigError("temperature must be >= 0")
        if self.strategy not in STRATEGIES:
            raise DecodeConfigError(f"unknown strategy {self.strategy!r}")
        if self.revision_budget < 0:
            raise DecodeConfigError("revision_budget must be >= 0")


@dataclass(frozen=True)
class StepRecord:
    """State of one executed diffusion step."""

    step: int
    snapshot: np.ndarray
    committed_positions: tuple[int, ...]
    committed_tokens: tuple[int, ...]
    confidences: tuple[float, ...]


@dataclass
class DecodeTrace:
    """Full record of a decode: per-step commits, overlaps, final sequence."""

    records: list[StepRecord]
    overlap_ratios: list[float]
    stop_step: int
    steps_executed: int
    final_sequence: np.ndarray
    early_stopped: bool = False

    def commit_steps(self, length: int) -> np.ndarray:
        """Step at which each position first committed (0 = given in prompt)."""
        steps = np.zeros(length, dtype=np.int64)
        for record in self.records:
            for pos in record.committed_positions:
                if steps[pos] == 0:
                    steps[pos] = record.step
        return steps

    def to_jsonl(self) -> str:
        lines = []
        for record, ratio in zip(
            self.records, [None] + [float(r) for r in self.overlap_ratios]
        ):
            lines.append(
                json.dumps(
                    {
                        "step": record.step,
                        "snapshot": [int(t) for t in record.snapshot],
                        "committed_positions": list(record.committed_positions),
                        "committed_tokens": list(record.committed_tokens),
                        "confidences": [repr(c) for c in record.confidences],
                        "overlap_ratio": None if ratio is None else repr(ratio),
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + "\n"

    def to_csv_rows(self):
        rows = [("step", "committed_count", "mean_confidence", "overlap_ratio")]
        for i, record in enumerate(self.records):
            conf = sum(record.confidences) / len(record.confidences)
            ratio = "" if i == 0 else repr(float(self.overlap_ratios[i - 1]))
            rows.append((record.step, len(record.committed_positions), repr(conf), ratio))
        return rows


def overlap_ratio(prev_snapshot, curr_snapshot, updated_positions) -> float:
    """Fraction of updated positions whose token agrees across two snapshots."""
    prev_snapshot = np.asarray(prev_snapshot)
    curr_snapshot = np.asarray(curr_snapshot)
    if prev_snapshot.shape != curr_snapshot.shape:
        raise ValueError("snapshots must have the same length")
    updated = np.asarray(sorted(updated_positions), dtype=np.int64)
    if updated.size == 0:
        raise EmptyComparisonError("no updated positions: overlap is undefined")
    agree = np.count_nonzero(prev_snapshot[updated] == curr_snapshot[updated])
    return agree / updated.size


def des_should_stop(overlap_history, threshold: float, patience: int) -> bool:
    """True once the last `patience` overlap ratios all meet the threshold."""
    if patience < 1:
        raise DecodeConfigError("patience must be >= 1")
    history = list(overlap_history)
    if len(history) < patience:
        return False
    return all(r >= threshold for r in history[-patience:])


def _tempered_draw(probs: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    """Sample from probs**(1/temperature); temperature 0 is argmax."""
    if temperature == 0.0:
        return int(np.argmax(probs))
    positive = probs > 0.0
    logits = np.full_like(probs, -np.inf)
    logits[positive] = np.log(probs[positive]) / temperature
    weights = np.exp(logits - logits.max())
    cdf = np.cumsum(weights)
    u = rng.random() * cdf[-1]
    return min(int(np.searchsorted(cdf, u, side="right")), probs.size - 1)


def _rank_by_confidence(positions: np.ndarray, confidences: np.ndarray) -> np.ndarray:
    """Positions ordered by confidence descending, position ascending on ties."""
    order = np.lexsort((positions, -confidences))
    return positions[order]


def select_commits(
    posteriors: PosteriorTable,
    block,
    n: int,
    strategy: str,
    temperature: float,
    rng: np.random.Generator,
) -> list[tuple[int, int]]:
    """Choose up to n masked positions in the block range and draw their tokens.

    Returns (position, token) pairs in ascending position order so the rng is
    consumed deterministically.
    """
    if n < 1:
        raise DecodeConfigError("commit count n must be >= 1")
    low, high = block
    masked = np.flatnonzero(posteriors.mask)
    masked = masked[(masked >= low) & (masked < high)]
    if masked.size == 0:
        return []
    if strategy == "random":
        chosen = rng.choice(masked, size=min(n, masked.size), replace=False)
    else:
        ranked = _rank_by_confidence(masked, posteriors.confidence[masked])
        chosen = ranked[: min(n, masked.size)]
    commits = []
    for pos in sorted(int(p) for p in chosen):
        token = _tempered_draw(posteriors.marginals[pos], temperature, rng)
        commits.append((pos, token))
    return commits


def _step_allocation(total_steps: int, n_groups: int) -> list[int]:
    """Split total_steps over groups; earlier groups absorb the remainder."""
    base, rem = divmod(total_steps, n_groups)
    return [base + (1 if i < rem else 0) for i in range(n_groups)]


def _mask_groups(mask_positions: np.ndarray, config: DecodeConfig) -> list[tuple[int, int]]:
    """Contiguous position ranges decoded together, left to right.

    Blocks of ``block_length`` that contain masked positions are merged into
    at most ``total_steps`` groups so every group can execute at least one
    step; with one step total this collapses to a single one-shot group.
    """
    blocks = sorted(set(int(p) // config.block_length for p in mask_positions))
    n_groups = min(config.total_steps, len(blocks))
    bounds = np.array_split(np.array(blocks), n_groups)
    groups = []
    for chunk in bounds:
        lo = int(chunk[0]) * config.block_length
        hi = (int(chunk[-1]) + 1) * config.block_length
        groups.append((lo, hi))
    return groups


def diffusion_decode(
    model: TabularMarkovModel, prompt: MaskedSequence, config: DecodeConfig
) -> DecodeTrace:
    """Run the iterative predict-then-commit loop until nothing is masked.

    Per executed step: recompute exact posteriors, pick commits per strategy
    with budget ceil(remaining/steps_remaining) within the current block
    group, write the tokens, and record the full argmax snapshot plus the
    overlap of this step's updated positions with the previous snapshot.
    Deterministic given (model, prompt, config).
    """
    if prompt.length > config.max_length:
        raise DecodeConfigError(
            f"prompt length {prompt.length} exceeds max_length {config.max_length}"
        )
    if prompt.mask_set.size == 0:
        raise DecodeConfigError("prompt has no masked positions to decode")

    rng = np.random.default_rng(config.seed)
    current = prompt
    committed_by_decoder: dict[int, float] = {}
    records: list[StepRecord] = []
    overlaps: list[float] = []
    prev_snapshot: np.ndarray | None = None
    step_index = 0
    early_stopped = False

    groups = _mask_groups(prompt.mask_set, config)
    allocation = _step_allocation(config.total_steps, len(groups))

    def masked_in(seq: MaskedSequence, low: int, high: int) -> np.ndarray:
        positions = np.arange(seq.length)
        return np.flatnonzero((seq.tokens == MASK) & (positions >= low) & (positions < high))

    for (low, high), group_steps in zip(groups, allocation):
        steps_remaining = group_steps
        while steps_remaining > 0:
            reopened = 0
            fill_done = masked_in(current, low, high).size == 0
            if fill_done and config.strategy == "revision" and config.revision_budget > 0:
                # Churn phase: once the group is filled, each extra step
                # re-opens the least confident commits and re-draws them.
                in_group = sorted(
                    (conf, pos)
                    for pos, conf in committed_by_decoder.items()
                    if low <= pos < high
                )
                reopen = [pos for _, pos in in_group[: config.revision_budget]]
                if reopen:
                    tokens = current.tokens.copy()
                    tokens[np.array(reopen, dtype=np.int64)] = MASK
                    current = MaskedSequence(tokens)
                    for pos in reopen:
                        del committed_by_decoder[pos]
                    reopened = len(reopen)

            masked_in_group = masked_in(current, low, high)
            if masked_in_group.size == 0:
                break
            budget = max(math.ceil(masked_in_group.size / steps_remaining), reopened, 1)

            table = masked_posteriors(model, current)
            commits = select_commits(
                table, (low, high), budget, config.strategy, config.temperature, rng
            )
            positions = [pos for pos, _ in commits]
            tokens = [tok for _, tok in commits]
            confidences = [float(table.confidence[pos]) for pos in positions]
            current = current.with_tokens(positions, tokens)
            for pos, conf in zip(positions, confidences):
                committed_by_decoder[pos] = conf

            snapshot = table.argmax.copy()
            snapshot[np.array(positions, dtype=np.int64)] = tokens
            observed = current.observed_set
            snapshot[observed] = current.tokens[observed]

            step_index += 1
            steps_remaining -= 1
            records.append(
                StepRecord(
                    step=step_index,
                    snapshot=snapshot,
                    committed_positions=tuple(positions),
                    committed_tokens=tuple(int(t) for t in tokens),
                    confidences=tuple(confidences),
                )
            )
            if prev_snapshot is not None:
                overlaps.append(overlap_ratio(prev_snapshot, snapshot, positions))
            prev_snapshot = snapshot

            if config.early_stop.enabled and des_should_stop(
                overlaps, config.early_stop.threshold, config.early_stop.patience
            ):
                early_stopped = True
                remaining = current.mask_set
                if remaining.size > 0:
                    current = current.with_tokens(remaining, snapshot[remaining])
                    records[-1] = replace(
                        records[-1],
                        committed_positions=records[-1].committed_positions
                        + tuple(int(p) for p in remaining),
                        committed_tokens=records[-1].committed_tokens
                        + tuple(int(snapshot[p]) for p in remaining),
                        confidences=records[-1].confidences
                        + tuple(float(table.confidence[p]) for p in remaining),
                    )
                break
        if early_stopped:
            break

    return DecodeTrace(
        records=records,
        overlap_ratios=overlaps,
        stop_step=step_index,
        steps_executed=step_index,
        final_sequence=current.tokens.copy(),
        early_stopped=early_stopped,
    )


def autoregressive_decode(
    model: TabularMarkovModel,
    prompt: MaskedSequence,
    temperature: float = 0.0,
    seed: int = 0,
) -> DecodeTrace:
    """Strictly left-to-right baseline: one position per step via the chain rule.

    Masked positions must form a contiguous suffix.
    """
    masked = prompt.mask_set
    if masked.size == 0:
        return DecodeTrace(
            records=[],
            overlap_ratios=[],
            stop_step=0,
            steps_executed=0,
            final_sequence=prompt.tokens.copy(),
        )
    expected = np.arange(prompt.length - masked.size, prompt.length)
    if not np.array_equal(masked, expected):
        raise DecodeConfigError("autoregressive decoding needs a contiguous masked suffix")

    rng = np.random.default_rng(seed)
    current = prompt
    records: list[StepRecord] = []
    overlaps: list[float] = []
    prev_snapshot: np.ndarray | None = None
    for step, pos in enumerate(expected, start=1):
        table = masked_posteriors(model, current)
        token = _tempered_draw(table.marginals[pos], temperature, rng)
        confidence = float(table.confidence[pos])
        current = current.with_tokens([pos], [token])
        snapshot = table.argmax.copy()
        snapshot[pos] = token
        observed = current.observed_set
        snapshot[observed] = current.tokens[observed]
        records.append(
            StepRecord(
                step=step,
                snapshot=snapshot,
                committed_positions=(int(pos),),
                committed_tokens=(int(token),),
                confidences=(confidence,),
            )
        )
        if prev_snapshot is not None:
            overlaps.append(overlap_ratio(prev_snapshot, snapshot, [int(pos)]))
        prev_snapshot = snapshot

    return DecodeTrace(
        records=records,
        overlap_ratios=overlaps,
        stop_step=len(records),
        steps_executed=len(records),
        final_sequence=current.tokens.copy(),
    )
