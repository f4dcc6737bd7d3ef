"""Inference-time scaling experiments: parallel, diffusion, and sequential.

Every run derives its seed as a stable cryptographic hash of (master seed,
role, grid point, run index), so sweeps are reproducible bit-for-bit under
any execution order.  Accuracy is always an exact ratio of integer counts;
correctness means exact match on the designated answer positions against the
trajectory the prompt was generated from.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .decoding import DecodeConfig, DecodeTrace, diffusion_decode
from .posterior import MASK, MaskedSequence
from .tasks import (
    TabularMarkovModel,
    TaskError,
    default_answer_positions,
    sample_trajectory,
)


class SweepError(ValueError):
    """Raised for invalid sweep configurations."""


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labeled parts (order matters)."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class Prompt:
    """A masked query plus the ground-truth trajectory it was cut from."""

    sequence: MaskedSequence
    truth: np.ndarray
    id: int


def parse_observed(observe: str, length: int) -> np.ndarray:
    """Observed-position spec: 'prefix:N', 'suffix:N', or 'none'."""
    observe = observe.strip()
    if observe == "none":
        return np.array([], dtype=np.int64)
    kind, _, count = observe.partition(":")
    if kind not in ("prefix", "suffix") or not count:
        raise SweepError(f"bad observe spec {observe!r}; use prefix:N, suffix:N, or none")
    n = int(count)
    if not 0 <= n <= length:
        raise SweepError(f"observe count {n} outside [0, {length}]")
    if kind == "prefix":
        return np.arange(n, dtype=np.int64)
    return np.arange(length - n, length, dtype=np.int64)


def build_prompts(
    model: TabularMarkovModel,
    count: int,
    observe: str,
    master_seed: int,
    role: str = "prompt",
) -> list[Prompt]:
    """Sample `count` trajectories and mask all but the observed positions."""
    observed = parse_observed(observe, model.length)
    prompts = []
    for i in range(count):
        sample = sample_trajectory(model, derive_seed(master_seed, role, i))
        tokens = np.full(model.length, MASK, dtype=np.int64)
        tokens[observed] = sample.states[observed]
        prompts.append(Prompt(sequence=MaskedSequence(tokens), truth=sample.states, id=i))
    return prompts


@dataclass(frozen=True)
class RunRecord:
    """Bookkeeping for a single decode inside a sweep."""

    task_id: str
    grid_value: float
    correct: bool
    steps_executed: int
    output_length: int
    commit_order: np.ndarray
    seed: int
    prompt_id: int
    des_triggered: bool


@dataclass
class ReportFlags:
    over_diffusion_detected: bool = False
    plateau_point: float | None = None


@dataclass
class ScalingReport:
    """Accuracy and auxiliary curves for one sweep axis."""

    axis: str
    grid: list
    accuracy: list[float]
    correct_counts: list[int]
    run_counts: list[int]
    mean_steps: list[float]
    mean_output_length: list[float]
    master_seed: int
    flags: ReportFlags = field(default_factory=ReportFlags)
    pass_at_k_table: dict | None = None
    best_temperature: float | None = None
    records: list[RunRecord] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "axis": self.axis,
            "grid": list(self.grid),
            "accuracy": self.accuracy,
            "correct_counts": self.correct_counts,
            "run_counts": self.run_counts,
            "mean_steps": self.mean_steps,
            "mean_output_length": self.mean_output_length,
            "master_seed": self.master_seed,
            "flags": {
                "over_diffusion_detected": self.flags.over_diffusion_detected,
                "plateau_point": self.flags.plateau_point,
            },
            "pass_at_k_table": self.pass_at_k_table,
            "best_temperature": self.best_temperature,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ScalingReport":
        data = json.loads(text)
        flags = ReportFlags(
            over_diffusion_detected=data["flags"]["over_diffusion_detected"],
            plateau_point=data["flags"]["plateau_point"],
        )
        table = data.get("pass_at_k_table")
        if table is not None:
            table = {float(k): v for k, v in table.items()}
        return cls(
            axis=data["axis"],
            grid=data["grid"],
            accuracy=data["accuracy"],
            correct_counts=data["correct_counts"],
            run_counts=data["run_counts"],
            mean_steps=data["mean_steps"],
            mean_output_length=data["mean_output_length"],
            master_seed=data["master_seed"],
            flags=flags,
            pass_at_k_table=table,
            best_temperature=data.get("best_temperature"),
        )

    def to_csv_rows(self):
        if self.axis == "parallel" and self.pass_at_k_table is not None:
            rows = [("temperature", "k", "pass_at_k")]
            for temp in sorted(self.pass_at_k_table):
                for k, value in zip(self.grid, self.pass_at_k_table[temp]):
                    rows.append((repr(float(temp)), k, repr(value)))
            return rows
        rows = [
            ("grid_value", "accuracy", "correct", "runs", "mean_steps", "mean_output_length")
        ]
        for i, g in enumerate(self.grid):
            rows.append(
                (
                    g,
                    repr(self.accuracy[i]),
                    self.correct_counts[i],
                    self.run_counts[i],
                    repr(self.mean_steps[i]),
                    repr(self.mean_output_length[i]),
                )
            )
        return rows


def is_correct(final_sequence: np.ndarray, truth: np.ndarray, answer_positions) -> bool:
    """Exact match on every answer position; no partial credit."""
    idx = np.asarray(list(answer_positions), dtype=np.int64)
    return bool(np.array_equal(final_sequence[idx], truth[idx]))


def run_decode(
    model: TabularMarkovModel,
    prompt: Prompt,
    config: DecodeConfig,
    answer_positions,
    grid_value: float,
    task_id: str = "task",
) -> tuple[RunRecord, DecodeTrace]:
    trace = diffusion_decode(model, prompt.sequence, config)
    record = RunRecord(
        task_id=task_id,
        grid_value=float(grid_value),
        correct=is_correct(trace.final_sequence, prompt.truth, answer_positions),
        steps_executed=trace.steps_executed,
        output_length=int(trace.final_sequence.size),
        commit_order=trace.commit_steps(prompt.sequence.length),
        seed=config.seed,
        prompt_id=prompt.id,
        des_triggered=trace.early_stopped,
    )
    return record, trace


def _curve_stats(records_per_point: list[list[RunRecord]]):
    accuracy, correct_counts, run_counts, mean_steps, mean_len = [], [], [], [], []
    for records in records_per_point:
        n = len(records)
        c = sum(1 for r in records if r.correct)
        accuracy.append(c / n)
        correct_counts.append(c)
        run_counts.append(n)
        mean_steps.append(float(np.mean([r.steps_executed for r in records])))
        mean_len.append(float(np.mean([r.output_length for r in records])))
    return accuracy, correct_counts, run_counts, mean_steps, mean_len


def detect_plateau(grid, accuracy, delta: float):
    """Smallest grid value after which accuracy moves by < delta."""
    for i in range(len(grid)):
        tail = accuracy[i:]
        if all(abs(a - accuracy[i]) < delta for a in tail):
            return grid[i]
    return None


def sweep_diffusion(
    model: TabularMarkovModel,
    prompts: list[Prompt],
    steps_grid,
    template: DecodeConfig,
    answer_positions,
    master_seed: int,
    over_diffusion_margin: float = 0.02,
    task_id: str = "task",
) -> ScalingReport:
    """Decode the same prompts at each diffusion step count.

    Seeds are paired across grid points: run i uses the same prompt and the
    same decode seed everywhere, so per-point differences are attributable to
    the step budget alone.
    """
    steps_grid = [int(s) for s in steps_grid]
    if not steps_grid or steps_grid != sorted(steps_grid):
        raise SweepError("steps grid must be non-empty and ascending")
    per_point = []
    for steps in steps_grid:
        records = []
        for prompt in prompts:
            config = replace(
                template, total_steps=steps, seed=derive_seed(master_seed, "decode", prompt.id)
            )
            record, _ = run_decode(model, prompt, config, answer_positions, steps, task_id)
            records.append(record)
        per_point.append(records)
    accuracy, correct, runs, mean_steps, mean_len = _curve_stats(per_point)
    flags = ReportFlags()
    peak = int(np.argmax(accuracy))
    if peak < len(accuracy) - 1 and accuracy[-1] < accuracy[peak] - over_diffusion_margin:
        flags.over_diffusion_detected = True
    report = ScalingReport(
        axis="diffusion",
        grid=steps_grid,
        accuracy=accuracy,
        correct_counts=correct,
        run_counts=runs,
        mean_steps=mean_steps,
        mean_output_length=mean_len,
        master_seed=master_seed,
        flags=flags,
    )
    report.records = [r for records in per_point for r in records]
    return report


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased probability that at least one of k draws from n is correct."""
    if not 0 <= c <= n:
        raise SweepError(f"correct count c={c} outside [0, n={n}]")
    if not 1 <= k <= n:
        raise SweepError(f"k={k} outside [1, n={n}]")
    if c == 0:
        return 0.0
    if n - c < k:
        return 1.0
    return 1.0 - math.comb(n - c, k) / math.comb(n, k)


def sweep_parallel(
    model: TabularMarkovModel,
    prompts: list[Prompt],
    k_max: int,
    temperature_grid,
    template: DecodeConfig,
    answer_positions,
    master_seed: int,
    samples_per_prompt: int,
    task_id: str = "task",
) -> ScalingReport:
    """n independent decodes per prompt per temperature; pass@k for k=1..k_max."""
    temperature_grid = [float(t) for t in temperature_grid]
    if not temperature_grid:
        raise SweepError("temperature grid must be non-empty")
    if samples_per_prompt < k_max:
        raise SweepError(f"k_max={k_max} exceeds samples per prompt n={samples_per_prompt}")
    ks = list(range(1, k_max + 1))
    table: dict[float, list[float]] = {}
    all_records: list[RunRecord] = []
    for temp in temperature_grid:
        correct_counts = []
        for prompt in prompts:
            c = 0
            for sample_idx in range(samples_per_prompt):
                config = replace(
                    template,
                    temperature=temp,
                    seed=derive_seed(master_seed, "parallel", temp, prompt.id, sample_idx),
                )
                record, _ = run_decode(model, prompt, config, answer_positions, temp, task_id)
                all_records.append(record)
                c += int(record.correct)
            correct_counts.append(c)
        table[temp] = [
            float(np.mean([pass_at_k(samples_per_prompt, c, k) for c in correct_counts]))
            for k in ks
        ]
    auc = {temp: float(np.mean(curve)) for temp, curve in table.items()}
    best_temp = max(sorted(auc), key=lambda t: auc[t])
    best_curve = table[best_temp]
    n_total = len(prompts) * samples_per_prompt
    best_correct = sum(
        int(r.correct) for r in all_records if r.grid_value == best_temp
    )
    report = ScalingReport(
        axis="parallel",
        grid=ks,
        accuracy=best_curve,
        correct_counts=[best_correct] * len(ks),
        run_counts=[n_total] * len(ks),
        mean_steps=[float(np.mean([r.steps_executed for r in all_records]))] * len(ks),
        mean_output_length=[float(np.mean([r.output_length for r in all_records]))] * len(ks),
        master_seed=master_seed,
        pass_at_k_table=table,
        best_temperature=best_temp,
    )
    report.records = all_records
    return report


def sweep_sequential(
    family,
    length_grid,
    template: DecodeConfig,
    target_step: int,
    master_seed: int,
    runs_per_point: int,
    plateau_delta: float = 0.02,
    observe: str = "prefix:1",
    task_id: str = "task",
) -> ScalingReport:
    """Vary the generation length with a matched step budget.

    `family(length)` returns the task model for that length.  A run is
    correct when the token at the target step (or the final position, for
    budgets too short to reach it) matches the reference trajectory's value
    at the target step; reference trajectories are sampled at the longest
    length so all budgets are scored against the same targets.
    """
    length_grid = [int(v) for v in length_grid]
    if not length_grid or length_grid != sorted(length_grid):
        raise SweepError("length grid must be non-empty and ascending")
    max_model = family(max(length_grid))
    if not 0 <= target_step < max_model.length:
        raise SweepError(f"target step {target_step} outside [0, {max_model.length})")
    per_point = []
    for length in length_grid:
        model = family(length)
        records = []
        observed = parse_observed(observe, length)
        for i in range(runs_per_point):
            traj_seed = derive_seed(master_seed, "trajectory", i)
            reference = sample_trajectory(max_model, traj_seed)
            tokens = np.full(length, MASK, dtype=np.int64)
            tokens[observed] = reference.states[observed]
            prompt = Prompt(
                sequence=MaskedSequence(tokens),
                truth=reference.states[:length],
                id=i,
            )
            config = replace(
                template,
                total_steps=length,
                seed=derive_seed(master_seed, "decode", i),
            )
            trace = diffusion_decode(model, prompt.sequence, config)
            scored = min(target_step, length - 1)
            correct = bool(trace.final_sequence[scored] == reference.states[target_step])
            records.append(
                RunRecord(
                    task_id=task_id,
                    grid_value=float(length),
                    correct=correct,
                    steps_executed=trace.steps_executed,
                    output_length=int(trace.final_sequence.size),
                    commit_order=trace.commit_steps(length),
                    seed=config.seed,
                    prompt_id=i,
                    des_triggered=trace.early_stopped,
                )
            )
        per_point.append(records)
    accuracy, correct, runs, mean_steps, mean_len = _curve_stats(per_point)
    flags = ReportFlags(plateau_point=detect_plateau(length_grid, accuracy, plateau_delta))
    report = ScalingReport(
        axis="sequential",
        grid=length_grid,
        accuracy=accuracy,
        correct_counts=correct,
        run_counts=runs,
        mean_steps=mean_steps,
        mean_output_length=mean_len,
        master_seed=master_seed,
        flags=flags,
    )
    report.records = [r for records in per_point for r in records]
    return report


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1, ties sharing the average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=float)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def decoding_order_stats(trace: DecodeTrace, answer_positions) -> dict:
    """Rank correlation of commit step with position, and answer timing.

    Correlation 1 means strictly autoregressive ordering, -1 strictly
    reversed; all-tied orders (such as one-shot decodes) score 0.
    """
    length = int(trace.final_sequence.size)
    commit_steps = trace.commit_steps(length)
    committed = np.flatnonzero(commit_steps > 0)
    if committed.size == 0:
        raise SweepError("trace committed nothing; order statistics undefined")
    pos_ranks = _average_ranks(committed.astype(float))
    step_ranks = _average_ranks(commit_steps[committed].astype(float))
    pos_dev = pos_ranks - pos_ranks.mean()
    step_dev = step_ranks - step_ranks.mean()
    denom = math.sqrt(float(np.sum(pos_dev**2)) * float(np.sum(step_dev**2)))
    correlation = 0.0 if denom == 0.0 else float(np.sum(pos_dev * step_dev)) / denom

    answer = np.asarray(sorted(answer_positions), dtype=np.int64)
    answer_committed = [p for p in answer if commit_steps[p] > 0]
    if answer_committed:
        earliest = min(int(commit_steps[p]) for p in answer_committed)
        fraction = earliest / trace.steps_executed
    else:
        fraction = float("nan")
    return {"order_correlation": correlation, "answer_commit_fraction": fraction}


@dataclass
class FrontierReport:
    """Accuracy over a (steps, length) grid with the minimal-steps frontier."""

    lengths: list[int]
    steps: list[int]
    accuracy: np.ndarray
    minimal_steps: list[int]
    tolerance: float


def efficiency_frontier(
    family,
    steps_grid,
    length_grid,
    template: DecodeConfig,
    master_seed: int,
    runs_per_point: int,
    tolerance: float = 0.02,
    observe: str = "prefix:1",
    decode_family=None,
) -> FrontierReport:
    """Accuracy across steps x length; per length, the cheapest near-best steps.

    `decode_family`, when given, supplies the (e.g. perturbed) model the
    decoder scores with, while prompts and truth still come from `family`.
    """
    steps_grid = [int(s) for s in steps_grid]
    length_grid = [int(v) for v in length_grid]
    if not steps_grid or not length_grid:
        raise SweepError("frontier grids must be non-empty")
    if steps_grid != sorted(steps_grid) or length_grid != sorted(length_grid):
        raise SweepError("frontier grids must be ascending")
    if decode_family is None:
        decode_family = family
    accuracy = np.zeros((len(length_grid), len(steps_grid)))
    for li, length in enumerate(length_grid):
        model = family(length)
        decode_model = decode_family(length)
        answer = default_answer_positions(length)
        prompts = build_prompts(model, runs_per_point, observe, derive_seed(master_seed, length))
        for si, steps in enumerate(steps_grid):
            correct = 0
            for prompt in prompts:
                config = replace(
                    template,
                    total_steps=steps,
                    seed=derive_seed(master_seed, "frontier", length, prompt.id),
                )
                record, _ = run_decode(decode_model, prompt, config, answer, steps)
                correct += int(record.correct)
            accuracy[li, si] = correct / runs_per_point
    minimal = []
    for li in range(len(length_grid)):
        best = accuracy[li].max()
        eligible = [steps_grid[si] for si in range(len(steps_grid)) if accuracy[li, si] >= best - tolerance]
        minimal.append(min(eligible))
    return FrontierReport(
        lengths=length_grid,
        steps=steps_grid,
        accuracy=accuracy,
        minimal_steps=minimal,
        tolerance=tolerance,
    )


@dataclass(frozen=True)
class ReasoningBoundaries:
    """Largest difficulty levels with at least 90% / 10% accuracy."""

    cfrb: int | None
    cirb: int | None


def reasoning_boundaries(accuracy_by_difficulty: dict) -> ReasoningBoundaries:
    if not accuracy_by_difficulty:
        raise SweepError("accuracy map must be non-empty")
    cfrb = None
    cirb = None
    for difficulty in sorted(accuracy_by_difficulty):
        acc = accuracy_by_difficulty[difficulty]
        if acc >= 0.9:
            cfrb = difficulty
        if acc >= 0.1:
            cirb = difficulty
    return ReasoningBoundaries(cfrb=cfrb, cirb=cirb)


def perturb_model(model: TabularMarkovModel, strength: float, seed: int) -> TabularMarkovModel:
    """Blend the transition matrix with seeded random rows.

    Models the approximation error of a trained predictor: decoding with the
    perturbed model while scoring against data from the true one.
    """
    if not 0.0 <= strength < 1.0:
        raise TaskError("perturbation strength must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    noise = rng.dirichlet(np.ones(model.m), size=model.m)
    transition = (1.0 - strength) * model.transition + strength * noise
    return TabularMarkovModel(
        m=model.m, initial=model.initial, transition=transition, length=model.length
    )
