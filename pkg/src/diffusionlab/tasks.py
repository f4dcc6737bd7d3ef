"""Exactly solvable synthetic sequence tasks over a finite circular state space.

Two task families with opposite sensitivity structure are provided:

* serial tasks: an expanding affine map ``s -> (a*s + b) mod m`` mixed with
  uniform replacement noise.  Nearby initial states diverge at rate ``a`` per
  step, so distant states are unpredictable from the first one.
* parallel tasks: a bucket-quantized map where the next state depends only on
  ``floor(s / w)``.  All states in a bucket share one future, and the bucket
  map contracts toward bucket 0, so late states are predictable from very
  little information about the start.

Both families reduce to explicit row-stochastic transition matrices, so every
conditional of interest can be computed exactly by matrix powers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-12


class TaskError(ValueError):
    """Raised when a task specification or model violates its invariants."""


def circular_distance(x: int, y: int, m: int) -> int:
    """Distance on the circle Z_m: min(|x-y|, m-|x-y|)."""
    d = abs(int(x) - int(y)) % m
    return min(d, m - d)


def default_answer_positions(length: int) -> tuple[int, ...]:
    """Final ceil(length/8) positions, mirroring 'answer at the end' traces."""
    n = -(-length // 8)
    return tuple(range(length - n, length))


@dataclass(frozen=True)
class TaskSpec:
    """Parameters of one synthetic task distribution.

    ``a``/``b`` drive the serial map, ``w`` the parallel bucket width; both
    sets of fields live here so a single spec can describe a matched
    serial/parallel pair over the same state space.
    """

    kind: str
    m: int
    length: int
    a: int = 1
    b: int = 0
    w: int = 1
    eta: float = 0.0
    answer_positions: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in ("serial", "parallel"):
            raise TaskError(f"unknown task kind {self.kind!r}")
        if self.m < 2:
            raise TaskError("state count m must be >= 2")
        if self.length < 1:
            raise TaskError("length must be >= 1")
        if not 0.0 <= self.eta < 1.0:
            raise TaskError("noise eta must lie in [0, 1)")
        if not 1 <= self.w <= self.m or self.m % self.w != 0:
            raise TaskError("bucket width w must divide m and lie in [1, m]")
        if self.kind == "serial":
            if self.a < 1:
                raise TaskError("multiplier a must be a positive integer")
            if math.gcd(self.a, self.m) != 1:
                raise TaskError(
                    f"multiplier a={self.a} must be coprime with m={self.m} "
                    "so the base map is a bijection"
                )
        if self.kind == "parallel" and self.w < 2:
            raise TaskError("parallel tasks need bucket width w >= 2")
        if not self.answer_positions:
            object.__setattr__(
                self, "answer_positions", default_answer_positions(self.length)
            )
        else:
            object.__setattr__(
                self, "answer_positions", tuple(sorted(set(int(p) for p in self.answer_positions)))
            )
        if any(p < 0 or p >= self.length for p in self.answer_positions):
            raise TaskError("answer_positions must lie in [0, length)")

    def to_text(self) -> str:
        """Serialize as flat key=value lines (keys fixed by the file format)."""
        lines = [
            f"kind = {self.kind}",
            f"m = {self.m}",
            f"a = {self.a}",
            f"b = {self.b}",
            f"w = {self.w}",
            f"eta = {self.eta!r}",
            f"length = {self.length}",
            "answer_positions = " + ",".join(str(p) for p in self.answer_positions),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TaskSpec":
        fields = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise TaskError(f"malformed task spec line: {raw!r}")
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        allowed = {"kind", "m", "a", "b", "w", "eta", "length", "answer_positions"}
        unknown = set(fields) - allowed
        if unknown:
            raise TaskError(f"unknown task spec keys: {sorted(unknown)}")
        missing = {"kind", "m", "length"} - set(fields)
        if missing:
            raise TaskError(f"missing task spec keys: {sorted(missing)}")
        answers: tuple[int, ...] = tuple()
        if fields.get("answer_positions"):
            answers = tuple(int(p) for p in fields["answer_positions"].split(","))
        return cls(
            kind=fields["kind"],
            m=int(fields["m"]),
            length=int(fields["length"]),
            a=int(fields.get("a", 1)),
            b=int(fields.get("b", 0)),
            w=int(fields.get("w", 1)),
            eta=float(fields.get("eta", 0.0)),
            answer_positions=answers,
        )


@dataclass(frozen=True)
class TabularMarkovModel:
    """Finite-state Markov chain given by an initial law and transition matrix.

    States double as observation tokens (identity emissions).  Arrays are
    frozen after validation so models can be shared across workers.
    """

    m: int
    initial: np.ndarray
    transition: np.ndarray
    length: int

    def __post_init__(self):
        initial = np.asarray(self.initial, dtype=float)
        transition = np.asarray(self.transition, dtype=float)
        if initial.shape != (self.m,):
            raise TaskError(f"initial law must have shape ({self.m},)")
        if transition.shape != (self.m, self.m):
            raise TaskError(f"transition matrix must have shape ({self.m}, {self.m})")
        if np.any(initial < 0) or np.any(transition < 0):
            raise TaskError("probabilities must be non-negative")
        if abs(initial.sum() - 1.0) > ROW_SUM_TOL:
            raise TaskError("initial law must sum to 1 within 1e-12")
        row_err = np.abs(transition.sum(axis=1) - 1.0)
        if np.any(row_err > ROW_SUM_TOL):
            raise TaskError("every transition row must sum to 1 within 1e-12")
        if self.length < 1:
            raise TaskError("length must be >= 1")
        initial = initial.copy()
        transition = transition.copy()
        initial.setflags(write=False)
        transition.setflags(write=False)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transition", transition)


@dataclass(frozen=True)
class TrajectorySample:
    """One sampled state sequence plus its exact log-probability."""

    states: np.ndarray
    seed: int
    log_prob: float


def serial_step(spec: TaskSpec, s: int) -> int:
    """The noiseless serial base map s -> (a*s + b) mod m."""
    return (spec.a * int(s) + spec.b) % spec.m


def bucket_of(s: int, w: int) -> int:
    return int(s) // w


def parallel_bucket_target(spec: TaskSpec, bucket: int) -> int:
    """Injective bucket map used by parallel tasks.

    Bucket u > 0 is sent to the first state of bucket u-1; bucket 0 is sent
    to the second state of bucket 0.  The induced bucket-level map therefore
    contracts toward bucket 0, which is what makes late positions directly
    decidable: their marginal confidence grows with distance from the start.
    The serial offset b plays no role here.
    """
    u = int(bucket)
    if u == 0:
        return 1
    return (u - 1) * spec.w


def _noisy_deterministic_matrix(m: int, targets: np.ndarray, eta: float) -> np.ndarray:
    t = np.full((m, m), eta / m)
    t[np.arange(m), targets] += 1.0 - eta
    return t


def build_serial_task(spec: TaskSpec) -> TabularMarkovModel:
    """Expanding affine chain: T[i][j] = (1-eta)*1[j=(a*i+b) mod m] + eta/m.

    With eta=0 the chain is deterministic given the first state and two
    initial states at circular distance d are separated by a*d (mod m) after
    one step, realizing cascading sensitivity.
    """
    if spec.kind != "serial":
        raise TaskError("build_serial_task needs a spec with kind='serial'")
    targets = np.array([serial_step(spec, s) for s in range(spec.m)])
    transition = _noisy_deterministic_matrix(spec.m, targets, spec.eta)
    initial = np.full(spec.m, 1.0 / spec.m)
    return TabularMarkovModel(spec.m, initial, transition, spec.length)


def build_parallel_task(spec: TaskSpec) -> TabularMarkovModel:
    """Bucket-quantized chain: the next state depends only on floor(s/w).

    Any two initial states in the same bucket induce identical conditionals
    for every later position (partial invariance), and the contracting bucket
    map concentrates late-position marginals regardless of the start.
    """
    if spec.kind != "parallel":
        raise TaskError("build_parallel_task needs a spec with kind='parallel'")
    targets = np.array(
        [parallel_bucket_target(spec, bucket_of(s, spec.w)) for s in range(spec.m)]
    )
    transition = _noisy_deterministic_matrix(spec.m, targets, spec.eta)
    initial = np.full(spec.m, 1.0 / spec.m)
    return TabularMarkovModel(spec.m, initial, transition, spec.length)


def build_task(spec: TaskSpec) -> TabularMarkovModel:
    if spec.kind == "serial":
        return build_serial_task(spec)
    return build_parallel_task(spec)


def skip_conditional(model: TabularMarkovModel, s1: int, k: int) -> np.ndarray:
    """Distribution of state k given state 1: row s1 of T^(k-1).

    Step indices are 1-based, matching trajectory positions 0..L-1 holding
    states S_1..S_L.
    """
    if not 2 <= k <= model.length:
        raise TaskError(f"step index k={k} out of range [2, {model.length}]")
    if not 0 <= s1 < model.m:
        raise TaskError(f"state s1={s1} out of range [0, {model.m})")
    power = np.linalg.matrix_power(model.transition, k - 1)
    return power[s1].copy()


def sample_trajectory(model: TabularMarkovModel, seed: int) -> TrajectorySample:
    """Draw one trajectory deterministically from a 64-bit seed."""
    rng = np.random.default_rng(seed)
    init_cdf = np.cumsum(model.initial)
    row_cdf = np.cumsum(model.transition, axis=1)
    states = np.empty(model.length, dtype=np.int64)
    states[0] = min(int(np.searchsorted(init_cdf, rng.random(), side="right")), model.m - 1)
    for t in range(1, model.length):
        u = rng.random()
        states[t] = min(int(np.searchsorted(row_cdf[states[t - 1]], u, side="right")), model.m - 1)
    log_prob = float(np.log(model.initial[states[0]]))
    for t in range(1, model.length):
        log_prob += float(np.log(model.transition[states[t - 1], states[t]]))
    return TrajectorySample(states=states, seed=int(seed), log_prob=log_prob)


def write_model(model: TabularMarkovModel, path) -> None:
    """Portable matrix file: header, initial law, then transition rows.

    All values are printed row-major with 17 significant digits, which round
    trips float64 exactly.
    """
    lines = [f"{model.m} {model.length}"]
    lines.append(" ".join(f"{v:.17g}" for v in model.initial))
    for row in model.transition:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_model(path) -> TabularMarkovModel:
    with open(path, "r", encoding="ascii") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise TaskError(f"empty model file {path}")
    head = lines[0].split()
    if len(head) != 2:
        raise TaskError(f"malformed model header {lines[0]!r}")
    m, length = int(head[0]), int(head[1])
    if len(lines) != m + 2:
        raise TaskError(f"model file has {len(lines)} lines, expected {m + 2}")
    initial = np.array([float(v) for v in lines[1].split()])
    transition = np.array([[float(v) for v in line.split()] for line in lines[2:]])
    return TabularMarkovModel(m=m, initial=initial, transition=transition, length=length)
