"""Trace datasets: CSV ingestion and synthetic generators.

CSV format: header ``trace_id,time,f0,...,f{d-1},label``, one row per
(trace, step).  The time column must run 0,1,2,... within each trace and
the label must be constant per trace.  Labels that are all exactly +/-1
make a binary dataset; anything else is treated as continuous.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .formula import Formula
from .semantics import robustness


@dataclass(eq=False)
class Trace:
    id: str
    values: np.ndarray  # (T, d)
    label: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values.reshape(-1, 1)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError(f"trace {self.id}: values must be a T x d array")


@dataclass(eq=False)
class Dataset:
    traces: list[Trace]
    feature_names: list[str]
    label_kind: str  # "binary" | "continuous"
    provenance: str = ""

    def __post_init__(self):
        if self.label_kind not in ("binary", "continuous"):
            raise ValueError(f"bad label kind {self.label_kind!r}")
        seen = set()
        d = len(self.feature_names)
        for tr in self.traces:
            if tr.id in seen:
                raise ValueError(f"duplicate trace id {tr.id!r}")
            seen.add(tr.id)
            if tr.values.shape[1] != d:
                raise ValueError(
                    f"trace {tr.id}: dimension {tr.values.shape[1]} != {d} features"
                )

    @property
    def dim(self) -> int:
        return len(self.feature_names)

    def __len__(self) -> int:
        return len(self.traces)

    def labels(self) -> np.ndarray:
        return np.array([tr.label for tr in self.traces])

    def subset(self, indices, provenance: str | None = None) -> "Dataset":
        return Dataset(
            [self.traces[i] for i in indices],
            list(self.feature_names),
            self.label_kind,
            self.provenance if provenance is None else provenance,
        )


def _infer_label_kind(labels) -> str:
    return "binary" if all(l in (1.0, -1.0) for l in labels) else "continuous"


def load_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if len(header) < 4 or header[0] != "trace_id" or header[1] != "time" or header[-1] != "label":
            raise ValueError(f"{path}: header must be trace_id,time,<features...>,label")
        features = header[2:-1]
        width = len(header)
        rows: dict[str, list[tuple[int, list[float], float]]] = {}
        order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ValueError(f"{path}:{lineno}: ragged row ({len(row)} fields, expected {width})")
            tid = row[0]
            try:
                t = float(row[1])
                vals = [float(v) for v in row[2:-1]]
                label = float(row[-1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if t != int(t):
                raise ValueError(f"{path}:{lineno}: non-integer time {row[1]} in trace {tid!r}")
            if tid not in rows:
                rows[tid] = []
                order.append(tid)
            rows[tid].append((int(t), vals, label))
    traces = []
    for tid in order:
        entries = sorted(rows[tid], key=lambda e: e[0])
        times = [e[0] for e in entries]
        if times != list(range(len(times))):
            raise ValueError(f"trace {tid!r}: time column must be 0,1,2,... (got {times[:5]}...)")
        labels = {e[2] for e in entries}
        if len(labels) != 1:
            raise ValueError(f"trace {tid!r}: label differs across rows")
        traces.append(Trace(tid, np.array([e[1] for e in entries]), entries[0][2]))
    if not traces:
        raise ValueError(f"{path}: no traces")
    kind = _infer_label_kind([tr.label for tr in traces])
    return Dataset(traces, features, kind, provenance=f"file:{path}")


def save_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trace_id", "time"] + list(ds.feature_names) + ["label"])
        for tr in ds.traces:
            label = repr(int(tr.label)) if ds.label_kind == "binary" else repr(float(tr.label))
            for t in range(tr.values.shape[0]):
                writer.writerow([tr.id, t] + [repr(float(v)) for v in tr.values[t]] + [label])


def reverse(ds: Dataset) -> Dataset:
    """Each trace's rows in reverse chronological order; labels unchanged.

    Feeding reversed signals turns learned past-time formulas into
    future-time ones read from the original start.
    """
    traces = [Trace(tr.id, tr.values[::-1].copy(), tr.label) for tr in ds.traces]
    return Dataset(traces, list(ds.feature_names), ds.label_kind, ds.provenance + "+reversed")


def label_continuous(ds: Dataset, labeling: Formula) -> Dataset:
    """Relabel each trace with the labeling formula's robustness.

    The label is the future-time robustness at the start of the trace,
    i.e. the past-time robustness at the last step of the reversed trace.
    """
    traces = []
    for tr in ds.traces:
        rho = robustness(labeling, tr.values[::-1])
        traces.append(Trace(tr.id, tr.values.copy(), float(rho[-1])))
    return Dataset(
        traces, list(ds.feature_names), "continuous", ds.provenance + "+continuous-labels"
    )


# --------------------------------------------------------------------------
# Synthetic generators (deterministic per seed)
# --------------------------------------------------------------------------

def gen_step_threshold(
    n: int,
    T: int,
    c_pos: float = 1.0,
    c_neg: float = -0.8,
    noise: float = 0.1,
    seed: int = 0,
) -> Dataset:
    """Two linearly separable classes of near-constant traces.

    Positives hover around ``c_pos`` and negatives around ``c_neg`` with
    uniform noise strictly inside ``+/-noise``, so any constant threshold
    between the bands classifies perfectly.
    """
    if n % 2 != 0:
        raise ValueError("n must be even")
    if T < 2:
        raise ValueError("T must be >= 2")
    rng = np.random.default_rng(seed)
    traces = []
    for i in range(n):
        positive = i < n // 2
        center = c_pos if positive else c_neg
        vals = center + rng.uniform(-noise, noise, size=(T, 1))
        traces.append(Trace(f"t{i:04d}", vals, 1.0 if positive else -1.0))
    return Dataset(traces, ["f0"], "binary", provenance=f"gen_step_threshold(seed={seed})")


def gen_cct(n: int, T: int = 100, seed: int = 0) -> Dataset:
    """Train-velocity traces: cruise oscillation vs. runaway drift.

    Positives follow a mean-reverting oscillation clipped to
    [22.5, 27.5] m/s around the 25 m/s cruise speed.  Negatives follow
    the same process, then drift upward linearly after a random onset
    early enough that every negative exceeds 34 m/s before the end.
    """
    if n % 2 != 0:
        raise ValueError("n must be even")
    if T < 50:
        raise ValueError("T must be >= 50 so anomalies can exceed 34 m/s before the end")
    rng = np.random.default_rng(seed)
    traces = []
    for i in range(n):
        positive = i < n // 2
        v = np.empty(T)
        v[0] = 25.0 + rng.uniform(-1.0, 1.0)
        for t in range(1, T):
            v[t] = v[t - 1] + 0.4 * (25.0 - v[t - 1]) + rng.normal(0.0, 0.7)
        v = np.clip(v, 22.5, 27.5)
        if not positive:
            onset = int(rng.integers(5, T - 41))
            slope = rng.uniform(0.3, 0.8)
            steps = np.arange(T)
            v = v + slope * np.maximum(0, steps - onset)
        traces.append(Trace(f"t{i:04d}", v.reshape(-1, 1), 1.0 if positive else -1.0))
    return Dataset(traces, ["f0"], "binary", provenance=f"gen_cct(seed={seed})")


def gen_interval(n: int, seed: int = 0) -> Dataset:
    """Length-7 traces separable only inside a sub-interval of steps.

    Negatives stay in [0, 0.5) on steps 1..5.  Positives are in [0.5, 1]
    on steps 1..2 and in [0, 0.5) on steps 3..5.  Steps 0 and 6 are
    uniform [0, 1) noise for both classes, so only masks concentrating on
    steps 1..2 can separate the classes.
    """
    if n % 2 != 0:
        raise ValueError("n must be even")
    rng = np.random.default_rng(seed)
    traces = []
    for i in range(n):
        positive = i < n // 2
        vals = np.empty(7)
        vals[0] = rng.uniform(0.0, 1.0)
        if positive:
            vals[1:3] = rng.uniform(0.5, 1.0, size=2)
            vals[3:6] = rng.uniform(0.0, 0.5, size=3)
        else:
            vals[1:6] = rng.uniform(0.0, 0.5, size=5)
        vals[6] = rng.uniform(0.0, 1.0)
        traces.append(Trace(f"t{i:04d}", vals.reshape(-1, 1), 1.0 if positive else -1.0))
    return Dataset(traces, ["f0"], "binary", provenance=f"gen_interval(seed={seed})")
