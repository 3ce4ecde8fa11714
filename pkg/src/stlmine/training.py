"""Training loop: quantized forward, straight-through backward, Adam.

Per epoch the whole training split is pushed through the network (choice
blocks quantized in the forward pass), the mean absolute error of the
final-step head output against the trace labels is differentiated, and
the real-valued parameters take one Adam step.  Binary labels use a tanh
head; continuous labels use the identity head.
"""

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .checkpoint import model_from_dict, model_to_dict
from .data import Dataset, reverse
from .formula import Formula, format_formula, formula_length
from .network import Model, extract_formula, forward_batch, normalize_batch
from .semantics import last_step_robustness


@dataclass
class TrainConfig:
    lr: float = 0.003
    max_epochs: int = 5000
    early_stop: bool = True
    patience: int = 50
    plateau_mode: bool = False        # up-to-length schedule: halve lr on plateaus
    plateau_reductions: int = 5
    plateau_factor: float = 0.5
    split: float = 0.8
    seed: int = 0
    batch_size: int | None = None     # None = full batch
    normalize: bool = True
    reverse_traces: bool = False
    compare_unquantized: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 < self.split < 1.0:
            raise ValueError("split must be in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class TrainReport:
    formula: str
    formula_length: int
    train_mcr: float
    test_mcr: float
    loss: list[float]
    epochs: int
    wall_time_s: float
    config: dict
    head: str
    lr_reductions: int = 0
    skipped_updates: int = 0
    test_mcr_unquantized: float | None = None
    formula_object: Formula | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("formula_object")
        return d


def adam_step(
    params,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> int:
    """One bias-corrected Adam update from each parameter's ``.grad``.

    Parameters whose gradient is not finite are skipped entirely (value,
    moments and step untouched); returns how many were skipped.
    """
    skipped = 0
    for p in params:
        g = p.grad
        if not np.isfinite(g):
            skipped += 1
            continue
        p.step += 1
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1 ** p.step)
        v_hat = p.v / (1.0 - beta2 ** p.step)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return skipped


def _label_signs(labels: np.ndarray) -> np.ndarray:
    return np.where(labels >= 0, 1.0, -1.0)


def split_indices(n: int, split: float, seed: int) -> tuple[list[int], list[int]]:
    """The seeded train/test partition used by :func:`fit`."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = min(n - 1, max(1, round(split * n)))
    return [int(i) for i in perm[:n_train]], [int(i) for i in perm[n_train:]]


def _stack(ds: Dataset, indices) -> list[tuple[np.ndarray, np.ndarray]]:
    """Group traces by length into (values (n,T,d), labels (n,)) batches."""
    by_len: dict[int, list[int]] = {}
    for i in indices:
        by_len.setdefault(ds.traces[i].values.shape[0], []).append(i)
    groups = []
    for T in sorted(by_len):
        idx = by_len[T]
        X = np.stack([ds.traces[i].values for i in idx])
        y = np.array([ds.traces[i].label for i in idx])
        groups.append((X, y))
    return groups


def evaluate_mcr(obj, ds: Dataset) -> float:
    """Fraction of traces whose predicted sign disagrees with the label.

    ``obj`` is a formula (evaluated on raw traces at the last step) or a
    model (normalized per its record, quantized per its flag).  Robustness
    exactly 0 classifies as positive; continuous labels are thresholded
    at 0.
    """
    if len(ds) == 0:
        raise ValueError("empty dataset")
    mismatches = 0
    for X, y in _stack(ds, range(len(ds))):
        if isinstance(obj, Formula):
            rho = last_step_robustness(obj, X)
        elif isinstance(obj, Model):
            rho, _, _ = forward_batch(obj, normalize_batch(obj, X))
        else:
            raise TypeError(f"expected a Formula or Model, got {type(obj).__name__}")
        pred = np.where(rho >= 0, 1.0, -1.0)
        mismatches += int(np.sum(pred != _label_signs(y)))
    return mismatches / len(ds)


def _fit_one(model: Model, groups, n_train: int, cfg: TrainConfig, lr0: float):
    """Run the optimization loop; returns (losses, epochs, reductions, skipped)."""
    params = model.parameters()
    chunks = []
    for X, y in groups:
        step = len(y) if cfg.batch_size is None else max(1, cfg.batch_size)
        for s in range(0, len(y), step):
            chunks.append((X[s : s + step], y[s : s + step]))
    tapes = []
    for X, y in chunks:
        _, tape, out_node = forward_batch(model, X)
        tapes.append((tape, out_node, y))
    full_batch = cfg.batch_size is None
    losses: list[float] = []
    best = np.inf
    stale = 0
    reductions = 0
    skipped = 0
    lr = lr0
    for _epoch in range(cfg.max_epochs):
        total = 0.0
        if full_batch:
            for p in params:
                p.grad = 0.0
        for tape, out_node, y in tapes:
            if not full_batch:
                for p in params:
                    p.grad = 0.0
            tape.forward()
            out = np.asarray(tape.values[out_node], dtype=float)
            err = out - y
            total += float(np.sum(np.abs(err)))
            tape.backward(out_node, np.sign(err) / (n_train if full_batch else len(y)))
            if not full_batch:
                skipped += adam_step(params, lr)
        loss = total / n_train
        losses.append(loss)
        if full_batch:
            skipped += adam_step(params, lr)
        if loss < best:
            best = loss
            stale = 0
        else:
            stale += 1
        if stale >= cfg.patience:
            if cfg.plateau_mode:
                if reductions < cfg.plateau_reductions:
                    lr *= cfg.plateau_factor
                    reductions += 1
                    stale = 0
                else:
                    break
            elif cfg.early_stop:
                break
    return losses, len(losses), reductions, skipped


def fit(model: Model, ds: Dataset, cfg: TrainConfig) -> TrainReport:
    """Train the model on an 80/20 split of the dataset and extract.

    Deterministic given the seed: the split permutation, every forward
    pass and every update are seed-reproducible.  Reported MCRs are those
    of the extracted formula on raw traces (training orientation: if
    ``reverse_traces`` is set, traces are reversed before everything
    else, so the extracted past-time formula reads as a future-time
    formula on the original signals).
    """
    start = time.perf_counter()
    if len(ds) < 2:
        raise ValueError("need at least 2 traces to split")
    if ds.label_kind not in ("binary", "continuous"):
        raise ValueError(f"bad label kind {ds.label_kind!r}")
    if cfg.reverse_traces:
        ds = reverse(ds)
    train_idx, test_idx = split_indices(len(ds), cfg.split, cfg.seed)
    train_ds = ds.subset(train_idx)
    test_ds = ds.subset(test_idx)

    model.head = "tanh" if ds.label_kind == "binary" else "identity"
    if cfg.normalize:
        stacked = np.concatenate([tr.values for tr in train_ds.traces], axis=0)
        model.normalization = (stacked.min(axis=0), stacked.max(axis=0))
    else:
        model.normalization = None

    snapshot = model_to_dict(model) if cfg.compare_unquantized else None

    groups = [(normalize_batch(model, X), y) for X, y in _stack(ds, train_idx)]
    losses, epochs, reductions, skipped = _fit_one(model, groups, len(train_idx), cfg, cfg.lr)

    formula = extract_formula(model)
    report = TrainReport(
        formula=format_formula(formula),
        formula_length=formula_length(formula),
        train_mcr=evaluate_mcr(formula, train_ds),
        test_mcr=evaluate_mcr(formula, test_ds),
        loss=losses,
        epochs=epochs,
        wall_time_s=0.0,
        config=asdict(cfg),
        head=model.head,
        lr_reductions=reductions,
        skipped_updates=skipped,
        formula_object=formula,
    )
    if cfg.compare_unquantized:
        twin = model_from_dict(snapshot)
        twin.quantized = False
        _fit_one(twin, groups, len(train_idx), cfg, cfg.lr)
        report.test_mcr_unquantized = evaluate_mcr(twin, test_ds)
    report.wall_time_s = time.perf_counter() - start
    return report
