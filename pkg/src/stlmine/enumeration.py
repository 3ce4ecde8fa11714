"""Brute-force formula inference: enumerate structures, grid-search thresholds.

Every well-formed structure up to a maximum length is generated over
single-feature atoms ``x_i >= theta`` / ``x_i <= theta`` and the chosen
operator set; each structure's free thresholds are then grid-searched
over the observed feature ranges and scored by mis-classification rate at
the last step.  With early exit disabled the result is the global grid
optimum, which serves as a quality oracle for the trained networks.
"""

import itertools
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import Dataset
from .formula import And, Atom, Formula, Hist, Not, Once, Or, Since, format_formula
from .semantics import last_step_robustness

#: Structure templates are nested tuples:
#:   ("atom", feature, direction) with direction in {+1, -1}
#:   ("not"|"once"|"hist", child) and ("and"|"or"|"since", left, right)

_UNARY = ("not", "once", "hist")
_BINARY = ("and", "or", "since")


@dataclass
class EnumConfig:
    max_length: int
    grid: int = 25
    target_mcr: float = 0.2
    early_exit: bool = True
    structure_cap: int = 50_000
    ops: tuple[str, ...] = ("not", "and", "or", "once", "hist", "since")

    def __post_init__(self):
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")
        if self.grid < 2:
            raise ValueError("grid must be >= 2")
        bad = [op for op in self.ops if op not in _UNARY + _BINARY]
        if bad:
            raise ValueError(f"unknown operators {bad}")


@dataclass
class EnumReport:
    formula: str
    mcr: float
    thresholds: tuple[float, ...]
    structures_tried: int
    structures_skipped: int
    truncated: bool
    early_exited: bool
    elapsed_s: float
    config: dict
    formula_object: Formula | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("formula_object")
        return d


def enumerate_structures(
    max_length: int, dim: int, ops=("not", "and", "or", "once", "hist", "since"),
    cap: int = 50_000, truncate: bool = False,
) -> list[tuple]:
    """All structures of length <= max_length, deduplicated syntactically.

    Double negation is pruned and the commutative connectives are emitted
    in canonical operand order only; no semantic equivalence is attempted.
    Raises when the count would exceed ``cap`` unless ``truncate`` is set
    (the caller can detect truncation by the returned length).
    """
    by_len: list[list[tuple]] = [[]]
    by_len.append([("atom", f, d) for f in range(dim) for d in (1, -1)])
    total = len(by_len[1])
    if total > cap and not truncate:
        raise ValueError(f"structure cap {cap} exceeded")
    for length in range(2, max_length + 1):
        level = []
        for op in ops:
            if op in _UNARY:
                for child in by_len[length - 1]:
                    if op == "not" and child[0] == "not":
                        continue
                    level.append((op, child))
            else:
                for llen in range(1, length - 1):
                    rlen = length - 1 - llen
                    for l in by_len[llen]:
                        for r in by_len[rlen]:
                            if op != "since" and repr(l) > repr(r):
                                continue
                            level.append((op, l, r))
        by_len.append(level)
        total += len(level)
        if total > cap:
            if truncate:
                flat = [s for lvl in by_len[1:] for s in lvl]
                return flat[:cap]
            raise ValueError(f"structure cap {cap} exceeded at length {length}")
    return [s for lvl in by_len[1:] for s in lvl]


def count_thresholds(structure: tuple) -> int:
    if structure[0] == "atom":
        return 1
    return sum(count_thresholds(c) for c in structure[1:])


def _atom_features(structure: tuple) -> list[int]:
    if structure[0] == "atom":
        return [structure[1]]
    out = []
    for c in structure[1:]:
        out.extend(_atom_features(c))
    return out


def instantiate(structure: tuple, thresholds, dim: int) -> Formula:
    """Fill the structure's atom slots with concrete thresholds (in atom
    order, left to right)."""
    it = iter(thresholds)

    def rec(s) -> Formula:
        kind = s[0]
        if kind == "atom":
            return Atom.single(s[1], s[2], next(it), dim)
        if kind == "not":
            return Not(rec(s[1]))
        if kind == "once":
            return Once(rec(s[1]))
        if kind == "hist":
            return Hist(rec(s[1]))
        if kind == "and":
            return And(rec(s[1]), rec(s[2]))
        if kind == "or":
            return Or(rec(s[1]), rec(s[2]))
        if kind == "since":
            return Since(rec(s[1]), rec(s[2]))
        raise ValueError(f"bad structure node {s!r}")

    f = rec(structure)
    rest = list(it)
    if rest:
        raise ValueError("too many thresholds for structure")
    return f


def _feature_grids(ds: Dataset, points: int) -> list[np.ndarray]:
    grids = []
    for f in range(ds.dim):
        vals = np.concatenate([tr.values[:, f] for tr in ds.traces])
        lo, hi = float(vals.min()), float(vals.max())
        if lo == hi:
            hi = lo + 1.0
        grids.append(np.linspace(lo, hi, points))
    return grids


def _mcr_batches(f: Formula, batches) -> float:
    mismatches = 0
    n = 0
    for X, want in batches:
        rho = last_step_robustness(f, X)
        pred = np.where(rho >= 0, 1.0, -1.0)
        mismatches += int(np.sum(pred != want))
        n += len(want)
    return mismatches / n


def _dataset_batches(ds: Dataset):
    by_len: dict[int, list] = {}
    for tr in ds.traces:
        by_len.setdefault(tr.values.shape[0], []).append(tr)
    out = []
    for T in sorted(by_len):
        X = np.stack([tr.values for tr in by_len[T]])
        y = np.array([tr.label for tr in by_len[T]])
        out.append((X, np.where(y >= 0, 1.0, -1.0)))
    return out


def fit_structure(structure: tuple, ds: Dataset, grid: int = 25, max_thresholds: int = 2):
    """Exhaustive threshold grid search for one structure.

    Returns ``(thresholds, mcr)`` minimizing MCR, ties resolved to the
    lexicographically smallest threshold tuple.  Structures with more than
    ``max_thresholds`` free thresholds are rejected (grid budget).
    """
    k = count_thresholds(structure)
    if k > max_thresholds:
        raise ValueError(f"structure has {k} free thresholds, budget is {max_thresholds}")
    grids = _feature_grids(ds, grid)
    batches = _dataset_batches(ds)
    feats = _atom_features(structure)
    best_mcr = np.inf
    best_thetas = None
    for thetas in itertools.product(*(grids[f] for f in feats)):
        mcr = _mcr_batches(instantiate(structure, thetas, ds.dim), batches)
        if mcr < best_mcr:
            best_mcr = mcr
            best_thetas = tuple(float(t) for t in thetas)
    return best_thetas, float(best_mcr)


def run(ds: Dataset, cfg: EnumConfig) -> EnumReport:
    """Search all enumerable structures; returns the best formula found.

    With ``early_exit`` the search stops at the first structure reaching
    ``target_mcr``; without it the global optimum over the whole grid is
    returned (ties broken by (MCR, canonical text) ordering).
    """
    if ds.label_kind != "binary":
        raise ValueError("enumeration needs binary labels")
    start = time.perf_counter()
    structures = enumerate_structures(
        cfg.max_length, ds.dim, cfg.ops, cap=cfg.structure_cap, truncate=True
    )
    truncated = len(structures) == cfg.structure_cap
    best = None  # (mcr, text, formula, thetas)
    tried = 0
    skipped = 0
    early = False
    for s in structures:
        if count_thresholds(s) > 2:
            skipped += 1
            continue
        thetas, mcr = fit_structure(s, ds, cfg.grid)
        tried += 1
        f = instantiate(s, thetas, ds.dim)
        key = (mcr, format_formula(f))
        if best is None or key < (best[0], best[1]):
            best = (mcr, key[1], f, thetas)
        if cfg.early_exit and mcr < cfg.target_mcr:
            early = True
            break
    if best is None:
        raise ValueError("no structure could be fitted")
    return EnumReport(
        formula=best[1],
        mcr=best[0],
        thresholds=best[3],
        structures_tried=tried,
        structures_skipped=skipped,
        truncated=truncated,
        early_exited=early,
        elapsed_s=time.perf_counter() - start,
        config=asdict(cfg),
        formula_object=best[2],
    )
