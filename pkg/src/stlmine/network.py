"""Trainable formula networks.

A :class:`Model` is a DAG of cells unrolled over a trace: atoms are
affine neurons, boolean/temporal operators are min/max (recurrent) cells,
and *choice blocks* are weighted multiplexers whose one-hot quantized
weights select which sub-formula survives.  A network with choice blocks
embeds the product of the blocks' input counts as candidate formulas; the
trained network is read back into a single formula by
:func:`extract_formula`.

Interval cells additionally learn bounded operator masks: each of the
``window + 1`` past offsets carries a weight quantized to "keep" (1) or
"drop" (a large +/-M), and the kept offsets become the extracted mask.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tape, _quantize_index
from .formula import And, Atom, Formula, Hist, Mask, Not, Once, Or, Since

#: Additive clearance used when shifting interval-cell inputs non-negative,
#: so a dropped offset can never tie the fold at exactly zero.
SHIFT_MARGIN = 0.1


# --------------------------------------------------------------------------
# Cells
# --------------------------------------------------------------------------

@dataclass(eq=False)
class AtomCell:
    weights: list[Parameter]
    bias: Parameter


@dataclass(eq=False)
class NotCell:
    child: int


@dataclass(eq=False)
class AndCell:
    left: int
    right: int


@dataclass(eq=False)
class OrCell:
    left: int
    right: int


@dataclass(eq=False)
class OnceCell:
    child: int


@dataclass(eq=False)
class HistCell:
    child: int


@dataclass(eq=False)
class SinceCell:
    left: int
    right: int


@dataclass(eq=False)
class ChoiceBlock:
    inputs: list[int]
    weights: list[Parameter]

    def __post_init__(self):
        if len(self.inputs) != len(self.weights) or not self.inputs:
            raise ValueError("choice block needs one weight per input, at least one input")


@dataclass(eq=False)
class IntervalCell:
    """Bounded Once/Hist over past offsets 0..window with learned mask."""

    kind: str  # "once" | "hist"
    child: int
    window: int
    weights: list[Parameter]
    drop: float = 1e6
    shift: float = 0.0  # last non-negativity shift used in a forward pass

    def __post_init__(self):
        if self.kind not in ("once", "hist"):
            raise ValueError(f"bad interval kind {self.kind!r}")
        if self.window < 0 or len(self.weights) != self.window + 1:
            raise ValueError("interval cell needs window + 1 weights")
        if self.drop <= 0:
            raise ValueError("drop magnitude must be positive")


@dataclass(eq=False)
class Model:
    cells: list
    output: int
    dim: int
    head: str = "tanh"  # "tanh" | "identity"
    quantized: bool = True
    normalization: tuple[np.ndarray, np.ndarray] | None = None  # (mins, maxs)
    huge: float = 1e6

    def parameters(self) -> list[Parameter]:
        out = []
        for cell in self.cells:
            if isinstance(cell, AtomCell):
                out.extend(cell.weights)
                out.append(cell.bias)
            elif isinstance(cell, (ChoiceBlock, IntervalCell)):
                out.extend(cell.weights)
        return out


def embedded_structures(model: Model) -> int:
    """Number of joint hot-index assignments over all choice blocks."""
    count = 1
    for cell in model.cells:
        if isinstance(cell, ChoiceBlock):
            count *= len(cell.inputs)
    return count


# --------------------------------------------------------------------------
# Forward evaluation
# --------------------------------------------------------------------------

def normalize_batch(model: Model, X: np.ndarray) -> np.ndarray:
    if model.normalization is None:
        return X
    mins, maxs = model.normalization
    ranges = np.where(maxs > mins, maxs - mins, 1.0)
    return (X - mins) / ranges


def forward_batch(model: Model, X: np.ndarray) -> tuple[np.ndarray, Tape, int]:
    """Unroll the model over a batch of equal-length traces.

    ``X`` is an (n, T, d) array already normalized per the model's record.
    Returns (head outputs at the last step, tape, output node id); the
    tape can be re-run after parameter updates.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise ValueError(f"expected (n, T, d) batch, got shape {X.shape}")
    n, T, d = X.shape
    if d != model.dim:
        raise ValueError(f"trace dimension {d} != model dimension {model.dim}")
    tape = Tape()
    feat = [[tape.const(X[:, t, f]) for f in range(d)] for t in range(T)]
    neg_huge = tape.const(-model.huge)
    pos_huge = tape.const(model.huge)
    shift_nodes: list[tuple[IntervalCell, int]] = []
    seqs: list[list] = []
    for cid, cell in enumerate(model.cells):
        if isinstance(cell, AtomCell):
            seq = [tape.affine(cell.weights, cell.bias, feat[t]) for t in range(T)]
        elif isinstance(cell, NotCell):
            seq = [tape.neg(x) for x in seqs[cell.child]]
        elif isinstance(cell, AndCell):
            seq = [tape.min2(a, b) for a, b in zip(seqs[cell.left], seqs[cell.right])]
        elif isinstance(cell, OrCell):
            seq = [tape.max2(a, b) for a, b in zip(seqs[cell.left], seqs[cell.right])]
        elif isinstance(cell, OnceCell):
            mem = neg_huge
            seq = []
            for x in seqs[cell.child]:
                mem = tape.max2(x, mem)
                seq.append(mem)
        elif isinstance(cell, HistCell):
            mem = pos_huge
            seq = []
            for x in seqs[cell.child]:
                mem = tape.min2(x, mem)
                seq.append(mem)
        elif isinstance(cell, SinceCell):
            mem = neg_huge
            seq = []
            for l, r in zip(seqs[cell.left], seqs[cell.right]):
                mem = tape.min2(l, tape.max2(mem, r))
                seq.append(mem)
        elif isinstance(cell, ChoiceBlock):
            seq = [
                tape.choice([seqs[i][t] for i in cell.inputs], cell.weights, model.quantized)
                for t in range(T)
            ]
        elif isinstance(cell, IntervalCell):
            if cid != model.output:
                raise ValueError("an interval cell must be the model's output cell")
            if cell.window > T - 1:
                raise ValueError(
                    f"interval window {cell.window} exceeds trace length {T} - 1"
                )
            child = seqs[cell.child]
            picks = [child[T - 1 - i] for i in range(cell.window + 1)]
            # Hist runs through its exact dual, not(Once(not(phi))): both
            # kinds then fold a max over non-negative inputs with drop
            # value -M, and the straight-through magnitude seen by each
            # offset weight is how strongly that offset argues for the
            # fold's winner (satisfaction depth for Once, violation depth
            # for Hist, which is what defines a Hist mask).
            if cell.kind == "hist":
                picks = [tape.neg(x) for x in picks]
            shift = tape.shift_floor(picks, SHIFT_MARGIN)
            acc = None
            for w, x in zip(cell.weights, picks):
                term = tape.qmul(tape.add(x, shift), w, -cell.drop, 1.0)
                acc = term if acc is None else tape.max2(acc, term)
            out = tape.add(acc, tape.neg(shift))
            if cell.kind == "hist":
                out = tape.neg(out)
            seq = [None] * (T - 1) + [out]
            shift_nodes.append((cell, shift))
        else:
            raise TypeError(f"unknown cell {cell!r}")
        seqs.append(seq)
    last = seqs[model.output][T - 1]
    out_node = tape.tanh(last) if model.head == "tanh" else last
    tape.forward()
    for cell, node in shift_nodes:
        cell.shift = float(tape.values[node])
    outs = np.broadcast_to(np.asarray(tape.values[out_node], dtype=float), (n,)).copy()
    return outs, tape, out_node


def forward_model(model: Model, trace) -> tuple[float, Tape]:
    """Head output at the final step for one trace (already normalized)."""
    x = np.asarray(getattr(trace, "values", trace), dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    outs, tape, _ = forward_batch(model, x[None, :, :])
    return float(outs[0]), tape


def interval_cell_forward(kind: str, inputs, weights, drop: float = 1e6) -> float:
    """Raw bounded-operator fold over pre-shifted (non-negative) inputs.

    Once: ``max_i q_i * r[i]`` with ``q_i in {1, -drop}``; Hist:
    ``min_i q_i * r[i]`` with ``q_i in {1, +drop}``.  ``q_i`` is 1 when
    ``w_i >= 0`` and the drop value otherwise.
    """
    r = np.asarray([float(v) for v in inputs])
    w = [float(getattr(p, "value", p)) for p in weights]
    if len(w) != len(r):
        raise ValueError("need one weight per input")
    if drop <= 0:
        raise ValueError("drop magnitude must be positive")
    if np.any(r < 0):
        raise ValueError("inputs must be pre-shifted non-negative")
    if kind == "once":
        terms = [ri if wi >= 0 else -drop * ri for wi, ri in zip(w, r)]
        return float(max(terms))
    if kind == "hist":
        terms = [ri if wi >= 0 else drop * ri for wi, ri in zip(w, r)]
        return float(min(terms))
    raise ValueError(f"bad interval kind {kind!r}")


# --------------------------------------------------------------------------
# Extraction
# --------------------------------------------------------------------------

def _denorm_atom(weights: np.ndarray, bias: float, normalization) -> Atom:
    if normalization is None:
        return Atom(tuple(float(w) for w in weights), float(bias))
    mins, maxs = normalization
    ranges = np.where(maxs > mins, maxs - mins, 1.0)
    w_raw = weights / ranges
    b_raw = bias - float(np.sum(weights * mins / ranges))
    return Atom(tuple(float(w) for w in w_raw), float(b_raw))


def _interval_mask(cell: IntervalCell) -> Mask:
    kept = tuple(i for i, w in enumerate(cell.weights) if w.value >= 0)
    if not kept:
        # Degenerate all-dropped state; keep the least-dropped offset so
        # the extraction is total.
        kept = (int(np.argmax([w.value for w in cell.weights])),)
    return Mask(kept)


def _extract(model: Model, cid: int, memo: dict) -> Formula:
    if cid in memo:
        return memo[cid]
    cell = model.cells[cid]
    if isinstance(cell, AtomCell):
        f = _denorm_atom(
            np.array([w.value for w in cell.weights]), cell.bias.value, model.normalization
        )
    elif isinstance(cell, NotCell):
        f = Not(_extract(model, cell.child, memo))
    elif isinstance(cell, AndCell):
        f = And(_extract(model, cell.left, memo), _extract(model, cell.right, memo))
    elif isinstance(cell, OrCell):
        f = Or(_extract(model, cell.left, memo), _extract(model, cell.right, memo))
    elif isinstance(cell, OnceCell):
        f = Once(_extract(model, cell.child, memo))
    elif isinstance(cell, HistCell):
        f = Hist(_extract(model, cell.child, memo))
    elif isinstance(cell, SinceCell):
        f = Since(_extract(model, cell.left, memo), _extract(model, cell.right, memo))
    elif isinstance(cell, ChoiceBlock):
        j, s, _ = _quantize_index(np.array([w.value for w in cell.weights]))
        sub = _extract(model, cell.inputs[j], memo)
        f = Not(sub) if s < 0 else sub
    elif isinstance(cell, IntervalCell):
        sub = _extract(model, cell.child, memo)
        f = Once(sub, _interval_mask(cell)) if cell.kind == "once" else Hist(sub, _interval_mask(cell))
    else:
        raise TypeError(f"unknown cell {cell!r}")
    memo[cid] = f
    return f


def _push_negations(f: Formula, negate: bool) -> Formula:
    """Absorb Not nodes into the tree, exactly preserving robustness.

    ``-(w.x + b) = (-w).x + (-b)``, ``-max = min of negations`` and the
    F/G duals are pointwise identities of the min/max semantics, so this
    changes the printed structure but never any robustness value.  A Not
    directly above Since has no counterpart in the grammar and is kept.
    """
    if isinstance(f, Atom):
        if negate:
            return Atom(tuple(-w for w in f.weights), -f.bias)
        return f
    if isinstance(f, Not):
        return _push_negations(f.child, not negate)
    if isinstance(f, And):
        l = _push_negations(f.left, negate)
        r = _push_negations(f.right, negate)
        return Or(l, r) if negate else And(l, r)
    if isinstance(f, Or):
        l = _push_negations(f.left, negate)
        r = _push_negations(f.right, negate)
        return And(l, r) if negate else Or(l, r)
    if isinstance(f, Once):
        c = _push_negations(f.child, negate)
        return Hist(c, f.mask) if negate else Once(c, f.mask)
    if isinstance(f, Hist):
        c = _push_negations(f.child, negate)
        return Once(c, f.mask) if negate else Hist(c, f.mask)
    if isinstance(f, Since):
        s = Since(_push_negations(f.left, False), _push_negations(f.right, False), f.mask)
        return Not(s) if negate else s
    raise TypeError(f"not a formula node: {f!r}")


def extract_formula(model: Model) -> Formula:
    """Read the chosen formula off the current weights.

    Each choice block contributes its highest-|weight| input, negated when
    that weight is negative; negations are then absorbed into atoms and
    operator duals (exactly robustness-preserving), and interval cells
    contribute the mask of their non-negative offset weights.  Atoms are
    reported in raw feature units via the model's normalization record.
    """
    raw = _extract(model, model.output, {})
    return _push_negations(raw, False)


def enumerate_extractions(model: Model, include_negative: bool = False) -> list[Formula]:
    """Every formula readable from some joint hot-index assignment.

    With ``include_negative`` the -1 selections of each choice block are
    enumerated too.  Results are negation-normalized exactly like
    :func:`extract_formula`; no deduplication is applied.
    """
    memo: dict[int, list[Formula]] = {}

    def rec(cid: int) -> list[Formula]:
        if cid in memo:
            return memo[cid]
        cell = model.cells[cid]
        if isinstance(cell, AtomCell):
            out = [
                _denorm_atom(
                    np.array([w.value for w in cell.weights]),
                    cell.bias.value,
                    model.normalization,
                )
            ]
        elif isinstance(cell, NotCell):
            out = [Not(c) for c in rec(cell.child)]
        elif isinstance(cell, OnceCell):
            out = [Once(c) for c in rec(cell.child)]
        elif isinstance(cell, HistCell):
            out = [Hist(c) for c in rec(cell.child)]
        elif isinstance(cell, AndCell):
            out = [And(l, r) for l in rec(cell.left) for r in rec(cell.right)]
        elif isinstance(cell, OrCell):
            out = [Or(l, r) for l in rec(cell.left) for r in rec(cell.right)]
        elif isinstance(cell, SinceCell):
            out = [Since(l, r) for l in rec(cell.left) for r in rec(cell.right)]
        elif isinstance(cell, ChoiceBlock):
            out = []
            for i in cell.inputs:
                for sub in rec(i):
                    out.append(sub)
                    if include_negative:
                        out.append(Not(sub))
        elif isinstance(cell, IntervalCell):
            mask = _interval_mask(cell)
            wrap = Once if cell.kind == "once" else Hist
            out = [wrap(c, mask) for c in rec(cell.child)]
        else:
            raise TypeError(f"unknown cell {cell!r}")
        memo[cid] = out
        return out

    return [_push_negations(f, False) for f in rec(model.output)]


def max_extraction_length(model: Model) -> int:
    """Largest formula length over all joint assignments (signs included)."""
    memo: dict[int, tuple[int, int]] = {}

    def rec(cid: int) -> tuple[int, int]:  # (max plain, max negated)
        if cid in memo:
            return memo[cid]
        cell = model.cells[cid]
        if isinstance(cell, AtomCell):
            res = (1, 1)
        elif isinstance(cell, NotCell):
            p, n = rec(cell.child)
            res = (n, p)
        elif isinstance(cell, (OnceCell, HistCell)):
            p, n = rec(cell.child)
            res = (1 + p, 1 + n)
        elif isinstance(cell, (AndCell, OrCell)):
            pl, nl = rec(cell.left)
            pr, nr = rec(cell.right)
            res = (1 + pl + pr, 1 + nl + nr)
        elif isinstance(cell, SinceCell):
            pl, _ = rec(cell.left)
            pr, _ = rec(cell.right)
            res = (1 + pl + pr, 2 + pl + pr)
        elif isinstance(cell, ChoiceBlock):
            ps, ns = zip(*(rec(i) for i in cell.inputs))
            res = (max(ps), max(ns))
        elif isinstance(cell, IntervalCell):
            p, n = rec(cell.child)
            res = (1 + p, 1 + n)
        else:
            raise TypeError(f"unknown cell {cell!r}")
        memo[cid] = res
        return res

    return max(rec(model.output))


# --------------------------------------------------------------------------
# Builders
# --------------------------------------------------------------------------

class _GraphBuilder:
    def __init__(self, dim: int, rng: np.random.Generator, use_since: bool):
        self.dim = dim
        self.rng = rng
        self.use_since = use_since
        self.cells: list = []

    def add(self, cell) -> int:
        self.cells.append(cell)
        return len(self.cells) - 1

    def atom(self, feature: int, direction: int) -> int:
        weights = []
        for f in range(self.dim):
            if f == feature:
                w = direction * self.rng.uniform(0.2, 1.0)
            else:
                w = 0.1 * self.rng.uniform(-1.0, 1.0)
            weights.append(Parameter(w, f"atom.w{f}"))
        bias = Parameter(self.rng.uniform(0.0, 1.0), "atom.b")
        return self.add(AtomCell(weights, bias))

    def choice(self, inputs: list[int]) -> int:
        ws = [Parameter(self.rng.uniform(0.4, 0.6), f"choice.w{i}") for i in range(len(inputs))]
        return self.add(ChoiceBlock(list(inputs), ws))

    def atom_choice(self) -> int:
        atoms = []
        for f in range(self.dim):
            atoms.append(self.atom(f, +1))
            atoms.append(self.atom(f, -1))
        return self.choice(atoms)

    def tower(self, budget: int) -> int:
        out, _ = self.tower_chain(budget)
        return out

    def tower_chain(self, budget: int) -> tuple[int, dict[int, int]]:
        """Build the length-``budget`` tower; returns (output id, chain of
        nested per-length outputs keyed by length)."""
        if budget < 1:
            raise ValueError("tower budget must be >= 1")
        chain: dict[int, int] = {}
        prev = self.atom_choice()
        chain[1] = prev
        for k in range(2, budget + 1):
            prev = self._level(k, prev)
            chain[k] = prev
        return prev, chain

    def _level(self, k: int, prev: int) -> int:
        if k == 2:
            once = self.add(OnceCell(prev))
            hist = self.add(HistCell(prev))
            return self.choice([once, hist])
        branches = [
            prev,
            self.add(NotCell(prev)),
            self.add(OnceCell(prev)),
            self.add(HistCell(prev)),
        ]
        a = (k - 1) // 2
        b = k - 1 - a
        left = self.tower(a)
        right = self.tower(b)
        branches.append(self.add(AndCell(left, right)))
        branches.append(self.add(OrCell(left, right)))
        if self.use_since and k >= 4:
            # One unit of the budget is held back: a -1 selection leaves a
            # Not above Since that has no dual to absorb it into.
            c = (k - 2) // 2
            dd = k - 2 - c
            branches.append(self.add(SinceCell(self.tower(c), self.tower(dd))))
        return self.choice(branches)


def build_fixed_length(
    length: int,
    dim: int,
    use_since: bool = True,
    rng: np.random.Generator | None = None,
    huge: float = 1e6,
) -> Model:
    """Network whose extractions are formulas of length at most ``length``,
    with the maximum attained by some assignment."""
    if length < 2:
        raise ValueError("length must be >= 2")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    gb = _GraphBuilder(dim, rng, use_since)
    out = gb.tower(length)
    return Model(gb.cells, out, dim, huge=huge)


def build_up_to_length(
    max_length: int,
    dim: int,
    use_since: bool = True,
    rng: np.random.Generator | None = None,
    huge: float = 1e6,
) -> Model:
    """Fixed-length towers for lengths 2..max_length sharing their nested
    cells, joined by a final choice block over the per-length outputs."""
    if max_length < 2:
        raise ValueError("max_length must be >= 2")
    rng = np.random.default_rng(0) if rng is None else rng
    gb = _GraphBuilder(dim, rng, use_since)
    _, chain = gb.tower_chain(max_length)
    out = gb.choice([chain[k] for k in range(2, max_length + 1)])
    return Model(gb.cells, out, dim, huge=huge)


def build_bounded(
    window: int,
    dim: int,
    kind: str = "hist",
    rng: np.random.Generator | None = None,
    drop: float = 1e6,
    huge: float = 1e6,
) -> Model:
    """Length-2 network with a learnable bounded operator: a single atom
    under a Once/Hist interval cell covering past offsets 0..window."""
    if window < 0:
        raise ValueError("window must be >= 0")
    rng = np.random.default_rng(0) if rng is None else rng
    gb = _GraphBuilder(dim, rng, use_since=False)
    atom = gb.atom(0, +1) if dim == 1 else gb.atom_choice()
    # Start every offset kept, with enough headroom that the atom settles
    # before the keep/drop ratchet can discard an informative offset.
    ws = [Parameter(rng.uniform(0.9, 1.1), f"interval.w{i}") for i in range(window + 1)]
    out = gb.add(IntervalCell(kind, atom, window, ws, drop=drop))
    return Model(gb.cells, out, dim, huge=huge)


def build_from_formula(f: Formula, dim: int, wrap_choices: bool = False) -> Model:
    """Hardwired network computing exactly the recurrent robustness of an
    unbounded formula (identity head).

    With ``wrap_choices`` every cell is routed through a single-input
    choice block with weight 1.0, which quantizes to alpha=1, B=[+1] and
    so leaves all values unchanged.
    """
    cells: list = []

    def wrap(cid: int) -> int:
        if not wrap_choices:
            return cid
        cells.append(ChoiceBlock([cid], [Parameter(1.0, "hardwired")]))
        return len(cells) - 1

    def rec(g: Formula) -> int:
        if isinstance(g, Atom):
            w = list(g.weights) + [0.0] * (dim - len(g.weights))
            if len(w) > dim:
                raise ValueError(f"atom references feature beyond dimension {dim}")
            cells.append(AtomCell([Parameter(v) for v in w], Parameter(g.bias)))
        elif isinstance(g, Not):
            cells.append(NotCell(rec(g.child)))
        elif isinstance(g, And):
            cells.append(AndCell(rec(g.left), rec(g.right)))
        elif isinstance(g, Or):
            cells.append(OrCell(rec(g.left), rec(g.right)))
        elif isinstance(g, (Once, Hist, Since)):
            if not g.mask.is_unbounded:
                raise ValueError("hardwired networks support unbounded operators only")
            if isinstance(g, Once):
                cells.append(OnceCell(rec(g.child)))
            elif isinstance(g, Hist):
                cells.append(HistCell(rec(g.child)))
            else:
                cells.append(SinceCell(rec(g.left), rec(g.right)))
        else:
            raise TypeError(f"not a formula node: {g!r}")
        return wrap(len(cells) - 1)

    out = rec(f)
    return Model(cells, out, dim, head="identity")
