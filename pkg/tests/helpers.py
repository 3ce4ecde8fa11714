"""Shared test utilities: independent oracles and random generators.

The evaluators here follow the quantified definitions as literally as
possible (nested loops, no running minima), so they stay independent of
the library implementations they check.
"""

import numpy as np

from stlmine.formula import And, Atom, Hist, Mask, Not, Once, Or, Since

BIG = 1e6


def brute_robustness(f, x, t):
    """Literal windowed robustness at one step; x is a (T, d) array."""
    if isinstance(f, Atom):
        w = np.zeros(x.shape[1])
        w[: len(f.weights)] = f.weights
        return float(x[t] @ w + f.bias)
    if isinstance(f, Not):
        return -brute_robustness(f.child, x, t)
    if isinstance(f, And):
        return min(brute_robustness(f.left, x, t), brute_robustness(f.right, x, t))
    if isinstance(f, Or):
        return max(brute_robustness(f.left, x, t), brute_robustness(f.right, x, t))
    if isinstance(f, (Once, Hist)):
        offsets = range(t + 1) if f.mask.is_unbounded else [o for o in f.mask.offsets if o <= t]
        vals = [brute_robustness(f.child, x, t - o) for o in offsets]
        if isinstance(f, Once):
            return max(vals) if vals else -BIG
        return min(vals) if vals else BIG
    if isinstance(f, Since):
        offsets = range(t + 1) if f.mask.is_unbounded else [o for o in f.mask.offsets if o <= t]
        best = -BIG
        for o in offsets:
            tp = t - o
            hold = [brute_robustness(f.left, x, u) for u in range(tp, t + 1)]
            best = max(best, min([brute_robustness(f.right, x, tp)] + hold))
        return best
    raise TypeError(f)


def brute_robustness_seq(f, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    return np.array([brute_robustness(f, x, t) for t in range(x.shape[0])])


def future_robustness(f, x, t):
    """Future-time reading of the same operators: offsets into the future.

    Used to check the reversed-signal trick; only meaningful for masks
    whose offsets stay within the trace.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    T = x.shape[0]
    if isinstance(f, Atom):
        w = np.zeros(x.shape[1])
        w[: len(f.weights)] = f.weights
        return float(x[t] @ w + f.bias)
    if isinstance(f, Not):
        return -future_robustness(f.child, x, t)
    if isinstance(f, (Once, Hist)):
        offsets = (
            range(T - t) if f.mask.is_unbounded else [o for o in f.mask.offsets if t + o < T]
        )
        vals = [future_robustness(f.child, x, t + o) for o in offsets]
        if isinstance(f, Once):
            return max(vals) if vals else -BIG
        return min(vals) if vals else BIG
    raise TypeError(f"future oracle supports atoms, Not, Once, Hist, got {f!r}")


def random_formula(rng, depth, dim, ops=("not", "and", "or", "once", "hist", "since"),
                   masked=False, max_offset=5):
    """Random formula tree of at most the given operator depth."""
    if depth == 0 or rng.random() < 0.25:
        w = tuple(float(v) for v in rng.uniform(-1, 1, size=dim))
        return Atom(w, float(rng.uniform(-1, 1)))
    op = ops[rng.integers(len(ops))]
    mask = Mask(None)
    if masked and rng.random() < 0.5:
        size = int(rng.integers(1, max_offset + 1))
        mask = Mask(tuple(sorted(rng.choice(max_offset + 1, size=size, replace=False).tolist())))
    if op == "not":
        return Not(random_formula(rng, depth - 1, dim, ops, masked, max_offset))
    if op == "and":
        return And(
            random_formula(rng, depth - 1, dim, ops, masked, max_offset),
            random_formula(rng, depth - 1, dim, ops, masked, max_offset),
        )
    if op == "or":
        return Or(
            random_formula(rng, depth - 1, dim, ops, masked, max_offset),
            random_formula(rng, depth - 1, dim, ops, masked, max_offset),
        )
    if op == "once":
        return Once(random_formula(rng, depth - 1, dim, ops, masked, max_offset), mask)
    if op == "hist":
        return Hist(random_formula(rng, depth - 1, dim, ops, masked, max_offset), mask)
    return Since(
        random_formula(rng, depth - 1, dim, ops, masked, max_offset),
        random_formula(rng, depth - 1, dim, ops, masked, max_offset),
        mask,
    )


def random_trace(rng, T, dim, lo=-2.0, hi=2.0):
    return rng.uniform(lo, hi, size=(T, dim))


def random_grammar_formula(rng, depth, dim):
    """Random formula from the parseable grammar space: unit single-feature
    atoms with minimal-length weight vectors, exactly as parse builds them."""
    if depth == 0 or rng.random() < 0.3:
        return Atom.single(int(rng.integers(dim)), 1 if rng.random() < 0.5 else -1,
                           round(float(rng.uniform(-2, 2)), 3))
    op = ("not", "and", "or", "once", "hist", "since")[rng.integers(6)]
    mask = Mask(None)
    if rng.random() < 0.4:
        size = int(rng.integers(1, 4))
        mask = Mask(tuple(sorted(rng.choice(6, size=size, replace=False).tolist())))
    child = lambda: random_grammar_formula(rng, depth - 1, dim)
    if op == "not":
        return Not(child())
    if op == "and":
        return And(child(), child())
    if op == "or":
        return Or(child(), child())
    if op == "once":
        return Once(child(), mask)
    if op == "hist":
        return Hist(child(), mask)
    return Since(child(), child(), mask)
