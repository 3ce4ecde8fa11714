"""Robustness monitors for past-time STL over discrete-time traces.

Two independent evaluators are provided on purpose:

* :func:`robustness` computes each timestep from the windowed definition
  (sup/inf over the mask-selected past offsets), so it is quadratic in
  trace length but follows the semantics literally.
* :func:`robustness_recurrent` computes the same values through one-memory
  recurrences (running max/min, and ``r[t] = min(phi[t], max(r[t-1],
  psi[t]))`` for Since) and is linear in trace length.  It only supports
  unbounded masks.

Their elementwise agreement on unbounded formulas is a tested invariant,
not an implementation shortcut: neither function calls the other.

The Since window includes both endpoints: the candidate at past offset
``i`` is ``min(psi[t-i], min(phi[t-i ..= t]))``.  This is the discrete
form consistent with the recurrence above (the left operand is required
at the anchor point as well as at ``t``).
"""

import numpy as np

from .formula import And, Atom, Formula, Hist, Not, Once, Or, Since, has_bounded_mask

#: Finite stand-in for +/-infinity: empty bounded windows evaluate to
#: ``-HUGE`` (Once, Since) or ``+HUGE`` (Hist), and recurrent memories are
#: initialized at the same magnitude.
HUGE = 1e6


def _trace_values(trace) -> np.ndarray:
    x = np.asarray(getattr(trace, "values", trace), dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"trace values must be a T x d array, got shape {x.shape}")
    return x


def _atom_signal(f: Atom, x: np.ndarray) -> np.ndarray:
    w = np.asarray(f.weights, dtype=float)
    if w.shape[0] > x.shape[-1]:
        raise ValueError(
            f"atom references feature x{w.shape[0] - 1} but trace has dimension {x.shape[-1]}"
        )
    return x[..., : w.shape[0]] @ w + f.bias


def _sign_pm1(r: np.ndarray) -> np.ndarray:
    return np.where(r >= 0, 1.0, -1.0)


def _window_eval(f: Formula, x: np.ndarray, atom_fn, huge: float) -> np.ndarray:
    if isinstance(f, Atom):
        return atom_fn(_atom_signal(f, x))
    if isinstance(f, Not):
        return -_window_eval(f.child, x, atom_fn, huge)
    if isinstance(f, And):
        return np.minimum(
            _window_eval(f.left, x, atom_fn, huge), _window_eval(f.right, x, atom_fn, huge)
        )
    if isinstance(f, Or):
        return np.maximum(
            _window_eval(f.left, x, atom_fn, huge), _window_eval(f.right, x, atom_fn, huge)
        )
    T = x.shape[0]
    if isinstance(f, (Once, Hist)):
        child = _window_eval(f.child, x, atom_fn, huge)
        fold, empty = (max, -huge) if isinstance(f, Once) else (min, huge)
        out = np.empty(T)
        for t in range(T):
            offs = range(t + 1) if f.mask.is_unbounded else [o for o in f.mask.offsets if o <= t]
            vals = [child[t - o] for o in offs]
            out[t] = fold(vals) if vals else empty
        return out
    if isinstance(f, Since):
        phi = _window_eval(f.left, x, atom_fn, huge)
        psi = _window_eval(f.right, x, atom_fn, huge)
        out = np.empty(T)
        for t in range(T):
            # cand[t'] = min(psi[t'], min(phi[t' ..= t])), for t' = t .. 0
            best = -huge
            allowed = (
                None if f.mask.is_unbounded else {t - o for o in f.mask.offsets if o <= t}
            )
            run = huge
            for tp in range(t, -1, -1):
                run = min(run, phi[tp])
                if allowed is None or tp in allowed:
                    best = max(best, min(psi[tp], run))
            out[t] = best
        return out
    raise TypeError(f"not a formula node: {f!r}")


def robustness(f: Formula, trace, huge: float = HUGE) -> np.ndarray:
    """Robustness sequence rho_f(x, t) for t = 0..T-1, windowed definition."""
    return _window_eval(f, _trace_values(trace), lambda r: r, huge)


def _recurrent_eval(f: Formula, x: np.ndarray, atom_fn, huge: float) -> np.ndarray:
    """Shared by the public per-trace evaluator and the batched helper.

    ``x`` has shape (..., T, d); time is the second-to-last axis.
    """
    if isinstance(f, Atom):
        return atom_fn(_atom_signal(f, x))
    if isinstance(f, Not):
        return -_recurrent_eval(f.child, x, atom_fn, huge)
    if isinstance(f, And):
        return np.minimum(
            _recurrent_eval(f.left, x, atom_fn, huge), _recurrent_eval(f.right, x, atom_fn, huge)
        )
    if isinstance(f, Or):
        return np.maximum(
            _recurrent_eval(f.left, x, atom_fn, huge), _recurrent_eval(f.right, x, atom_fn, huge)
        )
    if isinstance(f, (Once, Hist, Since)) and not f.mask.is_unbounded:
        raise ValueError("recurrent evaluator supports unbounded operators only")
    if isinstance(f, Once):
        return np.maximum.accumulate(_recurrent_eval(f.child, x, atom_fn, huge), axis=-1)
    if isinstance(f, Hist):
        return np.minimum.accumulate(_recurrent_eval(f.child, x, atom_fn, huge), axis=-1)
    if isinstance(f, Since):
        phi = _recurrent_eval(f.left, x, atom_fn, huge)
        psi = _recurrent_eval(f.right, x, atom_fn, huge)
        out = np.empty_like(phi)
        mem = np.full(phi.shape[:-1], -huge)
        for t in range(phi.shape[-1]):
            mem = np.minimum(phi[..., t], np.maximum(mem, psi[..., t]))
            out[..., t] = mem
        return out
    raise TypeError(f"not a formula node: {f!r}")


def robustness_recurrent(f: Formula, trace, huge: float = HUGE) -> np.ndarray:
    """Same output as :func:`robustness` via one-memory recurrences.

    Once: ``r[t] = max(phi[t], r[t-1])`` with memory at ``-huge``;
    Hist: ``r[t] = min(phi[t], r[t-1])`` with memory at ``+huge``;
    Since: ``r[t] = min(phi[t], max(r[t-1], psi[t]))`` with memory at
    ``-huge``.  Raises on bounded masks.
    """
    return _recurrent_eval(f, _trace_values(trace), lambda r: r, huge)


def boolean_eval(f: Formula, trace, t: int | None = None, huge: float = HUGE) -> int:
    """Boolean semantics at step ``t`` (default: last step).

    Atom robustness is replaced by its sign (0 maps to +1) and the same
    min/max combinators run on the +/-1 values, so the result is always
    in {-1, +1}.
    """
    x = _trace_values(trace)
    seq = _window_eval(f, x, _sign_pm1, huge)
    if t is None:
        t = x.shape[0] - 1
    return int(seq[t])


def last_step_robustness(f: Formula, traces, huge: float = HUGE) -> np.ndarray:
    """Final-step robustness for a batch of equal-length traces.

    ``traces`` is an (n, T, d) array.  Uses the recurrences when every
    mask is unbounded, otherwise falls back to the windowed evaluator per
    trace.
    """
    x = np.asarray(traces, dtype=float)
    if x.ndim != 3:
        raise ValueError(f"expected an (n, T, d) batch, got shape {x.shape}")
    if not has_bounded_mask(f):
        return _recurrent_eval(f, x, lambda r: r, huge)[:, -1]
    return np.array([_window_eval(f, xi, lambda r: r, huge)[-1] for xi in x])
