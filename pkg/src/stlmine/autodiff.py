"""Reverse-mode automatic differentiation over a scalar-node tape.

The tape holds exactly the primitives the formula networks need: affine
atoms, min/max activations, tanh, and two quantizing nodes (one-hot
choice selection and keep/drop interval weights) whose backward pass is a
straight-through estimator.

Every node is a scalar function of its inputs.  Values may be stored as
numpy arrays when the same scalar program is evaluated at many points at
once (one entry per trace in a training batch); this is plain pointwise
evaluation, not tensor-valued nodes, and the gradient of a shared
:class:`Parameter` is the sum over the batch.

Subgradient conventions are fixed so results are reproducible:
min/max route the full gradient to the winning argument, ties to the
first argument.
"""

import numpy as np

_CONST, _PARAM, _ADD, _MUL, _NEG, _MIN, _MAX, _TANH, _AFFINE, _CHOICE, _QMUL, _SHIFT = range(12)


class Parameter:
    """Trainable scalar with gradient slot and Adam state."""

    __slots__ = ("value", "grad", "m", "v", "step", "name")

    def __init__(self, value: float, name: str = ""):
        self.value = float(value)
        self.grad = 0.0
        self.m = 0.0
        self.v = 0.0
        self.step = 0
        self.name = name

    def __repr__(self):
        return f"Parameter({self.value!r}, name={self.name!r})"


def quantize_choice(weights) -> tuple[float, np.ndarray]:
    """Project a weight vector onto its best one-hot +/-1 approximation.

    Returns ``(alpha, B)`` minimizing ``||W - alpha * B||^2`` over one-hot
    B with the nonzero entry in {-1, +1} and ``alpha >= 0``: the nonzero
    index is ``argmax |W_i|`` (ties to the lowest index), its sign is
    ``sign(W_j)`` with ``sign(0) = +1``, and ``alpha = |W_j|``.

    ``weights`` may hold :class:`Parameter` objects or plain floats.
    """
    w = np.array([getattr(p, "value", p) for p in weights], dtype=float)
    if w.size == 0:
        raise ValueError("quantize_choice needs at least one weight")
    j, s, alpha = _quantize_index(w)
    b = np.zeros(w.size)
    b[j] = s
    return alpha, b


def _quantize_index(w: np.ndarray) -> tuple[int, float, float]:
    j = int(np.argmax(np.abs(w)))
    s = 1.0 if w[j] >= 0 else -1.0
    return j, s, abs(float(w[j]))


def _accum_param(p: Parameter, g):
    p.grad += float(np.sum(g)) if isinstance(g, np.ndarray) else float(g)


class Tape:
    """Append-only graph of scalar nodes; forward then backward.

    Node inputs always reference earlier nodes, so a single sweep in each
    direction suffices.  The tape may be re-run after parameter values
    change (the graph is static, values are recomputed).
    """

    def __init__(self):
        self.kind: list[int] = []
        self.a: list[int] = []
        self.b: list[int] = []
        self.aux: list = []
        self.values: list = []
        self.adjoints: list = []
        self.params: list[Parameter] = []
        self._param_ids: set[int] = set()
        self._scratch: dict[int, tuple] = {}
        self._ran_forward = False

    def __len__(self):
        return len(self.kind)

    def _push(self, kind: int, a: int = -1, b: int = -1, aux=None) -> int:
        n = len(self.kind)
        for i in (a, b):
            if i >= n:
                raise ValueError("node inputs must reference earlier nodes")
        self.kind.append(kind)
        self.a.append(a)
        self.b.append(b)
        self.aux.append(aux)
        return n

    def _register(self, p: Parameter):
        if id(p) not in self._param_ids:
            self._param_ids.add(id(p))
            self.params.append(p)

    # -- node constructors -------------------------------------------------

    def const(self, value) -> int:
        return self._push(_CONST, aux=value)

    def param(self, p: Parameter) -> int:
        self._register(p)
        return self._push(_PARAM, aux=p)

    def add(self, a: int, b: int) -> int:
        return self._push(_ADD, a, b)

    def mul(self, a: int, b: int) -> int:
        return self._push(_MUL, a, b)

    def neg(self, a: int) -> int:
        return self._push(_NEG, a)

    def min2(self, a: int, b: int) -> int:
        return self._push(_MIN, a, b)

    def max2(self, a: int, b: int) -> int:
        return self._push(_MAX, a, b)

    def tanh(self, a: int) -> int:
        return self._push(_TANH, a)

    def affine(self, weights, bias: Parameter, inputs) -> int:
        """``sum_i weights[i] * value(inputs[i]) + bias``."""
        weights = tuple(weights)
        inputs = tuple(inputs)
        if len(weights) != len(inputs):
            raise ValueError("affine needs one weight per input")
        for w in weights:
            self._register(w)
        self._register(bias)
        return self._push(_AFFINE, aux=(weights, bias, inputs))

    def choice(self, inputs, weights, quantized: bool = True) -> int:
        """Weighted selection among ``inputs``.

        Quantized forward: ``alpha * B_j * value(inputs[j])`` with
        ``(alpha, B)`` from :func:`quantize_choice` of the current weight
        values.  Straight-through backward: every weight receives the
        gradient it would get if the quantization map were the identity,
        i.e. ``d out / d W_i := value(inputs[i])``; the selected input
        receives ``alpha * B_j``.

        Unquantized forward is the plain weighted sum (used for the
        real-weight comparison mode).
        """
        inputs = tuple(inputs)
        weights = tuple(weights)
        if len(inputs) != len(weights):
            raise ValueError("choice needs one weight per input")
        if not inputs:
            raise ValueError("choice needs at least one input")
        for w in weights:
            self._register(w)
        return self._push(_CHOICE, aux=(inputs, weights, quantized))

    def qmul(self, a: int, w: Parameter, drop: float, ste_sign: float) -> int:
        """Keep/drop multiply for interval weights.

        Forward: ``q * value(a)`` with ``q = 1`` if ``w >= 0`` else
        ``drop``.  Backward (straight-through): ``d out / d w :=
        ste_sign * value(a)``; the input receives ``q``.  ``ste_sign`` is
        +1 when a larger q helps the fold the weight feeds into (max) and
        -1 when it hurts it (min), so the weight always drifts toward the
        loss-reducing side of the keep/drop threshold.
        """
        self._register(w)
        return self._push(_QMUL, a, aux=(w, float(drop), float(ste_sign)))

    def shift_floor(self, inputs, margin: float = 0.1) -> int:
        """``max(0, margin - min over all inputs and batch entries)``.

        Treated as a constant in the backward pass (no gradient flows to
        the inputs).
        """
        inputs = tuple(inputs)
        if not inputs:
            raise ValueError("shift_floor needs at least one input")
        return self._push(_SHIFT, aux=(inputs, float(margin)))

    # -- execution -----------------------------------------------------------

    def forward(self) -> None:
        n = len(self.kind)
        vals = [None] * n
        kind, a, b, aux = self.kind, self.a, self.b, self.aux
        scratch = self._scratch
        scratch.clear()
        for i in range(n):
            k = kind[i]
            if k == _CONST:
                vals[i] = aux[i]
            elif k == _PARAM:
                vals[i] = aux[i].value
            elif k == _ADD:
                vals[i] = vals[a[i]] + vals[b[i]]
            elif k == _MUL:
                vals[i] = vals[a[i]] * vals[b[i]]
            elif k == _NEG:
                vals[i] = -vals[a[i]]
            elif k == _MIN:
                vals[i] = np.minimum(vals[a[i]], vals[b[i]])
            elif k == _MAX:
                vals[i] = np.maximum(vals[a[i]], vals[b[i]])
            elif k == _TANH:
                vals[i] = np.tanh(vals[a[i]])
            elif k == _AFFINE:
                ws, bias, xs = aux[i]
                acc = bias.value
                for w, x in zip(ws, xs):
                    acc = acc + w.value * vals[x]
                vals[i] = acc
            elif k == _CHOICE:
                ids, ws, quantized = aux[i]
                if quantized:
                    wv = np.array([w.value for w in ws])
                    j, s, alpha = _quantize_index(wv)
                    scratch[i] = (j, s, alpha)
                    vals[i] = (alpha * s) * vals[ids[j]]
                else:
                    acc = 0.0
                    for w, x in zip(ws, ids):
                        acc = acc + w.value * vals[x]
                    vals[i] = acc
            elif k == _QMUL:
                w, drop, _ = aux[i]
                q = 1.0 if w.value >= 0 else drop
                scratch[i] = (q,)
                vals[i] = q * vals[a[i]]
            elif k == _SHIFT:
                ids, margin = aux[i]
                lo = min(float(np.min(vals[x])) for x in ids)
                vals[i] = max(0.0, margin - lo)
        self.values = vals
        self._ran_forward = True

    def value(self, node: int):
        return self.values[node]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = 0.0

    def backward(self, out: int, seed=1.0) -> list[float]:
        """Accumulate d value(out) / d p into ``p.grad`` for every tape
        parameter; returns the gradients in registration order.

        ``seed`` is the adjoint of the output node (an array seed
        backpropagates a whole batch at once).
        """
        if not self._ran_forward:
            raise RuntimeError("backward() before forward()")
        n = len(self.kind)
        adj = [0.0] * n
        adj[out] = seed
        vals = self.values
        kind, a, b, aux = self.kind, self.a, self.b, self.aux
        scratch = self._scratch
        for i in range(n - 1, -1, -1):
            g = adj[i]
            if isinstance(g, float) and g == 0.0:
                continue
            k = kind[i]
            if k == _PARAM:
                _accum_param(aux[i], g)
            elif k == _ADD:
                adj[a[i]] += g
                adj[b[i]] += g
            elif k == _MUL:
                adj[a[i]] += g * vals[b[i]]
                adj[b[i]] += g * vals[a[i]]
            elif k == _NEG:
                adj[a[i]] = adj[a[i]] - g
            elif k == _MIN:
                wa = np.where(vals[a[i]] <= vals[b[i]], 1.0, 0.0)
                adj[a[i]] += g * wa
                adj[b[i]] += g * (1.0 - wa)
            elif k == _MAX:
                wa = np.where(vals[a[i]] >= vals[b[i]], 1.0, 0.0)
                adj[a[i]] += g * wa
                adj[b[i]] += g * (1.0 - wa)
            elif k == _TANH:
                adj[a[i]] += g * (1.0 - vals[i] * vals[i])
            elif k == _AFFINE:
                ws, bias, xs = aux[i]
                _accum_param(bias, g)
                for w, x in zip(ws, xs):
                    _accum_param(w, g * vals[x])
                    adj[x] += g * w.value
            elif k == _CHOICE:
                ids, ws, quantized = aux[i]
                if quantized:
                    j, s, alpha = scratch[i]
                    for w, x in zip(ws, ids):
                        _accum_param(w, g * vals[x])
                    adj[ids[j]] += g * (alpha * s)
                else:
                    for w, x in zip(ws, ids):
                        _accum_param(w, g * vals[x])
                        adj[x] += g * w.value
            elif k == _QMUL:
                w, drop, ste_sign = aux[i]
                (q,) = scratch[i]
                _accum_param(w, ste_sign * g * vals[a[i]])
                adj[a[i]] += g * q
            # _CONST and _SHIFT absorb their adjoints.
        return [p.grad for p in self.params]
