"""Past-time signal temporal logic formulas: AST, text grammar, length.

Formulas are immutable trees built from linear atoms ``w . x + b >= 0``,
boolean connectives, and the past-time temporal operators Once (``F``),
Historically (``G``) and Since (``S``).  Temporal operators carry a mask
selecting which step offsets into the past they range over; the default
mask is unbounded (all of ``0..t``).
"""

import re
from dataclasses import dataclass


class ParseError(ValueError):
    """Grammar violation, with the character position where it happened."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


@dataclass(frozen=True)
class Mask:
    """Step offsets into the past selected by a temporal operator.

    ``offsets`` is ``None`` for the unbounded operator, otherwise a sorted
    tuple of distinct non-negative integers.  Holes are allowed, e.g.
    ``(0, 1, 5)``.
    """

    offsets: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.offsets is None:
            return
        if len(self.offsets) == 0:
            raise ValueError("step mask must be non-empty")
        for o in self.offsets:
            if not isinstance(o, int) or o < 0:
                raise ValueError(f"mask offsets must be non-negative ints, got {o!r}")
        if any(a >= b for a, b in zip(self.offsets, self.offsets[1:])):
            raise ValueError("mask offsets must be strictly increasing")

    @classmethod
    def unbounded(cls) -> "Mask":
        return cls(None)

    @classmethod
    def steps(cls, offsets) -> "Mask":
        return cls(tuple(sorted(set(int(o) for o in offsets))))

    @classmethod
    def span(cls, lo: int, hi: int) -> "Mask":
        if lo > hi:
            raise ValueError(f"empty mask span [{lo},{hi}]")
        return cls(tuple(range(lo, hi + 1)))

    @property
    def is_unbounded(self) -> bool:
        return self.offsets is None

    @property
    def is_contiguous(self) -> bool:
        o = self.offsets
        return o is not None and o[-1] - o[0] == len(o) - 1

    def __str__(self) -> str:
        if self.offsets is None:
            return ""
        if self.is_contiguous:
            return f"[{self.offsets[0]},{self.offsets[-1]}]"
        return "[{" + ",".join(str(o) for o in self.offsets) + "}]"


UNBOUNDED = Mask(None)


class Formula:
    """Base class; subclasses are frozen dataclasses, so trees compare
    structurally and hash."""

    def __invert__(self):
        return Not(self)

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)


@dataclass(frozen=True)
class Atom(Formula):
    """Linear predicate ``sum_f weights[f] * x[f] + bias >= 0``."""

    weights: tuple[float, ...]
    bias: float

    @classmethod
    def single(cls, feature: int, direction: int, threshold: float, dim: int | None = None) -> "Atom":
        """Single-feature comparison: ``x<feature> >= threshold`` for
        ``direction=+1`` and ``x<feature> <= threshold`` for ``-1``."""
        d = feature + 1 if dim is None else dim
        w = [0.0] * d
        w[feature] = float(direction)
        return cls(tuple(w), -direction * float(threshold))


@dataclass(frozen=True)
class Not(Formula):
    child: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Once(Formula):
    child: Formula
    mask: Mask = UNBOUNDED


@dataclass(frozen=True)
class Hist(Formula):
    child: Formula
    mask: Mask = UNBOUNDED


@dataclass(frozen=True)
class Since(Formula):
    left: Formula
    right: Formula
    mask: Mask = UNBOUNDED


def formula_length(f: Formula) -> int:
    """Count of atoms plus operators.  Every node costs 1; masks are free."""
    if isinstance(f, Atom):
        return 1
    if isinstance(f, Not):
        return 1 + formula_length(f.child)
    if isinstance(f, (Once, Hist)):
        return 1 + formula_length(f.child)
    if isinstance(f, (And, Or, Since)):
        return 1 + formula_length(f.left) + formula_length(f.right)
    raise TypeError(f"not a formula node: {f!r}")


def has_bounded_mask(f: Formula) -> bool:
    if isinstance(f, Atom):
        return False
    if isinstance(f, Not):
        return has_bounded_mask(f.child)
    if isinstance(f, (Once, Hist)):
        return not f.mask.is_unbounded or has_bounded_mask(f.child)
    if isinstance(f, (And, Or)):
        return has_bounded_mask(f.left) or has_bounded_mask(f.right)
    if isinstance(f, Since):
        return not f.mask.is_unbounded or has_bounded_mask(f.left) or has_bounded_mask(f.right)
    raise TypeError(f"not a formula node: {f!r}")


def atom_threshold(a: Atom) -> tuple[int, int, float]:
    """Decompose a single-feature atom into (feature, direction, threshold).

    ``direction=+1`` means ``x >= threshold``; requires exactly one nonzero
    weight.
    """
    nz = [i for i, w in enumerate(a.weights) if w != 0.0]
    if len(nz) != 1:
        raise ValueError(f"atom is not a single-feature comparison: {a}")
    i = nz[0]
    w = a.weights[i]
    return i, (1 if w > 0 else -1), -a.bias / w


# --------------------------------------------------------------------------
# Printing
# --------------------------------------------------------------------------

def _format_atom(a: Atom) -> str:
    nz = [i for i, w in enumerate(a.weights) if w != 0.0]
    if len(nz) == 1:
        # Printed as the threshold comparison x >= -b/w (sign-equivalent;
        # scaling by 1/|w| never changes which side of 0 robustness is on).
        i, d, theta = atom_threshold(a)
        op = ">=" if d > 0 else "<="
        return f"x{i} {op} {theta!r}"
    # General affine atom; not part of the single-feature grammar but
    # printable and re-parseable ("a*x0 + b*x1 + c >= 0").
    terms = [f"{w!r}*x{i}" for i, w in enumerate(a.weights)]
    terms.append(repr(a.bias))
    return " + ".join(terms) + " >= 0"


def format_formula(f: Formula) -> str:
    """Canonical, fully parenthesized text in the ASCII grammar."""
    if isinstance(f, Atom):
        return _format_atom(f)
    if isinstance(f, Not):
        return f"!({format_formula(f.child)})"
    if isinstance(f, Once):
        return f"F{f.mask} ({format_formula(f.child)})"
    if isinstance(f, Hist):
        return f"G{f.mask} ({format_formula(f.child)})"
    if isinstance(f, And):
        return f"({format_formula(f.left)}) & ({format_formula(f.right)})"
    if isinstance(f, Or):
        return f"({format_formula(f.left)}) | ({format_formula(f.right)})"
    if isinstance(f, Since):
        return f"({format_formula(f.left)}) S{f.mask} ({format_formula(f.right)})"
    raise TypeError(f"not a formula node: {f!r}")


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<float>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<feat>x\d+)"
    r"|(?P<cmp>>=|<=)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<punct>[!&|()\[\]{},*+])"
    r")"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == m.start():
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise ParseError(f"unexpected character {text[at]!r}", at)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("eof", "", len(self.text))

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.next()
        if val != value:
            raise ParseError(f"expected {value!r}, got {val or 'end of input'!r}", pos)

    def error(self, msg: str):
        raise ParseError(msg, self.peek()[2])

    # formula := element [('&'|'|'|'S' mask?) element]
    def parse_formula(self) -> Formula:
        left = self.parse_element()
        kind, val, pos = self.peek()
        if val in ("&", "|") or (kind == "ident" and val == "S"):
            self.next()
            if val == "S":
                mask = self.parse_mask_opt()
                right = self.parse_element()
                node = Since(left, right, mask)
            else:
                right = self.parse_element()
                node = And(left, right) if val == "&" else Or(left, right)
            nk, nv, npos = self.peek()
            if nv in ("&", "|") or (nk == "ident" and nv == "S"):
                raise ParseError("chained binary operators need parentheses", npos)
            return node
        return left

    # element := '!' element | ('F'|'G') mask? element | '(' formula ')' | atom
    def parse_element(self) -> Formula:
        kind, val, pos = self.peek()
        if val == "!":
            self.next()
            return Not(self.parse_element())
        if kind == "ident" and val in ("F", "G"):
            self.next()
            mask = self.parse_mask_opt()
            child = self.parse_element()
            return Once(child, mask) if val == "F" else Hist(child, mask)
        if val == "(":
            self.next()
            node = self.parse_formula()
            self.expect(")")
            return node
        if kind in ("feat", "float"):
            return self.parse_atom()
        if kind == "ident":
            raise ParseError(f"unknown feature name {val!r} (features are x0, x1, ...)", pos)
        self.error(f"expected a formula, got {val or 'end of input'!r}")

    def parse_mask_opt(self) -> Mask:
        if self.peek()[1] != "[":
            return UNBOUNDED
        self.next()
        if self.peek()[1] == "{":
            self.next()
            offsets = [self.parse_int()]
            while self.peek()[1] == ",":
                self.next()
                offsets.append(self.parse_int())
            self.expect("}")
            self.expect("]")
            if len(set(offsets)) != len(offsets):
                raise ParseError("duplicate offsets in mask", self.peek()[2])
            return Mask(tuple(sorted(offsets)))
        lo = self.parse_int()
        self.expect(",")
        hi = self.parse_int()
        self.expect("]")
        if lo > hi:
            raise ParseError(f"malformed mask: [{lo},{hi}] is empty", self.peek()[2])
        return Mask.span(lo, hi)

    def parse_int(self) -> int:
        kind, val, pos = self.next()
        if kind != "float" or not re.fullmatch(r"\d+", val):
            raise ParseError(f"expected a non-negative integer, got {val!r}", pos)
        return int(val)

    def parse_atom(self) -> Formula:
        # Either "x<k> >= c" / "x<k> <= c" or the affine extension
        # "c0*x0 + c1*x1 + b >= 0".
        kind, val, pos = self.peek()
        if kind == "feat" and self.i + 1 < len(self.tokens) and self.tokens[self.i + 1][0] == "cmp":
            self.next()
            feature = int(val[1:])
            _, op, _ = self.next()
            ckind, cval, cpos = self.next()
            if ckind != "float":
                raise ParseError(f"expected a number, got {cval!r}", cpos)
            direction = 1 if op == ">=" else -1
            return Atom.single(feature, direction, float(cval))
        return self.parse_affine_atom()

    def parse_affine_atom(self) -> Formula:
        coeffs: dict[int, float] = {}
        bias = 0.0
        while True:
            kind, val, pos = self.next()
            if kind != "float":
                raise ParseError(f"expected a coefficient, got {val!r}", pos)
            c = float(val)
            if self.peek()[1] == "*":
                self.next()
                fkind, fval, fpos = self.next()
                if fkind != "feat":
                    raise ParseError(f"expected a feature after '*', got {fval!r}", fpos)
                idx = int(fval[1:])
                coeffs[idx] = coeffs.get(idx, 0.0) + c
            else:
                bias += c
            if self.peek()[1] == "+":
                self.next()
                continue
            break
        kind, val, pos = self.next()
        if kind != "cmp" or val != ">=":
            raise ParseError("affine atoms must end with '>= 0'", pos)
        zkind, zval, zpos = self.next()
        if zkind != "float" or float(zval) != 0.0:
            raise ParseError("affine atoms must compare against 0", zpos)
        d = max(coeffs, default=-1) + 1
        w = [coeffs.get(i, 0.0) for i in range(d)]
        return Atom(tuple(w), bias)


def parse_formula(text: str) -> Formula:
    """Parse formula text; raises :class:`ParseError` on bad input."""
    p = _Parser(text)
    if not p.tokens:
        raise ParseError("empty formula", 0)
    node = p.parse_formula()
    kind, val, pos = p.peek()
    if kind != "eof":
        raise ParseError(f"unexpected trailing input {val!r}", pos)
    return node
