"""STL fragment: region predicates, temporal atoms, parsing and segmentation.

Formulae are conjunctions of single-layer temporal atoms ``G``, ``F``, ``U``
and ``U'`` over region predicates built from axis-aligned intervals.  All
temporal intervals are absolute integer instants.
"""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Pred", "TrueP", "Box", "Not", "And", "Or", "TRUE",
    "Op", "TemporalAtom", "G", "F", "U", "Up", "Formula", "Segment", "SegmentedFormula",
    "FormulaSyntaxError", "FormulaError", "OverlapError",
    "parse_formula", "format_formula", "format_pred", "formula_digest",
    "rewrite_until", "segment", "horizon", "contains", "pred_dims",
]


class FormulaError(ValueError):
    """Invalid formula content (interval, variable, dimension)."""


class FormulaSyntaxError(FormulaError):
    def __init__(self, message: str, pos: int, text: str = ""):
        self.pos = pos
        self.text = text
        super().__init__(f"{message} at position {pos}")


class OverlapError(FormulaError):
    """Two temporal atoms overlap and are not both ``G``."""


# --------------------------------------------------------------------------
# Region predicates


class Pred:
    """Base class of region expressions."""

    __slots__ = ()


@dataclass(frozen=True)
class TrueP(Pred):
    pass


TRUE = TrueP()


@dataclass(frozen=True)
class Box(Pred):
    """``x_{dim+1} in [lo, hi]``; ``dim`` is 0-based."""

    dim: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.dim < 0:
            raise FormulaError(f"negative dimension index {self.dim}")
        if not self.lo <= self.hi:
            raise FormulaError(f"empty interval [{self.lo}, {self.hi}] on x{self.dim + 1}")


@dataclass(frozen=True)
class Not(Pred):
    arg: Pred


@dataclass(frozen=True)
class And(Pred):
    args: tuple[Pred, ...]

    @staticmethod
    def of(*args: Pred) -> Pred:
        flat: list[Pred] = []
        for a in args:
            flat.extend(a.args if isinstance(a, And) else (a,))
        return flat[0] if len(flat) == 1 else And(tuple(flat))


@dataclass(frozen=True)
class Or(Pred):
    args: tuple[Pred, ...]

    @staticmethod
    def of(*args: Pred) -> Pred:
        flat: list[Pred] = []
        for a in args:
            flat.extend(a.args if isinstance(a, Or) else (a,))
        return flat[0] if len(flat) == 1 else Or(tuple(flat))


def pred_dims(p: Pred) -> set[int]:
    """Dimension indices referenced by ``p``."""
    if isinstance(p, Box):
        return {p.dim}
    if isinstance(p, Not):
        return pred_dims(p.arg)
    if isinstance(p, (And, Or)):
        return set().union(*(pred_dims(a) for a in p.args))
    return set()


def contains(p: Pred, points) -> np.ndarray | bool:
    """Exact membership of one point (shape ``(n,)``) or many (``(N, n)``)."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts2 = pts[None, :] if single else pts
    out = _contains(p, pts2)
    return bool(out[0]) if single else out


def _contains(p: Pred, pts: np.ndarray) -> np.ndarray:
    if isinstance(p, TrueP):
        return np.ones(len(pts), dtype=bool)
    if isinstance(p, Box):
        if p.dim >= pts.shape[1]:
            raise FormulaError(f"x{p.dim + 1} out of range for {pts.shape[1]}-dimensional state")
        v = pts[:, p.dim]
        return (v >= p.lo) & (v <= p.hi)
    if isinstance(p, Not):
        return ~_contains(p.arg, pts)
    if isinstance(p, And):
        out = _contains(p.args[0], pts)
        for a in p.args[1:]:
            out &= _contains(a, pts)
        return out
    if isinstance(p, Or):
        out = _contains(p.args[0], pts)
        for a in p.args[1:]:
            out |= _contains(a, pts)
        return out
    raise TypeError(f"not a predicate: {p!r}")


# --------------------------------------------------------------------------
# Temporal layer


class Op(str, enum.Enum):
    ALWAYS = "G"
    EVENTUALLY = "F"
    UNTIL = "U"
    UNTIL_PRIME = "U'"


@dataclass(frozen=True)
class TemporalAtom:
    op: Op
    a: int
    b: int
    regions: tuple[Pred, ...]

    def __post_init__(self):
        if isinstance(self.a, bool) or isinstance(self.b, bool):
            raise FormulaError("interval bounds must be integers")
        if not (isinstance(self.a, (int, np.integer)) and isinstance(self.b, (int, np.integer))):
            raise FormulaError("interval bounds must be integers")
        if self.a < 0 or self.b < 0:
            raise FormulaError(f"negative interval [{self.a},{self.b}]")
        if self.a > self.b:
            raise FormulaError(f"reversed interval [{self.a},{self.b}]")
        want = 2 if self.op in (Op.UNTIL, Op.UNTIL_PRIME) else 1
        if len(self.regions) != want:
            raise FormulaError(f"{self.op.value} takes {want} region(s), got {len(self.regions)}")


def G(a: int, b: int, h: Pred) -> TemporalAtom:
    return TemporalAtom(Op.ALWAYS, a, b, (h,))


def F(a: int, b: int, h: Pred) -> TemporalAtom:
    return TemporalAtom(Op.EVENTUALLY, a, b, (h,))


def U(h1: Pred, a: int, b: int, h2: Pred) -> TemporalAtom:
    return TemporalAtom(Op.UNTIL, a, b, (h1, h2))


def Up(h1: Pred, a: int, b: int, h2: Pred) -> TemporalAtom:
    return TemporalAtom(Op.UNTIL_PRIME, a, b, (h1, h2))


@dataclass(frozen=True)
class Formula:
    atoms: tuple[TemporalAtom, ...]

    def __post_init__(self):
        if not self.atoms:
            raise FormulaError("formula has no temporal atoms")

    def dims(self) -> set[int]:
        return set().union(*(pred_dims(r) for at in self.atoms for r in at.regions))


def horizon(f: Formula) -> tuple[int, int]:
    """``(S, T)``: first and last instant the formula refers to."""
    return min(at.a for at in f.atoms), max(at.b for at in f.atoms)


def rewrite_until(f: Formula) -> Formula:
    """Replace every ``h1 U[a,b] h2`` by ``G[0,a-1] h1`` and ``h1 U'[a,b] h2``."""
    out: list[TemporalAtom] = []
    for at in f.atoms:
        if at.op is Op.UNTIL:
            h1, h2 = at.regions
            if at.a > 0:
                out.append(G(0, at.a - 1, h1))
            out.append(Up(h1, at.a, at.b, h2))
        else:
            out.append(at)
    return Formula(tuple(out))


# --------------------------------------------------------------------------
# Segmentation


@dataclass(frozen=True)
class Segment:
    op: Op
    a: int
    b: int
    regions: tuple[Pred, ...]
    padding: bool = False

    @property
    def target(self) -> Pred:
        """Region whose visit discharges an F/U' obligation (G: the stay region)."""
        if self.op is Op.UNTIL_PRIME:
            return And.of(*self.regions)
        return self.regions[0]

    def as_atom(self) -> TemporalAtom:
        return TemporalAtom(self.op, self.a, self.b, self.regions)


@dataclass(frozen=True)
class SegmentedFormula:
    segments: tuple[Segment, ...]
    source: Formula
    index: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = self.segments
        if not segs or segs[0].a != 0:
            raise FormulaError("segments must start at instant 0")
        for s, t in zip(segs, segs[1:]):
            if t.a != s.b + 1:
                raise FormulaError(f"segments [{s.a},{s.b}] and [{t.a},{t.b}] are not contiguous")
        if any(s.op is Op.UNTIL for s in segs):
            raise FormulaError("raw U segment; apply rewrite_until first")
        idx = []
        for i, s in enumerate(segs):
            idx.extend([i] * (s.b - s.a + 1))
        object.__setattr__(self, "index", tuple(idx))

    @property
    def horizon(self) -> int:
        return self.segments[-1].b

    def __len__(self) -> int:
        return len(self.segments)

    def segment_index(self, k: int) -> int:
        """0-based index of the segment active at instant ``k`` (min i with k <= b_i)."""
        if not 0 <= k <= self.horizon:
            raise IndexError(f"instant {k} outside [0, {self.horizon}]")
        return self.index[k]

    def segment_at(self, k: int) -> Segment:
        return self.segments[self.segment_index(k)]

    def op_at(self, k: int) -> Op:
        return self.segment_at(k).op

    def as_formula(self) -> Formula:
        return Formula(tuple(s.as_atom() for s in self.segments))


def segment(f: Formula, state_space: Sequence[tuple[float, float]] | None = None) -> SegmentedFormula:
    """Normalize ``f`` into a conjunction of segments partitioning ``[0, T]``.

    Raw ``U`` atoms are rewritten first.  Overlapping ``G`` atoms are split
    into disjoint runs with intersected regions; any other overlap raises
    :class:`OverlapError`.  Uncovered instants get ``G x in X`` padding.
    """
    if state_space is not None:
        n = len(state_space)
        for d in f.dims():
            if d >= n:
                raise FormulaError(f"x{d + 1} out of range for {n}-dimensional state space")
        pad_region = And.of(*(Box(d, float(lo), float(hi)) for d, (lo, hi) in enumerate(state_space)))
    else:
        pad_region = TRUE
    atoms = rewrite_until(f).atoms
    T = max(at.b for at in atoms)

    always = [at for at in atoms if at.op is Op.ALWAYS]
    others = sorted((at for at in atoms if at.op is not Op.ALWAYS), key=lambda at: (at.a, at.b))

    owner: list[TemporalAtom | None] = [None] * (T + 1)
    for at in others:
        for k in range(at.a, at.b + 1):
            if owner[k] is not None:
                raise OverlapError(
                    f"{_atom_str(owner[k])} overlaps {_atom_str(at)} at instant {k}")
            owner[k] = at
    # Stable order of G atoms by start, then by position in the formula.
    always_sorted = sorted(enumerate(always), key=lambda p: (p[1].a, p[0]))
    cover: list[tuple[int, ...]] = [()] * (T + 1)
    for j, at in always_sorted:
        for k in range(at.a, at.b + 1):
            if owner[k] is not None:
                raise OverlapError(
                    f"{_atom_str(at)} overlaps {_atom_str(owner[k])} at instant {k}")
            cover[k] = cover[k] + (j,)

    segs: list[Segment] = []
    k = 0
    while k <= T:
        at = owner[k]
        if at is not None:
            segs.append(Segment(at.op, at.a, at.b, at.regions))
            k = at.b + 1
            continue
        key = cover[k]
        end = k
        while end + 1 <= T and owner[end + 1] is None and cover[end + 1] == key:
            end += 1
        if key:
            region = And.of(*(always[j].regions[0] for j in key))
            segs.append(Segment(Op.ALWAYS, k, end, (region,)))
        else:
            segs.append(Segment(Op.ALWAYS, k, end, (pad_region,), padding=True))
        k = end + 1
    return SegmentedFormula(tuple(segs), f)


def _atom_str(at: TemporalAtom) -> str:
    return f"{at.op.value}[{at.a},{at.b}]"


# --------------------------------------------------------------------------
# Printing


def _num(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def format_pred(p: Pred) -> str:
    """Print a predicate body (without the enclosing parentheses of ``pred``)."""
    if isinstance(p, TrueP):
        return "true"
    if isinstance(p, Box):
        return f"x{p.dim + 1} in [{_num(p.lo)},{_num(p.hi)}]"
    if isinstance(p, Not):
        inner = format_pred(p.arg)
        return "!" + (inner if isinstance(p.arg, (TrueP, Box, Not)) else f"({inner})")
    if isinstance(p, And):
        return " & ".join(f"({format_pred(a)})" if isinstance(a, Or) else format_pred(a) for a in p.args)
    if isinstance(p, Or):
        return " | ".join(format_pred(a) for a in p.args)
    raise TypeError(f"not a predicate: {p!r}")


def format_formula(f: Formula) -> str:
    parts = []
    for at in f.atoms:
        iv = f"[{at.a},{at.b}]"
        if at.op in (Op.ALWAYS, Op.EVENTUALLY):
            parts.append(f"{at.op.value}{iv} ({format_pred(at.regions[0])})")
        else:
            h1, h2 = at.regions
            parts.append(f"({format_pred(h1)}) {at.op.value}{iv} ({format_pred(h2)})")
    return " & ".join(parts)


def formula_digest(f: Formula) -> str:
    """SHA-256 of the canonical text of ``f``."""
    return hashlib.sha256(format_formula(f).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<num>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<uprime>U')
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<sym>[()\[\],&|!])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, dim: int | None):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.dim = dim

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        found = tok.text or "end of input"
        raise FormulaSyntaxError(f"{msg}, found {found!r}", tok.pos, self.text)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("sym", "ident", "uprime"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        tok = self.tok
        if not self.accept(text):
            self.error(f"expected {text!r}")
        return tok

    def formula(self) -> Formula:
        atoms = [self.temporal()]
        while self.accept("&"):
            atoms.append(self.temporal())
        if self.tok.kind != "eof":
            self.error("expected '&' or end of input")
        return Formula(tuple(atoms))

    def interval(self) -> tuple[int, int]:
        start = self.expect("[")
        a = self.integer()
        self.expect(",")
        b = self.integer()
        self.expect("]")
        if a > b:
            raise FormulaSyntaxError(f"reversed interval [{a},{b}]", start.pos, self.text)
        return a, b

    def integer(self) -> int:
        tok = self.tok
        if tok.kind != "num" or not re.fullmatch(r"\+?\d+", tok.text):
            self.error("expected non-negative integer instant")
        self.i += 1
        return int(tok.text)

    def real(self) -> float:
        tok = self.tok
        if tok.kind != "num":
            self.error("expected number")
        self.i += 1
        return float(tok.text)

    def temporal(self) -> TemporalAtom:
        tok = self.tok
        if tok.kind == "ident" and tok.text in ("G", "F"):
            self.i += 1
            a, b = self.interval()
            h = self.pred()
            return TemporalAtom(Op(tok.text), a, b, (h,))
        if tok.text == "(":
            h1 = self.pred()
            op_tok = self.tok
            if op_tok.kind == "uprime":
                op = Op.UNTIL_PRIME
            elif op_tok.kind == "ident" and op_tok.text == "U":
                op = Op.UNTIL
            else:
                self.error("expected 'U' or \"U'\" after predicate")
            self.i += 1
            a, b = self.interval()
            h2 = self.pred()
            return TemporalAtom(op, a, b, (h1, h2))
        self.error("expected temporal operator G, F or a parenthesized predicate")

    def pred(self) -> Pred:
        self.expect("(")
        p = self.predexpr()
        self.expect(")")
        return p

    def predexpr(self) -> Pred:
        # '&' binds tighter than '|'
        disj = [self.conj()]
        while self.accept("|"):
            disj.append(self.conj())
        return Or.of(*disj)

    def conj(self) -> Pred:
        terms = [self.term()]
        while self.accept("&"):
            terms.append(self.term())
        return And.of(*terms)

    def term(self) -> Pred:
        tok = self.tok
        if self.accept("!"):
            return Not(self.term())
        if self.accept("("):
            p = self.predexpr()
            self.expect(")")
            return p
        if tok.kind == "ident" and tok.text == "true":
            self.i += 1
            return TRUE
        if tok.kind == "ident":
            m = re.fullmatch(r"x(\d+)", tok.text)
            if m is None or int(m.group(1)) < 1:
                raise FormulaSyntaxError(f"unknown variable {tok.text!r}", tok.pos, self.text)
            d = int(m.group(1)) - 1
            if self.dim is not None and d >= self.dim:
                raise FormulaSyntaxError(
                    f"variable {tok.text} out of range for dimension {self.dim}", tok.pos, self.text)
            self.i += 1
            self.expect("in")
            lb = self.expect("[")
            lo = self.real()
            self.expect(",")
            hi = self.real()
            self.expect("]")
            if lo > hi:
                raise FormulaSyntaxError(f"reversed interval [{lo},{hi}]", lb.pos, self.text)
            return Box(d, lo, hi)
        self.error("expected predicate term")


def parse_formula(text: str, dim: int | None = None) -> Formula:
    """Parse formula source text.

    ``dim`` bounds the allowed variable indices ``x1..x{dim}`` when given.

    >>> parse_formula("G[0,5] (x1 in [0,1])").atoms[0].op
    <Op.ALWAYS: 'G'>
    """
    return _Parser(text, dim).formula()


RegionTest = Callable[[Pred, np.ndarray], np.ndarray]
