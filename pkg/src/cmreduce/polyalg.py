"""Exact sparse polynomials in three variable blocks: centre ``x``, stable ``y``
and parameters ``eps``.

Coefficients are :class:`fractions.Fraction`; floats only appear in
:func:`evaluate`.  Polynomials are immutable and never store a zero
coefficient, so equality of term maps is structural equality.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence

__all__ = [
    "Rational",
    "Layout",
    "Monomial",
    "Polynomial",
    "LayoutError",
    "UnknownVariableError",
    "arith_add",
    "arith_mul",
    "differentiate",
    "substitute_stable",
    "evaluate",
    "series_reciprocal",
    "to_rational",
]

Rational = Fraction

BLOCKS = ("x", "y", "eps")


class LayoutError(ValueError):
    pass


class UnknownVariableError(KeyError):
    pass


def to_rational(value) -> Fraction:
    """Coerce ints, Fractions and ``"num/den"`` strings; floats are refused."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a coefficient")
    if isinstance(value, (int, str)):
        return Fraction(value)
    raise TypeError(f"cannot use {type(value).__name__} as an exact coefficient")


class Layout(NamedTuple):
    """Variable names of the three blocks, in component order."""

    x: tuple[str, ...]
    y: tuple[str, ...] = ()
    eps: tuple[str, ...] = ()

    @classmethod
    def generic(cls, m: int, n: int = 0, l: int = 0) -> "Layout":
        def names(stem, k):
            return (stem,) if k == 1 else tuple(f"{stem}{i + 1}" for i in range(k))

        return cls(names("x", m), names("y", n), names("eps", l))

    @property
    def m(self) -> int:
        return len(self.x)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def l(self) -> int:
        return len(self.eps)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.m, self.n, self.l)

    def locate(self, name: str) -> tuple[str, int]:
        """Return ``(block, index)`` for a variable name."""
        for block in BLOCKS:
            names = getattr(self, block)
            if name in names:
                return block, names.index(name)
        raise UnknownVariableError(name)

    def names(self) -> tuple[str, ...]:
        return self.x + self.y + self.eps

    def to_dict(self) -> dict:
        return {"x": list(self.x), "y": list(self.y), "eps": list(self.eps)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Layout":
        return cls(tuple(d.get("x", ())), tuple(d.get("y", ())), tuple(d.get("eps", ())))


class Monomial(NamedTuple):
    """Exponent vectors for the x, y and eps blocks."""

    x: tuple[int, ...]
    y: tuple[int, ...]
    eps: tuple[int, ...]

    @classmethod
    def one(cls, layout: Layout) -> "Monomial":
        return cls((0,) * layout.m, (0,) * layout.n, (0,) * layout.l)

    @classmethod
    def var(cls, layout: Layout, block: str, index: int, power: int = 1) -> "Monomial":
        blocks = {b: [0] * len(getattr(layout, b)) for b in BLOCKS}
        if not 0 <= index < len(blocks[block]):
            raise UnknownVariableError(f"{block}[{index}]")
        blocks[block][index] = power
        return cls(*(tuple(blocks[b]) for b in BLOCKS))

    @property
    def degree(self) -> int:
        return sum(self.x) + sum(self.y) + sum(self.eps)

    @property
    def xdegree(self) -> int:
        return sum(self.x)

    @property
    def edegree(self) -> int:
        return sum(self.eps)

    def is_y_free(self) -> bool:
        return not any(self.y)

    def __mul__(self, other: "Monomial") -> "Monomial":  # type: ignore[override]
        return Monomial(
            tuple(a + b for a, b in zip(self.x, other.x)),
            tuple(a + b for a, b in zip(self.y, other.y)),
            tuple(a + b for a, b in zip(self.eps, other.eps)),
        )

    def sort_key(self):
        # graded lex: total degree, then x, y, eps blocks
        return (self.degree, self.x, self.y, self.eps)


def _fmt_coeff(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


class Polynomial:
    """Immutable sparse polynomial over a :class:`Layout`.

    ``terms`` maps :class:`Monomial` to nonzero :class:`Fraction`.
    """

    __slots__ = ("_layout", "_terms", "_hash")

    def __init__(self, layout: Layout, terms: Mapping[Monomial, object] | None = None):
        self._layout = layout
        clean: dict[Monomial, Fraction] = {}
        for mono, c in (terms or {}).items():
            c = to_rational(c)
            if c:
                mono = Monomial(*mono)
                if (len(mono.x), len(mono.y), len(mono.eps)) != layout.shape:
                    raise LayoutError(f"monomial {mono} does not fit layout {layout.shape}")
                clean[mono] = clean.get(mono, 0) + c
                if not clean[mono]:
                    del clean[mono]
        self._terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, layout: Layout, terms: dict) -> "Polynomial":
        # trusted constructor: terms already canonical
        p = cls.__new__(cls)
        p._layout = layout
        p._terms = terms
        p._hash = None
        return p

    @classmethod
    def zero(cls, layout: Layout) -> "Polynomial":
        return cls._raw(layout, {})

    @classmethod
    def constant(cls, layout: Layout, c) -> "Polynomial":
        return cls(layout, {Monomial.one(layout): c})

    @classmethod
    def variable(cls, layout: Layout, name: str) -> "Polynomial":
        block, i = layout.locate(name)
        return cls._raw(layout, {Monomial.var(layout, block, i): Fraction(1)})

    @classmethod
    def monomial(cls, layout: Layout, mono: Monomial, c=1) -> "Polynomial":
        return cls(layout, {mono: c})

    @property
    def layout(self) -> Layout:
        return self._layout

    @property
    def terms(self) -> Mapping[Monomial, Fraction]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def coeff(self, mono: Monomial) -> Fraction:
        return self._terms.get(Monomial(*mono), Fraction(0))

    def sorted_terms(self) -> list[tuple[Monomial, Fraction]]:
        return sorted(self._terms.items(), key=lambda t: t[0].sort_key())

    def is_y_free(self) -> bool:
        return all(m.is_y_free() for m in self._terms)

    @property
    def min_degree(self) -> int | None:
        return min((m.degree for m in self._terms), default=None)

    @property
    def max_degree(self) -> int | None:
        return max((m.degree for m in self._terms), default=None)

    def homogeneous(self, d: int) -> "Polynomial":
        return Polynomial._raw(self._layout, {m: c for m, c in self._terms.items() if m.degree == d})

    def filter(self, keep) -> "Polynomial":
        return Polynomial._raw(self._layout, {m: c for m, c in self._terms.items() if keep(m)})

    # -- arithmetic ----------------------------------------------------------

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other._layout != self._layout:
                raise LayoutError(f"layout mismatch: {self._layout} vs {other._layout}")
            return other
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return Polynomial.constant(self._layout, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            s = out.get(m, 0) + c
            if s:
                out[m] = s
            else:
                out.pop(m, None)
        return Polynomial._raw(self._layout, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw(self._layout, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "Polynomial":
        c = to_rational(c)
        if not c:
            return Polynomial.zero(self._layout)
        return Polynomial._raw(self._layout, {m: c * v for m, v in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return self.scale(other)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = m1 * m2
                out[m] = out.get(m, 0) + c1 * c2
        return Polynomial._raw(self._layout, {m: c for m, c in out.items() if c})

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        if k < 0:
            raise ValueError("negative power")
        result = Polynomial.constant(self._layout, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, Polynomial):
            return self._layout == other._layout and self._terms == other._terms
        if isinstance(other, (int, Fraction)) and not isinstance(other, bool):
            return self == Polynomial.constant(self._layout, other)
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._layout, frozenset(self._terms.items())))
        return self._hash

    # -- display / serialization --------------------------------------------

    def monomial_str(self, mono: Monomial) -> str:
        # parameters first, then centre, then stable: "eps * x^2"
        parts = []
        for block in ("eps", "x", "y"):
            for name, e in zip(getattr(self._layout, block), getattr(mono, block)):
                if e == 1:
                    parts.append(name)
                elif e > 1:
                    parts.append(f"{name}^{e}")
        return " * ".join(parts)

    def term_str(self, mono: Monomial, c: Fraction) -> str:
        body = self.monomial_str(mono)
        mag = abs(c)
        sign = "-" if c < 0 else ""
        if not body:
            return sign + _fmt_coeff(mag)
        if mag == 1:
            return sign + body
        return f"{sign}{_fmt_coeff(mag)} * {body}"

    def __str__(self) -> str:
        terms = self.sorted_terms()
        if not terms:
            return "0"
        out = self.term_str(*terms[0])
        for mono, c in terms[1:]:
            s = self.term_str(mono, abs(c))
            out += (" - " if c < 0 else " + ") + s
        return out

    def __repr__(self) -> str:
        return f"Polynomial({self})"

    def to_terms(self) -> list[dict]:
        return [
            {
                "coeff": f"{c.numerator}/{c.denominator}",
                "x": list(m.x),
                "y": list(m.y),
                "eps": list(m.eps),
            }
            for m, c in self.sorted_terms()
        ]

    @classmethod
    def from_terms(cls, layout: Layout, terms: Iterable[Mapping]) -> "Polynomial":
        out = {}
        for t in terms:
            mono = Monomial(
                tuple(t.get("x", [0] * layout.m)),
                tuple(t.get("y", [0] * layout.n)),
                tuple(t.get("eps", [0] * layout.l)),
            )
            if any(e < 0 for e in mono.x + mono.y + mono.eps):
                raise ValueError(f"negative exponent in {t}")
            out[mono] = out.get(mono, 0) + Fraction(str(t["coeff"]))
        return cls(layout, out)


def _check_same(a: Polynomial, b: Polynomial) -> None:
    if a.layout != b.layout:
        raise LayoutError(f"layout mismatch: {a.layout} vs {b.layout}")


def arith_add(a: Polynomial, b: Polynomial) -> Polynomial:
    _check_same(a, b)
    return a + b


def arith_mul(a: Polynomial, b: Polynomial) -> Polynomial:
    _check_same(a, b)
    return a * b


def _resolve(layout: Layout, var) -> tuple[str, int]:
    if isinstance(var, str):
        return layout.locate(var)
    block, i = var
    if block not in BLOCKS or not 0 <= i < len(getattr(layout, block)):
        raise UnknownVariableError(f"{block}[{i}]")
    return block, i


def differentiate(p: Polynomial, var) -> Polynomial:
    """Formal partial derivative; ``var`` is a name or a ``(block, index)`` pair."""
    block, i = _resolve(p.layout, var)
    k = BLOCKS.index(block)
    out = {}
    for mono, c in p.items():
        exps = mono[k]
        e = exps[i]
        if e:
            new = list(mono)
            new[k] = exps[:i] + (e - 1,) + exps[i + 1:]
            out[Monomial(*new)] = c * e
    return Polynomial._raw(p.layout, out)


def substitute_stable(p: Polynomial, phi: Sequence[Polynomial]) -> Polynomial:
    """Replace every stable variable ``y_j`` by ``phi[j]`` and expand."""
    layout = p.layout
    if len(phi) != layout.n:
        raise LayoutError(f"need {layout.n} substitutions, got {len(phi)}")
    for j, q in enumerate(phi):
        _check_same(p, q)
        if not q.is_y_free():
            raise ValueError(f"substitution for {layout.y[j]} mentions a stable variable")
    zero_y = (0,) * layout.n
    powers: list[dict[int, Polynomial]] = [{0: Polynomial.constant(layout, 1), 1: q} for q in phi]

    def power(j, e):
        if e not in powers[j]:
            powers[j][e] = power(j, e - 1) * phi[j]
        return powers[j][e]

    result = Polynomial.zero(layout)
    for mono, c in p.items():
        term = Polynomial._raw(layout, {Monomial(mono.x, zero_y, mono.eps): c})
        for j, e in enumerate(mono.y):
            if e:
                term = term * power(j, e)
        result = result + term
    return result


def evaluate(p: Polynomial, point: Mapping[str, float]) -> float:
    """Evaluate at a point given as ``{name: value}``.

    Only variables that occur with a nonzero exponent need a value.
    """
    layout = p.layout
    values = {}
    for block in BLOCKS:
        vals = []
        for i, name in enumerate(getattr(layout, block)):
            used = any(getattr(m, block)[i] for m in p)
            if name in point:
                vals.append(float(point[name]))
            elif used:
                raise KeyError(f"no value for variable {name!r}")
            else:
                vals.append(0.0)
        values[block] = vals
    total = 0.0
    for mono, c in p.items():
        t = float(c)
        for block in BLOCKS:
            for v, e in zip(values[block], getattr(mono, block)):
                if e:
                    t *= v**e
        total += t
    return total


def series_reciprocal(p: Polynomial, spec) -> Polynomial:
    """Truncated reciprocal ``r`` with ``truncate(p * r, spec) == 1``.

    Iterates ``r <- c0^-1 * (1 - (p - c0) * r)`` under truncation; each pass
    fixes at least one more total degree, and the kept set is finite.
    """
    from .order import truncate

    one = Monomial.one(p.layout)
    c0 = p.coeff(one)
    if not c0:
        raise ZeroDivisionError("series_reciprocal needs a nonzero constant term")
    inv = 1 / c0
    tail = p - c0
    r = truncate(Polynomial.constant(p.layout, inv), spec)
    while True:
        nxt = truncate((1 - tail * r).scale(inv), spec)
        if nxt == r:
            return r
        r = nxt
