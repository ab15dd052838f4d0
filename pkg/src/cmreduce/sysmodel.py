"""Dynamical systems in standard split form

    x' = A x + f(x, y, eps),    y' = B y + g(x, y, eps),

with a text front end.  Parameters are adjoined implicitly: ``eps' = 0`` is
never written down, the names in ``[params]`` simply become the eps block.

File format::

    # prototype bifurcation
    [centre]
    x' = eps*x - x*y
    [stable]
    y' = -y + x^2
    [params]
    eps
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from .polyalg import Layout, Monomial, Polynomial

__all__ = [
    "CentreSystem",
    "SpectrumReport",
    "SystemSyntaxError",
    "SystemValidationError",
    "SpectrumError",
    "parse_system",
    "parse_expression",
    "serialize_system",
    "validate_spectrum",
    "validate_layout",
]

SPLIT_FORM_MESSAGE = "system not in standard split form — diagonalize the linear part first"


class SystemSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SystemValidationError(ValueError):
    pass


class SpectrumError(RuntimeError):
    pass


Matrix = tuple[tuple[Fraction, ...], ...]


def _matrix(rows, k: int, label: str) -> Matrix:
    out = tuple(tuple(Fraction(v) for v in row) for row in rows)
    if len(out) != k or any(len(row) != k for row in out):
        raise SystemValidationError(f"{label} must be {k}x{k}")
    return out


def validate_layout(layout: Layout) -> None:
    names = layout.names()
    if layout.m < 1 or layout.n < 1:
        raise SystemValidationError("need at least one centre and one stable variable")
    if any(not name for name in names):
        raise SystemValidationError("empty variable name")
    if len(set(names)) != len(names):
        raise SystemValidationError(f"duplicate variable names in {names}")


@dataclass(frozen=True)
class CentreSystem:
    layout: Layout
    A: Matrix
    B: Matrix
    f: tuple[Polynomial, ...]
    g: tuple[Polynomial, ...]

    def __post_init__(self):
        validate_layout(self.layout)
        m, n = self.layout.m, self.layout.n
        object.__setattr__(self, "A", _matrix(self.A, m, "A"))
        object.__setattr__(self, "B", _matrix(self.B, n, "B"))
        object.__setattr__(self, "f", tuple(self.f))
        object.__setattr__(self, "g", tuple(self.g))
        if len(self.f) != m or len(self.g) != n:
            raise SystemValidationError("need one nonlinearity per equation")
        for label, polys in (("f", self.f), ("g", self.g)):
            for i, poly in enumerate(polys):
                if poly.layout != self.layout:
                    raise SystemValidationError(f"{label}[{i}] has a different layout")
                low = poly.min_degree
                if low is not None and low < 2:
                    raise SystemValidationError(
                        f"{label}[{i}] has terms of degree {low}; nonlinearities must start at degree 2"
                    )

    def linear_part(self, block: str, i: int) -> Polynomial:
        """Row ``i`` of ``A x`` (block ``"x"``) or ``B y`` (block ``"y"``) as a polynomial."""
        mat = self.A if block == "x" else self.B
        names = getattr(self.layout, block)
        out = Polynomial.zero(self.layout)
        for j, a in enumerate(mat[i]):
            if a:
                out = out + Polynomial.variable(self.layout, names[j]).scale(a)
        return out

    def rhs(self) -> tuple[Polynomial, ...]:
        """Full right-hand sides, centre equations first."""
        return tuple(self.linear_part("x", i) + fi for i, fi in enumerate(self.f)) + tuple(
            self.linear_part("y", j) + gj for j, gj in enumerate(self.g)
        )


# -- lexer / parser ------------------------------------------------------------


class Token(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<section>\[[ \t]*[A-Za-z_]+[ \t]*\])
  | (?P<int>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^=',])
    """,
    re.VERBOSE,
)

SECTIONS = ("centre", "stable", "params")


def _tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        mo = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if mo is None:
            raise SystemSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = mo.lastgroup
        if kind == "nl":
            tokens.append(Token("nl", "\n", line, col))
            line += 1
            line_start = mo.end()
        elif kind == "section":
            tokens.append(Token("section", mo.group().strip("[] \t").lower(), line, col))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, mo.group(), line, col))
        pos = mo.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Term(NamedTuple):
    coeff: Fraction
    powers: dict[str, list]
    token: Token


class _Parser:
    """Recursive descent over the token stream; newlines only separate equations."""

    def __init__(self, tokens: list[Token]):
        self.tokens = [t for t in tokens if t.kind != "nl"]
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        raise SystemSyntaxError(msg, tok.line, tok.col)

    def eat(self, kind: str, text: str | None = None) -> Token:
        tok = self.tok
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            got = tok.text or tok.kind
            self.error(f"expected {want!r}, got {got!r}")
        self.pos += 1
        return tok

    def at(self, kind: str, text: str | None = None) -> bool:
        return self.tok.kind == kind and (text is None or self.tok.text == text)

    def system(self):
        sections: dict[str, list] = {}
        if self.at("eof"):
            self.error("empty system")
        while not self.at("eof"):
            head = self.eat("section")
            name = {"center": "centre"}.get(head.text, head.text)
            if name not in SECTIONS:
                self.error(f"unknown section [{head.text}]", head)
            if name in sections:
                self.error(f"section [{name}] appears twice", head)
            if name == "params":
                names = []
                while self.at("name"):
                    names.append(self.eat("name"))
                    if self.at("op", ","):
                        self.eat("op", ",")
                sections[name] = names
            else:
                eqns = []
                while self.at("name"):
                    eqns.append(self.equation())
                if not eqns:
                    self.error(f"section [{name}] has no equations")
                sections[name] = eqns
        for required in ("centre", "stable"):
            if required not in sections:
                self.error(f"missing [{required}] section")
        return sections

    def equation(self):
        lhs = self.eat("name")
        self.eat("op", "'")
        self.eat("op", "=")
        return lhs, self.expr()

    def expr(self) -> list[_Term]:
        terms = []
        sign = 1
        if self.at("op", "-"):
            self.eat("op")
            sign = -1
        elif self.at("op", "+"):
            self.eat("op")
        terms.append(self.term(sign))
        while self.at("op", "+") or self.at("op", "-"):
            sign = 1 if self.eat("op").text == "+" else -1
            terms.append(self.term(sign))
        return terms

    def term(self, sign: int) -> _Term:
        start = self.tok
        coeff = Fraction(sign)
        powers: dict[str, list] = {}
        coeff *= self.factor(powers)
        while self.at("op", "*"):
            self.eat("op")
            coeff *= self.factor(powers)
        return _Term(coeff, powers, start)

    def factor(self, powers: dict) -> Fraction:
        """Consume one factor; variables go into ``powers``, numbers are returned."""
        if self.at("int"):
            num = int(self.eat("int").text)
            den = 1
            if self.at("op", "/"):
                self.eat("op")
                den_tok = self.eat("int")
                den = int(den_tok.text)
                if den == 0:
                    self.error("zero denominator", den_tok)
            return Fraction(num, den)
        if self.at("name"):
            tok = self.eat("name")
            e = 1
            if self.at("op", "^"):
                self.eat("op")
                e = int(self.eat("int").text)
            # name -> [exponent, first token] for error positions
            powers.setdefault(tok.text, [0, tok])[0] += e
            return Fraction(1)
        got = self.tok.text or self.tok.kind
        self.error(f"expected a number or variable, got {got!r}")


def _terms_to_poly(terms: Sequence[_Term], layout: Layout) -> Polynomial:
    out: dict[Monomial, Fraction] = {}
    for t in terms:
        blocks = {"x": [0] * layout.m, "y": [0] * layout.n, "eps": [0] * layout.l}
        for name, (e, tok) in t.powers.items():
            try:
                block, i = layout.locate(name)
            except KeyError:
                raise SystemSyntaxError(f"undeclared variable {name!r}", tok.line, tok.col) from None
            blocks[block][i] += e
        mono = Monomial(tuple(blocks["x"]), tuple(blocks["y"]), tuple(blocks["eps"]))
        out[mono] = out.get(mono, 0) + t.coeff
    return Polynomial(layout, out)


def parse_expression(text: str, layout: Layout) -> Polynomial:
    """Parse a bare polynomial expression over ``layout``."""
    p = _Parser(_tokenize(text))
    terms = p.expr()
    if not p.at("eof"):
        p.error(f"unexpected {p.tok.text!r}")
    return _terms_to_poly(terms, layout)


def _split(poly: Polynomial, block: str, sys_layout: Layout, lhs: Token):
    """Separate the linear part in ``block`` from the degree >= 2 remainder."""
    coeffs = [Fraction(0)] * len(getattr(sys_layout, block))
    rest = {}
    for mono, c in poly.items():
        d = mono.degree
        if d == 0:
            raise SystemValidationError(
                f"line {lhs.line}: constant term {c} in equation for {lhs.text}'"
            )
        if d == 1:
            owner = next(b for b in ("x", "y", "eps") if any(getattr(mono, b)))
            if owner == block:
                coeffs[getattr(mono, block).index(1)] = c
                continue
            if owner == "eps":
                raise SystemValidationError(
                    f"line {lhs.line}: term linear in a parameter in equation for {lhs.text}'; "
                    "nonlinearities must vanish with their first derivatives at the origin"
                )
            raise SystemValidationError(f"line {lhs.line}: {SPLIT_FORM_MESSAGE}")
        rest[mono] = c
    return coeffs, Polynomial(sys_layout, rest)


def parse_system(text: str) -> CentreSystem:
    """Parse the section-based text format into a :class:`CentreSystem`."""
    sections = _Parser(_tokenize(text)).system()
    centre = sections["centre"]
    stable = sections["stable"]
    params = sections.get("params", [])
    layout = Layout(
        tuple(t.text for t, _ in centre),
        tuple(t.text for t, _ in stable),
        tuple(t.text for t in params),
    )
    seen = set()
    for tok in [t for t, _ in centre] + [t for t, _ in stable] + list(params):
        if tok.text in seen:
            raise SystemSyntaxError(f"variable {tok.text!r} declared twice", tok.line, tok.col)
        seen.add(tok.text)

    A, f = [], []
    for lhs, terms in centre:
        row, rest = _split(_terms_to_poly(terms, layout), "x", layout, lhs)
        A.append(row)
        f.append(rest)
    B, g = [], []
    for lhs, terms in stable:
        row, rest = _split(_terms_to_poly(terms, layout), "y", layout, lhs)
        B.append(row)
        g.append(rest)
    return CentreSystem(layout, A, B, f, g)


def serialize_system(system: CentreSystem) -> str:
    """Render in the text format accepted by :func:`parse_system`."""
    layout = system.layout
    rhs = system.rhs()
    lines = ["[centre]"]
    for name, r in zip(layout.x, rhs[: layout.m]):
        lines.append(f"{name}' = {r}")
    lines.append("[stable]")
    for name, r in zip(layout.y, rhs[layout.m:]):
        lines.append(f"{name}' = {r}")
    if layout.eps:
        lines.append("[params]")
        lines.append(" ".join(layout.eps))
    return "\n".join(lines) + "\n"


# -- spectrum ------------------------------------------------------------------


@dataclass
class SpectrumReport:
    eig_A: tuple[complex, ...]
    eig_B: tuple[complex, ...]
    max_abs_re_A: float
    max_re_B: float
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        def c(z):
            return [round(z.real, 12) + 0.0, round(z.imag, 12) + 0.0]

        return {
            "eig_A": [c(z) for z in self.eig_A],
            "eig_B": [c(z) for z in self.eig_B],
            "max_abs_re_A": float(f"{self.max_abs_re_A:.12e}"),
            "max_re_B": float(f"{self.max_re_B:.12e}"),
            "tol": self.tol,
            "verdict": "pass" if self.passed else "fail",
        }


def _eigvals(mat: Matrix) -> np.ndarray:
    a = np.array([[float(v) for v in row] for row in mat], dtype=float)
    if not np.all(np.isfinite(a)):
        raise SpectrumError("matrix has non-finite entries")
    try:
        # LAPACK: Hessenberg reduction followed by shifted QR
        ev = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise SpectrumError(f"eigenvalue iteration did not converge: {exc}") from exc
    return np.array(sorted(ev, key=lambda z: (z.real, z.imag)))


def validate_spectrum(system: CentreSystem, tol: float = 1e-9, max_dim: int = 16) -> SpectrumReport:
    """Check Re(eig A) == 0 and Re(eig B) < 0 numerically, to within ``tol``."""
    for label, mat in (("A", system.A), ("B", system.B)):
        if len(mat) > max_dim:
            raise SpectrumError(f"{label} is {len(mat)}x{len(mat)}, above the cap of {max_dim}")
    ea, eb = _eigvals(system.A), _eigvals(system.B)
    max_a = float(np.max(np.abs(ea.real)))
    max_b = float(np.max(eb.real))
    passed = max_a <= tol and max_b <= -tol
    return SpectrumReport(tuple(complex(z) for z in ea), tuple(complex(z) for z in eb), max_a, max_b, tol, passed)
