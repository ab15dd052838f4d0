"""Asymptotic order bookkeeping on monomials in (x, eps).

Two notions of "small":

* flexible ``O(x^q, eps^p)``: a term is negligible when its (weighted)
  eps-degree reaches ``p`` *or* its (weighted) x-degree reaches ``q``;
* coupled ``O(|(eps, x)|^r)``: negligible when ``e/p + d/q >= 1``.

The complement of the flexible error set is the finite *kept set* on which
truncated manifold approximations live.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

from .polyalg import Layout, Monomial, Polynomial

__all__ = [
    "OrderSpec",
    "CoupledOrder",
    "OrderError",
    "Verdict",
    "in_error_set",
    "in_coupled_error_set",
    "truncate",
    "verify_order",
    "Truncation",
]


class OrderError(ValueError):
    pass


def _weights(ws) -> tuple[Fraction, ...] | None:
    if ws is None:
        return None
    out = tuple(Fraction(w) for w in ws)
    if any(w <= 0 for w in out):
        raise OrderError("weights must be strictly positive")
    return out


def _weighted(exps: Sequence[int], ws) -> Fraction | int:
    if ws is None:
        return sum(exps)
    if len(ws) != len(exps):
        raise OrderError(f"{len(ws)} weights for {len(exps)} variables")
    return sum(w * e for w, e in zip(ws, exps))


def _require_y_free(mono: Monomial) -> None:
    if any(mono.y):
        raise OrderError(f"order calculus is defined on (x, eps) only; got y-exponents {mono.y}")


@dataclass(frozen=True)
class OrderSpec:
    """Flexible error order ``O(x^q, eps^p)`` with optional per-variable weights.

    ``xweights``/``eweights`` of ``None`` mean unit weights for every variable.
    """

    q: int
    p: int
    xweights: tuple[Fraction, ...] | None = None
    eweights: tuple[Fraction, ...] | None = None

    def __post_init__(self):
        if int(self.q) != self.q or int(self.p) != self.p:
            raise OrderError("orders must be integers")
        if self.q <= 1:
            raise OrderError(f"need q > 1, got q={self.q}")
        if self.p < 1:
            raise OrderError(f"need p >= 1, got p={self.p}")
        object.__setattr__(self, "xweights", _weights(self.xweights))
        object.__setattr__(self, "eweights", _weights(self.eweights))

    def xgrade(self, mono: Monomial):
        return _weighted(mono.x, self.xweights)

    def egrade(self, mono: Monomial):
        return _weighted(mono.eps, self.eweights)

    def in_error_set(self, mono: Monomial) -> bool:
        _require_y_free(mono)
        return self.egrade(mono) >= self.p or self.xgrade(mono) >= self.q

    def is_kept(self, mono: Monomial) -> bool:
        return not self.in_error_set(mono)

    def boosted(self, dq: int, dp: int) -> "OrderSpec":
        return OrderSpec(self.q + dq, self.p + dp, self.xweights, self.eweights)

    def with_q(self, q: int) -> "OrderSpec":
        return OrderSpec(q, self.p, self.xweights, self.eweights)

    def kept_monomials(self, layout: Layout, min_degree: int = 0) -> list[Monomial]:
        """Every monomial of the kept set, graded-lex sorted."""
        xs = _bounded_exponents(layout.m, self.xweights, self.q)
        es = _bounded_exponents(layout.l, self.eweights, self.p)
        zy = (0,) * layout.n
        monos = [Monomial(x, zy, e) for x in xs for e in es]
        monos = [mo for mo in monos if mo.degree >= min_degree]
        return sorted(monos, key=Monomial.sort_key)

    def max_kept_degree(self, layout: Layout) -> int:
        return max(mo.degree for mo in self.kept_monomials(layout))

    def to_dict(self, layout: Layout | None = None) -> dict:
        def ws(w, k):
            w = w if w is not None else (Fraction(1),) * k
            return [str(v) for v in w]

        d = {"q": self.q, "p": self.p}
        if layout is not None:
            d["xweights"] = ws(self.xweights, layout.m)
            d["eweights"] = ws(self.eweights, layout.l)
        else:
            d["xweights"] = None if self.xweights is None else [str(v) for v in self.xweights]
            d["eweights"] = None if self.eweights is None else [str(v) for v in self.eweights]
        return d

    @classmethod
    def from_dict(cls, d) -> "OrderSpec":
        return cls(int(d["q"]), int(d["p"]), d.get("xweights"), d.get("eweights"))


def _bounded_exponents(k: int, ws, bound) -> list[tuple[int, ...]]:
    """Exponent vectors of length ``k`` whose weighted degree is ``< bound``."""
    if k == 0:
        return [()]
    ws = ws if ws is not None else (1,) * k
    out = []

    def rec(i, prefix, used):
        if i == k:
            out.append(tuple(prefix))
            return
        e = 0
        while used + ws[i] * e < bound:
            rec(i + 1, prefix + [e], used + ws[i] * e)
            e += 1

    rec(0, [], 0)
    return out


@dataclass(frozen=True)
class CoupledOrder:
    """Coupled order: a term ``eps^a x^b`` is negligible iff ``a/p + b/q >= 1``.

    ``CoupledOrder.uniform(r)`` is the classical ``O(|(eps, x)|^r)``.
    """

    p: int
    q: int

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise OrderError("coupled orders must be positive")

    @classmethod
    def uniform(cls, r: int) -> "CoupledOrder":
        return cls(r, r)

    def in_error_set(self, mono: Monomial) -> bool:
        _require_y_free(mono)
        return Fraction(mono.edegree, self.p) + Fraction(mono.xdegree, self.q) >= 1

    def to_dict(self) -> dict:
        return {"coupled": True, "p": self.p, "q": self.q}


OrderTarget = Union[OrderSpec, CoupledOrder]


def in_error_set(mono: Monomial, spec: OrderSpec) -> bool:
    return spec.in_error_set(mono)


def in_coupled_error_set(mono: Monomial, p: int, q: int) -> bool:
    return CoupledOrder(p, q).in_error_set(mono)


def truncate(poly: Polynomial, spec: OrderSpec) -> Polynomial:
    """Drop every term in the error set of ``spec``."""
    return poly.filter(spec.is_kept)


@dataclass
class Verdict:
    passed: bool
    offenders: Polynomial

    def __bool__(self) -> bool:
        return self.passed


def verify_order(poly: Polynomial, target: OrderTarget) -> Verdict:
    """Pass iff every monomial of ``poly`` lies in the error set of ``target``."""
    offenders = poly.filter(lambda mo: not target.in_error_set(mo))
    return Verdict(not offenders, offenders)


@dataclass
class Truncation:
    """Kept-set and/or total-degree filter applied inside products.

    Grades are additive under multiplication, so pruning whole buckets of
    terms by grade is exact: a pruned pair could only produce a term that the
    filter would discard anyway.
    """

    spec: OrderSpec | None = None
    max_degree: int | None = None

    def grade(self, mono: Monomial) -> tuple:
        if self.spec is None:
            return (0, 0, mono.degree)
        return (self.spec.xgrade(mono), self.spec.egrade(mono), mono.degree)

    def admits(self, g) -> bool:
        xg, eg, d = g
        if self.max_degree is not None and d > self.max_degree:
            return False
        if self.spec is not None and (xg >= self.spec.q or eg >= self.spec.p):
            return False
        return True

    def keep(self, mono: Monomial) -> bool:
        # y-exponents are ignored here; callers apply this to y-free results
        return self.admits(self.grade(mono))

    def apply(self, poly: Polynomial) -> Polynomial:
        if self.spec is None and self.max_degree is None:
            return poly
        return poly.filter(self.keep)

    def _buckets(self, poly: Polynomial):
        b = defaultdict(list)
        for mono, c in poly.items():
            b[self.grade(mono)].append((mono, c))
        return b

    def mul(self, a: Polynomial, b: Polynomial) -> Polynomial:
        if self.spec is None and self.max_degree is None:
            return a * b
        if not a or not b:
            return Polynomial.zero(a.layout)
        ba, bb = self._buckets(a), self._buckets(b)
        out: dict[Monomial, Fraction] = {}
        for ga, ta in ba.items():
            for gb, tb in bb.items():
                g = (ga[0] + gb[0], ga[1] + gb[1], ga[2] + gb[2])
                if not self.admits(g):
                    continue
                for m1, c1 in ta:
                    for m2, c2 in tb:
                        m = m1 * m2
                        out[m] = out.get(m, 0) + c1 * c2
        return Polynomial._raw(a.layout, {m: c for m, c in out.items() if c})

    def power_table(self, base: Polynomial, max_power: int) -> list[Polynomial]:
        table = [Polynomial.constant(base.layout, 1), self.apply(base)]
        for _ in range(2, max_power + 1):
            table.append(self.mul(table[-1], base))
        return table[: max_power + 1]
