"""Centre manifold approximations ``y = phi(x, eps)``.

The residual of a candidate manifold is

    H(phi) = phi_x [A x + f(x, phi, eps)] - B phi - g(x, phi, eps)

and ``phi`` is an exact centre manifold iff ``H(phi) = 0``.  Two solvers are
provided: :func:`solve_graded`, which solves the homological equation one
total degree at a time, and :func:`iterate_fixed_point`, the classical
iteration ``phi <- B^-1 [phi_x (A x + f) - g]``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

from .order import OrderSpec, Truncation, truncate
from .polyalg import Layout, Monomial, Polynomial, differentiate
from .sysmodel import CentreSystem

__all__ = [
    "ManifoldApprox",
    "ReducedModel",
    "ResonanceError",
    "ConvergenceError",
    "TruncationWarning",
    "apply_H",
    "solve_graded",
    "fixed_point_iterates",
    "iterate_fixed_point",
    "reduce_model",
    "order_compatible",
    "solve_linear",
]


class SolverError(RuntimeError):
    pass


class ResonanceError(SolverError):
    pass


class ConvergenceError(SolverError):
    pass


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ManifoldApprox:
    phi: tuple[Polynomial, ...]
    spec: OrderSpec
    method: str = "graded"
    iterations: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(self.phi))
        for j, comp in enumerate(self.phi):
            for mono in comp:
                if mono.degree < 2:
                    raise ValueError(f"phi[{j}] has a term of degree {mono.degree}")
                if not mono.is_y_free() or self.spec.in_error_set(mono):
                    raise ValueError(f"phi[{j}] has a term outside the kept set: {mono}")

    @property
    def layout(self) -> Layout:
        return self.phi[0].layout

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "spec": self.spec.to_dict(self.layout),
            "phi": {
                name: {"text": str(p), "terms": p.to_terms()}
                for name, p in zip(self.layout.y, self.phi)
            },
        }


@dataclass(frozen=True)
class ReducedModel:
    rhs: tuple[Polynomial, ...]
    spec: OrderSpec

    def to_dict(self) -> dict:
        layout = self.rhs[0].layout
        return {
            "spec": self.spec.to_dict(layout),
            "rhs": {
                name: {"text": str(p), "terms": p.to_terms()}
                for name, p in zip(layout.x, self.rhs)
            },
        }


# -- exact linear algebra ------------------------------------------------------


def _size(c: Fraction) -> int:
    return c.numerator.bit_length() + c.denominator.bit_length()


def solve_linear(M: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Solve ``M z = b`` exactly by Gaussian elimination.

    Pivots are chosen by smallest bit size to limit coefficient growth.
    Raises :class:`ZeroDivisionError` when ``M`` is singular.
    """
    k = len(M)
    rows = [list(r) + [bv] for r, bv in zip(M, b)]
    for col in range(k):
        cands = [r for r in range(col, k) if rows[r][col]]
        if not cands:
            raise ZeroDivisionError("singular matrix")
        piv = min(cands, key=lambda r: _size(rows[r][col]))
        rows[col], rows[piv] = rows[piv], rows[col]
        prow = rows[col]
        inv = 1 / prow[col]
        for r in range(k):
            if r != col and rows[r][col]:
                factor = rows[r][col] * inv
                row = rows[r]
                for c in range(col, k + 1):
                    if prow[c]:
                        row[c] -= factor * prow[c]
    return [rows[i][k] / rows[i][i] for i in range(k)]


def _inverse(M) -> list[list[Fraction]]:
    k = len(M)
    cols = []
    for j in range(k):
        e = [Fraction(int(i == j)) for i in range(k)]
        cols.append(solve_linear([list(r) for r in M], e))
    return [[cols[j][i] for j in range(k)] for i in range(k)]


# -- residual operator ---------------------------------------------------------


class _Composer:
    """Evaluates ``p(x, phi(x, eps), eps)`` under a truncation, caching powers of phi."""

    def __init__(self, system: CentreSystem, phi: Sequence[Polynomial], trunc: Truncation):
        self.layout = system.layout
        self.phi = phi
        self.trunc = trunc
        top = [0] * self.layout.n
        for poly in system.f + system.g:
            for mono in poly:
                top = [max(t, e) for t, e in zip(top, mono.y)]
        self.powers = [trunc.power_table(q, e) for q, e in zip(phi, top)]
        self.products: dict[tuple[int, ...], Polynomial] = {}
        self.zero_y = (0,) * self.layout.n

    def y_product(self, yexp: tuple[int, ...]) -> Polynomial:
        if yexp not in self.products:
            acc = None
            for j, e in enumerate(yexp):
                if e:
                    acc = self.powers[j][e] if acc is None else self.trunc.mul(acc, self.powers[j][e])
            self.products[yexp] = acc
        return self.products[yexp]

    def __call__(self, poly: Polynomial) -> Polynomial:
        out = {}
        for mono, c in poly.items():
            base = Polynomial._raw(self.layout, {Monomial(mono.x, self.zero_y, mono.eps): c})
            if any(mono.y):
                term = self.trunc.mul(base, self.y_product(mono.y))
            else:
                term = self.trunc.apply(base)
            for m2, c2 in term.items():
                s = out.get(m2, 0) + c2
                if s:
                    out[m2] = s
                else:
                    del out[m2]
        return Polynomial._raw(self.layout, out)


def _check_phi(phi: Sequence[Polynomial], system: CentreSystem) -> tuple[Polynomial, ...]:
    if isinstance(phi, ManifoldApprox):
        phi = phi.phi
    phi = tuple(phi)
    if len(phi) != system.layout.n:
        raise ValueError(f"phi needs {system.layout.n} components, got {len(phi)}")
    for j, comp in enumerate(phi):
        if comp.layout != system.layout:
            raise ValueError(f"phi[{j}] layout does not match the system")
        if not comp.is_y_free():
            raise ValueError(f"phi[{j}] mentions a stable variable")
    return phi


def _drift_and_g(system: CentreSystem, phi, trunc: Truncation):
    """Return ``phi_x [A x + f(x, phi, eps)]`` and ``g(x, phi, eps)`` per component."""
    compose = _Composer(system, phi, trunc)
    layout = system.layout
    F = [trunc.apply(system.linear_part("x", i)) + compose(fi) for i, fi in enumerate(system.f)]
    drift = []
    for comp in phi:
        acc = Polynomial.zero(layout)
        for i in range(layout.m):
            d = differentiate(comp, ("x", i))
            if d and F[i]:
                acc = acc + trunc.mul(d, F[i])
        drift.append(acc)
    G = [compose(gj) for gj in system.g]
    return drift, G


def apply_H(phi, system: CentreSystem, trunc: Truncation | None = None) -> tuple[Polynomial, ...]:
    """Residual ``H(phi)``, exact; untruncated unless ``trunc`` is given."""
    phi = _check_phi(phi, system)
    trunc = trunc or Truncation()
    drift, G = _drift_and_g(system, phi, trunc)
    out = []
    for j in range(system.layout.n):
        bphi = Polynomial.zero(system.layout)
        for k, b in enumerate(system.B[j]):
            if b:
                bphi = bphi + phi[k].scale(b)
        out.append(trunc.apply(drift[j] - bphi - G[j]))
    return tuple(out)


def order_compatible(system: CentreSystem, spec: OrderSpec) -> bool:
    """Whether truncating to the kept set during solving is harmless.

    Differentiating ``phi`` in ``x_i`` lowers its x-grade by ``w_i``; the
    factor ``(A x + f)_i`` must give it back, otherwise an error-set term of
    the true manifold feeds a kept coefficient.  Sufficient condition: every
    term of ``f_i`` has x-grade at least ``w_i`` and ``A`` only couples
    ``x_i`` to variables of weight at least ``w_i``.
    """
    m = system.layout.m
    w = spec.xweights or (1,) * m
    for i in range(m):
        for k in range(m):
            if k != i and system.A[i][k] and w[k] < w[i]:
                return False
        for mono in system.f[i]:
            if spec.xgrade(mono) < w[i]:
                return False
    return True


def _blocks(spec: OrderSpec, layout: Layout):
    """Kept monomials of degree >= 2 grouped by (degree, eps exponents, x-degree).

    ``A x`` preserves both the eps exponents and the x-degree, so the
    homological operator is block diagonal over these groups.
    """
    groups: dict[tuple, list[Monomial]] = {}
    for mono in spec.kept_monomials(layout, min_degree=2):
        groups.setdefault((mono.degree, mono.eps, mono.xdegree), []).append(mono)
    by_degree: dict[int, list[list[Monomial]]] = {}
    for key in sorted(groups):
        by_degree.setdefault(key[0], []).append(groups[key])
    return by_degree


def _homological_matrix(system: CentreSystem, monos: list[Monomial]):
    """Matrix of ``delta -> delta_x (A x) - B delta`` on ``span(monos)^n``."""
    n, m = system.layout.n, system.layout.m
    index = {mono: a for a, mono in enumerate(monos)}
    size = n * len(monos)
    M = [[Fraction(0)] * size for _ in range(size)]
    for j in range(n):
        for a, mu in enumerate(monos):
            col = j * len(monos) + a
            for i in range(m):
                if not mu.x[i]:
                    continue
                for k in range(m):
                    aik = system.A[i][k]
                    if not aik:
                        continue
                    x = list(mu.x)
                    x[i] -= 1
                    x[k] += 1
                    nu = Monomial(tuple(x), mu.y, mu.eps)
                    if nu in index:
                        M[j * len(monos) + index[nu]][col] += mu.x[i] * aik
            for jj in range(n):
                if system.B[jj][j]:
                    M[jj * len(monos) + a][col] -= system.B[jj][j]
    return M


def solve_graded(system: CentreSystem, spec: OrderSpec) -> ManifoldApprox:
    """Kept-set manifold with ``truncate(apply_H(phi), spec) == 0`` exactly.

    Degree ``d`` of the residual depends on ``phi`` only through degrees
    ``< d`` (besides the linear homological part), because ``f`` and ``g``
    start at degree 2 and ``phi`` at degree 2.  So each degree is one exact
    linear solve against the residual of the lower-degree approximation.
    """
    layout = system.layout
    if not order_compatible(system, spec):
        warnings.warn(
            "the centre drift lowers the x-grade (terms of f without enough x); kept-set "
            "coefficients may differ from the true manifold's Taylor coefficients",
            TruncationWarning,
            stacklevel=2,
        )
    coeffs: list[dict[Monomial, Fraction]] = [{} for _ in range(layout.n)]
    for d, blocks in _blocks(spec, layout).items():
        phi = tuple(Polynomial._raw(layout, dict(c)) for c in coeffs)
        resid = apply_H(phi, system, Truncation(spec, d))
        for monos in blocks:
            M = _homological_matrix(system, monos)
            rhs = [-resid[j].coeff(mu) for j in range(layout.n) for mu in monos]
            try:
                sol = solve_linear(M, rhs)
            except ZeroDivisionError:
                raise ResonanceError(
                    f"resonance detected at degree {d}: spectral hypotheses violated"
                ) from None
            for j in range(layout.n):
                for a, mu in enumerate(monos):
                    c = sol[j * len(monos) + a]
                    if c:
                        coeffs[j][mu] = c
    phi = tuple(Polynomial._raw(layout, c) for c in coeffs)
    return ManifoldApprox(phi, spec, "graded")


def fixed_point_iterates(system: CentreSystem, spec: OrderSpec) -> Iterator[tuple[Polynomial, ...]]:
    """Yield ``h1, h2, ...`` of ``h <- truncate(B^-1 [h_x (A x + f) - g])`` from ``h0 = 0``."""
    layout = system.layout
    try:
        binv = _inverse(system.B)
    except ZeroDivisionError:
        raise ResonanceError("B is singular: spectral hypotheses violated") from None
    trunc = Truncation(spec)
    phi = tuple(Polynomial.zero(layout) for _ in range(layout.n))
    while True:
        drift, G = _drift_and_g(system, phi, trunc)
        rhs = [dr - gg for dr, gg in zip(drift, G)]
        new = []
        for j in range(layout.n):
            acc = Polynomial.zero(layout)
            for k, b in enumerate(binv[j]):
                if b:
                    acc = acc + rhs[k].scale(b)
            new.append(truncate(acc, spec))
        phi = tuple(new)
        yield phi


def iterate_fixed_point(system: CentreSystem, spec: OrderSpec, max_iter: int | None = None) -> ManifoldApprox:
    """Run the fixed-point iteration until two successive iterates agree."""
    if max_iter is None:
        max_iter = max(spec.q - 1 + spec.p - 1, spec.max_kept_degree(system.layout))
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    prev = tuple(Polynomial.zero(system.layout) for _ in range(system.layout.n))
    for it, phi in enumerate(fixed_point_iterates(system, spec), start=1):
        if phi == prev:
            return ManifoldApprox(phi, spec, "fixed-point", it)
        if it >= max_iter:
            break
        prev = phi
    raise ConvergenceError(
        f"fixed-point iteration did not converge within {max_iter} iterations; "
        "use the graded solver"
    )


def reduce_model(system: CentreSystem, approx: ManifoldApprox, model_order: str = "q+1") -> ReducedModel:
    """Centre dynamics on the manifold: ``A x + f(x, phi, eps)``, truncated.

    ``model_order`` selects the x-order of the truncation: ``"q+1"`` (default)
    or ``"q"``; the eps-order and weights follow the manifold.
    """
    if model_order not in ("q+1", "q"):
        raise ValueError(f"model_order must be 'q+1' or 'q', got {model_order!r}")
    phi = _check_phi(approx, system)
    spec = approx.spec.with_q(approx.spec.q + (1 if model_order == "q+1" else 0))
    trunc = Truncation(spec)
    compose = _Composer(system, phi, trunc)
    rhs = tuple(
        system.linear_part("x", i) + truncate(compose(fi), spec) for i, fi in enumerate(system.f)
    )
    return ReducedModel(rhs, spec)
