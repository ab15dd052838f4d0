"""Checks on computed manifolds.

Symbolic: residual-order certificates and the approximation probe, which
compares a manifold against one computed to higher order.  Numeric: fixed
step RK4 runs of the full and reduced systems.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cmsolve import ManifoldApprox, ReducedModel, apply_H, solve_graded
from .order import CoupledOrder, OrderSpec, OrderTarget, verify_order
from .polyalg import Layout, Polynomial
from .sysmodel import CentreSystem

__all__ = [
    "OrderCertificate",
    "TrajectoryReport",
    "Trajectory",
    "PolyField",
    "certify",
    "check_residual_order",
    "check_approximation_consistency",
    "integrate",
    "compare_trajectory",
    "compare_trajectories",
    "fit_rate",
    "write_trajectory_csv",
]


def _fmt(v: float | None) -> float | None:
    # fixed precision keeps JSON reports byte-stable
    if v is None:
        return None
    return float(f"{v:.10e}")


def _target_dict(target: OrderTarget, layout: Layout | None = None) -> dict:
    if isinstance(target, CoupledOrder):
        return target.to_dict()
    return {"coupled": False, **target.to_dict(layout)}


@dataclass
class OrderCertificate:
    target: OrderTarget
    offenders: tuple[Polynomial, ...]
    residual_terms: int
    labels: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not any(self.offenders)

    def offending_terms(self) -> list[str]:
        out = []
        for poly in self.offenders:
            out.extend(poly.term_str(mono, c) for mono, c in poly.sorted_terms())
        return out

    def to_dict(self) -> dict:
        layout = self.offenders[0].layout if self.offenders else None
        labels = self.labels or tuple(str(i) for i in range(len(self.offenders)))
        return {
            "target": _target_dict(self.target, layout),
            "verdict": "pass" if self.passed else "fail",
            "residual_terms": self.residual_terms,
            "offenders": [
                {"component": lab, "text": str(p), "terms": p.to_terms()}
                for lab, p in zip(labels, self.offenders)
                if p
            ],
        }


def certify(polys: Sequence[Polynomial], target: OrderTarget, labels: Sequence[str] = ()) -> OrderCertificate:
    """Certificate that every term of every polynomial is ``O(target)``."""
    polys = tuple(polys)
    offenders = tuple(verify_order(p, target).offenders for p in polys)
    return OrderCertificate(target, offenders, sum(len(p) for p in polys), tuple(labels))


def check_residual_order(system: CentreSystem, phi, target: OrderTarget) -> OrderCertificate:
    """Compute ``H(phi)`` exactly and certify its order.

    ``target`` is an :class:`OrderSpec` for the flexible order or a
    :class:`CoupledOrder`.
    """
    resid = apply_H(phi, system)
    return certify(resid, target, system.layout.y)


def check_approximation_consistency(
    system: CentreSystem,
    spec: OrderSpec,
    boost: tuple[int, int] = (2, 2),
    phi: ManifoldApprox | Sequence[Polynomial] | None = None,
) -> OrderCertificate:
    """Probe of the approximation property.

    ``phi`` (default: the graded solution at ``spec``) must differ from the
    graded solution at the boosted order only by terms in the error set of
    ``spec``.  This is evidence, not a proof.
    """
    dq, dp = boost
    if dq < 0 or dp < 0:
        raise ValueError("boost entries must be nonnegative")
    if phi is None:
        phi = solve_graded(system, spec).phi
    elif isinstance(phi, ManifoldApprox):
        phi = phi.phi
    ref = solve_graded(system, spec.boosted(dq, dp)).phi if (dq or dp) else tuple(phi)
    diff = [r - p for r, p in zip(ref, phi)]
    return certify(diff, spec, system.layout.y)


# -- numerics --------------------------------------------------------------------


class PolyField:
    """Float evaluator for a vector of polynomials at fixed parameter values.

    ``state`` lists the ``(block, index)`` variables making up the state
    vector, in order; parameters are substituted up front.  The polynomials
    are compiled to straight-line scalar code since RK4 calls this tens of
    thousands of times on tiny states.
    """

    def __init__(self, polys: Sequence[Polynomial], state: Sequence[tuple[str, int]], params: Sequence[float]):
        layout = polys[0].layout
        params = [float(v) for v in params]
        if len(params) != layout.l:
            raise ValueError(f"need {layout.l} parameter values, got {len(params)}")
        state = list(state)
        exprs = []
        for poly in polys:
            merged: dict[tuple[int, ...], float] = {}
            for mono, c in poly.items():
                for block in ("x", "y"):
                    for i, e in enumerate(getattr(mono, block)):
                        if e and (block, i) not in state:
                            raise ValueError(f"{block}[{i}] is not part of the state")
                key = tuple(getattr(mono, b)[i] for b, i in state)
                scale = float(c)
                for v, e in zip(params, mono.eps):
                    scale *= v**e
                merged[key] = merged.get(key, 0.0) + scale
            parts = []
            for key, c in merged.items():
                factors = [repr(c)]
                for k, e in enumerate(key):
                    if e == 1:
                        factors.append(f"s{k}")
                    elif e > 1:
                        factors.append(f"s{k}**{e}")
                parts.append("*".join(factors))
            exprs.append(" + ".join(parts) or "0.0")
        names = ", ".join(f"s{k}" for k in range(len(state)))
        src = (
            "def _field(s):\n"
            f"    {names}, = s\n"
            f"    return ({', '.join(exprs)},)\n"
        )
        scope: dict = {}
        exec(compile(src, "<PolyField>", "exec"), scope)
        self.fn = scope["_field"]
        self.size = len(polys)

    def __call__(self, s) -> np.ndarray:
        return np.array(self.fn(np.asarray(s, dtype=float).tolist()))


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    blew_up: bool = False


def integrate(rhs: Callable, x0, dt: float, t_end: float) -> Trajectory:
    """Classical fourth-order Runge-Kutta with fixed step ``dt`` on [0, t_end].

    ``rhs`` maps a sequence of floats to a sequence of floats.  The stepping
    is done on plain floats: states are a handful of numbers and numpy's
    per-call overhead would dominate.  Stops early and flags ``blew_up`` once
    the state is no longer finite.
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    steps = int(round(t_end / dt))
    s = [float(v) for v in np.ravel(x0)]
    out = [s]
    h2, h6 = 0.5 * dt, dt / 6.0
    for _ in range(steps):
        try:
            k1 = rhs(s)
            k2 = rhs([a + h2 * b for a, b in zip(s, k1)])
            k3 = rhs([a + h2 * b for a, b in zip(s, k2)])
            k4 = rhs([a + dt * b for a, b in zip(s, k3)])
            s = [a + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(s, k1, k2, k3, k4)]
        except OverflowError:
            s = [math.inf]
        if not all(map(math.isfinite, s)):
            states = np.array(out)
            return Trajectory(dt * np.arange(len(states)), states, True)
        out.append(s)
    return Trajectory(dt * np.arange(steps + 1), np.array(out))


def fit_rate(t: np.ndarray, dev: np.ndarray, t_max: float, floor: float, factor: float = 10.0) -> float | None:
    """Least-squares slope of ``log dev`` on ``t <= t_max`` where ``dev > factor * floor``."""
    mask = (t <= t_max) & (dev > factor * floor) & (dev > 0)
    if mask.sum() < 3:
        return None
    slope, _ = np.polyfit(t[mask], np.log(dev[mask]), 1)
    return float(slope)


@dataclass
class TrajectoryReport:
    eps: dict[str, float]
    x0: list[float]
    y0: list[float]
    dt: float
    t_end: float
    t_transient: float
    max_manifold_deviation: float
    max_model_deviation: float
    attraction_rate: float | None
    blew_up: bool = False
    samples: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "eps": {k: _fmt(v) for k, v in self.eps.items()},
            "x0": [_fmt(v) for v in self.x0],
            "y0": [_fmt(v) for v in self.y0],
            "dt": self.dt,
            "t_end": self.t_end,
            "t_transient": self.t_transient,
            "max_manifold_deviation": _fmt(self.max_manifold_deviation),
            "max_model_deviation": _fmt(self.max_model_deviation),
            "attraction_rate": _fmt(self.attraction_rate),
            "blew_up": self.blew_up,
        }


def _eval_or_inf(fn, x, k: int):
    # states just before a blow-up are finite but can overflow float powers
    try:
        return fn(x)
    except OverflowError:
        return (math.inf,) * k


def _broadcast(v, k: int, label: str) -> list[float]:
    vals = [float(v)] * k if np.isscalar(v) else [float(a) for a in v]
    if len(vals) != k:
        raise ValueError(f"{label} needs {k} values, got {len(vals)}")
    return vals


def compare_trajectory(
    system: CentreSystem,
    approx: ManifoldApprox,
    reduced: ReducedModel,
    eps: Sequence[float] | float,
    x0,
    y0="on-manifold",
    dt: float = 1e-3,
    t_end: float = 20.0,
    t_transient: float | None = None,
    floor_factor: float = 10.0,
) -> TrajectoryReport:
    """Integrate the full and the reduced system from the same ``x0``.

    ``y0="on-manifold"`` starts the full system at ``y0 = phi(x0, eps)``.
    Reports ``max |y - phi(x, eps)|`` over ``t >= t_transient``, the largest
    centre-variable gap between full and reduced runs, and the decay rate of
    ``|y - phi|`` fitted over the transient.
    """
    layout = system.layout
    m, n = layout.m, layout.n
    eps = _broadcast(eps, layout.l, "eps")
    x0 = _broadcast(x0, m, "x0")
    if t_transient is None:
        t_transient = t_end / 2
    if not 0 <= t_transient < t_end:
        raise ValueError("need 0 <= t_transient < t_end")

    xstate = [("x", i) for i in range(m)]
    full_state = xstate + [("y", j) for j in range(n)]
    phi_field = PolyField(approx.phi, xstate, eps)
    if isinstance(y0, str):
        if y0 != "on-manifold":
            raise ValueError(f"unknown y0 mode {y0!r}")
        y0 = list(phi_field.fn(x0))
    y0 = _broadcast(y0, n, "y0")

    full = integrate(PolyField(system.rhs(), full_state, eps).fn, x0 + y0, dt, t_end)
    red = integrate(PolyField(reduced.rhs, xstate, eps).fn, x0, dt, t_end)
    steps = min(len(full.t), len(red.t))
    t = full.t[:steps]
    xs, ys = full.states[:steps, :m], full.states[:steps, m:]
    phis = np.array([_eval_or_inf(phi_field.fn, x, n) for x in xs.tolist()])
    dev = np.max(np.abs(ys - phis), axis=1)
    late = t >= t_transient - 0.5 * dt
    man_dev = float(np.max(dev[late])) if late.any() else float("nan")
    model_dev = float(np.max(np.abs(xs - red.states[:steps])))
    floor = man_dev if late.any() else 0.0
    rate = fit_rate(t, dev, t_transient, floor, floor_factor)
    return TrajectoryReport(
        eps=dict(zip(layout.eps, eps)),
        x0=x0,
        y0=y0,
        dt=dt,
        t_end=t_end,
        t_transient=t_transient,
        max_manifold_deviation=man_dev,
        max_model_deviation=model_dev,
        attraction_rate=rate,
        blew_up=full.blew_up or red.blew_up,
        samples={"t": t, "x": xs, "y": ys, "phi": phis, "x_reduced": red.states[:steps]},
    )


def compare_trajectories(
    system: CentreSystem,
    approx: ManifoldApprox,
    reduced: ReducedModel,
    eps_values: Sequence[Sequence[float] | float],
    x0,
    y0="on-manifold",
    dt: float = 1e-3,
    t_end: float = 20.0,
    t_transient: float | None = None,
) -> list[TrajectoryReport]:
    """One :class:`TrajectoryReport` per parameter value, sorted by parameter."""
    reports = [
        compare_trajectory(system, approx, reduced, e, x0, y0, dt, t_end, t_transient)
        for e in eps_values
    ]
    return sorted(reports, key=lambda r: tuple(r.eps.values()))


def write_trajectory_csv(report: TrajectoryReport, layout: Layout, path) -> None:
    """Dump ``t, x..., y..., phi(x)...`` columns of a report's samples."""
    s = report.samples
    header = ["t", *layout.x, *layout.y, *(f"phi_{name}" for name in layout.y)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, t in enumerate(s["t"]):
            w.writerow([f"{t:.6f}", *(f"{v:.12e}" for v in s["x"][k]), *(f"{v:.12e}" for v in s["y"][k]),
                        *(f"{v:.12e}" for v in s["phi"][k])])

