"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python tests/test_acceptance.py``.
"""
import math
import random
import sys
import time
from pathlib import Path

import pytest

from cmreduce.cli import main as cli_main
from cmreduce.cmsolve import apply_H, fixed_point_iterates, reduce_model, solve_graded
from cmreduce.order import CoupledOrder, OrderSpec, truncate
from cmreduce.polyalg import Monomial, Polynomial, series_reciprocal
from cmreduce.sysmodel import SystemValidationError, parse_system, serialize_system
from cmreduce.verify import (
    check_residual_order,
    check_approximation_consistency,
    compare_trajectory,
    integrate,
)

from helpers import PROTO_LAYOUT, XE_LAYOUT, poly, random_spec, random_system

SYSTEMS = Path(__file__).resolve().parents[1] / "systems"
PROTO_FILE = SYSTEMS / "prototype.cm"
L = PROTO_LAYOUT
XE = XE_LAYOUT

RESULTS: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (ok, detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def P(text, layout=L):
    return poly(layout, text)


def proto():
    return parse_system(PROTO_FILE.read_text())


def test_criterion_1_fixed_point_iterates():
    t0 = time.perf_counter()
    it = fixed_point_iterates(proto(), OrderSpec(20, 20))
    h1, h2 = next(it), next(it)
    dt = time.perf_counter() - t0
    ok = h1 == (P("x^2"),) and h2 == (P("x^2 - 2*eps*x^2 + 2*x^4"),) and dt < 1.0
    record(1, ok, f"h1 = {h1[0]}; h2 = {h2[0]}; {dt:.3f}s")


def test_criterion_2_graded_six_three():
    t0 = time.perf_counter()
    (phi,) = solve_graded(proto(), OrderSpec(6, 3)).phi
    dt = time.perf_counter() - t0
    expected = P("x^2 - 2*eps*x^2 + 4*eps^2*x^2 + 2*x^4 - 16*eps*x^4 + 88*eps^2*x^4")
    coeffs = [phi.coeff(Monomial((x,), (0,), (e,))) for x in (2, 4) for e in range(3)]
    ok = phi == expected and len(phi) == 6 and dt < 1.0
    record(2, ok, f"coefficients {[str(c) for c in coeffs]}; {dt:.3f}s")


def test_criterion_3_closed_form_oracle():
    t0 = time.perf_counter()
    spec = OrderSpec(6, 6)
    r2 = series_reciprocal(P("1 + 2*eps", XE), spec)
    r4 = series_reciprocal(P("1 + 4*eps", XE), spec)
    oracle = truncate(P("x^2", XE) * r2 + P("2*x^4", XE) * r2 * r2 * r4, spec)
    (phi,) = solve_graded(proto(), spec).phi
    dt = time.perf_counter() - t0
    # compare on (x, eps): the solver output lives in the system layout
    same = {(m.x, m.eps): c for m, c in phi.items()} == {(m.x, m.eps): c for m, c in oracle.items()}
    c2 = phi.coeff(Monomial((2,), (0,), (3,)))
    c4 = phi.coeff(Monomial((4,), (0,), (3,)))
    ok = same and c2 == -8 and c4 == -416 and dt < 1.0
    record(3, ok, f"{len(phi)} terms agree; eps^3 column {c2}, {c4}; {dt:.3f}s")


def test_criterion_4_residual_certificates():
    s = proto()
    iterates = [P("0"), P("x^2"), P("x^2 - 2*eps*x^2 + 2*x^4")]
    verdicts = [check_residual_order(s, [h], CoupledOrder.uniform(n + 2)).passed for n, h in enumerate(iterates)]
    weighted = check_residual_order(s, [iterates[1]], CoupledOrder(2, 4)).passed
    record(4, all(verdicts) and weighted, f"coupled n+2 for n=0,1,2: {verdicts}; (p=2, q=4): {weighted}")


def test_criterion_5_random_systems():
    t0 = time.perf_counter()
    failures = []
    for seed in range(100):
        rng = random.Random(seed)
        s = random_system(rng, max_dim=2, max_params=2, max_coeff=3)
        spec = random_spec(rng, max_q=5, max_p=5)
        approx = solve_graded(s, spec)
        zero = all(not truncate(r, spec) for r in apply_H(approx, s))
        probe = check_approximation_consistency(s, spec, (2, 2), approx).passed
        if not (zero and probe):
            failures.append(seed)
    dt = time.perf_counter() - t0
    record(5, not failures and dt < 60, f"100 systems, failing seeds {failures}; {dt:.2f}s")


def test_criterion_6_injected_defects():
    s, spec = proto(), OrderSpec(6, 3)
    (phi,) = solve_graded(s, spec).phi
    kept = spec.kept_monomials(L)
    missed = []
    for mono in kept:
        bad = [phi + Polynomial.monomial(L, mono)]
        residual_ok = check_residual_order(s, bad, spec).passed
        probe_ok = check_approximation_consistency(s, spec, (2, 2), bad).passed
        if residual_ok and probe_ok:
            missed.append(str(Polynomial.monomial(L, mono)))
    record(6, not missed, f"{len(kept)} kept monomials injected, undetected: {missed}")


def test_criterion_7_numeric_fidelity():
    t0 = time.perf_counter()
    s = proto()
    approx = solve_graded(s, OrderSpec(8, 5))
    reduced = reduce_model(s, approx)
    off = compare_trajectory(s, approx, reduced, 0.05, 0.05, 0.3, dt=1e-3, t_end=20, t_transient=10)
    on = compare_trajectory(s, approx, reduced, 0.05, 0.05, "on-manifold", dt=1e-3, t_end=20, t_transient=0)
    dt = time.perf_counter() - t0
    rate = off.attraction_rate
    ok = (
        off.max_manifold_deviation <= 1e-4
        and on.max_manifold_deviation <= 1e-5
        and rate is not None
        and abs(rate + 1) <= 0.05
        and dt < 5.0
    )
    record(7, ok, f"off {off.max_manifold_deviation:.3e}, on {on.max_manifold_deviation:.3e}, "
                  f"rate {rate:.4f}; {dt:.2f}s")


def test_criterion_8_rk4_order():
    def err(dt):
        return abs(integrate(lambda s: [-s[0]], [1.0], dt, 1.0).states[-1, 0] - math.exp(-1))

    ratio = err(0.1) / err(0.05)
    record(8, abs(ratio - 16) <= 2, f"error ratio {ratio:.3f} for dt 0.1 -> 0.05")


def test_criterion_9_parser(capsys, tmp_path):
    s = proto()
    exact = (
        s.A == ((0,),) and s.B == ((-1,),)
        and s.f == (P("eps*x - x*y"),) and s.g == (P("x^2"),)
    )
    round_trip = parse_system(serialize_system(s)) == s
    bad_text = "[centre]\nx' = eps*x - x*y + y\n[stable]\ny' = -y + x^2\n[params]\neps\n"
    try:
        parse_system(bad_text)
        rejected = False
    except SystemValidationError as exc:
        rejected = "diagonalize the linear part first" in str(exc)
    bad = tmp_path / "cross.cm"
    bad.write_text(bad_text)
    code = cli_main(["reduce", "--system", str(bad)])
    capsys.readouterr()
    ok = exact and round_trip and rejected and code == 2
    record(9, ok, f"fields exact {exact}, round trip {round_trip}, rejected {rejected}, exit {code}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
