"""``cm-reduce`` command line: ``reduce``, ``verify`` and ``check-order``.

Exit codes
    0  every verdict passed
    1  a check failed (residual order, tolerance, certificate)
    2  malformed or invalid input (syntax, split form, spectrum, polynomial file)
    3  solver error (resonance, fixed-point non-convergence)
    4  trajectory blow-up during ``verify``
"""
from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import __version__
from .cmsolve import SolverError, TruncationWarning, iterate_fixed_point, order_compatible, reduce_model, solve_graded
from .order import CoupledOrder, OrderError, OrderSpec
from .polyalg import Layout, Polynomial
from .sysmodel import (
    SpectrumError,
    SystemSyntaxError,
    SystemValidationError,
    parse_expression,
    parse_system,
    serialize_system,
    validate_spectrum,
)
from .verify import certify, check_residual_order, check_approximation_consistency, compare_trajectory, write_trajectory_csv

SCHEMA = 1

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_SOLVER, EXIT_BLOWUP = 0, 1, 2, 3, 4


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    system: Path | None = None
    poly: Path | None = None
    q: int = 6
    p: int = 3
    xweights: tuple | None = None
    eweights: tuple | None = None
    method: str = "graded"
    model_order: str = "q+1"
    output: str = "text"
    coupled: CoupledOrder | None = None
    params: tuple[str, ...] = ("eps",)
    eps: list[list[float]] = field(default_factory=lambda: [[0.05]])
    x0: list[float] = field(default_factory=lambda: [0.05])
    y0: list[float] | str = field(default_factory=lambda: [0.3])
    dt: float = 1e-3
    t_end: float = 20.0
    t_transient: float | None = None
    boost: tuple[int, int] = (2, 2)
    tol_manifold: float = 1e-4
    tol_model: float = 1e-4
    tol_rate: float = 0.05
    spectrum_tol: float = 1e-9
    csv: Path | None = None
    timing: bool = False

    @property
    def spec(self) -> OrderSpec:
        return OrderSpec(self.q, self.p, self.xweights, self.eweights)


# -- argument parsing ------------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _weights(text: str) -> tuple[Fraction, ...]:
    try:
        return tuple(Fraction(v.strip()) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _pair(text: str) -> tuple[int, int]:
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two integers 'a,b'")
    return parts[0], parts[1]


def _coupled(text: str) -> CoupledOrder:
    parts = [int(v) for v in text.split(",")]
    if len(parts) == 1:
        return CoupledOrder.uniform(parts[0])
    if len(parts) == 2:
        return CoupledOrder(parts[0], parts[1])
    raise argparse.ArgumentTypeError("expected R or P,Q")


def _eps_points(text: str) -> list[list[float]]:
    # runs separated by ',', components of one run by ':'
    return [[float(c) for c in run.split(":")] for run in text.split(",") if run.strip()]


def _y0(text: str):
    return "on-manifold" if text == "on-manifold" else _floats(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cm-reduce", description="Centre manifold reduction with flexible error orders.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def order_args(p, system_required=True):
        if system_required:
            p.add_argument("--system", type=Path, required=True, help="system file")
        p.add_argument("--order-x", type=int, default=6, dest="q", help="centre-variable order q (default 6)")
        p.add_argument("--order-eps", type=int, default=3, dest="p", help="parameter order p (default 3)")
        p.add_argument("--x-weights", type=_weights, dest="xweights", help="comma separated x weights")
        p.add_argument("--eps-weights", type=_weights, dest="eweights", help="comma separated eps weights")
        p.add_argument("--coupled", type=_coupled, help="certify residuals against coupled order R (or P,Q)")
        p.add_argument("--output", choices=("text", "json"), default="text")
        p.add_argument("--timing", action="store_true", help="add wall-clock timings (breaks byte-stable output)")

    def solve_args(p):
        p.add_argument("--method", choices=("graded", "fixed-point"), default="graded")
        p.add_argument("--model-order", choices=("q+1", "q"), default="q+1", dest="model_order",
                       help="x-order of the reduced model truncation (default q+1)")
        p.add_argument("--spectrum-tol", type=float, default=1e-9, dest="spectrum_tol")

    p_reduce = sub.add_parser("reduce", help="compute the manifold and reduced model")
    order_args(p_reduce)
    solve_args(p_reduce)

    p_verify = sub.add_parser("verify", help="reduce, then probe and compare trajectories")
    order_args(p_verify)
    solve_args(p_verify)
    p_verify.add_argument("--eps", type=_eps_points, default=[[0.05]],
                          help="parameter values: runs separated by ',', components by ':' (default 0.05)")
    p_verify.add_argument("--x0", type=_floats, default=[0.05], help="initial centre state (default 0.05)")
    p_verify.add_argument("--y0", type=_y0, default=[0.3], help="initial stable state or 'on-manifold' (default 0.3)")
    p_verify.add_argument("--dt", type=float, default=1e-3)
    p_verify.add_argument("--t-end", type=float, default=20.0, dest="t_end")
    p_verify.add_argument("--t-transient", type=float, default=None, dest="t_transient",
                          help="start of the post-transient window (default t_end/2)")
    p_verify.add_argument("--boost", type=_pair, default=(2, 2), help="probe order boost dq,dp (default 2,2)")
    p_verify.add_argument("--tol-manifold", type=float, default=1e-4, dest="tol_manifold",
                          help="bound on max |y - phi(x)| after the transient (default 1e-4)")
    p_verify.add_argument("--tol-model", type=float, default=1e-4, dest="tol_model",
                          help="bound on max |x_full - x_reduced|, on-manifold starts only (default 1e-4)")
    p_verify.add_argument("--tol-rate", type=float, default=0.05, dest="tol_rate",
                          help="bound on |fitted rate - max Re eig(B)| (default 0.05)")
    p_verify.add_argument("--csv", type=Path, default=None, help="dump the first run's trajectory as CSV")

    p_check = sub.add_parser("check-order", help="certify the order of a polynomial file")
    order_args(p_check, system_required=False)
    p_check.add_argument("--poly", type=Path, required=True, help="polynomial file (JSON term list or expression)")
    p_check.add_argument("--params", default="eps", help="parameter names for expression files (default eps)")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command)
    for name, value in vars(args).items():
        if name == "params":
            value = tuple(v for v in value.split(",") if v)
        if hasattr(cfg, name) and value is not None:
            setattr(cfg, name, value)
    if args.command == "verify":
        if cfg.dt <= 0 or cfg.t_end <= 0:
            raise InputError("--dt and --t-end must be positive")
        if cfg.boost[0] < 0 or cfg.boost[1] < 0:
            raise InputError("--boost entries must be nonnegative")
    try:
        cfg.spec
    except OrderError as exc:
        raise InputError(str(exc)) from None
    return cfg


# -- rendering -------------------------------------------------------------------


def _color_enabled(stream) -> bool:
    flag = os.environ.get("CM_REDUCE_COLOR")
    if flag is not None:
        return flag == "1"
    return hasattr(stream, "isatty") and stream.isatty()


def _verdict(ok: bool, color: bool) -> str:
    word = "PASS" if ok else "FAIL"
    if not color:
        return word
    return f"\033[32m{word}\033[0m" if ok else f"\033[31m{word}\033[0m"


def _emit(report: dict, cfg: RunConfig, text_lines: list[str]) -> None:
    if cfg.output == "json":
        sys.stdout.write(json.dumps(report, indent=2, sort_keys=False) + "\n")
    else:
        sys.stdout.write("\n".join(text_lines) + "\n")


def _cert_lines(label: str, cert, color: bool) -> list[str]:
    lines = [f"{label}: {_verdict(cert.passed, color)} ({cert.residual_terms} terms checked)"]
    for term in cert.offending_terms():
        lines.append(f"  offender: {term}")
    return lines


# -- commands --------------------------------------------------------------------


def _load_system(cfg: RunConfig):
    try:
        text = cfg.system.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read system file: {exc}") from None
    try:
        system = parse_system(text)
    except (SystemSyntaxError, SystemValidationError) as exc:
        raise InputError(f"{cfg.system}: {exc}") from None
    try:
        spectrum = validate_spectrum(system, cfg.spectrum_tol)
    except SpectrumError as exc:
        raise InputError(str(exc)) from None
    if not spectrum.passed:
        raise InputError(
            f"spectral hypotheses violated: max |Re eig(A)| = {spectrum.max_abs_re_A:.3e}, "
            f"max Re eig(B) = {spectrum.max_re_B:.3e} (tol {cfg.spectrum_tol:g})"
        )
    return system, spectrum


def _solve(system, cfg: RunConfig):
    spec = cfg.spec
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        if cfg.method == "graded":
            approx = solve_graded(system, spec)
        else:
            approx = iterate_fixed_point(system, spec)
    return approx, reduce_model(system, approx, cfg.model_order)


def _reduce_core(cfg: RunConfig, timings: dict):
    t0 = time.perf_counter()
    system, spectrum = _load_system(cfg)
    t1 = time.perf_counter()
    approx, reduced = _solve(system, cfg)
    t2 = time.perf_counter()
    target = cfg.coupled or cfg.spec
    cert = check_residual_order(system, approx, target)
    t3 = time.perf_counter()
    timings.update(parse=t1 - t0, solve=t2 - t1, certify=t3 - t2)
    report = {
        "schema": SCHEMA,
        "command": cfg.command,
        "system": {"layout": system.layout.to_dict(), "text": serialize_system(system)},
        "spectrum": spectrum.to_dict(),
        "order_compatible": order_compatible(system, cfg.spec),
        "manifold": approx.to_dict(),
        "reduced_model": reduced.to_dict(),
        "residual_certificate": cert.to_dict(),
    }
    return system, approx, reduced, cert, report


def _text_header(system, approx, reduced, cert, color) -> list[str]:
    spec = approx.spec
    lines = [f"centre manifold ({approx.method}), error O(x^{spec.q}, eps^{spec.p}):"]
    for name, comp in zip(system.layout.y, approx.phi):
        lines.append(f"  {name} = {comp}")
    lines.append(f"reduced model (error O(x^{reduced.spec.q}, eps^{reduced.spec.p})):")
    for name, r in zip(system.layout.x, reduced.rhs):
        lines.append(f"  {name}' = {r}")
    if not order_compatible(system, spec):
        lines.append("warning: centre drift lowers the x-grade; kept coefficients may be inexact")
    lines.extend(_cert_lines("residual order", cert, color))
    return lines


def cmd_reduce(cfg: RunConfig) -> int:
    timings: dict = {}
    system, approx, reduced, cert, report = _reduce_core(cfg, timings)
    report["verdict"] = "pass" if cert.passed else "fail"
    if cfg.timing:
        report["timing"] = {k: round(v, 6) for k, v in timings.items()}
    color = _color_enabled(sys.stdout)
    lines = _text_header(system, approx, reduced, cert, color)
    if cfg.timing:
        lines.append("timing: " + ", ".join(f"{k} {v:.3f}s" for k, v in timings.items()))
    _emit(report, cfg, lines)
    return EXIT_OK if cert.passed else EXIT_FAIL


def cmd_verify(cfg: RunConfig) -> int:
    timings: dict = {}
    system, approx, reduced, cert, report = _reduce_core(cfg, timings)
    layout = system.layout
    color = _color_enabled(sys.stdout)
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        probe = check_approximation_consistency(system, cfg.spec, cfg.boost)
    expected_rate = max(complex(z).real for z in validate_spectrum(system, cfg.spectrum_tol).eig_B)
    runs = cfg.eps if layout.l else [[]]
    results = []
    blew_up = False
    ok = cert.passed and probe.passed
    lines = _text_header(system, approx, reduced, cert, color)
    lines.extend(_cert_lines(f"approximation probe (boost {cfg.boost[0]},{cfg.boost[1]})", probe, color))
    on_manifold = cfg.y0 == "on-manifold"
    for k, point in enumerate(sorted(runs)):
        if layout.l and len(point) == 1 and layout.l > 1:
            point = point * layout.l
        try:
            rep = compare_trajectory(system, approx, reduced, point, cfg.x0, cfg.y0,
                                     cfg.dt, cfg.t_end, cfg.t_transient)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        checks = {
            "manifold_deviation": rep.max_manifold_deviation <= cfg.tol_manifold,
        }
        if on_manifold:
            checks["model_deviation"] = rep.max_model_deviation <= cfg.tol_model
        if rep.attraction_rate is not None:
            checks["attraction_rate"] = abs(rep.attraction_rate - expected_rate) <= cfg.tol_rate
        passed = all(checks.values()) and not rep.blew_up
        blew_up |= rep.blew_up
        ok &= passed
        entry = rep.to_dict()
        entry["checks"] = {name: ("pass" if v else "fail") for name, v in checks.items()}
        entry["verdict"] = "pass" if passed else "fail"
        results.append(entry)
        if k == 0 and cfg.csv is not None:
            write_trajectory_csv(rep, layout, cfg.csv)
        label = ", ".join(f"{n}={v:g}" for n, v in rep.eps.items()) or "no parameters"
        lines.append(f"trajectory [{label}]: {_verdict(passed, color)}")
        lines.append(f"  max |y - phi| for t >= {rep.t_transient:g}: {rep.max_manifold_deviation:.3e} (tol {cfg.tol_manifold:g})")
        lines.append(f"  max |x_full - x_reduced|: {rep.max_model_deviation:.3e}"
                     + (f" (tol {cfg.tol_model:g})" if on_manifold else " (not checked: off-manifold start)"))
        if rep.attraction_rate is None:
            lines.append("  attraction rate: n/a (no transient above the floor)")
        else:
            lines.append(f"  attraction rate: {rep.attraction_rate:.4f} (expected {expected_rate:.4f} +- {cfg.tol_rate:g})")
        if rep.blew_up:
            lines.append("  trajectory blew up")
    timings["trajectories"] = time.perf_counter() - t0
    report["probe_certificate"] = probe.to_dict()
    report["probe_boost"] = list(cfg.boost)
    report["tolerances"] = {"manifold": cfg.tol_manifold, "model": cfg.tol_model, "rate": cfg.tol_rate}
    report["trajectories"] = results
    report["verdict"] = "pass" if ok else "fail"
    if cfg.timing:
        report["timing"] = {k: round(v, 6) for k, v in timings.items()}
    _emit(report, cfg, lines)
    if blew_up:
        return EXIT_BLOWUP
    return EXIT_OK if ok else EXIT_FAIL


def load_polynomials(path: Path, params: tuple[str, ...]) -> list[Polynomial]:
    """Read a polynomial file.

    JSON: either a bare term list, a ``{"layout": ..., "terms": [...]}``
    object, or a list of such objects.  Anything else is parsed as one
    expression per non-empty line, with ``params`` naming the parameters and
    every other name taken as a centre variable.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read polynomial file: {exc}") from None
    stripped = text.strip()
    try:
        if stripped.startswith(("[", "{")):
            return _polys_from_json(json.loads(stripped))
        return _polys_from_text(text, params)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed polynomial file: {exc}") from None


def _polys_from_json(data) -> list[Polynomial]:
    def one(obj):
        if isinstance(obj, dict):
            layout = Layout.from_dict(obj["layout"])
            return Polynomial.from_terms(layout, obj["terms"])
        if not obj:
            return Polynomial.zero(Layout(("x",), (), ("eps",)))
        t0 = obj[0]
        layout = Layout.generic(len(t0.get("x", [])), len(t0.get("y", [])), len(t0.get("eps", [])))
        return Polynomial.from_terms(layout, obj)

    if isinstance(data, list) and data and isinstance(data[0], dict) and "layout" in data[0]:
        return [one(d) for d in data]
    return [one(data)]


def _polys_from_text(text: str, params: tuple[str, ...]) -> list[Polynomial]:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    names = sorted({n for ln in lines for n in re.findall(r"[A-Za-z_][A-Za-z0-9_]*", ln)})
    centre = tuple(n for n in names if n not in params) or ("x",)
    layout = Layout(centre, (), tuple(params))
    if not lines:
        return [Polynomial.zero(layout)]
    return [parse_expression(ln, layout) for ln in lines]


def cmd_check_order(cfg: RunConfig) -> int:
    polys = load_polynomials(cfg.poly, cfg.params)
    target = cfg.coupled or cfg.spec
    try:
        cert = certify(polys, target, tuple(str(i) for i in range(len(polys))))
    except OrderError as exc:
        raise InputError(str(exc)) from None
    color = _color_enabled(sys.stdout)
    report = {"schema": SCHEMA, "command": "check-order", "certificate": cert.to_dict(),
              "verdict": "pass" if cert.passed else "fail"}
    if isinstance(target, CoupledOrder):
        label = f"coupled order (p={target.p}, q={target.q})"
    else:
        label = f"flexible order O(x^{target.q}, eps^{target.p})"
    _emit(report, cfg, _cert_lines(label, cert, color))
    return EXIT_OK if cert.passed else EXIT_FAIL


COMMANDS = {"reduce": cmd_reduce, "verify": cmd_verify, "check-order": cmd_check_order}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_INPUT
    try:
        cfg = config_from_args(args)
        return COMMANDS[cfg.command](cfg)
    except InputError as exc:
        print(f"cm-reduce: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"cm-reduce: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
