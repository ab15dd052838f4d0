"""Centre manifold reduction with flexible error orders ``O(x^q, eps^p)``."""

__version__ = "0.1.0"

from .cmsolve import (
    ManifoldApprox,
    ReducedModel,
    apply_H,
    iterate_fixed_point,
    order_compatible,
    reduce_model,
    solve_graded,
)
from .order import CoupledOrder, OrderSpec, truncate, verify_order
from .polyalg import Layout, Monomial, Polynomial
from .sysmodel import CentreSystem, parse_system, serialize_system, validate_spectrum

__all__ = [
    "CentreSystem",
    "CoupledOrder",
    "Layout",
    "ManifoldApprox",
    "Monomial",
    "OrderSpec",
    "Polynomial",
    "ReducedModel",
    "apply_H",
    "iterate_fixed_point",
    "order_compatible",
    "parse_system",
    "reduce_model",
    "serialize_system",
    "solve_graded",
    "truncate",
    "validate_spectrum",
    "verify_order",
]
