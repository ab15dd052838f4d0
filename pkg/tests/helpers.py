import random
from fractions import Fraction

from cmreduce.order import OrderSpec
from cmreduce.polyalg import Layout, Monomial, Polynomial
from cmreduce.sysmodel import CentreSystem, parse_system

PROTOTYPE_TEXT = """\
# prototype bifurcation problem
[centre]
x' = eps*x - x*y
[stable]
y' = -y + x^2
[params]
eps
"""


def prototype():
    return parse_system(PROTOTYPE_TEXT)


def poly(layout, text):
    from cmreduce.sysmodel import parse_expression

    return parse_expression(text, layout)


PROTO_LAYOUT = Layout(("x",), ("y",), ("eps",))
XE_LAYOUT = Layout(("x",), (), ("eps",))


def _random_monomial(rng, layout, degree, min_x=0):
    while True:
        exps = [0] * (layout.m + layout.n + layout.l)
        for _ in range(degree):
            exps[rng.randrange(len(exps))] += 1
        if sum(exps[: layout.m]) >= min_x:
            m, n = layout.m, layout.n
            return Monomial(tuple(exps[:m]), tuple(exps[m:m + n]), tuple(exps[m + n:]))


def _random_nonlinearity(rng, layout, max_coeff, min_x):
    terms = {}
    for _ in range(rng.randint(0, 3)):
        mono = _random_monomial(rng, layout, rng.randint(2, 3), min_x)
        c = rng.randint(-max_coeff, max_coeff)
        terms[mono] = terms.get(mono, 0) + c
    return Polynomial(layout, terms)


def _random_A(rng, m, max_coeff):
    A = [[0] * m for _ in range(m)]
    if m == 1 or rng.random() < 0.4:
        return A
    # one 2x2 block in the top-left corner, zeros elsewhere
    w = rng.randint(1, max_coeff)
    if rng.random() < 0.5:
        A[0][1], A[1][0] = -w, w  # eigenvalues +-iw
    else:
        A[0][1] = w  # nilpotent
    return A


def _random_B(rng, n, max_coeff):
    # triangular with negative diagonal: spectrum read off the diagonal
    B = [[0] * n for _ in range(n)]
    for i in range(n):
        B[i][i] = -rng.randint(1, max_coeff)
        for j in range(i):
            B[i][j] = rng.randint(-max_coeff, max_coeff)
    return B


def random_system(rng: random.Random, max_dim=2, max_params=2, max_coeff=3, compatible=True):
    """A random valid split-form system.

    With ``compatible`` every term of f carries at least one centre variable,
    so truncating to the kept set never feeds error-set terms back.
    """
    m = rng.randint(1, max_dim)
    n = rng.randint(1, max_dim)
    l = rng.randint(0, max_params)
    layout = Layout.generic(m, n, l)
    min_x = 1 if compatible else 0
    f = [_random_nonlinearity(rng, layout, max_coeff, min_x) for _ in range(m)]
    g = [_random_nonlinearity(rng, layout, max_coeff, 0) for _ in range(n)]
    return CentreSystem(layout, _random_A(rng, m, max_coeff), _random_B(rng, n, max_coeff), f, g)


def random_spec(rng: random.Random, max_q=5, max_p=5):
    return OrderSpec(rng.randint(2, max_q), rng.randint(1, max_p))


def frac(v):
    return Fraction(v)
