"""The catalogued domains: map coefficients, closed-form G_V, and geometry.

Every case pairs the squared Taylor coefficients of a map f from the unit
disc onto a domain V (f(0) = a) with the closed form G_V(a), where
Delta G_V = -4 in V and G_V = 0 on the boundary.

Each identity is checked in a reduced form: a series whose squared
coefficients (index >= 1) sum to ``rhs_value``, with a transcendental
``lhs_prefactor`` factored out so that ``lhs_prefactor * rhs_value = G_V(a)``.
That keeps the coefficient arithmetic rational where it can be.

Cases are addressed by string ids such as ``strip``,
``hyperbola-focal:p=1/3``, ``hyperbola-branches:theta=pi/8`` or
``ellipse:t=1/sqrt(2)``; parameter expressions are re-evaluated at the
working precision in force when they are used.
"""

from __future__ import annotations

import ast
import functools
import math
import re
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np
from mpmath import mp, mpc, mpf

from . import series as S
from .errors import DomainError, UsageError
from .numerics import beta, elliptic_k, mu, solve_elliptic_k, to_real
from .series import EXACT, FLOAT, TruncatedSeries

# Rational coefficient sequences are convolved exactly up to this order and
# in fixed point above it (exact denominators grow too fast to be useful).
EXACT_ORDER_LIMIT = 512

# Truncation of the square's double sum.
SQUARE_TERMS = 2000

KINDS = (
    "strip",
    "triangle",
    "square",
    "parabola",
    "hyperbola_focal",
    "hyperbola_branches",
    "ellipse",
    "ellipse_doubling",
    "annulus",
    "disc",
)

# Order N used when the caller does not choose one.  The focal hyperbola's
# squared terms converge slowest relative to its tolerance.
DEFAULT_ORDERS = {
    "strip": 4096,
    "triangle": 4096,
    "square": 4096,
    "parabola": 4096,
    "hyperbola_focal": 32768,
    "hyperbola_branches": 4096,
    "ellipse": 256,
    "ellipse_doubling": 256,
    "annulus": 4096,
    "disc": 8,
}

# Relative tolerance each identity is expected to meet at its default order.
# Slowly decaying squared terms (s near 1.3-1.8) leave a fitted-tail error
# that no tighter setting can remove.
DEFAULT_TOLERANCES = {
    "strip": 1e-6,
    "triangle": 1e-6,
    "square": 1e-5,
    "parabola": 1e-4,
    "hyperbola_focal": 1e-4,
    "hyperbola_branches": 1e-3,
    "ellipse": 1e-8,
    "ellipse_doubling": 1e-8,
    "annulus": 1e-6,
    "disc": 1e-6,
}

MOEBIUS_KINDS = ("strip", "parabola", "hyperbola_branches")


# ---------------------------------------------------------------------------
# Parameter expressions
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _omega_at(prec: int) -> mpf:
    with mp.workprec(prec):
        return solve_elliptic_k(mpmath.pi)


def omega() -> mpf:
    """The modulus with K(1, omega) = pi."""
    return _omega_at(mp.prec)


_CONSTANTS = {"pi": lambda: +mpmath.pi, "e": lambda: +mpmath.e, "omega": omega}
_FUNCTIONS = {
    "sqrt": mpmath.sqrt,
    "sin": mpmath.sin,
    "cos": mpmath.cos,
    "tan": mpmath.tan,
    "exp": mpmath.exp,
    "log": mpmath.log,
}
_BINARY = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def evaluate_expression(text: str) -> mpf:
    """Evaluate a small arithmetic expression such as ``1/sqrt(2)`` or ``pi/8``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise UsageError(f"cannot parse parameter {text!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return mpf(str(node.value)) if isinstance(node.value, float) else mpf(node.value)
        if isinstance(node, ast.Name) and node.id in _CONSTANTS:
            return _CONSTANTS[node.id]()
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            value = ev(node.operand)
            return -value if isinstance(node.op, ast.USub) else value
        if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
            return _BINARY[type(node.op)](ev(node.left), ev(node.right))
        if (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCTIONS
            and len(node.args) == 1
            and not node.keywords
        ):
            return _FUNCTIONS[node.func.id](ev(node.args[0]))
        raise UsageError(f"unsupported element in parameter {text!r}")

    return ev(tree)


def _exact_rational(text: str) -> Fraction | None:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        return None


_PI_MULTIPLE = re.compile(r"^\s*(\d+)?\s*\*?\s*pi\s*(?:/\s*(\d+))?\s*$")


def _pi_multiple(text: str) -> Fraction | None:
    """c when ``text`` reads ``k*pi/m``, else None."""
    m = _PI_MULTIPLE.match(text)
    if not m:
        return None
    return Fraction(int(m.group(1) or 1), int(m.group(2) or 1))


# ---------------------------------------------------------------------------
# Cases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainCase:
    """A catalogued domain; ``params`` holds (name, expression-text) pairs."""

    kind: str
    params: tuple = ()
    diagnostic: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown case kind {self.kind!r}")

    def param_text(self, name: str) -> str:
        for key, value in self.params:
            if key == name:
                return value
        raise UsageError(f"case {self.kind} has no parameter {name!r}")

    def param(self, name: str) -> mpf:
        return evaluate_expression(self.param_text(name))

    @property
    def id(self) -> str:
        head = self.kind.replace("_", "-")
        if not self.params:
            return head
        return head + ":" + ",".join(f"{k}={v}" for k, v in self.params)

    @property
    def base_point(self) -> mpc:
        if self.kind in ("parabola", "hyperbola_focal", "annulus"):
            return mpc(1)
        if self.kind == "ellipse_doubling":
            return mpc(-1)
        return mpc(0)

    def __str__(self):
        return self.id


def strip() -> DomainCase:
    return DomainCase("strip")


def triangle() -> DomainCase:
    return DomainCase("triangle")


def square() -> DomainCase:
    return DomainCase("square")


def parabola() -> DomainCase:
    return DomainCase("parabola")


def annulus() -> DomainCase:
    return DomainCase("annulus")


def disc() -> DomainCase:
    return DomainCase("disc")


def hyperbola_focal(p="1/3", *, allow_diagnostic: bool = False) -> DomainCase:
    """Region right of one hyperbola branch, mapped with f(0) at the focus 1.

    Valid for p in (0, 1/2); p in [1/2, 1) is accepted only as a divergence
    diagnostic (no finite G exists there).
    """
    text = str(p)
    value = _exact_rational(text)
    if value is None:
        raise DomainError(f"p must be rational (a/b or a decimal), got {text!r}")
    if 0 < value < Fraction(1, 2):
        return DomainCase("hyperbola_focal", (("p", text),))
    if allow_diagnostic and Fraction(1, 2) <= value < 1:
        return DomainCase("hyperbola_focal", (("p", text),), diagnostic=True)
    raise DomainError(f"p must lie in (0, 1/2), got {text}")


def hyperbola_branches(theta="pi/8", *, allow_diagnostic: bool = False) -> DomainCase:
    """Region between the two branches of a hyperbola with asymptote angle theta.

    Valid for theta in (0, pi/4); theta in [pi/4, pi/2) only as a diagnostic.
    """
    text = str(theta)
    value = evaluate_expression(text)
    quarter = mpmath.pi / 4
    if 0 < value < quarter:
        return DomainCase("hyperbola_branches", (("theta", text),))
    if allow_diagnostic and quarter <= value < 2 * quarter:
        return DomainCase("hyperbola_branches", (("theta", text),), diagnostic=True)
    raise DomainError(f"theta must lie in (0, pi/4), got {text}")


def _checked_modulus(t) -> str:
    text = str(t)
    value = evaluate_expression(text)
    if not 0 < value < 1:
        raise DomainError(f"t must lie in (0, 1), got {text}")
    return text


def ellipse(t="1/sqrt(2)") -> DomainCase:
    """Ellipse x^2/cosh^2 xi + y^2/sinh^2 xi < 1 with xi = mu(t)/2, base point 0."""
    return DomainCase("ellipse", (("t", _checked_modulus(t)),))


def doubled_ellipse(t="1/sqrt(2)") -> DomainCase:
    """Ellipse with xi = mu(t), reached by the map 2 f(z)^2 - 1; base point -1."""
    return DomainCase("ellipse_doubling", (("t", _checked_modulus(t)),))


_FACTORIES = {
    "strip": strip,
    "triangle": triangle,
    "square": square,
    "parabola": parabola,
    "annulus": annulus,
    "disc": disc,
}
_PARAMETRIC = {
    "hyperbola_focal": ("p", hyperbola_focal),
    "hyperbola_branches": ("theta", hyperbola_branches),
    "ellipse": ("t", ellipse),
    "ellipse_doubling": ("t", doubled_ellipse),
}


def get_case(case_id: str) -> DomainCase:
    """Parse a registry id; out-of-range parameters become diagnostic cases."""
    head, _, rest = case_id.strip().partition(":")
    kind = head.strip().replace("-", "_")
    if kind in _FACTORIES:
        if rest:
            raise UsageError(f"case {head} takes no parameters")
        return _FACTORIES[kind]()
    if kind in _PARAMETRIC:
        name, factory = _PARAMETRIC[kind]
        if not rest:
            return factory()
        key, eq, value = rest.partition("=")
        if not eq or key.strip() != name:
            raise UsageError(f"case {head} expects '{name}=...', got {rest!r}")
        if kind.startswith("hyperbola"):
            return factory(value.strip(), allow_diagnostic=True)
        return factory(value.strip())
    raise UsageError(f"unknown case {case_id!r}; known: {', '.join(known_ids())}")


# id, description, flags
REGISTRY = (
    ("strip", "vertical strip |Re a| < pi/4; map arctan z; target pi^2/8", ""),
    ("triangle", "equilateral triangle with vertices at the cube roots of unity; "
     "4F3(1/3,1/3,2/3,2/3;4/3,4/3,1;1) = B(1/3,1/3)^2/27", ""),
    ("square", "square |x|, |y| < 1/sqrt(2); 4F3(1/4,1/4,1/2,1/2;5/4,5/4,1;1) "
     "against the Fourier double sum for G", ""),
    ("parabola", "parabolic region y^2 < 2x - 1 from a = 1; sum of squared inner sums = pi^4/32", ""),
    ("hyperbola-focal:p=1/3", "region beyond a hyperbola branch, base point at the focus; target 1/4", ""),
    ("hyperbola-focal:p=1/4", "same family at p = 1/4; target (3 sqrt 2 - 4)/4", ""),
    ("hyperbola-branches:theta=pi/8", "region between hyperbola branches; Catalan-number form, target sqrt 2", ""),
    ("hyperbola-branches:theta=pi/16", "between branches via sin(c arctan z); target sin^2 2t/(2 cos 2t)", ""),
    ("hyperbola-branches:theta=pi/6", "between branches via sin(c arctan z); target sin^2 2t/(2 cos 2t)", ""),
    ("ellipse:t=1/sqrt(2)", "ellipse with foci +-1, xi = mu(t)/2; three-term recurrence, "
     "target sinh^2 mu/(2 cosh mu)", ""),
    ("ellipse:t=omega", "ellipse at K(1, omega) = pi, where the first coefficients have closed forms", ""),
    ("ellipse-doubling:t=1/sqrt(2)", "doubled ellipse via 2 f^2 - 1; target sinh^4 mu/(2 cosh 2 mu)", ""),
    ("annulus", "annulus e^(-pi/4) < |a| < e^(pi/4) via exp(arctan z); target cosh(pi/2) - 1",
     "b-proper (onto, not injective)"),
    ("disc", "unit disc, identity map; calibration case G = 1 - |a|^2", "calibration"),
    ("hyperbola-focal:p=0.6", "outside the valid range; squared terms should not be summable", "diagnostic"),
    ("hyperbola-branches:theta=0.9", "outside the valid range; squared terms should not be summable",
     "diagnostic"),
)


def known_ids() -> list[str]:
    return [entry[0] for entry in REGISTRY]


def default_order(case: DomainCase) -> int:
    return DEFAULT_ORDERS[case.kind]


def default_tolerance(case: DomainCase) -> float:
    return DEFAULT_TOLERANCES[case.kind]


# ---------------------------------------------------------------------------
# Per-case constants
# ---------------------------------------------------------------------------

def _focal_p(case) -> Fraction:
    return Fraction(case.param_text("p"))


def _focal_sc(case) -> tuple[mpf, mpf]:
    half = mpmath.pi * to_real(_focal_p(case)) / 2
    return mpmath.sin(half), mpmath.cos(half)


def _theta(case) -> mpf:
    return case.param("theta")


def _ellipse_t(case) -> mpf:
    return case.param("t")


def _ellipse_axes(case) -> tuple[mpf, mpf]:
    """(cosh xi, sinh xi) of the ellipse boundary."""
    m = mu(_ellipse_t(case))
    xi = m / 2 if case.kind == "ellipse" else m
    return mpmath.cosh(xi), mpmath.sinh(xi)


def _branches_slope(case) -> mpf | Fraction:
    """c = 4 theta / pi, exact when theta is a rational multiple of pi."""
    multiple = _pi_multiple(case.param_text("theta"))
    if multiple is not None:
        return 4 * multiple
    return 4 * _theta(case) / mpmath.pi


def is_catalan_case(case: DomainCase) -> bool:
    return (
        case.kind == "hyperbola_branches"
        and _pi_multiple(case.param_text("theta")) == Fraction(1, 8)
    )


# ---------------------------------------------------------------------------
# Geometry: quadratic level sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Conic:
    """F(x, y) = axx x^2 + ayy y^2 + bx x + c0 with F < 0 inside; G = -scale * F."""

    axx: mpf
    ayy: mpf
    bx: mpf
    c0: mpf
    scale: mpf

    def value(self, x, y):
        return self.axx * x * x + self.ayy * y * y + self.bx * x + self.c0

    def gradient_norm(self, x, y):
        gx = 2 * self.axx * x + self.bx
        gy = 2 * self.ayy * y
        return (gx * gx + gy * gy) ** 0.5 if isinstance(gx, float) else mpmath.hypot(gx, gy)

    @property
    def hessian_norm(self):
        return 2 * max(abs(self.axx), abs(self.ayy))


def conic(case: DomainCase) -> Conic | None:
    """The quadratic description of a conic case, or None for other kinds."""
    k = case.kind
    if k == "parabola":
        return Conic(mpf(0), mpf(1), mpf(-2), mpf(1), mpf(2))
    if k == "hyperbola_focal":
        s, c = _focal_sc(case)
        s2, c2 = s * s, c * c
        scale = 2 * c2 / (s2 * (c2 - s2)) if not case.diagnostic else mpf(1)
        return Conic(-(s2 * s2) / c2, s2, -2 * s2, 1 - c2, scale)
    if k == "hyperbola_branches":
        th = _theta(case)
        sn, cs = mpmath.sin(th), mpmath.cos(th)
        scale = 2 * (sn * cs) ** 2 / (cs * cs - sn * sn) if not case.diagnostic else mpf(1)
        return Conic(1 / (sn * sn), -1 / (cs * cs), mpf(0), mpf(-1), scale)
    if k in ("ellipse", "ellipse_doubling"):
        a, b = _ellipse_axes(case)
        a2, b2 = a * a, b * b
        return Conic(1 / a2, 1 / b2, mpf(0), mpf(-1), 2 * a2 * b2 / (a2 + b2))
    return None


def _coords(point) -> tuple[mpf, mpf]:
    if isinstance(point, (tuple, list)):
        return to_real(point[0]), to_real(point[1])
    z = mpmath.mpmathify(point)
    return mpmath.re(z), mpmath.im(z)


def _focal_side(case, x):
    s, c = _focal_sc(case)
    return s * s * x + c * c


def _triangle_gaps(x, y):
    """Re(w^k a) + 1/2 for the three rotations w = e^(2 pi i/3)."""
    h = mpmath.sqrt(3) / 2
    return (x + mpf(0.5), -x / 2 - h * y + mpf(0.5), -x / 2 + h * y + mpf(0.5))


def _margin(case: DomainCase, x, y) -> mpf:
    """A signed quantity positive exactly inside the domain."""
    k = case.kind
    if k == "strip":
        return mpmath.pi / 4 - abs(x)
    if k == "triangle":
        return min(_triangle_gaps(x, y))
    if k == "square":
        half = 1 / mpmath.sqrt(2)
        return min(half - abs(x), half - abs(y))
    if k == "disc":
        return 1 - mpmath.hypot(x, y)
    if k == "annulus":
        r = mpmath.hypot(x, y)
        return min(r - mpmath.exp(-mpmath.pi / 4), mpmath.exp(mpmath.pi / 4) - r)
    q = conic(case)
    margin = -q.value(x, y)
    if k == "hyperbola_focal" and _focal_side(case, x) <= 0:
        return min(margin, _focal_side(case, x))
    return margin


def contains(case: DomainCase, point) -> bool:
    x, y = _coords(point)
    return _margin(case, x, y) > 0


def _check_closed(case, x, y):
    slack = mpf(2) ** (-mp.prec // 2)
    if _margin(case, x, y) < -slack:
        raise DomainError(f"point ({mpmath.nstr(x, 8)}, {mpmath.nstr(y, 8)}) lies outside {case.id}")


def distance_lower_bound(case: DomainCase, point) -> mpf:
    """A positive d no larger than the distance from an interior point to the boundary.

    Exact for the strip, triangle, square, disc and annulus.  For the conics,
    a quadratic F (negative inside) satisfies F(p + v) <= F(p) + g|v| + H|v|^2/2
    with g = |grad F(p)| and H the Hessian norm, so no boundary point lies
    closer than the positive root r = 2h / (g + sqrt(g^2 + 2 H h)), h = -F(p).
    The bound is exact at the center of an ellipse and sharp to first order
    near the boundary.
    """
    x, y = _coords(point)
    if _margin(case, x, y) <= 0:
        raise DomainError(f"{point} is not an interior point of {case.id}")
    q = conic(case)
    if q is None:
        return _margin(case, x, y)
    h = -q.value(x, y)
    g = q.gradient_norm(x, y)
    return 2 * h / (g + mpmath.sqrt(g * g + 2 * q.hessian_norm * h))


class FloatGeometry:
    """float64 copies of a case's geometry, vectorized over numpy arrays (for the oracle)."""

    def __init__(self, case: DomainCase):
        self.kind = case.kind
        q = conic(case)
        self.conic = None
        if q is not None:
            self.conic = tuple(float(v) for v in (q.axx, q.ayy, q.bx, q.c0))
            self.hessian = float(q.hessian_norm)
        if case.kind == "hyperbola_focal":
            s, c = _focal_sc(case)
            self.side = (float(s * s), float(c * c))
        self.quarter_pi = math.pi / 4
        self.half_root2 = 1 / math.sqrt(2)
        self.radii = (math.exp(-math.pi / 4), math.exp(math.pi / 4))

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Lower bound on the boundary distance; values <= 0 mean outside."""
        k = self.kind
        if k == "strip":
            return self.quarter_pi - np.abs(x)
        if k == "triangle":
            h = math.sqrt(3) / 2
            return np.minimum(np.minimum(x + 0.5, 0.5 - x / 2 - h * y), 0.5 - x / 2 + h * y)
        if k == "square":
            return np.minimum(self.half_root2 - np.abs(x), self.half_root2 - np.abs(y))
        if k == "disc":
            return 1 - np.hypot(x, y)
        if k == "annulus":
            r = np.hypot(x, y)
            return np.minimum(r - self.radii[0], self.radii[1] - r)
        axx, ayy, bx, c0 = self.conic
        h = -(axx * x * x + ayy * y * y + bx * x + c0)
        g = np.hypot(2 * axx * x + bx, 2 * ayy * y)
        d = 2 * h / (g + np.sqrt(g * g + 2 * self.hessian * np.maximum(h, 0)))
        if k == "hyperbola_focal":
            s2, c2 = self.side
            d = np.where(s2 * x + c2 > 0, d, -1.0)
        return d


# ---------------------------------------------------------------------------
# G_V
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=4)
def _square_weights(m: int) -> np.ndarray:
    odd = 2 * np.arange(1, m + 1, dtype=np.float64) - 1
    return 1 / (np.outer(odd, odd) * (odd[:, None] ** 2 + odd[None, :] ** 2))


def square_g(x: float, y: float, terms: int = SQUARE_TERMS) -> float:
    """The square's G_V as the truncated Fourier double sum, in float64."""
    odd = 2 * np.arange(1, terms + 1, dtype=np.float64) - 1
    half = 1 / math.sqrt(2)
    sx = np.sin(odd * math.pi * (x - half) / math.sqrt(2))
    sy = np.sin(odd * math.pi * (y - half) / math.sqrt(2))
    return 128 / math.pi**4 * float(sx @ _square_weights(terms) @ sy)


def g_value(case: DomainCase, point) -> mpf:
    """G_V(point): zero on the boundary, Delta G = -4 inside."""
    x, y = _coords(point)
    _check_closed(case, x, y)
    k = case.kind
    if case.diagnostic:
        raise DomainError(f"{case.id} lies outside the range where a finite G exists")
    if k == "strip":
        return mpmath.pi**2 / 8 - 2 * x * x
    if k == "triangle":
        gaps = _triangle_gaps(x, y)
        return 8 * gaps[0] * gaps[1] * gaps[2] / 3
    if k == "square":
        return mpf(square_g(float(x), float(y)))
    if k == "disc":
        return 1 - x * x - y * y
    if k == "annulus":
        r2 = x * x + y * y
        half = mpmath.pi / 2
        return 2 * mpmath.sinh(half) / half * mpmath.log(r2) / 2 + mpmath.cosh(half) - r2
    q = conic(case)
    return -q.scale * q.value(x, y)


# ---------------------------------------------------------------------------
# Coefficient generators
# ---------------------------------------------------------------------------

def _backend_for(order: int, backend: str | None) -> str:
    if backend is not None:
        return backend
    return EXACT if order <= EXACT_ORDER_LIMIT else FLOAT


def _check_order(order: int):
    if order < 8:
        raise UsageError(f"order N must be at least 8, got {order}")


def annulus_coefficients(order: int) -> TruncatedSeries:
    """exp(arctan z) from a_n = (n+1) a_{n+1} + (n-1) a_{n-1}, a_0 = a_1 = 1."""
    a = [Fraction(1), Fraction(1)]
    for n in range(1, order):
        a.append((a[n] - (n - 1) * a[n - 1]) / (n + 1))
    return TruncatedSeries(tuple(a[: order + 1]), EXACT)


def ellipse_coefficients(t, count: int) -> list[mpf]:
    """A_0..A_{count-1} from the three-term recurrence, at the current precision.

    The recurrence has solutions growing like t^(-n) and decaying like t^n,
    so it is run forward with count * log2(1/t^2) extra bits to absorb the
    amplification of rounding errors.
    """
    t = to_real(t)
    prec = mp.prec
    extra = 32 + math.ceil(count * max(0.0, -2 * math.log2(float(t))))
    with mp.workprec(prec + extra):
        k = elliptic_k(t)
        lam = mpmath.pi**2 / (4 * t * k * k)
        sym = t + 1 / t
        prev, cur = mpf(0), mpmath.pi / (2 * mpmath.sqrt(t) * k)
        out = [cur]
        for n in range(count - 1):
            nxt = ((sym * (2 * n + 1) ** 2 - lam) * cur - 2 * n * (2 * n - 1) * prev) / (
                (2 * n + 2) * (2 * n + 3)
            )
            prev, cur = cur, nxt
            out.append(cur)
    with mp.workprec(prec):
        return [+v for v in out]


def _odd_reciprocals(order: int, backend: str) -> TruncatedSeries:
    """sum_j u^j / (2j + 1)."""
    return S.make_series([Fraction(1, 2 * j + 1) for j in range(order + 1)], backend)


def parabola_inner_sums(order: int, backend: str | None = None) -> TruncatedSeries:
    """inner_n = sum_j 1/((2j+1)(2(n-j)+1)) for n = 0..order."""
    o = _odd_reciprocals(order, _backend_for(order, backend))
    return S.cauchy_product(o, o)


def _even_binomials(a: Fraction, order: int, backend: str) -> TruncatedSeries:
    """sum_j binom(a, 2j) u^j."""

    def step(j):
        return (a - 2 * j) * (a - 2 * j - 1) / ((2 * j + 1) * (2 * j + 2))

    return S._rational_ratio_sequence(order, step, backend)


def _negative_binomials(p: Fraction, order: int, backend: str) -> TruncatedSeries:
    """(1 - u)^(-p) = sum_k binom(p + k - 1, k) u^k."""
    return S._rational_ratio_sequence(order, lambda k: (p + k) / (k + 1), backend)


def focal_inner_sums(p, order: int, backend: str | None = None) -> TruncatedSeries:
    """inner_n = sum_j binom(2p, 2j) binom(p + n - j - 1, n - j), n = 0..order."""
    p = Fraction(p)
    backend = _backend_for(order, backend)
    return S.cauchy_product(
        _even_binomials(2 * p, order, backend), _negative_binomials(p, order, backend)
    )


def catalan_inner_sums(order: int, backend: str | None = None) -> TruncatedSeries:
    """inner_n = sum_j binom(j - 3/4, j) C(2(n-j)) / 16^(n-j), n = 0..order."""
    backend = _backend_for(order, backend)
    rising = S._rational_ratio_sequence(order, lambda j: Fraction(4 * j + 1, 4 * (j + 1)), backend)

    def cat_step(k):
        # C(2k+2)/C(2k) = 4(4k+1)(4k+3)/((2k+2)(2k+3)), divided by 16.
        return Fraction((4 * k + 1) * (4 * k + 3), 4 * (2 * k + 2) * (2 * k + 3))

    catalans = S._rational_ratio_sequence(order, cat_step, backend)
    return S.cauchy_product(rising, catalans)


def catalan_form_series(order: int, backend: str = EXACT) -> TruncatedSeries:
    """sin(arctan(z)/2) = (1/2) sum_n (-1)^n inner_n z^(2n+1), through z^order."""
    inner = catalan_inner_sums(order // 2, backend)
    zero = S._zero(backend)
    coeffs = [zero] * (order + 1)
    half = S._coerce(Fraction(1, 2), backend)
    for n, c in enumerate(inner.coeffs):
        if 2 * n + 1 <= order:
            coeffs[2 * n + 1] = half * c if n % 2 == 0 else -half * c
    return TruncatedSeries(tuple(coeffs), backend)


def branches_composition(c, order: int, backend: str | None = None) -> TruncatedSeries:
    """sin(c arctan z) through z^order by series composition."""
    if backend is None:
        backend = EXACT if isinstance(c, Fraction) and order <= 64 else FLOAT
    return S.compose(S.sin_series(order, backend), S.scale(S.arctan_series(order, backend), c))


def _hypergeometric_reduced(case, count, backend):
    if case.kind == "triangle":
        a, b = [Fraction(1, 3), Fraction(2, 3)], [Fraction(4, 3)]
    else:
        a, b = [Fraction(1, 4), Fraction(1, 2)], [Fraction(5, 4)]
    return S.hypergeometric_terms(a, b, count, backend)


def _beta_prefactor(case) -> mpf:
    """The map's leading constant: 3/B(1/3,1/3) or 4/B(1/4,1/2)."""
    if case.kind == "triangle":
        return 3 / beta(Fraction(1, 3), Fraction(1, 3))
    return 4 / beta(Fraction(1, 4), Fraction(1, 2))


def lhs_series(case: DomainCase, order: int, backend: str | None = None) -> TruncatedSeries:
    """Taylor coefficients a_0..a_N of the case's map; a_0 is the base point.

    The parabola, focal hyperbola and doubled ellipse are expanded in u = z^2
    (the H^2 norm of f(z^2) equals that of f).  The triangle and square carry
    their Beta-function prefactor, so they come back on the float backend.
    """
    _check_order(order)
    k = case.kind
    if k == "strip":
        return S.arctan_series(order, backend or EXACT)
    if k == "disc":
        return S.monomial(1, order, 1, backend or EXACT)
    if k == "annulus":
        series = annulus_coefficients(order)
        return series.to_float() if backend == FLOAT else series
    if k in ("triangle", "square"):
        power = 3 if k == "triangle" else 4
        count = (order - 1) // power
        h = _hypergeometric_reduced(case, count, _backend_for(count, backend)).to_float()
        spread = S.substitute_power(h, power, order=order - 1)
        return S.scale(S.shift(spread, 1), _beta_prefactor(case))
    if k == "parabola":
        inner = parabola_inner_sums(order - 1, backend).to_float()
        body = S.scale(S.shift(inner, 1), 8 / mpmath.pi**2)
        return S.add(S.monomial(0, order, 1, FLOAT), body)
    if k == "hyperbola_focal":
        inner = focal_inner_sums(_focal_p(case), order, backend).to_float()
        s, c = _focal_sc(case)
        return S.add(S.scale(inner, 1 / (s * s)), S.monomial(0, order, -(c * c) / (s * s), FLOAT))
    if k == "hyperbola_branches":
        if is_catalan_case(case) and (backend == EXACT or (backend is None and order <= EXACT_ORDER_LIMIT)):
            return catalan_form_series(order, EXACT)
        return branches_composition(_branches_slope(case), order, backend)
    if k == "ellipse":
        coeffs = [mpf(0)] * (order + 1)
        for n, a in enumerate(ellipse_coefficients(_ellipse_t(case), order // 2 + 1)):
            if 2 * n + 1 <= order:
                coeffs[2 * n + 1] = a
        return TruncatedSeries(tuple(coeffs), FLOAT)
    if k == "ellipse_doubling":
        a = TruncatedSeries(tuple(ellipse_coefficients(_ellipse_t(case), order)), FLOAT)
        body = S.scale(S.shift(S.cauchy_product(a, a), 1), 2).truncate(order)
        return S.add(S.monomial(0, order, -1, FLOAT), body)
    raise UsageError(f"no series for {k}")


def map_value(case: DomainCase, w) -> mpc:
    """f(w) for |w| < 1 on the cases supporting base-point shifts."""
    w = mpmath.mpmathify(w)
    if case.kind == "strip":
        return mpc(mpmath.atan(w))
    if case.kind == "parabola":
        root = mpmath.sqrt(mpc(w))
        return 1 + 2 / mpmath.pi**2 * mpmath.log((1 + root) / (1 - root)) ** 2
    if case.kind == "hyperbola_branches":
        return mpc(mpmath.sin(to_real(_branches_slope(case)) * mpmath.atan(w)))
    if case.kind == "disc":
        return mpc(w)
    raise UsageError(f"map_value is not available for {case.id}")


# ---------------------------------------------------------------------------
# Identities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IdentityStatement:
    """sum_{n>=1} series[n]^2 = rhs_value, with lhs_prefactor * rhs_value = G_V(a).

    ``rhs_value`` is None for diagnostic cases, where no finite G exists.
    """

    case_id: str
    lhs_description: str
    rhs_description: str
    rhs_value: mpf | None
    lhs_prefactor: mpf
    series: TruncatedSeries

    def __post_init__(self):
        if self.rhs_value is not None:
            if not mpmath.isfinite(self.rhs_value) or self.rhs_value < 0:
                raise DomainError(f"{self.case_id}: right-hand side {self.rhs_value} is not finite and >= 0")

    @property
    def text(self) -> str:
        return f"{self.lhs_description} = {self.rhs_description}"

    @property
    def g_at_base(self) -> mpf | None:
        return None if self.rhs_value is None else self.lhs_prefactor * self.rhs_value


def _statement(case, lhs, rhs_text, rhs, prefactor, series):
    return IdentityStatement(case.id, lhs, rhs_text, rhs, to_real(prefactor), series)


def square_target() -> mpf:
    """G(0) B(1/4,1/2)^2 / 16, with G(0) from the double sum."""
    return g_value(square(), 0) * beta(Fraction(1, 4), Fraction(1, 2)) ** 2 / 16


def identity(case: DomainCase, order: int | None = None, backend: str | None = None) -> IdentityStatement:
    """The case's identity in reduced form, with a reduced series of order N."""
    if order is None:
        order = default_order(case)
    _check_order(order)
    k = case.kind
    if k == "strip":
        return _statement(case, "sum of squared arctan coefficients", "pi^2/8",
                          mpmath.pi**2 / 8, 1, lhs_series(case, order, backend))
    if k == "disc":
        return _statement(case, "sum of squared coefficients of z", "1", mpf(1), 1,
                          lhs_series(case, order, backend))
    if k == "annulus":
        return _statement(case, "sum of squared coefficients of exp(arctan z)", "cosh(pi/2) - 1",
                          mpmath.cosh(mpmath.pi / 2) - 1, 1, lhs_series(case, order, backend))
    if k == "triangle":
        h = _hypergeometric_reduced(case, order - 1, _backend_for(order, backend))
        b = beta(Fraction(1, 3), Fraction(1, 3))
        return _statement(case, "4F3(1/3,1/3,2/3,2/3;4/3,4/3,1;1)", "B(1/3,1/3)^2/27",
                          b * b / 27, 9 / (b * b), S.shift(h, 1))
    if k == "square":
        h = _hypergeometric_reduced(case, order - 1, _backend_for(order, backend))
        b = beta(Fraction(1, 4), Fraction(1, 2))
        return _statement(case, "4F3(1/4,1/4,1/2,1/2;5/4,5/4,1;1)", "G(0) B(1/4,1/2)^2/16",
                          square_target(), 16 / (b * b), S.shift(h, 1))
    if k == "parabola":
        inner = parabola_inner_sums(order - 1, backend)
        return _statement(case, "sum_n (sum_j 1/((2j+1)(2(n-j)+1)))^2", "pi^4/32",
                          mpmath.pi**4 / 32, 64 / mpmath.pi**4, S.shift(inner, 1))
    if k == "hyperbola_focal":
        p = _focal_p(case)
        s, _ = _focal_sc(case)
        inner = focal_inner_sums(p, order, backend)
        rhs = None if case.diagnostic else 2 * s**4 / mpmath.cos(mpmath.pi * to_real(p))
        return _statement(case, f"sum_(n>=1) (sum_j binom(2p,2j) binom(p+n-j-1,n-j))^2, p={p}",
                          "2 sin^4(pi p/2)/cos(pi p)", rhs, 1 / s**4, inner)
    if k == "hyperbola_branches":
        th = _theta(case)
        if is_catalan_case(case):
            inner = catalan_inner_sums(order - 1, backend)
            return _statement(case, "sum_n (sum_j binom(j-3/4,j) C(2(n-j))/16^(n-j))^2", "sqrt(2)",
                              mpmath.sqrt(2), mpf(1) / 4, S.shift(inner, 1))
        rhs = None if case.diagnostic else mpmath.sin(2 * th) ** 2 / (2 * mpmath.cos(2 * th))
        return _statement(case, f"sum of squared coefficients of sin((4 theta/pi) arctan z), "
                          f"theta={case.param_text('theta')}", "sin^2(2 theta)/(2 cos(2 theta))",
                          rhs, 1, branches_composition(_branches_slope(case), order, backend))
    if k == "ellipse":
        t = _ellipse_t(case)
        a = TruncatedSeries(tuple(ellipse_coefficients(t, order)), FLOAT)
        m = mu(t)
        return _statement(case, "sum_n A_n(t)^2", "sinh^2 mu/(2 cosh mu)",
                          mpmath.sinh(m) ** 2 / (2 * mpmath.cosh(m)), 1, S.shift(a, 1))
    if k == "ellipse_doubling":
        return ellipse_doubling(_ellipse_t(case), order, case_id=case.id)
    raise UsageError(f"no identity for {k}")


def ellipse_doubling(t, order: int, *, case_id: str | None = None) -> IdentityStatement:
    """sum_n (sum_j A_j A_(n-j))^2 = sinh^4 mu(t)/(2 cosh 2 mu(t)).

    2 f(z)^2 - 1 maps the disc onto the ellipse with twice the parameter,
    sending 0 to the focus -1.
    """
    _check_order(order)
    t = to_real(t)
    a = TruncatedSeries(tuple(ellipse_coefficients(t, order)), FLOAT)
    m = mu(t)
    rhs = mpmath.sinh(m) ** 4 / (2 * mpmath.cosh(2 * m))
    return IdentityStatement(
        case_id or f"ellipse-doubling:t={mpmath.nstr(t, 20)}",
        "sum_n (sum_j A_j A_(n-j))^2",
        "sinh^4 mu/(2 cosh 2 mu)",
        rhs,
        mpf(4),
        S.shift(S.cauchy_product(a, a), 1),
    )


def moebius_family(case: DomainCase, w, order: int | None = None) -> IdentityStatement:
    """Identity for f((z + w)/(1 + w z)), which moves the base point to f(w).

    Real w only.  w = 0 returns identity(case, N) unchanged.
    """
    if case.kind not in MOEBIUS_KINDS:
        raise UsageError(f"base-point shifts are supported for {', '.join(MOEBIUS_KINDS)}, not {case.id}")
    if order is None:
        order = default_order(case)
    _check_order(order)
    w = to_real(w)
    if not abs(w) < 1 - mpf(2) ** -8:
        raise UsageError(f"|w| must be below 1 - 2^-8, got {w}")
    if w == 0:
        return identity(case, order)
    outer = S.moebius_outer_order(order, w)
    f = lhs_series(case, outer, FLOAT)
    shifted = S.moebius_compose(f, w, order)
    point = map_value(case, w)
    rhs = g_value(case, point)
    return IdentityStatement(
        f"{case.id}@w={mpmath.nstr(w, 15)}",
        f"sum of squared coefficients of f((z+w)/(1+wz)), w={mpmath.nstr(w, 15)}",
        f"G(f(w)) = G({mpmath.nstr(point.real, 15)}{'' if point.imag == 0 else ' + i' + mpmath.nstr(point.imag, 15)})",
        rhs,
        mpf(1),
        shifted,
    )
