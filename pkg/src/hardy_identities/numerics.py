"""Scalar kernels at a configurable binary precision.

Every real-valued routine here computes at the current mpmath working
precision ``mp.prec`` (the run precision P).  Scope a run with
:func:`working_precision`; results are deterministic for a fixed P.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from fractions import Fraction

import mpmath
from mpmath import mp, mpf

from .errors import DomainError, NumericError, UsageError

DEFAULT_PRECISION = 128

# log_gamma meets a relative error of 2**(-P + LOG_GAMMA_GUARD_BITS).
LOG_GAMMA_GUARD_BITS = 4

Real = mpf
Rational = Fraction


@contextmanager
def working_precision(bits: int):
    """Run the enclosed block at ``bits`` of binary precision."""
    if bits < 53:
        raise UsageError(f"precision must be at least 53 bits, got {bits}")
    with mp.workprec(bits):
        yield


def to_real(x) -> mpf:
    """Convert an int, Fraction, float, string or mpf to an mpf at the current precision."""
    if isinstance(x, Fraction):
        return mpf(x.numerator) / x.denominator
    return mpf(x)


def to_rational(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise UsageError(f"cannot treat {x!r} as an exact rational")


# ---------------------------------------------------------------------------
# Gamma and Beta
# ---------------------------------------------------------------------------

def _stirling_log_gamma(x: mpf, wp: int) -> tuple[mpf, mpf]:
    """ln Gamma(x) at working precision wp, plus the magnitude of the largest
    intermediate (used to judge cancellation)."""
    # The smallest Stirling term is about exp(-2*pi*z); z >= 0.12*wp + 4
    # pushes it below 2**-wp with margin.
    zmin = 0.12 * wp + 4
    m = max(0, math.ceil(zmin - float(x)))
    prod = mpf(1)
    for k in range(m):
        prod *= x + k
    z = x + m
    lead = (z - mpf(0.5)) * mpmath.log(z) - z + mpmath.log(2 * mpmath.pi) / 2
    series = mpf(0)
    eps = mpf(2) ** (-wp)
    z2 = z * z
    zpow = z
    prev = mpf("inf")
    k = 1
    while True:
        term = mpmath.bernoulli(2 * k) / (2 * k * (2 * k - 1) * zpow)
        size = abs(term)
        if size < eps:
            break
        if size > prev:
            raise NumericError(f"Stirling series diverged before convergence at z={z}")
        series += term
        prev = size
        zpow *= z2
        k += 1
    logprod = mpmath.log(prod)
    scale = max(abs(lead), abs(logprod), mpf(1))
    return lead + series - logprod, scale


def log_gamma(x) -> mpf:
    """ln Gamma(x) for real x > 0.

    Uses the Stirling series after shifting the argument upward, at raised
    working precision; precision is escalated when the result is small
    relative to the intermediates (near the zeros at x = 1 and x = 2), so
    the relative error stays below 2**(-P + LOG_GAMMA_GUARD_BITS).
    """
    x = to_real(x)
    if not x > 0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    if x == 1 or x == 2:
        return mpf(0)
    prec = mp.prec
    extra = 24
    for _ in range(6):
        wp = prec + extra
        with mp.workprec(wp):
            value, scale = _stirling_log_gamma(x, wp)
        if value == 0:
            extra *= 2
            continue
        lost = int(mpmath.mag(scale)) - int(mpmath.mag(value))
        if wp - lost - 8 >= prec:
            return +value
        extra += lost + 8
    raise NumericError(f"log_gamma could not resolve ln Gamma({x}) to {prec} bits")


def beta(x, y) -> mpf:
    """Euler's Beta function via log_gamma."""
    x = to_real(x)
    y = to_real(y)
    if not (x > 0 and y > 0):
        raise DomainError(f"beta requires positive arguments, got ({x}, {y})")
    with mp.workprec(mp.prec + 16):
        value = mpmath.exp(log_gamma(x) + log_gamma(y) - log_gamma(x + y))
    return +value


# ---------------------------------------------------------------------------
# Elliptic integrals
# ---------------------------------------------------------------------------

def _max_iterations() -> int:
    return 10 * mp.prec


def agm(a, b) -> mpf:
    """Arithmetic-geometric mean of two positive reals."""
    a = to_real(a)
    b = to_real(b)
    if not (a > 0 and b > 0):
        raise DomainError(f"agm requires positive arguments, got ({a}, {b})")
    eps = mpf(2) ** (-mp.prec - 4)
    with mp.workprec(mp.prec + 10):
        for _ in range(_max_iterations()):
            if abs(a - b) <= eps * a:
                return +((a + b) / 2)
            a, b = (a + b) / 2, mpmath.sqrt(a * b)
    raise NumericError("agm did not converge")


def _complement(t: mpf) -> mpf:
    return mpmath.sqrt((1 - t) * (1 + t))


def _check_modulus(t: mpf, name: str) -> None:
    if t < 0 or t >= 1:
        raise DomainError(f"{name} requires 0 <= t < 1, got {t}")
    if 1 - t <= mpf(2) ** (-(mp.prec // 2)):
        raise DomainError(f"{name}: t is within 2**(-P/2) of 1")


def elliptic_k(t) -> mpf:
    """K(1, t) = integral_0^1 dx / sqrt((1 - x^2)(1 - t^2 x^2)), by the AGM."""
    t = to_real(t)
    _check_modulus(t, "elliptic_k")
    with mp.workprec(mp.prec + 10):
        value = mpmath.pi / (2 * agm(1, _complement(t)))
    return +value


def elliptic_ke(t) -> tuple[mpf, mpf]:
    """Complete integrals of the first and second kind (K, E) at modulus t."""
    t = to_real(t)
    _check_modulus(t, "elliptic_ke")
    eps = mpf(2) ** (-mp.prec - 4)
    with mp.workprec(mp.prec + 16):
        a, b, c = mpf(1), _complement(t), t
        total = c * c / 2
        power = mpf(1) / 2
        for _ in range(_max_iterations()):
            if abs(a - b) <= eps * a:
                break
            a, b, c = (a + b) / 2, mpmath.sqrt(a * b), (a - b) / 2
            power *= 2
            total += power * c * c
        else:
            raise NumericError("elliptic_ke did not converge")
        k = mpmath.pi / (2 * a)
        e = k * (1 - total)
    return +k, +e


def mu(t) -> mpf:
    """mu(t) = pi K(1, sqrt(1 - t^2)) / (2 K(1, t)), for 0 < t < 1.

    Evaluated as (pi/2) AGM(1, t') / AGM(1, t), which avoids forming
    sqrt(1 - t'^2) and stays accurate at both ends of the interval.
    """
    t = to_real(t)
    if not (0 < t < 1):
        raise DomainError(f"mu requires 0 < t < 1, got {t}")
    with mp.workprec(mp.prec + 10):
        value = mpmath.pi / 2 * agm(1, _complement(t)) / agm(1, t)
    return +value


def mu_derivative(t) -> mpf:
    """d mu / dt = -pi^2 / (4 t (1 - t^2) K(1, t)^2)."""
    t = to_real(t)
    if not (0 < t < 1):
        raise DomainError(f"mu_derivative requires 0 < t < 1, got {t}")
    with mp.workprec(mp.prec + 10):
        k = mpmath.pi / (2 * agm(1, _complement(t)))
        value = -mpmath.pi ** 2 / (4 * t * (1 - t) * (1 + t) * k * k)
    return +value


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------

def find_root(f, lo, hi, *, df=None, tol=None) -> mpf:
    """Root of f in [lo, hi]: bisection to a narrow bracket, then Newton.

    f(lo) and f(hi) must differ in sign.  Without ``df`` the polish uses
    secant steps.  Newton steps that leave the bracket fall back to
    bisection.  Total work is capped at 10*P evaluations.
    """
    lo = to_real(lo)
    hi = to_real(hi)
    flo = f(lo)
    fhi = f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NumericError(
            f"root not bracketed: f({lo})={mpmath.nstr(flo, 8)}, f({hi})={mpmath.nstr(fhi, 8)}"
        )
    if tol is None:
        tol = mpf(2) ** (-mp.prec + 8)
    xtol = mpf(2) ** (-mp.prec + 4)
    budget = _max_iterations()
    used = 0
    while hi - lo > mpf(2) ** -30 * max(1, abs(lo)):
        mid = (lo + hi) / 2
        fmid = f(mid)
        used += 1
        if fmid == 0:
            return mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
    x = (lo + hi) / 2
    fx = f(x)
    x_prev, f_prev = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
    while used < budget:
        used += 1
        if abs(fx) <= tol:
            return x
        if df is not None:
            slope = df(x)
        else:
            slope = (fx - f_prev) / (x - x_prev) if x != x_prev else mpf(0)
        step_ok = slope != 0
        if step_ok:
            x_new = x - fx / slope
            step_ok = lo < x_new < hi
        if not step_ok:
            x_new = (lo + hi) / 2
        f_new = f(x_new)
        if (f_new > 0) == (flo > 0):
            lo, flo = x_new, f_new
        else:
            hi, fhi = x_new, f_new
        if abs(x_new - x) <= xtol * max(1, abs(x)):
            return x_new
        x_prev, f_prev = x, fx
        x, fx = x_new, f_new
    raise NumericError(f"root finder exceeded {budget} iterations")


def invert_mu(target) -> mpf:
    """Return t in (0, 1) with mu(t) = target (mu is strictly decreasing)."""
    target = to_real(target)
    if not target > 0:
        raise DomainError(f"invert_mu requires a positive target, got {target}")
    edge = mpf(2) ** (-(mp.prec // 2))
    lo, hi = edge, 1 - edge
    if not (mu(hi) <= target <= mu(lo)):
        raise NumericError(
            f"mu target {mpmath.nstr(target, 10)} outside the bracket "
            f"[{mpmath.nstr(mu(hi), 10)}, {mpmath.nstr(mu(lo), 10)}] at {mp.prec} bits"
        )
    return find_root(
        lambda t: mu(t) - target,
        lo,
        hi,
        df=mu_derivative,
        tol=mpf(2) ** (-(mp.prec // 2)) / 4,
    )


def solve_elliptic_k(target) -> mpf:
    """Return t in [0, 1) with K(1, t) = target; requires target >= pi/2."""
    target = to_real(target)
    if target < mpmath.pi / 2:
        raise DomainError(f"K(1, t) >= pi/2 on [0, 1); got target {target}")

    def slope(t):
        k, e = elliptic_ke(t)
        tc2 = (1 - t) * (1 + t)
        return (e - tc2 * k) / (t * tc2)

    hi = 1 - mpf(2) ** (-(mp.prec // 2)) * 2
    return find_root(lambda t: elliptic_k(t) - target, mpf(0), hi, df=slope)


# ---------------------------------------------------------------------------
# Exact combinatorics
# ---------------------------------------------------------------------------

def gen_binomial(a, k: int) -> Fraction:
    """binom(a, k) = a (a-1) ... (a-k+1) / k! for rational a."""
    if k < 0:
        raise DomainError(f"gen_binomial requires k >= 0, got {k}")
    a = to_rational(a)
    value = Fraction(1)
    for i in range(k):
        value = value * (a - i) / (i + 1)
    return value


def catalan(k: int) -> int:
    if k < 0:
        raise DomainError(f"catalan requires k >= 0, got {k}")
    return math.comb(2 * k, k) // (k + 1)
