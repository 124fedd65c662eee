"""Truncated power series over exact rationals or P-bit floats.

Two backends share one container:

* ``"exact"``: coefficients are :class:`fractions.Fraction`.
* ``"float"``: coefficients are mpmath ``mpf`` at the run precision.  Products
  and compositions run in fixed point on Python integers; long convolutions
  use Kronecker substitution (a single big-integer multiply through gmpy2),
  so rounding happens only when converting in and out of fixed point.

A series of order N holds a_0..a_N and says nothing about higher terms.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
import mpmath
import numpy as np
from mpmath import mp, mpf
from mpmath.libmp import to_fixed

from .errors import DomainError, FitRejected, UsageError
from .numerics import to_rational, to_real

EXACT = "exact"
FLOAT = "float"
BACKENDS = (EXACT, FLOAT)

# Below this many multiply-adds a schoolbook convolution beats packing.
_KRONECKER_THRESHOLD = 4096


@dataclass(frozen=True)
class TruncatedSeries:
    """Coefficients a_0..a_N of a power series, tagged with their backend."""

    coeffs: tuple
    backend: str

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise UsageError(f"unknown backend {self.backend!r}")
        if not self.coeffs:
            raise UsageError("a series needs at least a constant term")

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, n):
        return self.coeffs[n]

    def __iter__(self):
        return iter(self.coeffs)

    def __add__(self, other):
        return add(self, other)

    def __neg__(self):
        return scale(self, -1)

    def __sub__(self, other):
        return add(self, -other)

    def __mul__(self, other):
        if isinstance(other, TruncatedSeries):
            return cauchy_product(self, other)
        return scale(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __call__(self, z):
        """Evaluate the truncated polynomial at z (Horner)."""
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * z + (to_real(c) if self.backend == EXACT else c)
        return acc

    def __repr__(self):
        head = ", ".join(str(c) for c in self.coeffs[:6])
        more = ", ..." if self.order > 5 else ""
        return f"TruncatedSeries([{head}{more}], order={self.order}, backend={self.backend!r})"

    def truncate(self, order: int) -> TruncatedSeries:
        if order < 0:
            raise UsageError("order must be non-negative")
        if order > self.order:
            raise UsageError(f"cannot extend a series of order {self.order} to {order}")
        return TruncatedSeries(self.coeffs[: order + 1], self.backend)

    def to_float(self) -> TruncatedSeries:
        if self.backend == FLOAT:
            return self
        return TruncatedSeries(tuple(to_real(c) for c in self.coeffs), FLOAT)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _coerce(c, backend):
    return to_rational(c) if backend == EXACT else to_real(c)


def make_series(coeffs, backend: str | None = None) -> TruncatedSeries:
    coeffs = list(coeffs)
    if backend is None:
        exact = all(isinstance(c, (int, Fraction)) for c in coeffs)
        backend = EXACT if exact else FLOAT
    return TruncatedSeries(tuple(_coerce(c, backend) for c in coeffs), backend)


def _zero(backend):
    return Fraction(0) if backend == EXACT else mpf(0)


def zeros(order: int, backend: str = EXACT) -> TruncatedSeries:
    return TruncatedSeries((_zero(backend),) * (order + 1), backend)


def monomial(k: int, order: int, coeff=1, backend: str = EXACT) -> TruncatedSeries:
    """coeff * z**k as a series of the given order."""
    coeffs = [_zero(backend)] * (order + 1)
    if k <= order:
        coeffs[k] = _coerce(coeff, backend)
    return TruncatedSeries(tuple(coeffs), backend)


def _from_rationals(values, backend) -> TruncatedSeries:
    return TruncatedSeries(tuple(_coerce(v, backend) for v in values), backend)


def arctan_series(order: int, backend: str = EXACT) -> TruncatedSeries:
    """z - z^3/3 + z^5/5 - ..."""
    values = [
        Fraction((-1) ** (n // 2), n) if n % 2 else Fraction(0) for n in range(order + 1)
    ]
    return _from_rationals(values, backend)


def log_ratio_series(order: int, backend: str = EXACT) -> TruncatedSeries:
    """log((1 + z)/(1 - z)) = 2 (z + z^3/3 + z^5/5 + ...)."""
    values = [Fraction(2, n) if n % 2 else Fraction(0) for n in range(order + 1)]
    return _from_rationals(values, backend)


def sin_series(order: int, backend: str = EXACT) -> TruncatedSeries:
    values = []
    fact = 1
    for n in range(order + 1):
        if n:
            fact *= n
        values.append(Fraction((-1) ** (n // 2), fact) if n % 2 else Fraction(0))
    return _from_rationals(values, backend)


def exp_series(order: int, backend: str = EXACT) -> TruncatedSeries:
    values = []
    fact = 1
    for n in range(order + 1):
        if n:
            fact *= n
        values.append(Fraction(1, fact))
    return _from_rationals(values, backend)


def _rational_ratio_sequence(order, step, backend):
    """Coefficients t_0 = 1, t_{n+1} = t_n * step(n), step returning a Fraction."""
    if backend == EXACT:
        t = Fraction(1)
        values = [t]
        for n in range(order):
            t = t * step(n)
            values.append(t)
        return TruncatedSeries(tuple(values), EXACT)
    prec = mp.prec
    with mp.workprec(prec + 24 + order.bit_length()):
        t = mpf(1)
        values = [t]
        for n in range(order):
            r = step(n)
            t = t * r.numerator / r.denominator
            values.append(t)
    with mp.workprec(prec):
        return TruncatedSeries(tuple(+v for v in values), FLOAT)


def binomial_series(a, order: int, backend: str = EXACT) -> TruncatedSeries:
    """(1 + z)**a for rational a: coefficients binom(a, n)."""
    a = to_rational(a)
    return _rational_ratio_sequence(order, lambda n: (a - n) / (n + 1), backend)


def hypergeometric_terms(a_list, b_list, order: int, backend: str = EXACT) -> TruncatedSeries:
    """Terms (a_1)_n...(a_p)_n / ((b_1)_n...(b_q)_n n!) of pFq as a series in w.

    Built from the ratio t_{n+1}/t_n = prod(a_i + n) / (prod(b_j + n) (n + 1)),
    evaluated exactly in rationals; the float backend multiplies those exact
    ratios in at raised precision.
    """
    a_list = [to_rational(a) for a in a_list]
    b_list = [to_rational(b) for b in b_list]
    for b in b_list:
        if b <= 0 and b.denominator == 1:
            raise DomainError(f"lower parameter {b} is a non-positive integer")

    def step(n):
        num = Fraction(1)
        for a in a_list:
            num *= a + n
        den = Fraction(n + 1)
        for b in b_list:
            den *= b + n
        return num / den

    return _rational_ratio_sequence(order, step, backend)


# ---------------------------------------------------------------------------
# Fixed-point machinery for the float backend
# ---------------------------------------------------------------------------

def _guard_bits(n: int) -> int:
    return 32 + n.bit_length()


def _to_fixed(v: mpf, shift: int) -> int:
    """round(v * 2**shift); mpmath's to_fixed alone floors."""
    return (to_fixed(v._mpf_, shift + 1) + 1) >> 1


def _fixed_vector(values) -> tuple[list[int], int]:
    """Scale mpf values to integers so the largest carries P + guard bits."""
    biggest = max((abs(v) for v in values), default=mpf(0))
    if not biggest:
        return [0] * len(values), 0
    shift = mp.prec + _guard_bits(len(values)) - int(mpmath.mag(biggest))
    return [_to_fixed(v, shift) for v in values], shift


def _from_fixed(ints, shift) -> tuple:
    return tuple(mpf((c, -shift)) for c in ints)


def _round_shift(x: int, shift: int) -> int:
    if shift <= 0:
        return x << -shift
    return (x + (1 << (shift - 1))) >> shift


def _pack(values: list[int], nbytes: int):
    pos = b"".join((v if v > 0 else 0).to_bytes(nbytes, "little") for v in values)
    packed = gmpy2.mpz.from_bytes(pos, "little")
    if any(v < 0 for v in values):
        neg = b"".join((-v if v < 0 else 0).to_bytes(nbytes, "little") for v in values)
        packed -= gmpy2.mpz.from_bytes(neg, "little")
    return packed


def _int_convolve(a: list[int], b: list[int], n: int) -> list[int]:
    """First n terms of the convolution of two integer sequences, exactly."""
    a = list(a[:n])
    b = list(b[:n])
    while a and a[-1] == 0:
        a.pop()
    while b and b[-1] == 0:
        b.pop()
    if not a or not b:
        return [0] * n
    if len(a) * len(b) <= _KRONECKER_THRESHOLD:
        out = [0] * n
        for i, x in enumerate(a):
            if x:
                for j in range(min(len(b), n - i)):
                    out[i + j] += x * b[j]
        return out
    # Kronecker substitution: evaluate both at 2**(8*nbytes), multiply once,
    # then read the balanced digits back off.
    bound = max(abs(x) for x in a).bit_length() + max(abs(x) for x in b).bit_length()
    bits = bound + min(len(a), len(b)).bit_length() + 2
    nbytes = (bits + 7) // 8
    product = _pack(a, nbytes) * _pack(b, nbytes)
    length = len(a) + len(b) - 1
    half = 1 << (8 * nbytes - 1)
    offset = gmpy2.mpz.from_bytes(half.to_bytes(nbytes, "little") * length, "little")
    data = (product + offset).to_bytes(length * nbytes, "little")
    keep = min(length, n)
    out = [
        int.from_bytes(data[i * nbytes : (i + 1) * nbytes], "little") - half for i in range(keep)
    ]
    out.extend([0] * (n - keep))
    return out


def _common_denominator(values) -> tuple[list[int], int]:
    den = math.lcm(*(v.denominator for v in values)) if values else 1
    return [v.numerator * (den // v.denominator) for v in values], den


def _exact_convolve(a, b, n) -> list[Fraction]:
    na, da = _common_denominator(list(a[:n]))
    nb, db = _common_denominator(list(b[:n]))
    den = da * db
    return [Fraction(c, den) for c in _int_convolve(na, nb, n)]


# ---------------------------------------------------------------------------
# Series algebra
# ---------------------------------------------------------------------------

def _same_backend(f: TruncatedSeries, g: TruncatedSeries) -> None:
    if f.backend != g.backend:
        raise UsageError(f"backend mismatch: {f.backend} vs {g.backend}")


def add(f: TruncatedSeries, g: TruncatedSeries) -> TruncatedSeries:
    _same_backend(f, g)
    n = min(f.order, g.order) + 1
    return TruncatedSeries(tuple(map(operator.add, f.coeffs[:n], g.coeffs[:n])), f.backend)


def scale(f: TruncatedSeries, c) -> TruncatedSeries:
    c = _coerce(c, f.backend)
    return TruncatedSeries(tuple(c * a for a in f.coeffs), f.backend)


def shift(f: TruncatedSeries, k: int) -> TruncatedSeries:
    """z**k * f, known through order N + k."""
    if k < 0:
        raise UsageError("shift must be non-negative")
    return TruncatedSeries((_zero(f.backend),) * k + f.coeffs, f.backend)


def scale_variable(f: TruncatedSeries, c) -> TruncatedSeries:
    """f(c z)."""
    c = _coerce(c, f.backend)
    out = []
    power = _coerce(1, f.backend)
    for a in f.coeffs:
        out.append(a * power)
        power *= c
    return TruncatedSeries(tuple(out), f.backend)


def substitute_power(f: TruncatedSeries, k: int, order: int | None = None) -> TruncatedSeries:
    """f(z**k), truncated at ``order`` (default: the order of f).

    Passing ``order=k*f.order`` keeps every known coefficient.
    """
    if k < 1:
        raise UsageError(f"substitute_power needs k >= 1, got {k}")
    if order is None:
        order = f.order
    if order > k * f.order + k - 1:
        raise UsageError(f"f(z^{k}) is only known through order {k * f.order + k - 1}")
    zero = _zero(f.backend)
    coeffs = [zero] * (order + 1)
    for n, a in enumerate(f.coeffs):
        if k * n > order:
            break
        coeffs[k * n] = a
    return TruncatedSeries(tuple(coeffs), f.backend)


def cauchy_product(f: TruncatedSeries, g: TruncatedSeries) -> TruncatedSeries:
    """c_n = sum_j a_j b_{n-j}, through order min(N_f, N_g)."""
    _same_backend(f, g)
    n = min(f.order, g.order) + 1
    if f.backend == EXACT:
        return TruncatedSeries(tuple(_exact_convolve(f.coeffs, g.coeffs, n)), EXACT)
    fa, sa = _fixed_vector(f.coeffs[:n])
    gb, sb = _fixed_vector(g.coeffs[:n])
    return TruncatedSeries(_from_fixed(_int_convolve(fa, gb, n), sa + sb), FLOAT)


def compose(outer: TruncatedSeries, inner: TruncatedSeries) -> TruncatedSeries:
    """outer(inner(z)) through order min(N_outer, N_inner), by Horner's scheme.

    inner must vanish at 0.  On the float backend the Horner accumulator is
    held in fixed point; steps where it is still identically zero (outer
    coefficients below the working resolution) cost nothing.
    """
    _same_backend(outer, inner)
    n = min(outer.order, inner.order) + 1
    if outer.backend == EXACT:
        if inner[0] != 0:
            raise UsageError(f"compose needs inner(0) = 0, got {inner[0]}")
        acc = [Fraction(0)] * n
        live = False
        for k in range(n - 1, -1, -1):
            if live:
                acc = _exact_convolve(acc, inner.coeffs, n)
            acc[0] += outer[k]
            live = live or outer[k] != 0
        return TruncatedSeries(tuple(acc), EXACT)

    if abs(inner[0]) > mpf(2) ** (-mp.prec + 8):
        raise UsageError(f"compose needs inner(0) = 0, got {inner[0]}")
    # Rescale to outer(B u) with u = inner / B, where B bounds the l1 norm of
    # inner: every power of u then has coefficients at most 1, so outer terms
    # that round to zero in fixed point are genuinely negligible.
    bound = max(mpf(1), mpmath.fsum(abs(c) for c in inner.coeffs[1:n]))
    inner_fixed, s_in = _fixed_vector([c / bound for c in inner.coeffs[:n]])
    inner_fixed[0] = 0
    scaled = []
    power = mpf(1)
    for c in outer.coeffs[:n]:
        scaled.append(c * power)
        power *= bound
    biggest = max(abs(c) for c in scaled)
    s_out = mp.prec + _guard_bits(n) - min(0, int(mpmath.mag(biggest)) if biggest else 0)
    outer_fixed = [_to_fixed(c, s_out) for c in scaled]
    acc = [0] * n
    live = False
    for k in range(n - 1, -1, -1):
        if live:
            acc = [_round_shift(c, s_in) for c in _int_convolve(acc, inner_fixed, n)]
        acc[0] += outer_fixed[k]
        live = live or any(acc)
    return TruncatedSeries(_from_fixed(acc, s_out), FLOAT)


def moebius_outer_order(order: int, w) -> int:
    """Outer order needed so f((z+w)/(1+wz)) is complete through z**order.

    The coefficients of ((z+w)/(1+wz))**m concentrate on indices between
    m(1-|w|)/(1+|w|) and m(1+|w|)/(1-|w|) and decay exponentially outside,
    so outer terms beyond order*(1+|w|)/(1-|w|) plus a margin are negligible.
    """
    w = abs(float(w))
    ratio = (1 + w) / (1 - w)
    return math.ceil(order * ratio * 1.15) + 64 + mp.prec


def moebius_compose(f: TruncatedSeries, w, order: int) -> TruncatedSeries:
    """Coefficients of f((z + w)/(1 + w z)) through z**order, for real |w| < 1.

    Horner's scheme over every coefficient of f; each step multiplies by the
    Moebius map in O(order) operations: multiply by (z + w), divide by (1 + w z).
    The map has modulus one on the unit circle, so rounding errors do not grow
    from step to step.
    """
    if f.backend == EXACT:
        w = to_rational(w)
        if not abs(w) < 1:
            raise UsageError(f"|w| must be < 1, got {w}")
        acc = [Fraction(0)] * (order + 1)
        live = False
        for a in reversed(f.coeffs):
            if live:
                prev_c = Fraction(0)
                prev_r = Fraction(0)
                for k in range(order + 1):
                    r = acc[k]
                    prev_c = prev_r + w * (r - prev_c)
                    acc[k] = prev_c
                    prev_r = r
            acc[0] += a
            live = live or a != 0
        return TruncatedSeries(tuple(acc), EXACT)

    w = to_real(w)
    if not abs(w) < 1:
        raise UsageError(f"|w| must be < 1, got {w}")
    f_fixed, s_f = _fixed_vector(f.coeffs)
    s_w = mp.prec + _guard_bits(len(f.coeffs))
    w_fixed = _to_fixed(w, s_w)
    half = 1 << (s_w - 1)
    acc = [0] * (order + 1)
    live = False
    for a in reversed(f_fixed):
        if live:
            prev_c = 0
            prev_r = 0
            out = [0] * (order + 1)
            for k in range(order + 1):
                r = acc[k]
                prev_c = prev_r + ((w_fixed * (r - prev_c) + half) >> s_w)
                out[k] = prev_c
                prev_r = r
            acc = out
        acc[0] += a
        live = live or a != 0
    return TruncatedSeries(_from_fixed(acc, s_f), FLOAT)


# ---------------------------------------------------------------------------
# Hardy sums and tails
# ---------------------------------------------------------------------------

def _exact_total(values) -> gmpy2.mpq:
    items = [gmpy2.mpq(v.numerator, v.denominator) for v in values if v]
    if not items:
        return gmpy2.mpq(0)
    while len(items) > 1:
        paired = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            paired.append(items[-1])
        items = paired
    return items[0]


def hardy_partial_sum(f: TruncatedSeries) -> tuple[mpf, list]:
    """sum_{n=1}^{N} |a_n|^2 and the list of squares |a_n|^2 indexed by n.

    The constant term is excluded from the sum (but kept at index 0 of the
    returned list).  The exact backend sums in rationals before rounding once.
    """
    terms = [a * a for a in f.coeffs]
    if f.backend == EXACT:
        total = _exact_total(terms[1:])
        return mpf(total.numerator) / mpf(total.denominator), terms
    return mpmath.fsum(terms[1:]), terms


def hardy_partial_sum_exact(f: TruncatedSeries) -> Fraction:
    if f.backend != EXACT:
        raise UsageError("exact Hardy sums need the exact backend")
    total = _exact_total([a * a for a in f.coeffs[1:]])
    return Fraction(int(total.numerator), int(total.denominator))


@dataclass(frozen=True)
class TailEstimate:
    """Power-law fit t_n ~ C n^(-s) of the squared terms and the implied remainder."""

    fitted_exponent: float
    coefficient: mpf
    tail_bound: mpf
    fit_window: tuple[int, int]
    density: float = 1.0
    block: int = 1

    def __post_init__(self):
        if self.tail_bound < 0:
            raise UsageError("tail_bound must be non-negative")
        lo, hi = self.fit_window
        if lo > hi or lo < 0:
            raise UsageError(f"bad fit window {self.fit_window}")

    @property
    def diverges(self) -> bool:
        return self.fitted_exponent <= 1


def _log(x) -> float:
    return float(mpmath.log(x))


def fit_tail(terms, window=None, block: int = 1) -> TailEstimate:
    """Fit t_n ~ C n^(-s) by least squares in log-log coordinates.

    ``terms[n]`` is the n-th squared coefficient.  The default window is the
    last quarter of the indices, widened to hold at least 16 fitted points.
    Zero terms (coefficients that vanish identically, e.g. odd series) are
    skipped and the remainder is scaled by the observed density of nonzero
    indices.  With ``block > 1`` consecutive indices are averaged in blocks
    first, which smooths sequences whose squares oscillate.

    The remainder is C N^(1-s)/(s-1) for s > 1; for s <= 1 it is infinite
    and the estimate reports ``diverges``.

    Raises FitRejected if the fitted values are not monotone non-increasing.
    """
    last = len(terms) - 1
    if window is None:
        lo = last - last // 4
    else:
        lo, hi = window[0], window[-1]
        if hi != last:
            last = hi
        if lo < 0 or hi >= len(terms):
            raise UsageError(f"window {window} outside [0, {len(terms) - 1}]")
    lo = max(lo, 1)
    minimum = 16 if window is None else 8
    # Work in mpf over the indices the fit can touch; exact terms are slow to average.
    first = max(1, min(lo, last + 1 - 4 * minimum * block))
    terms = [mpf(0)] * first + [to_real(t) if isinstance(t, Fraction) else t for t in terms[first : last + 1]]

    if block == 1:
        points = [(n, terms[n]) for n in range(lo, last + 1) if terms[n]]
        if window is None and len(points) < minimum:
            points = [(n, terms[n]) for n in range(1, last + 1) if terms[n]][-minimum:]
        if len(points) < 8:
            raise FitRejected(f"only {len(points)} nonzero terms in the fit window; raise N")
        span = points[-1][0] - points[0][0]
        density = (len(points) - 1) / span
    else:
        if window is None and (last - lo + 1) < minimum * block:
            lo = max(1, last + 1 - minimum * block)
        points = []
        start = last + 1 - ((last + 1 - lo) // block) * block
        for b0 in range(start, last + 1, block):
            chunk = terms[b0 : b0 + block]
            points.append((b0 + (block - 1) / 2, mpmath.fsum(chunk) / block))
        if len(points) < 8:
            raise FitRejected(f"only {len(points)} blocks in the fit window; raise N")
        density = 1.0

    values = [t for _, t in points]
    if any(t <= 0 for t in values):
        raise FitRejected("zero or negative values in the fit window")
    for a, b in zip(values, values[1:]):
        if b > a:
            raise FitRejected("terms are not monotone non-increasing on the fit window; raise N")

    xs = np.array([math.log(n) for n, _ in points])
    ys = np.array([_log(t) for t in values])
    slope, intercept = np.polyfit(xs, ys, 1)
    s = float(-slope)
    coefficient = mpmath.exp(mpf(float(intercept)))
    if s <= 1:
        tail = mpf("inf")
    else:
        log_tail = (
            mpf(float(intercept))
            + (1 - mpf(s)) * mpmath.log(last)
            - mpmath.log(mpf(s) - 1)
            + mpmath.log(density)
        )
        tail = mpmath.exp(log_tail)
    window_lo = int(math.floor(points[0][0]))
    return TailEstimate(s, coefficient, tail, (window_lo, last), float(density), block)


# Block widths tried, in order, when the plain fit sees an oscillating tail.
FALLBACK_BLOCKS = (16, 64)


def fit_tail_auto(terms) -> TailEstimate:
    """fit_tail on the default window, retrying with block averaging.

    Squared coefficients that oscillate (Moebius-shifted series, the annulus
    map) fail the monotonicity test pointwise but have smooth block means.
    If the second half of the terms is identically zero the series is taken
    to terminate and the tail is zero.
    """
    last = len(terms) - 1
    if last >= 2 and not any(terms[last // 2 :]):
        # A terminating series (a polynomial map): nothing is missing.
        return TailEstimate(math.inf, mpf(0), mpf(0), (last // 2, last))
    try:
        return fit_tail(terms)
    except FitRejected as first:
        for block in FALLBACK_BLOCKS:
            try:
                return fit_tail(terms, block=block)
            except FitRejected:
                continue
        raise first
