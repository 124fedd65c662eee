"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a one-line verdict that is printed in the terminal
summary (see conftest.py) as well as to stdout.
"""

from __future__ import annotations

import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import mpmath
from mpmath import mpf

from conftest import ACCEPTANCE_RESULTS
from hardy_identities import catalog as C
from hardy_identities.cli import RunConfig, run
from hardy_identities.numerics import beta, mu
from hardy_identities.oracle import estimate_exit_moments
from hardy_identities.series import (
    EXACT,
    arctan_series,
    fit_tail_auto,
    hardy_partial_sum,
    hardy_partial_sum_exact,
)

F = Fraction
ROOT = Path(__file__).resolve().parent.parent


def record(number: int, checks: list[tuple[str, bool]]) -> None:
    passed = all(ok for _, ok in checks)
    detail = "; ".join(f"{text}{'' if ok else ' [FAIL]'}" for text, ok in checks)
    ACCEPTANCE_RESULTS[number] = (passed, detail)
    print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, detail


def relative(a, b):
    return abs(a - b) / abs(b)


def summed(statement):
    """Partial sum of squared coefficients plus the fitted tail."""
    partial, terms = hardy_partial_sum(statement.series)
    return partial + fit_tail_auto(terms).tail_bound


def check(label, value, target, tol):
    err = relative(value, target)
    return (f"{label} rel {mpmath.nstr(err, 3)} <= {tol:g}", bool(err <= tol))


def test_criterion_01_strip():
    target = mpmath.pi**2 / 8
    checks = [
        check("N=4096", summed(C.identity(C.strip(), 4096)), target, 1e-5),
    ]
    large = summed(C.identity(C.strip(), 100_000))
    checks.append(check("N=1e5", large, target, 1e-7))
    # Splitting off even n is exact for every truncation, and in the limit
    # turns the odd sum into the full one times 4/3.
    m = 600
    odd = hardy_partial_sum_exact(arctan_series(2 * m + 1, EXACT))
    full = sum(F(1, n * n) for n in range(1, 2 * m + 2))
    quarter = F(1, 4) * sum(F(1, n * n) for n in range(1, m + 1))
    checks.append((f"exact split at N={2 * m + 1}", full == odd + quarter))
    checks.append(check("Basel via 4/3", 4 * large / 3, mpmath.pi**2 / 6, 1e-7))
    record(1, checks)


def gamma_quadrature(a, b):
    """Gamma(a/b) = b * int_0^inf u^(a-1) exp(-u^b) du, an independent route."""
    return b * mpmath.quad(lambda u: u ** (a - 1) * mpmath.exp(-(u**b)), [0, 1, mpmath.inf])


def test_criterion_02_triangle():
    b = beta(F(1, 3), F(1, 3))
    target = b * b / 27
    checks = [check("4F3 N=1e5", summed(C.identity(C.triangle(), 100_000)), target, 1e-6)]
    checks.append((f"B(1/3,1/3)^2 = {mpmath.nstr(b * b, 8)} ~ 28.0891", abs(b * b - mpf("28.0891")) < 5e-5))
    with mpmath.workprec(160):
        oracle = gamma_quadrature(1, 3) ** 2 / gamma_quadrature(2, 3)
    checks.append(check("B via Gamma(1/3) quadrature", b, oracle, 1e-30))
    record(2, checks)


def test_criterion_03_square():
    st = C.identity(C.square(), 4096)
    double_sum = C.square_g(0.0, 0.0) * beta(F(1, 4), F(1, 2)) ** 2 / 16
    record(3, [check("4F3 vs M=2000 double sum", summed(st), double_sum, 1e-5)])


def test_criterion_04_parabola():
    record(4, [check("N=4096", summed(C.identity(C.parabola(), 4096)), mpmath.pi**4 / 32, 1e-4)])


def focal_target(p):
    p = mpmath.mpf(p)
    return 2 * mpmath.sin(mpmath.pi * p / 2) ** 4 / mpmath.cos(mpmath.pi * p)


def test_criterion_05_hyperbola_focal():
    checks = [
        check("p=1/3 vs 1/4", summed(C.identity(C.hyperbola_focal("1/3"))), mpf(1) / 4, 1e-4),
        check("p=1/4 vs (3 sqrt2 - 4)/4", summed(C.identity(C.hyperbola_focal("1/4"))),
              (3 * mpmath.sqrt(2) - 4) / 4, 1e-4),
        (
            "closed forms at p=1/3, 1/4",
            relative(focal_target(mpf(1) / 3), mpf(1) / 4) < 1e-30
            and relative(focal_target(mpf(1) / 4), (3 * mpmath.sqrt(2) - 4) / 4) < 1e-30,
        ),
    ]
    for p in ("0.1", "0.2", "0.3", "0.4", "0.45"):
        checks.append(check(f"p={p}", summed(C.identity(C.hyperbola_focal(p))), focal_target(p), 1e-3))
    record(5, checks)


def test_criterion_06_hyperbola_branches():
    checks = [
        check("theta=pi/8 N=1e5 vs sqrt2", summed(C.identity(C.hyperbola_branches("pi/8"), 100_000)),
              mpmath.sqrt(2), 1e-3),
    ]
    for text, theta in (("pi/16", mpmath.pi / 16), ("pi/6", mpmath.pi / 6)):
        target = mpmath.sin(2 * theta) ** 2 / (2 * mpmath.cos(2 * theta))
        checks.append(check(f"theta={text} N=4096", summed(C.identity(C.hyperbola_branches(text), 4096)),
                            target, 1e-3))
    same = C.catalan_form_series(60) == C.branches_composition(F(1, 2), 60, EXACT)
    checks.append(("Catalan form == composition through z^60", same))
    record(6, checks)


def test_criterion_07_ellipse():
    w = C.omega()
    coeffs = C.ellipse_coefficients(w, 4)
    closed = [
        1 / (2 * mpmath.sqrt(w)),
        (3 + 4 * w**2) / (48 * w ** mpf(1.5)),
        (105 + 56 * w**2 + 144 * w**4) / (3840 * w ** mpf(2.5)),
        (10395 + 4524 * w**2 + 4496 * w**4 + 14400 * w**6) / (645120 * w ** mpf(3.5)),
    ]
    worst = max(relative(a, c) for a, c in zip(coeffs, closed))
    checks = [(f"A0..A3 at omega rel {mpmath.nstr(worst, 3)} <= 1e-20", bool(worst <= mpf(10) ** -20))]
    for label, t in (("1/sqrt2", 1 / mpmath.sqrt(2)), ("omega", w)):
        m = mu(t)
        case = C.ellipse(label.replace("sqrt2", "sqrt(2)"))
        checks.append(check(f"sum A^2 t={label}", summed(C.identity(case, 256)),
                            mpmath.sinh(m) ** 2 / (2 * mpmath.cosh(m)), 1e-8))
        checks.append(check(f"doubling t={label}", summed(C.ellipse_doubling(t, 256)),
                            mpmath.sinh(m) ** 4 / (2 * mpmath.cosh(2 * m)), 1e-8))
    record(7, checks)


def test_criterion_08_annulus():
    f = C.lhs_series(C.annulus(), 256, EXACT)
    shown = [F(1), F(1), F(1, 2), F(-1, 6), F(-7, 24), F(1, 24)]
    checks = [("first six coefficients exact", list(f.coeffs[:6]) == shown)]
    # The squared coefficients fall off like 1/n^2, not geometrically, so the
    # N=256 sum misses about 1e-3 of the total; the fitted tail recovers part of it.
    st = C.identity(C.annulus(), 256)
    checks.append(check("N=256 partial+tail", summed(st), mpmath.cosh(mpmath.pi / 2) - 1, 1e-10))
    record(8, checks)


ORACLE_IDS = ["disc", "strip", "triangle", "square", "ellipse:t=1/sqrt(2)"]


def test_criterion_09_oracle():
    checks = []
    for cid in ORACLE_IDS:
        case = C.get_case(cid)
        a = complex(case.base_point)
        g = float(C.g_value(case, a))
        eps = 1e-4
        m = estimate_exit_moments(case, a, 100_000, eps, seed=2024)
        # The shell of width eps adds an O(eps) bias on top of the noise.
        time_ok = abs(m.two_mean_time - g) <= 3 * m.se_time + eps
        sq_ok = abs(m.mean_sq_exit - g - abs(a) ** 2) <= 3 * m.se_sq_exit + eps
        dynkin = m.dynkin_consistent(a)
        checks.append((f"{cid}: 2E[tau]={m.two_mean_time:.5f}+-{m.se_time:.5f} vs G={g:.5f}, dynkin",
                       time_ok and sq_ok and dynkin))
    record(9, checks)


def test_criterion_10_divergence():
    checks = []
    for cid in ("hyperbola-focal:p=0.6", "hyperbola-branches:theta=0.9"):
        (r,) = run(RunConfig(cases=[cid], mode="series-only"))
        checks.append((f"{cid} verdict {r.verdict} s={r.tail.fitted_exponent:.3f}", r.verdict == "diverges"))
    record(10, checks)


def test_criterion_11_moebius():
    checks = []
    for w in ("0", "0.3", "-0.3"):
        st = C.moebius_family(C.strip(), mpf(w), 4096)
        target = C.g_value(C.strip(), mpmath.atan(mpf(w)))
        checks.append(check(f"w={w}", summed(st), target, 1e-4))
    record(11, checks)


def test_criterion_12_property_suites():
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "tests/test_properties.py"],
        cwd=ROOT, capture_output=True, text=True, timeout=600,
    )
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()
    record(12, [(f"standalone property run: {last}", proc.returncode == 0)])
