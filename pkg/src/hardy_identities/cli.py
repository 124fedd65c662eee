"""Batch verification of the catalogued identities.

    hardy-identities --all
    hardy-identities --case strip --order 100000 --mode series-only
    hardy-identities --case hyperbola-focal:p=0.6 --json report.json --csv terms.csv

Each report pairs the partial sum of squared coefficients plus a fitted tail
against the closed form, and optionally compares G_V(a) with a
walk-on-spheres estimate of 2 E[tau].  The exit status is 0 iff every case
got its expected verdict: ``pass``, or ``diverges`` for the diagnostic cases
outside the valid parameter range.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field

import mpmath
from mpmath import mp, mpf
from mpmath.libmp import repr_dps, to_str

from . import catalog
from .errors import FitRejected, UsageError
from .numerics import DEFAULT_PRECISION, to_real, working_precision
from .oracle import ExitMoments, estimate_exit_moments
from .series import TailEstimate, fit_tail_auto, hardy_partial_sum

SCHEMA = 1
MODES = ("full", "series-only", "oracle-only")
VERDICTS = ("pass", "fail", "diverges", "skipped")


@dataclass
class RunConfig:
    cases: list[str]
    order: int | None = None
    precision: int = DEFAULT_PRECISION
    samples: int = 100_000
    eps: float = 1e-4
    seed: int = 0
    json_path: str | None = None
    csv_path: str | None = None
    mode: str = "full"
    tolerance: float | None = None
    workers: int = 1

    def validate(self) -> None:
        if not self.cases:
            raise UsageError("no cases selected")
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.order is not None and self.order < 8:
            raise UsageError(f"order must be at least 8, got {self.order}")
        if self.precision < 53:
            raise UsageError(f"precision must be at least 53 bits, got {self.precision}")
        if self.mode != "series-only" and self.samples < 100:
            raise UsageError(f"samples must be at least 100, got {self.samples}")
        if not self.eps > 0:
            raise UsageError(f"eps must be positive, got {self.eps}")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")
        if self.tolerance is not None and self.tolerance < 0:
            raise UsageError("tolerance must be non-negative")


@dataclass
class VerificationReport:
    case_id: str
    statement: str
    order: int
    precision: int
    diagnostic: bool
    lhs_partial: mpf | None = None
    tail: TailEstimate | None = None
    rhs: mpf | None = None
    abs_err: mpf | None = None
    rel_err: mpf | None = None
    g_base: mpf | None = None
    oracle: ExitMoments | None = None
    series_verdict: str = "skipped"
    oracle_verdict: str = "skipped"
    verdict: str = "skipped"
    timings: dict = field(default_factory=dict)
    note: str = ""

    @property
    def expected(self) -> str:
        return "diverges" if self.diagnostic else "pass"

    @property
    def ok(self) -> bool:
        return self.verdict in (self.expected, "skipped")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _num(v) -> str | None:
    if v is None:
        return None
    if isinstance(v, float):
        return repr(v)
    return to_str(to_real(v)._mpf_, repr_dps(mp.prec))


def _parse_num(s):
    return None if s is None else mpf(s)


def report_to_dict(report: VerificationReport) -> dict:
    with working_precision(report.precision):
        tail = None
        if report.tail is not None:
            t = report.tail
            tail = {
                "fitted_exponent": repr(float(t.fitted_exponent)),
                "coefficient": _num(t.coefficient),
                "tail_bound": _num(t.tail_bound),
                "fit_window": list(t.fit_window),
                "density": repr(float(t.density)),
                "block": t.block,
            }
        oracle = None
        if report.oracle is not None:
            oracle = {k: (repr(v) if isinstance(v, float) else v) for k, v in asdict(report.oracle).items()}
        return {
            "case": report.case_id,
            "statement": report.statement,
            "order": report.order,
            "precision": report.precision,
            "diagnostic": report.diagnostic,
            "lhs_partial": _num(report.lhs_partial),
            "tail": tail,
            "rhs": _num(report.rhs),
            "abs_err": _num(report.abs_err),
            "rel_err": _num(report.rel_err),
            "g_base": _num(report.g_base),
            "oracle": oracle,
            "series_verdict": report.series_verdict,
            "oracle_verdict": report.oracle_verdict,
            "verdict": report.verdict,
            "timings": {k: repr(v) for k, v in report.timings.items()},
            "note": report.note,
        }


def report_from_dict(data: dict) -> VerificationReport:
    with working_precision(data["precision"]):
        tail = None
        if data["tail"] is not None:
            t = data["tail"]
            tail = TailEstimate(
                float(t["fitted_exponent"]),
                mpf(t["coefficient"]),
                mpf(t["tail_bound"]),
                tuple(t["fit_window"]),
                float(t["density"]),
                int(t["block"]),
            )
        oracle = None
        if data["oracle"] is not None:
            o = data["oracle"]
            oracle = ExitMoments(
                float(o["mean_sq_exit"]),
                float(o["two_mean_time"]),
                float(o["se_sq_exit"]),
                float(o["se_time"]),
                int(o["samples"]),
                float(o["eps"]),
                int(o["overflows"]),
            )
        return VerificationReport(
            case_id=data["case"],
            statement=data["statement"],
            order=data["order"],
            precision=data["precision"],
            diagnostic=data["diagnostic"],
            lhs_partial=_parse_num(data["lhs_partial"]),
            tail=tail,
            rhs=_parse_num(data["rhs"]),
            abs_err=_parse_num(data["abs_err"]),
            rel_err=_parse_num(data["rel_err"]),
            g_base=_parse_num(data["g_base"]),
            oracle=oracle,
            series_verdict=data["series_verdict"],
            oracle_verdict=data["oracle_verdict"],
            verdict=data["verdict"],
            timings={k: float(v) for k, v in data["timings"].items()},
            note=data["note"],
        )


def dumps(reports, config: RunConfig | None = None) -> str:
    doc = {"schema": SCHEMA}
    if config is not None:
        doc["config"] = {k: v for k, v in asdict(config).items()}
    doc["reports"] = [report_to_dict(r) for r in reports]
    return json.dumps(doc, indent=2)


def loads(text: str) -> list[VerificationReport]:
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise UsageError(f"unsupported report schema {doc.get('schema')!r}")
    return [report_from_dict(d) for d in doc["reports"]]


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def series_verdict(partial, tail: TailEstimate, rhs, tolerance: float) -> str:
    """pass iff |partial - rhs| <= tail_bound + tolerance |rhs|; diverges iff s <= 1."""
    if tail.diverges:
        return "diverges"
    if rhs is None:
        return "fail"
    return "pass" if abs(partial - rhs) <= tail.tail_bound + tolerance * abs(rhs) else "fail"


def oracle_verdict(moments: ExitMoments, g_base, base: complex) -> str:
    """pass iff both moments lie within 3 standard errors of G(a), G(a) + |a|^2
    and the Dynkin relation holds."""
    g = float(g_base)
    time_ok = abs(moments.two_mean_time - g) <= 3 * moments.se_time + moments.eps
    sq_ok = abs(moments.mean_sq_exit - g - abs(base) ** 2) <= 3 * moments.se_sq_exit + 4 * moments.eps
    return "pass" if time_ok and sq_ok and moments.dynkin_consistent(base) else "fail"


def _verify_case(case_id: str, config: RunConfig, rows: list | None) -> VerificationReport:
    case = catalog.get_case(case_id)
    order = config.order or catalog.default_order(case)
    report = VerificationReport(case.id, "", order, config.precision, case.diagnostic)
    statement = None

    if config.mode != "oracle-only":
        t0 = time.perf_counter()
        statement = catalog.identity(case, order)
        report.statement = statement.text
        partial, terms = hardy_partial_sum(statement.series)
        report.timings["series"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        report.lhs_partial = partial
        report.rhs = statement.rhs_value
        report.g_base = statement.g_at_base
        try:
            report.tail = fit_tail_auto(terms)
        except FitRejected as exc:
            report.note = f"tail fit rejected: {exc}"
        report.timings["tail"] = time.perf_counter() - t0
        if report.tail is not None:
            tolerance = config.tolerance
            if tolerance is None:
                tolerance = catalog.default_tolerance(case)
            report.series_verdict = series_verdict(partial, report.tail, report.rhs, tolerance)
            if report.rhs is not None:
                finite = mpmath.isfinite(report.tail.tail_bound)
                estimate = partial + report.tail.tail_bound if finite else partial
                report.abs_err = abs(estimate - report.rhs)
                report.rel_err = report.abs_err / abs(report.rhs) if report.rhs else report.abs_err
        else:
            report.series_verdict = "fail"
        if rows is not None:
            running = mpf(0)
            for n in range(1, len(terms)):
                term = to_real(terms[n])
                running += term
                rows.append((case.id, n, mpmath.nstr(term, 20), mpmath.nstr(running, 20)))

    if config.mode != "series-only" and not case.diagnostic:
        t0 = time.perf_counter()
        if report.g_base is None:
            report.g_base = catalog.g_value(case, case.base_point)
            report.statement = report.statement or f"G(a) = 2 E[tau] for {case.id}"
        base = complex(case.base_point)
        report.oracle = estimate_exit_moments(
            case, base, config.samples, config.eps, config.seed, workers=config.workers
        )
        report.oracle_verdict = oracle_verdict(report.oracle, report.g_base, base)
        report.timings["oracle"] = time.perf_counter() - t0

    verdicts = [v for v in (report.series_verdict, report.oracle_verdict) if v != "skipped"]
    if not verdicts:
        report.verdict = "skipped"
    elif "diverges" in verdicts:
        report.verdict = "diverges"
    elif all(v == "pass" for v in verdicts):
        report.verdict = "pass"
    else:
        report.verdict = "fail"
    return report


def run(config: RunConfig) -> list[VerificationReport]:
    """Verify every requested case, in request order, and write the outputs."""
    config.validate()
    rows = [] if config.csv_path else None
    with working_precision(config.precision):
        reports = [_verify_case(cid, config, rows) for cid in config.cases]
        if config.json_path:
            with open(config.json_path, "w", encoding="utf-8") as fh:
                fh.write(dumps(reports, config))
    if config.csv_path:
        with open(config.csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["case", "n", "term", "partial"])
            writer.writerows(rows)
    return reports


def list_cases() -> list[tuple[str, str, str]]:
    """(id, description, flags) for every registered case."""
    return list(catalog.REGISTRY)


def _fmt(v, digits=12) -> str:
    if v is None:
        return "-"
    return mpmath.nstr(v, digits)


def _summary_line(r: VerificationReport) -> str:
    parts = [f"{r.case_id:32s} {r.verdict:8s}"]
    if r.lhs_partial is not None:
        tail = _fmt(r.tail.tail_bound, 4) if r.tail is not None else "-"
        s = f"{r.tail.fitted_exponent:.3f}" if r.tail is not None else "-"
        parts.append(f"N={r.order} partial={_fmt(r.lhs_partial)} tail={tail} s={s} "
                     f"rhs={_fmt(r.rhs)} rel_err={_fmt(r.rel_err, 3)}")
    if r.oracle is not None:
        o = r.oracle
        parts.append(f"2E[tau]={o.two_mean_time:.5f}+-{o.se_time:.5f} G(a)={_fmt(r.g_base, 8)}")
    if r.note:
        parts.append(f"({r.note})")
    return "  ".join(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hardy-identities",
        description="Check sum |a_n|^2 = G_V(a) for the catalogued conformal maps.",
    )
    pick = parser.add_mutually_exclusive_group(required=True)
    pick.add_argument("--case", action="append", help="case id (repeatable); see --list")
    pick.add_argument("--all", action="store_true", help="every registered case")
    pick.add_argument("--list", action="store_true", help="print the case registry and exit")
    parser.add_argument("--order", type=int, help="truncation order N (default: per case)")
    parser.add_argument("--precision", type=int, default=DEFAULT_PRECISION, help="bits (default 128)")
    parser.add_argument("--samples", type=int, default=100_000, help="walks per case (default 1e5)")
    parser.add_argument("--eps", type=float, default=1e-4, help="walk-on-spheres shell width")
    parser.add_argument("--seed", type=int, default=0, help="64-bit RNG seed")
    parser.add_argument("--mode", choices=MODES, default="full")
    parser.add_argument("--json", dest="json_path", metavar="PATH", help="write a JSON report")
    parser.add_argument("--csv", dest="csv_path", metavar="PATH", help="write per-term CSV rows")
    parser.add_argument("--tolerance", type=float, default=None,
                        help="relative tolerance (default: per case, 1e-6 down to 1e-3)")
    parser.add_argument("--workers", type=int, default=1, help="processes for the oracle")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        for cid, description, flags in list_cases():
            suffix = f" [{flags}]" if flags else ""
            print(f"{cid:32s} {description}{suffix}")
        return 0
    config = RunConfig(
        cases=catalog.known_ids() if args.all else args.case,
        order=args.order,
        precision=args.precision,
        samples=args.samples,
        eps=args.eps,
        seed=args.seed,
        json_path=args.json_path,
        csv_path=args.csv_path,
        mode=args.mode,
        tolerance=args.tolerance,
        workers=args.workers,
    )
    try:
        reports = run(config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for r in reports:
        print(_summary_line(r))
    return 0 if all(r.ok for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
