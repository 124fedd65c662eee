"""Walk-on-spheres estimates of Brownian exit moments.

For planar Brownian motion B started at a and stopped on leaving V at time
tau, G_V(a) = 2 E[tau] and E|B_tau|^2 = |a|^2 + 2 E[tau].  Each walk jumps
to a uniform point on the largest safe circle around the current position
(the exact exit law of that disc) and adds that disc's mean exit time d^2/2,
stopping once within ``eps`` of the boundary.

Trajectories run in fixed-size batches.  Batch b draws from its own Philox
stream, spawned from the seed by index, and every step draws one uniform per
slot of the batch whether or not that slot is still walking.  A trajectory's
random numbers therefore depend only on (seed, batch, slot), and results are
bit-identical for any worker count or execution order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .catalog import DomainCase, FloatGeometry, contains
from .errors import NumericError, UsageError

BATCH_SIZE = 4096
MAX_STEPS = 10**6


@dataclass(frozen=True)
class ExitMoments:
    """Monte Carlo means of |B_tau|^2 and 2 tau with their standard errors."""

    mean_sq_exit: float
    two_mean_time: float
    se_sq_exit: float
    se_time: float
    samples: int
    eps: float
    overflows: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise UsageError("ExitMoments needs at least one sample")
        if self.mean_sq_exit < 0 or self.two_mean_time < 0:
            raise NumericError("negative second moment or exit time")

    def dynkin_gap(self, start: complex) -> float:
        """mean_sq_exit - (|a|^2 + two_mean_time)."""
        return self.mean_sq_exit - (abs(start) ** 2 + self.two_mean_time)

    def dynkin_consistent(self, start: complex, slack: float | None = None) -> bool:
        """|gap| <= 3 (se_sq_exit + se_time) + slack, slack defaulting to O(eps)."""
        if slack is None:
            slack = 4 * self.eps * (1 + math.sqrt(self.mean_sq_exit))
        return abs(self.dynkin_gap(start)) <= 3 * (self.se_sq_exit + self.se_time) + slack


def _check(case: DomainCase, start: complex, eps: float) -> None:
    if not eps > 0:
        raise UsageError(f"eps must be positive, got {eps}")
    if not contains(case, (start.real, start.imag)):
        raise UsageError(f"start {start} is not inside {case.id}")


def wos_trajectory(case: DomainCase, start: complex, eps: float, rng, *,
                   max_steps: int = MAX_STEPS, geometry: FloatGeometry | None = None):
    """One walk from ``start``: returns (exit point, accumulated time sum d^2/2).

    ``rng`` is a numpy Generator.  Raises NumericError after ``max_steps`` jumps.
    """
    start = complex(start)
    _check(case, start, eps)
    geometry = geometry or FloatGeometry(case)
    x = np.array([start.real])
    y = np.array([start.imag])
    time = 0.0
    for _ in range(max_steps):
        d = float(geometry.distance(x, y)[0])
        if d < eps:
            return complex(x[0], y[0]), time
        phi = 2 * math.pi * rng.random()
        x[0] += d * math.cos(phi)
        y[0] += d * math.sin(phi)
        time += d * d / 2
    raise NumericError(f"walk did not reach the eps-shell within {max_steps} steps")


@dataclass(frozen=True)
class _BatchResult:
    count: int
    sum_sq: float
    sum_sq2: float
    sum_t: float
    sum_t2: float
    overflows: int


def _run_batch(geometry: FloatGeometry, start: complex, eps: float, size: int,
               seed_seq: np.random.SeedSequence, max_steps: int) -> _BatchResult:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    x = np.full(size, start.real)
    y = np.full(size, start.imag)
    time = np.zeros(size)
    active = np.arange(size)
    overflowed = np.zeros(size, dtype=bool)
    steps = 0
    while active.size:
        d = geometry.distance(x[active], y[active])
        walking = d >= eps
        active = active[walking]
        d = d[walking]
        # One draw per slot per step keeps each slot's stream independent of the others.
        phi = 2 * np.pi * rng.random(size)
        if not active.size:
            break
        if steps >= max_steps:
            overflowed[active] = True
            break
        ang = phi[active]
        x[active] += d * np.cos(ang)
        y[active] += d * np.sin(ang)
        time[active] += d * d / 2
        steps += 1
    keep = ~overflowed
    sq = (x * x + y * y)[keep]
    two_t = 2 * time[keep]
    return _BatchResult(
        int(keep.sum()),
        math.fsum(sq),
        math.fsum(sq * sq),
        math.fsum(two_t),
        math.fsum(two_t * two_t),
        int(overflowed.sum()),
    )


def _mean_se(total: float, total_sq: float, n: int) -> tuple[float, float]:
    mean = total / n
    if n < 2:
        return mean, math.inf
    var = max(0.0, (total_sq - n * mean * mean) / (n - 1))
    return mean, math.sqrt(var / n)


def estimate_exit_moments(case: DomainCase, start, samples: int, eps: float, seed: int, *,
                          workers: int = 1, max_steps: int = MAX_STEPS,
                          allow_overflow: bool = False,
                          batch_size: int = BATCH_SIZE) -> ExitMoments:
    """Means and standard errors of |B_tau|^2 and 2 tau over ``samples`` walks.

    Walks that exceed ``max_steps`` raise NumericError unless
    ``allow_overflow`` is set, in which case they are dropped from the means
    and counted in ``overflows``.
    """
    if samples < 100:
        raise UsageError(f"samples must be at least 100, got {samples}")
    start = complex(start)
    _check(case, start, eps)
    geometry = FloatGeometry(case)
    n_batches = -(-samples // batch_size)
    sizes = [batch_size] * (n_batches - 1) + [samples - batch_size * (n_batches - 1)]
    children = np.random.SeedSequence(seed).spawn(n_batches)
    args = [(geometry, start, float(eps), size, child, max_steps) for size, child in zip(sizes, children)]
    if workers > 1 and n_batches > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_batch, *zip(*args)))
    else:
        results = [_run_batch(*a) for a in args]

    overflows = sum(r.overflows for r in results)
    if overflows and not allow_overflow:
        raise NumericError(f"{overflows} walks exceeded {max_steps} steps in {case.id}")
    n = sum(r.count for r in results)
    if n == 0:
        raise NumericError("every walk overflowed")
    # Fixed reduction order: batch index.
    msq, se_sq = _mean_se(math.fsum(r.sum_sq for r in results), math.fsum(r.sum_sq2 for r in results), n)
    mt, se_t = _mean_se(math.fsum(r.sum_t for r in results), math.fsum(r.sum_t2 for r in results), n)
    return ExitMoments(msq, mt, se_sq, se_t, n, float(eps), overflows)
