"""Monte Carlo frequency estimators for the probabilistic stability notions.

Every estimator works on the time grid of a :class:`PathEnsemble` and on
its fixed initial time. Diverged paths always count as failures and are
tallied separately in the report.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import RejectedInputError
from .noise import CHUNK_TRIALS, NoiseStream, PathEnsemble, TimeGrid, sample_increments

Z95 = 1.959963984540054
MIN_WINDOW = 10


def wilson_interval(successes: int, trials: int, z: float = Z95):
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials or not z > 0:
        raise RejectedInputError(f"invalid Wilson inputs s={successes}, n={trials}, z={z}")
    n = float(trials)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    lo = 0.0 if successes == 0 else min(max(center - half, 0.0), p)
    hi = 1.0 if successes == trials else max(min(center + half, 1.0), p)
    return lo, hi


@dataclass
class EstimateReport:
    name: str
    trials: int
    successes: int
    params: dict = field(default_factory=dict)
    diverged: int = 0
    extra: dict = field(default_factory=dict)
    z: float = Z95

    def __post_init__(self):
        self.lo, self.hi = wilson_interval(self.successes, self.trials, self.z)

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials

    @property
    def half_width(self) -> float:
        return (self.hi - self.lo) / 2

    def to_dict(self) -> dict:
        return {
            "name": self.name, "trials": self.trials, "successes": self.successes,
            "p_hat": self.p_hat, "lo": self.lo, "hi": self.hi,
            "params": dict(self.params), "diverged": self.diverged, **self.extra,
        }

    def to_csv(self) -> str:
        keys = sorted(self.params)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "trials", "successes", "p_hat", "lo", "hi", *keys, "diverged"])
        w.writerow([self.name, self.trials, self.successes, repr(self.p_hat), repr(self.lo),
                    repr(self.hi), *(_cell(self.params[k]) for k in keys), self.diverged])
        return buf.getvalue()


def _cell(v):
    return repr(float(v)) if isinstance(v, float) else v


def _initial_norms(ensemble):
    return np.linalg.norm(ensemble.states[:, 0], axis=1)


def _report(name, ensemble, success, params):
    success = success & ~ensemble.diverged
    return EstimateReport(name, ensemble.trials, int(success.sum()), params, ensemble.diverged_count)


def estimate_boundedness(ensemble: PathEnsemble, alpha: float, c: float) -> EstimateReport:
    """Fraction of paths with ``max_i |x(t_i)| <= c`` given ``|x0| <= alpha``."""
    if np.any(_initial_norms(ensemble) > alpha):
        raise RejectedInputError(f"some initial states exceed |x0| <= alpha={alpha}")
    with np.errstate(invalid="ignore"):
        success = np.nanmax(ensemble.norms(), axis=1) <= c
    return _report("boundedness", ensemble, success, {"alpha": float(alpha), "c": float(c)})


def estimate_ball_stability(ensemble: PathEnsemble, k: float, r: float,
                            delta: Optional[float] = None) -> EstimateReport:
    """Fraction of paths staying in ``|x| < k`` at every grid point.

    Compare ``1 - p_hat`` with the target epsilon. ``delta`` is the initial
    radius discipline; when given it is checked and echoed.
    """
    if not k > r:
        raise RejectedInputError(f"need k > r, got k={k}, r={r}")
    params = {"k": float(k), "r": float(r)}
    if delta is not None:
        if np.any(_initial_norms(ensemble) >= delta):
            raise RejectedInputError(f"some initial states violate |x0| < delta={delta}")
        params["delta"] = float(delta)
    with np.errstate(invalid="ignore"):
        success = np.all(ensemble.norms() < k, axis=1)
    return _report("ball_stability", ensemble, success, params)


def estimate_attractivity(ensemble: PathEnsemble, k: float, T: float, c: float) -> EstimateReport:
    """Fraction of paths with ``|x(t)| < k`` at every grid time ``t >= t0 + T``."""
    grid = ensemble.grid
    if T < 0 or grid.t0 + T > grid.T + 1e-9 * grid.dt:
        raise RejectedInputError(f"settle time T={T} outside the grid horizon {grid.T - grid.t0}")
    if np.any(_initial_norms(ensemble) >= c):
        raise RejectedInputError(f"some initial states violate |x0| < c={c}")
    late = grid.times >= grid.t0 + T - 1e-9 * grid.dt
    with np.errstate(invalid="ignore"):
        success = np.all(ensemble.norms()[:, late] < k, axis=1)
    return _report("attractivity", ensemble, success, {"k": float(k), "T": float(T), "c": float(c)})


def zero_crossing_frequency(ensemble: PathEnsemble, tol: float) -> EstimateReport:
    """Exploratory: fraction of paths with ``min_i |x(t_i)| <= tol``. Nothing is asserted."""
    with np.errstate(invalid="ignore"):
        success = np.nanmin(ensemble.norms(), axis=1) <= tol
    return _report("zero_crossing", ensemble, success, {"tol": float(tol)})


@dataclass
class ExponentReport:
    r: float
    eps_floor: float
    slopes: np.ndarray = field(repr=False)
    paths: int = 0
    entered: int = 0
    excluded: int = 0
    diverged: int = 0
    mean_entry_time: Optional[float] = None
    never_entered_exponent: Optional[float] = None

    @property
    def median_slope(self) -> Optional[float]:
        return float(np.median(self.slopes)) if self.slopes.size else None

    @property
    def p90_slope(self) -> Optional[float]:
        return float(np.percentile(self.slopes, 90)) if self.slopes.size else None

    @property
    def entered_fraction(self) -> float:
        usable = self.paths - self.diverged
        return self.entered / usable if usable else 0.0

    def to_dict(self) -> dict:
        return {
            "name": "exponent", "r": self.r, "eps_floor": self.eps_floor, "paths": self.paths,
            "fitted": int(self.slopes.size), "excluded": self.excluded, "diverged": self.diverged,
            "median_slope": self.median_slope, "p90_slope": self.p90_slope,
            "entered_fraction": self.entered_fraction, "mean_entry_time": self.mean_entry_time,
            "never_entered_exponent": self.never_entered_exponent,
        }

    def to_csv(self) -> str:
        row = self.to_dict()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(row))
        w.writerow(["" if v is None else _cell(v) for v in row.values()])
        return buf.getvalue()


def _slope(t, y):
    tc = t - t.mean()
    return float(tc @ (y - y.mean()) / (tc @ tc))


def estimate_exponent(ensemble: PathEnsemble, r: float, eps_floor: Optional[float] = None) -> ExponentReport:
    """Pre-entry decay rate of ``ln(|x(t)| - r)`` per path.

    The window for a path runs from ``t0`` up to (excluding) its first grid
    point with ``|x| <= r + eps_floor``; paths with fewer than 10 window
    points are excluded and counted. ``eps_floor`` defaults to ``1e-6 r``.
    """
    if eps_floor is None:
        eps_floor = 1e-6 * r
    if not eps_floor > 0:
        raise RejectedInputError("eps_floor must be positive")
    norms = ensemble.norms()
    if np.any(norms[:, 0] <= r):
        raise RejectedInputError(f"all initial states must satisfy |x0| > r={r}")
    times = ensemble.grid.times
    slopes, entry_times, never = [], [], []
    excluded = 0
    for i in np.nonzero(~ensemble.diverged)[0]:
        inside = np.nonzero(norms[i] <= r + eps_floor)[0]
        end = int(inside[0]) if inside.size else norms.shape[1]
        if inside.size:
            entry_times.append(times[end] - times[0])
        else:
            never.append(math.log(max(norms[i, -1] - r, eps_floor)) / times[-1] if times[-1] > 0 else 0.0)
        if end < MIN_WINDOW:
            excluded += 1
            continue
        y = np.log(np.maximum(norms[i, :end] - r, eps_floor))
        slopes.append(_slope(times[:end], y))
    return ExponentReport(
        r=float(r), eps_floor=float(eps_floor), slopes=np.asarray(slopes), paths=ensemble.trials,
        entered=len(entry_times), excluded=excluded, diverged=ensemble.diverged_count,
        mean_entry_time=float(np.mean(entry_times)) if entry_times else None,
        never_entered_exponent=float(np.median(never)) if never else None,
    )


def check_martingale_inequality(g_fn: Callable, alpha: float, beta: float, T: float, trials: int,
                                seed: int, dt: float, *, threads: int = 1) -> EstimateReport:
    """Estimate ``P(sup_t [int_0^t g dW - alpha/2 int_0^t |g|^2 ds] > beta)``.

    Integrals are left-point Riemann/Ito sums on a grid of step ``dt`` and
    the supremum is taken over grid points. ``extra["bound"]`` is
    ``exp(-alpha beta)``; ``extra["bound_holds"]`` says whether the Wilson
    lower limit stays at or below it.
    """
    if not (alpha > 0 and beta > 0 and T > 0 and dt > 0) or trials < 1:
        raise RejectedInputError("need alpha, beta, T, dt > 0 and trials >= 1")
    grid = TimeGrid.from_horizon(0.0, dt, T)
    ts = grid.times[:-1]
    G = np.stack([np.atleast_1d(np.asarray(g_fn(float(s)), dtype=float)) for s in ts])
    m = G.shape[1]
    drift = np.cumsum(0.5 * alpha * np.sum(G * G, axis=1) * grid.dt)

    def block(lo):
        hi = min(lo + CHUNK_TRIALS, trials)
        dW = np.stack([sample_increments(NoiseStream(seed, i, m), grid) for i in range(lo, hi)])
        stoch = np.cumsum(np.einsum("nsk,sk->ns", dW, G), axis=1)
        # grid sup includes t = 0 where the process is 0
        return np.maximum((stoch - drift).max(axis=1), 0.0) > beta

    starts = range(0, trials, CHUNK_TRIALS)
    if threads > 1 and trials > CHUNK_TRIALS:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hits = np.concatenate(list(pool.map(block, starts)))
    else:
        hits = np.concatenate([block(lo) for lo in starts])
    bound = math.exp(-alpha * beta)
    report = EstimateReport(
        "martingale_inequality", trials, int(hits.sum()),
        {"alpha": float(alpha), "beta": float(beta), "T": float(T), "dt": float(dt)},
    )
    report.extra = {"bound": bound, "bound_holds": bool(report.lo <= bound)}
    return report
