"""Brownian increments, Euler-Maruyama / Milstein integration and path ensembles.

Increments come from a counter-based generator (Philox keyed by
``(master_seed, trial)``): the uniform at position
``(step * substeps + sub) * m + k`` of a trial's stream is fixed by those
indices alone, so ensembles do not depend on how trials are scheduled.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .exceptions import RejectedInputError, UnsupportedSchemeError
from .model import SdeModel

DIVERGENCE_BOUND = 1e12
SCHEMES = ("euler_maruyama", "milstein")
CHUNK_TRIALS = 256
_UINT64 = 2**64


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if self.t0 < 0 or not self.dt > 0 or int(self.n_steps) < 1:
            raise RejectedInputError(f"invalid grid t0={self.t0}, dt={self.dt}, n_steps={self.n_steps}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps + 1) * self.dt

    @property
    def T(self) -> float:
        return self.t0 + self.n_steps * self.dt

    @classmethod
    def from_horizon(cls, t0, dt, horizon):
        """Grid covering ``[t0, t0 + horizon]`` with step ``dt``."""
        return cls(t0, dt, int(round(horizon / dt)))


@dataclass(frozen=True)
class NoiseStream:
    seed: int
    trial: int
    m: int = 1

    def __post_init__(self):
        if not 0 <= self.seed < _UINT64:
            raise RejectedInputError("master seed must be a 64-bit unsigned integer")
        if self.trial < 0 or self.m < 1:
            raise RejectedInputError("trial must be >= 0 and m >= 1")

    def _generator(self):
        return np.random.Philox(key=[self.seed, self.trial])

    def uniforms(self, count: int, start: int = 0) -> np.ndarray:
        """Uniforms in the open interval (0, 1) at stream positions ``start..start+count-1``."""
        bg = self._generator()
        bg.advance(start // 4)
        raw = bg.random_raw(count + start % 4)[start % 4:]
        return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def normals(self, count: int, start: int = 0) -> np.ndarray:
        return ndtri(self.uniforms(count, start))


def sample_increments(stream: NoiseStream, grid: TimeGrid, substeps: int = 1) -> np.ndarray:
    """Brownian increments of shape ``(n_steps, m)``, each ``Normal(0, dt)``.

    With ``substeps > 1`` every increment is the sum of ``substeps`` finer
    increments, i.e. the same Brownian path as the grid with ``dt / substeps``.
    """
    h = grid.dt / substeps
    z = stream.normals(grid.n_steps * substeps * stream.m)
    dW = z.reshape(grid.n_steps, substeps, stream.m) * math.sqrt(h)
    return dW.sum(axis=1) if substeps > 1 else dW[:, 0, :]


def increment_at(stream: NoiseStream, grid: TimeGrid, step: int, k: int) -> float:
    """Single increment ``dW_k`` of ``step``, derived directly from its counter."""
    return float(stream.normals(1, start=step * stream.m + k)[0] * math.sqrt(grid.dt))


def euler_maruyama_step(model: SdeModel, x, t, dt, dW) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    f = np.asarray(model.drift(x, t), dtype=float).reshape(model.d)
    g = np.asarray(model.diffusion(x, t), dtype=float).reshape(model.d, model.m)
    return x + f * dt + g @ np.asarray(dW, dtype=float).reshape(model.m)


def _fd_step(x):
    return 1e-6 * (1.0 + np.abs(x))


def milstein_step(model: SdeModel, x, t, dt, dW) -> np.ndarray:
    """Euler-Maruyama plus ``0.5 g_kk dg_kk/dx_k (dW_k^2 - dt)`` per component."""
    if not model.diagonal_noise:
        raise UnsupportedSchemeError(f"milstein needs diagonal noise; {model.label} is not declared diagonal")
    x = np.asarray(x, dtype=float)
    dW = np.asarray(dW, dtype=float).reshape(model.m)
    out = euler_maruyama_step(model, x, t, dt, dW)
    g = np.asarray(model.diffusion(x, t), dtype=float).reshape(model.d, model.m)
    for k in range(model.d):
        h = _fd_step(x[k])
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        gp = np.asarray(model.diffusion(xp, t), dtype=float).reshape(model.d, model.m)[k, k]
        gm = np.asarray(model.diffusion(xm, t), dtype=float).reshape(model.d, model.m)[k, k]
        out[k] += 0.5 * g[k, k] * (gp - gm) / (2 * h) * (dW[k] ** 2 - dt)
    return out


def _batch_step(model, X, t, dt, dW, scheme):
    F = model.drift_batch(X, t)
    G = model.diffusion_batch(X, t)
    out = X + F * dt + np.einsum("nij,nj->ni", G, dW)
    if scheme == "milstein":
        for k in range(model.d):
            h = _fd_step(X[:, k])
            Xp, Xm = X.copy(), X.copy()
            Xp[:, k] += h
            Xm[:, k] -= h
            dg = (model.diffusion_batch(Xp, t)[:, k, k] - model.diffusion_batch(Xm, t)[:, k, k]) / (2 * h)
            out[:, k] += 0.5 * G[:, k, k] * dg * (dW[:, k] ** 2 - dt)
    return out


def _integrate(model, X0, grid, dW, scheme):
    """Integrate a block of trials. ``dW`` has shape ``(n, n_steps, m)``.

    Returns states ``(n, n_steps + 1, d)`` (NaN after divergence) and the
    divergence step per trial (-1 if none).
    """
    n = X0.shape[0]
    states = np.full((n, grid.n_steps + 1, model.d), np.nan)
    states[:, 0] = X0
    div_step = np.full(n, -1, dtype=np.int64)
    X = X0.copy()
    alive = np.ones(n, dtype=bool)
    times = grid.times
    with np.errstate(all="ignore"):
        for i in range(grid.n_steps):
            X = _batch_step(model, X, times[i], grid.dt, dW[:, i], scheme)
            bad = alive & ~(np.all(np.isfinite(X), axis=1)
                            & (np.max(np.abs(X), axis=1, initial=0.0) <= DIVERGENCE_BOUND))
            if bad.any():
                div_step[bad] = i + 1
                alive &= ~bad
                X[bad] = 0.0
            states[alive, i + 1] = X[alive]
    return states, div_step


@dataclass
class Path:
    grid: TimeGrid
    states: np.ndarray
    trial: int
    seed: int
    divergence_step: Optional[int] = None

    @property
    def diverged(self) -> bool:
        return self.divergence_step is not None


@dataclass
class PathEnsemble:
    """All trials of one simulation.

    ``states`` has shape ``(trials, n_steps + 1, d)``; entries from a
    path's divergence step onward are NaN. Use :meth:`path` or
    :attr:`paths` for truncated per-trial views.
    """

    label: str
    grid: TimeGrid
    seed: int
    scheme: str
    states: np.ndarray
    divergence_step: np.ndarray = field(repr=False)

    @property
    def trials(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[2]

    @property
    def diverged(self) -> np.ndarray:
        return self.divergence_step >= 0

    @property
    def diverged_count(self) -> int:
        return int(self.diverged.sum())

    def path(self, i: int) -> Path:
        step = int(self.divergence_step[i])
        end = step if step >= 0 else self.grid.n_steps + 1
        return Path(self.grid, self.states[i, :end].copy(), i, self.seed, step if step >= 0 else None)

    @property
    def paths(self):
        return [self.path(i) for i in range(self.trials)]

    def norms(self) -> np.ndarray:
        """Euclidean norms ``|x(t_i)|`` with shape ``(trials, n_steps + 1)``."""
        return np.linalg.norm(self.states, axis=2)

    def write_csv(self, fh) -> None:
        """Rows ``trial,step,t,x_0,...``; trial-major, truncated at divergence."""
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trial", "step", "t"] + [f"x_{j}" for j in range(self.d)])
        times = self.grid.times
        for p in self.paths:
            for i, x in enumerate(p.states):
                writer.writerow([p.trial, i, repr(float(times[i]))] + [repr(float(v)) for v in x])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _initial_states(model, x0, trials):
    X0 = np.asarray(x0, dtype=float)
    if X0.ndim <= 1:
        X0 = np.broadcast_to(X0.reshape(-1), (trials, X0.size))
    if X0.shape != (trials, model.d):
        raise RejectedInputError(f"initial state shape {np.shape(x0)} does not fit d={model.d}, trials={trials}")
    return np.array(X0)


def simulate_ensemble(model: SdeModel, x0, grid: TimeGrid, trials: int, seed: int,
                      scheme: str = "euler_maruyama", *, threads: int = 1, substeps: int = 1,
                      increments=None) -> PathEnsemble:
    """Simulate ``trials`` independent paths.

    Trials are processed in fixed blocks of ``CHUNK_TRIALS``; ``threads``
    only spreads blocks over workers, so output is bit-identical for any
    thread count. ``increments`` (shape ``(trials, n_steps, m)``) replaces
    the generated noise.
    """
    if trials < 1:
        raise RejectedInputError("trials must be >= 1")
    if scheme not in SCHEMES:
        raise UnsupportedSchemeError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if scheme == "milstein" and not model.diagonal_noise:
        raise UnsupportedSchemeError(f"milstein needs diagonal noise; {model.label} is not declared diagonal")
    X0 = _initial_states(model, x0, trials)
    if increments is not None:
        increments = np.asarray(increments, dtype=float).reshape(trials, grid.n_steps, model.m)

    def block(lo):
        hi = min(lo + CHUNK_TRIALS, trials)
        if increments is None:
            dW = np.stack([sample_increments(NoiseStream(seed, i, model.m), grid, substeps)
                           for i in range(lo, hi)])
        else:
            dW = increments[lo:hi]
        return _integrate(model, X0[lo:hi], grid, dW, scheme)

    starts = range(0, trials, CHUNK_TRIALS)
    if threads > 1 and trials > CHUNK_TRIALS:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(block, starts))
    else:
        results = [block(lo) for lo in starts]
    states = np.concatenate([r[0] for r in results])
    div = np.concatenate([r[1] for r in results])
    return PathEnsemble(model.label, grid, int(seed), scheme, states, div)


def simulate_path(model: SdeModel, x0, grid: TimeGrid, stream: NoiseStream,
                  scheme: str = "euler_maruyama", *, substeps: int = 1, increments=None) -> Path:
    """One trajectory driven by ``stream`` (or by explicit ``increments``)."""
    if increments is None:
        increments = sample_increments(stream, grid, substeps)
    ens = simulate_ensemble(model, np.asarray(x0, dtype=float).reshape(1, -1), grid, 1, stream.seed,
                            scheme, increments=np.asarray(increments)[None])
    p = ens.path(0)
    p.trial = stream.trial
    return p


def ou_exact(alpha: float, beta: float, x0: float, t: float):
    """Mean and variance of the Ornstein-Uhlenbeck solution at time ``t``."""
    if alpha >= 0:
        raise RejectedInputError("ou_exact is restricted to alpha < 0")
    if t < 0:
        raise RejectedInputError("t must be nonnegative")
    mean = x0 * math.exp(alpha * t)
    var = beta**2 * -math.expm1(2 * alpha * t) / (-2 * alpha)
    return mean, var


def ou_exact_path(alpha: float, beta: float, x0: float, grid: TimeGrid, stream: NoiseStream):
    """Exact OU states on ``grid`` together with the driving increments.

    Per step the pair ``(dW, J)`` with ``J = int exp(alpha (t_{i+1} - s)) dW_s``
    is drawn jointly Gaussian from two stream components, so the returned
    path solves the SDE exactly for the returned ``dW``. Returns
    ``(states (n_steps + 1,), dW (n_steps,))``.
    """
    if stream.m != 2:
        raise RejectedInputError("ou_exact_path needs a stream with m=2")
    h = grid.dt
    z = stream.normals(2 * grid.n_steps).reshape(grid.n_steps, 2)
    var_j = math.expm1(2 * alpha * h) / (2 * alpha)
    cov = math.expm1(alpha * h) / alpha
    dW = math.sqrt(h) * z[:, 0]
    J = cov / h * dW + math.sqrt(max(var_j - cov**2 / h, 0.0)) * z[:, 1]
    decay = math.exp(alpha * h)
    x = np.empty(grid.n_steps + 1)
    x[0] = x0
    for i in range(grid.n_steps):
        x[i + 1] = decay * x[i] + beta * J[i]
    return x, dW
