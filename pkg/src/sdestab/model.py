"""SDE models ``dx = f(x, t) dt + g(x, t) dW`` and sampled regularity checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .exceptions import RejectedInputError

REL_TOL = 1e-12
ABS_TOL = 1e-12


def violated(lhs: float, rhs: float) -> bool:
    """True when ``lhs <= rhs`` fails beyond round-off.

    Non-finite operands always count as a violation.
    """
    if not (np.isfinite(lhs) and np.isfinite(rhs)):
        return True
    return lhs > rhs + REL_TOL * abs(rhs) + ABS_TOL


@dataclass(frozen=True)
class SdeModel:
    """Drift/diffusion pair with state dimension ``d`` and noise dimension ``m``.

    ``drift(x, t)`` returns shape ``(d,)`` and ``diffusion(x, t)`` shape
    ``(d, m)``. The optional batch callables take ``X`` of shape ``(n, d)``
    and return ``(n, d)`` / ``(n, d, m)``; the simulators use them when
    present and otherwise loop over rows.
    """

    d: int
    m: int
    drift: Callable
    diffusion: Callable
    label: str = "sde"
    diagonal_noise: bool = False
    batch_drift: Optional[Callable] = field(default=None, repr=False)
    batch_diffusion: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if int(self.d) < 1 or int(self.m) < 1:
            raise RejectedInputError(f"d and m must be positive, got d={self.d}, m={self.m}")
        if self.diagonal_noise and self.d != self.m:
            raise RejectedInputError("diagonal noise requires d == m")

    def drift_batch(self, X, t):
        if self.batch_drift is not None:
            return np.asarray(self.batch_drift(X, t), dtype=float)
        return np.stack([np.asarray(self.drift(x, t), dtype=float).reshape(self.d) for x in X])

    def diffusion_batch(self, X, t):
        if self.batch_diffusion is not None:
            return np.asarray(self.batch_diffusion(X, t), dtype=float)
        return np.stack(
            [np.asarray(self.diffusion(x, t), dtype=float).reshape(self.d, self.m) for x in X]
        )


def _as_state(model: SdeModel, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.d,):
        raise RejectedInputError(f"state has shape {x.shape}, model expects ({model.d},)")
    return x


def evaluate(model: SdeModel, x, t: float = 0.0):
    """Return ``(f(x, t), g(x, t))`` with shapes ``(d,)`` and ``(d, m)``."""
    x = _as_state(model, x)
    if t < 0:
        raise RejectedInputError(f"time must be nonnegative, got {t}")
    f = np.asarray(model.drift(x, t), dtype=float)
    g = np.asarray(model.diffusion(x, t), dtype=float)
    if f.size != model.d:
        raise RejectedInputError(f"drift returned {f.size} values, expected {model.d}")
    if g.size != model.d * model.m:
        raise RejectedInputError(f"diffusion returned shape {g.shape}, expected ({model.d}, {model.m})")
    return f.reshape(model.d), g.reshape(model.d, model.m)


class AffineSdeModel(SdeModel):
    """``f(x) = A x + a`` and k-th diffusion column ``g_k(x) = B_k x + b_k``."""

    def __init__(self, A, a=None, B=None, b=None, label: str = "affine"):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        d = A.shape[0]
        if A.shape != (d, d):
            raise RejectedInputError(f"A must be square, got {A.shape}")
        a = np.zeros(d) if a is None else np.asarray(a, dtype=float).reshape(d)
        if B is None and b is None:
            raise RejectedInputError("need at least one diffusion column (B or b)")
        m = len(B) if B is not None else len(b)
        B = np.zeros((m, d, d)) if B is None else np.asarray(B, dtype=float).reshape(m, d, d)
        b = np.zeros((m, d)) if b is None else np.asarray(b, dtype=float).reshape(m, d)
        if B.shape[0] != b.shape[0]:
            raise RejectedInputError("B and b must list the same number of columns")

        # diffusion columns stacked: G(x)[:, k] = B[k] @ x + b[k]
        def drift(x, t):
            return A @ x + a

        def diffusion(x, t):
            return (np.einsum("kij,j->ik", B, x) + b.T)

        def batch_drift(X, t):
            return np.einsum("ij,nj->ni", A, X) + a

        def batch_diffusion(X, t):
            return np.einsum("kij,nj->nik", B, X) + b.T

        diagonal = d == m
        for k in range(m if diagonal else 0):
            off_B = B[k].copy()
            off_B[k, k] = 0.0
            off_b = b[k].copy()
            off_b[k] = 0.0
            diagonal = diagonal and not off_B.any() and not off_b.any()
        super().__init__(
            d=d, m=m, drift=drift, diffusion=diffusion, label=label, diagonal_noise=diagonal,
            batch_drift=batch_drift, batch_diffusion=batch_diffusion,
        )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)

    def lipschitz_constant(self) -> float:
        """Smallest C this module can certify for both f and g (g in Frobenius norm).

        ``|G(x) - G(y)|_F^2 = sum_k |B_k (x - y)|^2``, so the g-part uses the
        root-sum-square of the spectral norms.
        """
        c_f = np.linalg.norm(self.A, 2)
        c_g = np.sqrt(sum(np.linalg.norm(Bk, 2) ** 2 for Bk in self.B))
        return float(max(c_f, c_g))


def langevin(alpha: float, beta: float) -> AffineSdeModel:
    """Scalar Langevin equation ``dx = alpha x dt + beta dW``."""
    return AffineSdeModel(A=[[alpha]], a=[0.0], B=[[[0.0]]], b=[[beta]],
                          label=f"langevin(alpha={alpha!r}, beta={beta!r})")


@dataclass(frozen=True)
class DomainSampler:
    """Deterministic probe points in ``{r_min <= |x| <= r_max} x [t_min, t_max]``.

    The first ``round(grid_fraction * n)`` points come from an unscrambled
    Halton sequence, the rest from ``numpy.random.default_rng(seed)``.
    Radii are uniform in ``[r_min, r_max]``; directions are uniform on the
    sphere (a sign when ``d == 1``).
    """

    d: int
    r_min: float
    r_max: float
    t_min: float = 0.0
    t_max: float = 10.0
    grid_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.r_min <= self.r_max:
            raise RejectedInputError(f"need 0 <= r_min <= r_max, got [{self.r_min}, {self.r_max}]")
        if not 0 <= self.t_min <= self.t_max:
            raise RejectedInputError(f"need 0 <= t_min <= t_max, got [{self.t_min}, {self.t_max}]")
        if not 0 <= self.grid_fraction <= 1:
            raise RejectedInputError("grid_fraction must lie in [0, 1]")

    def describe(self) -> dict:
        return {"kind": "annulus", "d": self.d, "r_min": self.r_min, "r_max": self.r_max,
                "t_min": self.t_min, "t_max": self.t_max, "grid_fraction": self.grid_fraction,
                "seed": self.seed}

    def _unit_to_points(self, U):
        radius = self.r_min + U[:, 0] * (self.r_max - self.r_min)
        if self.d == 1:
            direction = np.where(U[:, 1] < 0.5, -1.0, 1.0)[:, None]
        else:
            Z = ndtri(np.clip(U[:, 1:1 + self.d], 1e-12, 1 - 1e-12))
            norms = np.linalg.norm(Z, axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            direction = Z / norms
        X = radius[:, None] * direction
        t = self.t_min + U[:, -1] * (self.t_max - self.t_min)
        return X, t

    def _unit(self, n, stream):
        dims = self.d + 2
        n_grid = int(round(self.grid_fraction * n))
        parts = []
        if n_grid:
            halton = qmc.Halton(d=dims, scramble=False)
            if stream:
                halton.fast_forward(n_grid)
            parts.append(halton.random(n_grid))
        if n - n_grid:
            rng = np.random.default_rng([self.seed, stream])
            parts.append(rng.random((n - n_grid, dims)))
        return np.vstack(parts)

    def points(self, n: int):
        """Return ``(X, t)`` with shapes ``(n, d)`` and ``(n,)``."""
        if n < 1:
            raise RejectedInputError("need at least one sample")
        return self._unit_to_points(self._unit(n, 0))

    def pairs(self, n: int):
        """Return ``(X, Y, t)``; ``Y`` is an independent draw with ``X != Y`` rowwise."""
        X, t = self.points(n)
        Y, _ = self._unit_to_points(self._unit(n, 1))
        same = np.all(X == Y, axis=1)
        Y[same] = Y[same] + 1e-3
        return X, Y, t


@dataclass(frozen=True)
class FixedSampler:
    """Explicit probe set, mainly for tests and hand-picked points."""

    X: np.ndarray
    t: np.ndarray
    Y: Optional[np.ndarray] = None

    @classmethod
    def from_points(cls, xs: Sequence, ts=None, ys=None):
        X = np.asarray(xs, dtype=float)
        X = X.reshape(len(X), -1)
        t = np.zeros(len(X)) if ts is None else np.asarray(ts, dtype=float).reshape(len(X))
        Y = None if ys is None else np.asarray(ys, dtype=float).reshape(X.shape)
        return cls(X, t, Y)

    def describe(self) -> dict:
        return {"kind": "fixed", "points": len(self.X)}

    def points(self, n: int):
        idx = np.arange(n) % len(self.X)
        return self.X[idx], self.t[idx]

    def pairs(self, n: int):
        if self.Y is None:
            raise RejectedInputError("FixedSampler built without partner points")
        idx = np.arange(n) % len(self.X)
        return self.X[idx], self.Y[idx], self.t[idx]


@dataclass
class RegularityReport:
    condition: str
    C: float
    samples: int
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self, max_violations=None):
        shown = self.violations if max_violations is None else self.violations[:max_violations]
        return {
            "condition": self.condition,
            "C": self.C,
            "samples": self.samples,
            "passed": self.passed,
            "violation_count": len(self.violations),
            "violations": [_violation_dict(v) for v in shown],
        }


def _violation_dict(v):
    return {k: (val.tolist() if isinstance(val, np.ndarray) else val) for k, val in v.items()}


def check_linear_growth(model: SdeModel, C: float, sampler, n: int) -> RegularityReport:
    """Check ``|f| <= C(1+|x|)`` and ``|g|_F <= C(1+|x|)`` on ``n`` sampled points."""
    if C <= 0 or n < 1:
        raise RejectedInputError("need C > 0 and n >= 1")
    X, T = sampler.points(n)
    report = RegularityReport("linear-growth", float(C), int(n))
    for x, t in zip(X, T):
        f, g = evaluate(model, x, float(t))
        rhs = C * (1.0 + np.linalg.norm(x))
        for part, lhs in (("f", np.linalg.norm(f)), ("g", np.linalg.norm(g, "fro"))):
            if violated(lhs, rhs):
                report.violations.append(
                    {"part": part, "x": x.copy(), "t": float(t), "lhs": float(lhs), "rhs": float(rhs)}
                )
    return report


def check_lipschitz(model: SdeModel, C: float, sampler, n: int) -> RegularityReport:
    """Check ``|f(x)-f(y)| <= C|x-y|`` and the same for ``g`` on ``n`` sampled pairs."""
    if C <= 0 or n < 1:
        raise RejectedInputError("need C > 0 and n >= 1")
    X, Y, T = sampler.pairs(n)
    report = RegularityReport("lipschitz", float(C), int(n))
    for x, y, t in zip(X, Y, T):
        fx, gx = evaluate(model, x, float(t))
        fy, gy = evaluate(model, y, float(t))
        rhs = C * np.linalg.norm(x - y)
        for part, lhs in (("f", np.linalg.norm(fx - fy)), ("g", np.linalg.norm(gx - gy, "fro"))):
            if violated(lhs, rhs):
                report.violations.append({
                    "part": part, "x": x.copy(), "y": y.copy(), "t": float(t),
                    "lhs": float(lhs), "rhs": float(rhs),
                })
    return report
