"""Lyapunov functions and the Ito generator ``LV = V_t + V_x f + 0.5 tr(g^T V_xx g)``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import RejectedInputError
from .model import SdeModel, evaluate


@dataclass(frozen=True)
class LyapunovFunction:
    """``V`` with user-supplied partial derivatives.

    All callables take ``(x, t)``. ``V_x`` returns the gradient ``(d,)``
    and ``V_xx`` the Hessian ``(d, d)``. ``analytic_LV(x, t, model)`` is an
    optional closed form used to cross-check :func:`generator`.
    """

    V: Callable
    V_t: Callable
    V_x: Callable
    V_xx: Callable
    analytic_LV: Optional[Callable] = None
    label: str = "V"

    def __call__(self, x, t=0.0):
        return float(self.V(np.asarray(x, dtype=float), t))

    def scaled_sum(self, a: float, other: "LyapunovFunction", b: float) -> "LyapunovFunction":
        """``a * self + b * other``."""
        return LyapunovFunction(
            V=lambda x, t: a * self.V(x, t) + b * other.V(x, t),
            V_t=lambda x, t: a * self.V_t(x, t) + b * other.V_t(x, t),
            V_x=lambda x, t: a * np.asarray(self.V_x(x, t)) + b * np.asarray(other.V_x(x, t)),
            V_xx=lambda x, t: a * np.asarray(self.V_xx(x, t)) + b * np.asarray(other.V_xx(x, t)),
            label=f"{a}*{self.label}+{b}*{other.label}",
        )


def quadratic(Q, constant: float = 0.0, analytic_LV=None) -> LyapunovFunction:
    """``V(x) = x^T Q x + constant`` for symmetric positive semidefinite ``Q``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T, rtol=0, atol=1e-9):
        raise RejectedInputError("Q must be a symmetric square matrix")
    if np.linalg.eigvalsh(Q).min() < -1e-12 or constant < 0:
        raise RejectedInputError("quadratic V must be nonnegative: need Q >= 0 and constant >= 0")
    H = 2.0 * Q
    return LyapunovFunction(
        V=lambda x, t: float(x @ Q @ x) + constant,
        V_t=lambda x, t: 0.0,
        V_x=lambda x, t: H @ x,
        V_xx=lambda x, t: H,
        analytic_LV=analytic_LV,
        label="quadratic",
    )


def langevin_lyapunov(alpha: float, beta: float) -> LyapunovFunction:
    """``V = x^2`` with its closed-form generator ``2 alpha x^2 + beta^2`` for the Langevin model."""
    return quadratic([[1.0]], analytic_LV=lambda x, t, model: 2 * alpha * float(x[0]) ** 2 + beta**2)


def _parts(V, model, x, t):
    f, g = evaluate(model, x, t)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    Vx = np.asarray(V.V_x(x, t), dtype=float).reshape(model.d)
    return x, f, g, Vx


def generator(V: LyapunovFunction, model: SdeModel, x, t: float = 0.0) -> float:
    x, f, g, Vx = _parts(V, model, x, t)
    Vxx = np.asarray(V.V_xx(x, t), dtype=float).reshape(model.d, model.d)
    return float(V.V_t(x, t) + Vx @ f + 0.5 * np.trace(g.T @ Vxx @ g))


def diffusion_gradient_norm_sq(V: LyapunovFunction, model: SdeModel, x, t: float = 0.0) -> float:
    """``|V_x(x, t) g(x, t)|^2``."""
    _, _, g, Vx = _parts(V, model, x, t)
    row = Vx @ g
    return float(row @ row)


@dataclass
class ValidationReport:
    h: float
    points: int
    max_rel_error: dict = field(default_factory=dict)
    tolerance: float = 1e-5
    abs_floor: float = 1e-8

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.max_rel_error.values())


def _rel(err, ref, floor):
    # normwise: zero entries (e.g. off-diagonal Hessian terms) are judged against the largest one
    return float(np.max(np.abs(err)) / max(float(np.max(np.abs(ref))), floor))


def validate_derivatives(V: LyapunovFunction, points, h: float = 1e-4) -> ValidationReport:
    """Compare ``V_t``, ``V_x``, ``V_xx`` with central differences of ``V``.

    Steps are ``h * (1 + |x_i|)`` per coordinate (``h * (1 + t)`` in time).
    Errors are max-abs errors relative to the largest exact entry of each
    derivative, with an absolute floor of 1e-8 in the denominator.
    """
    points = list(points)
    if h <= 0 or not points:
        raise RejectedInputError("need h > 0 and at least one point")
    report = ValidationReport(h=h, points=len(points))
    worst = {"V_t": 0.0, "V_x": 0.0, "V_xx": 0.0}
    for x, t in points:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = float(t)
        d = x.size
        hs = h * (1.0 + np.abs(x))
        ht = h * (1.0 + abs(t))
        v = lambda y, s: float(V.V(y, s))

        fd_t = (v(x, t + ht) - v(x, max(t - ht, 0.0))) / (t + ht - max(t - ht, 0.0))
        fd_x = np.empty(d)
        fd_xx = np.empty((d, d))
        for i in range(d):
            ei = np.zeros(d)
            ei[i] = hs[i]
            fd_x[i] = (v(x + ei, t) - v(x - ei, t)) / (2 * hs[i])
            fd_xx[i, i] = (v(x + ei, t) - 2 * v(x, t) + v(x - ei, t)) / hs[i] ** 2
            for j in range(i):
                ej = np.zeros(d)
                ej[j] = hs[j]
                fd_xx[i, j] = fd_xx[j, i] = (
                    v(x + ei + ej, t) - v(x + ei - ej, t) - v(x - ei + ej, t) + v(x - ei - ej, t)
                ) / (4 * hs[i] * hs[j])
        Vt = float(V.V_t(x, t))
        Vx = np.asarray(V.V_x(x, t), dtype=float).reshape(d)
        Vxx = np.asarray(V.V_xx(x, t), dtype=float).reshape(d, d)
        floor = report.abs_floor
        worst["V_t"] = max(worst["V_t"], _rel(fd_t - Vt, Vt, floor))
        worst["V_x"] = max(worst["V_x"], _rel(fd_x - Vx, Vx, floor))
        worst["V_xx"] = max(worst["V_xx"], _rel(fd_xx - Vxx, Vxx, floor))
    report.max_rel_error = worst
    return report
