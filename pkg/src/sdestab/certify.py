"""Numerical checks of the Lyapunov certificate hypotheses.

Both checkers evaluate the hypotheses on sampled points only; a passing
report means "verified on the sampled domain", not a proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

from .exceptions import RejectedCertificateError, RejectedInputError
from .lyapunov import LyapunovFunction, diffusion_gradient_norm_sq, generator
from .model import SdeModel, violated

VERIFIED = "verified on sampled domain"
VIOLATED = "violated on sampled domain"
SIMPSON_PANELS = 10_000
KINF_PROBE = 1e6
KINF_BOUND = 1e3


@dataclass(frozen=True)
class KFunction:
    """Comparison function ``mu: R+ -> R+`` of class ``"K"`` or ``"Kinf"``."""

    name: str
    fn: Callable[[float], float]
    kind: str = "K"

    def __call__(self, s: float) -> float:
        return float(self.fn(s))

    def problems(self, probes=None) -> list:
        """Sampled violations of the declared class; empty when none are found."""
        if self.kind not in ("K", "Kinf"):
            return [f"{self.name}: unknown class {self.kind!r}"]
        out = []
        if abs(self(0.0)) > 1e-12:
            out.append(f"{self.name}(0) = {self(0.0)!r} != 0")
        rs = np.concatenate([[0.0], np.logspace(-6, 6, 241)]) if probes is None else np.asarray(probes)
        vals = np.array([self(r) for r in rs])
        if np.any(vals < 0):
            out.append(f"{self.name} takes negative values")
        drops = np.nonzero(np.diff(vals) < -1e-12 * np.maximum(np.abs(vals[:-1]), 1.0))[0]
        if drops.size:
            i = int(drops[0])
            out.append(f"{self.name} decreases between r={rs[i]!r} and r={rs[i + 1]!r}")
        if self.kind == "Kinf" and not self(KINF_PROBE) >= KINF_BOUND:
            out.append(f"{self.name}({KINF_PROBE:g}) = {self(KINF_PROBE)!r} < {KINF_BOUND:g}; not unbounded")
        return out


def power(c: float, q: float, name: str = "mu", kind: str = "Kinf") -> KFunction:
    """``mu(s) = c * s**q``."""
    return KFunction(name, lambda s: c * s**q, kind)


def zero(name: str = "mu") -> KFunction:
    return KFunction(name, lambda s: 0.0, "K")


@dataclass(frozen=True)
class PracticalCertificate:
    mu1: KFunction
    mu2: KFunction
    mu3: KFunction
    rho_fn: Callable[[float], float]
    M: float

    def __post_init__(self):
        issues = []
        if not self.M > 0:
            issues.append(f"M must be positive, got {self.M!r}")
        for mu, kind in ((self.mu1, "Kinf"), (self.mu2, "Kinf"), (self.mu3, "K")):
            if kind == "Kinf" and mu.kind != "Kinf":
                issues.append(f"{mu.name} must be declared Kinf")
            issues.extend(mu.problems())
        if issues:
            raise RejectedCertificateError("; ".join(issues))


@dataclass(frozen=True)
class ExpCertificate:
    p: int
    c1: float
    c2: float
    c3: float
    rho: float
    gamma: float

    def __post_init__(self):
        self.validate()

    def validate(self):
        issues = []
        if int(self.p) != self.p or self.p < 1:
            issues.append(f"p must be a positive integer, got {self.p!r}")
        if not self.c1 >= 1:
            issues.append(f"c1 must be >= 1, got {self.c1!r}")
        if not self.rho >= self.c1:
            issues.append(f"rho must be >= c1, got rho={self.rho!r}, c1={self.c1!r}")
        if not self.gamma >= 0:
            issues.append(f"gamma must be >= 0, got {self.gamma!r}")
        if not self.c3 >= 0:
            issues.append(f"c3 must be >= 0, got {self.c3!r}")
        if not math.isfinite(self.c2):
            issues.append("c2 must be finite")
        if issues:
            raise RejectedCertificateError("; ".join(issues))

    @classmethod
    def langevin(cls, alpha: float, beta: float) -> "ExpCertificate":
        """Constants for ``V = x^2`` on ``dx = alpha x dt + beta dW``."""
        return cls(p=2, c1=1.0, c2=2.0 * alpha, c3=0.0, rho=beta**2 + 1.0, gamma=0.0)


def radius(cert: ExpCertificate) -> float:
    """Practical-stability radius ``(rho / c1)^(1/p)``."""
    cert.validate()
    return (cert.rho / cert.c1) ** (1.0 / cert.p)


def decay_rate(cert: ExpCertificate) -> float:
    """Almost-sure bound on the exponent, ``-(c3 - 2(c2 + 1)) / 2``."""
    return -(cert.c3 - 2.0 * (cert.c2 + 1.0)) / 2.0


def is_stable(cert: ExpCertificate) -> bool:
    return cert.c3 > 2.0 * (cert.c2 + 1.0)


@dataclass
class CertificateReport:
    kind: str
    samples: int
    domain: dict
    violations: dict = field(default_factory=dict)
    radius: Optional[float] = None
    rate: Optional[float] = None
    stable: Optional[bool] = None
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())

    @property
    def status(self) -> str:
        return VERIFIED if self.passed else VIOLATED

    def to_dict(self, max_violations: Optional[int] = 20) -> dict:
        out = {
            "kind": self.kind,
            "status": self.status,
            "passed": self.passed,
            "samples": self.samples,
            "domain": self.domain,
            "violation_counts": {k: len(v) for k, v in self.violations.items()},
            "violations": {
                k: [_plain(e) for e in (v if max_violations is None else v[:max_violations])]
                for k, v in self.violations.items()
            },
        }
        if self.kind == "exp":
            out.update(radius=self.radius, rate=self.rate, stable=self.stable)
        out.update(self.extra)
        return out


def _plain(entry):
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in entry.items()}


def _describe(sampler):
    return sampler.describe() if hasattr(sampler, "describe") else {"kind": type(sampler).__name__}


def check_exp_certificate(V: LyapunovFunction, model: SdeModel, cert: ExpCertificate,
                          sampler, n: int) -> CertificateReport:
    """Check the three exponential-stability hypotheses at ``n`` sampled points.

    Conditions: ``c1|x|^p <= V``, ``LV <= c2 V + rho`` and
    ``|V_x g|^2 >= c3 V^2 + gamma``.
    """
    if n < 1:
        raise RejectedInputError("need n >= 1")
    cert.validate()
    X, T = sampler.points(n)
    viol = {"lower_bound": [], "generator": [], "diffusion": [], "evaluation": []}
    for x, t in zip(X, T):
        t = float(t)
        try:
            v = V(x, t)
            lv = generator(V, model, x, t)
            gs = diffusion_gradient_norm_sq(V, model, x, t)
        except Exception as exc:  # noqa: BLE001 - any model/V failure is a reported violation
            viol["evaluation"].append({"x": x.copy(), "t": t, "error": f"{type(exc).__name__}: {exc}"})
            continue
        checks = (
            ("lower_bound", cert.c1 * float(np.linalg.norm(x)) ** cert.p, v),
            ("generator", lv, cert.c2 * v + cert.rho),
            ("diffusion", cert.c3 * v * v + cert.gamma, gs),
        )
        for name, lhs, rhs in checks:
            if violated(lhs, rhs):
                viol[name].append({"x": x.copy(), "t": t, "lhs": float(lhs), "rhs": float(rhs)})
    return CertificateReport(
        kind="exp", samples=int(n), domain=_describe(sampler), violations=viol,
        radius=radius(cert), rate=decay_rate(cert), stable=is_stable(cert),
    )


def _rho_values(rho_fn, ts):
    try:
        vals = np.asarray(rho_fn(ts), dtype=float)
        if vals.shape == ts.shape:
            return vals
    except Exception:  # noqa: BLE001 - fall back to scalar calls
        pass
    return np.array([float(rho_fn(float(s))) for s in ts])


def check_practical_certificate(V: LyapunovFunction, model: SdeModel, cert: PracticalCertificate,
                                sampler, n: int, t_max: float) -> CertificateReport:
    """Check the practical-stability hypotheses at ``n`` sampled points.

    Pointwise: ``mu1(|x|) <= V <= mu2(|x|)`` and ``LV <= rho(t) - mu3(|x|)``.
    For ``rho`` alone: ``rho(t_max) <= 1e-3 rho(0) + 1e-9`` and the composite
    Simpson integral over ``[0, t_max]`` is at most ``M``.
    """
    if n < 1 or not t_max > 0:
        raise RejectedInputError("need n >= 1 and t_max > 0")
    X, T = sampler.points(n)
    viol = {"lower_bound": [], "upper_bound": [], "generator": [], "evaluation": [],
            "rho_nonnegative": [], "rho_decay": [], "rho_integral": []}
    for x, t in zip(X, T):
        t = float(t)
        s = float(np.linalg.norm(x))
        try:
            v = V(x, t)
            lv = generator(V, model, x, t)
            rho_t = float(cert.rho_fn(t))
        except Exception as exc:  # noqa: BLE001
            viol["evaluation"].append({"x": x.copy(), "t": t, "error": f"{type(exc).__name__}: {exc}"})
            continue
        checks = (
            ("lower_bound", cert.mu1(s), v),
            ("upper_bound", v, cert.mu2(s)),
            ("generator", lv, rho_t - cert.mu3(s)),
        )
        for name, lhs, rhs in checks:
            if violated(lhs, rhs):
                viol[name].append({"x": x.copy(), "t": t, "lhs": float(lhs), "rhs": float(rhs)})

    ts = np.linspace(0.0, t_max, 2 * SIMPSON_PANELS + 1)
    rho = _rho_values(cert.rho_fn, ts)
    negative = np.nonzero(rho < 0)[0]
    if negative.size:
        i = int(negative[0])
        viol["rho_nonnegative"].append({"t": float(ts[i]), "lhs": 0.0, "rhs": float(rho[i])})
    if violated(rho[-1], 1e-3 * rho[0] + 1e-9):
        viol["rho_decay"].append({"t": float(t_max), "lhs": float(rho[-1]), "rhs": float(1e-3 * rho[0] + 1e-9)})
    integral = float(simpson(rho, x=ts))
    if violated(integral, cert.M):
        viol["rho_integral"].append({"t": float(t_max), "lhs": integral, "rhs": float(cert.M)})
    return CertificateReport(
        kind="practical", samples=int(n), domain=_describe(sampler), violations=viol,
        extra={"rho_integral": integral, "M": float(cert.M), "t_max": float(t_max)},
    )
