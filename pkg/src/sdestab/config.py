"""Strict JSON experiment configuration."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .certify import ExpCertificate, KFunction, PracticalCertificate, power
from .exceptions import ConfigError
from .lyapunov import LyapunovFunction, langevin_lyapunov, quadratic
from .model import AffineSdeModel, DomainSampler, SdeModel, langevin
from .noise import SCHEMES, TimeGrid

Expect = Literal["pass", "fail"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LangevinBlock(_Strict):
    builtin: Literal["langevin"]
    alpha: float
    beta: float


class AffineBlock(_Strict):
    affine: Literal[True]
    A: list[list[float]]
    a: Optional[list[float]] = None
    B: Optional[list[list[list[float]]]] = None
    b: Optional[list[list[float]]] = None
    label: str = "affine"

    @model_validator(mode="after")
    def _shapes(self):
        d = len(self.A)
        if d == 0 or any(len(row) != d for row in self.A):
            raise ValueError("A must be a nonempty square matrix")
        if self.B is None and self.b is None:
            raise ValueError("give diffusion columns via B and/or b")
        m = len(self.B) if self.B is not None else len(self.b)
        if self.B is not None and any(np.shape(Bk) != (d, d) for Bk in self.B):
            raise ValueError(f"each B_k must be {d}x{d}")
        if self.b is not None and (len(self.b) != m or any(len(bk) != d for bk in self.b)):
            raise ValueError(f"b must hold {m} vectors of length {d}")
        if self.a is not None and len(self.a) != d:
            raise ValueError(f"a must have length {d}")
        return self


class QuadraticBlock(_Strict):
    family: Literal["quadratic"] = "quadratic"
    Q: list[list[float]]
    constant: float = Field(default=0.0, ge=0)


class RegularityBlock(_Strict):
    C: float = Field(gt=0)
    n: int = Field(default=1000, ge=1)
    expect: Optional[Expect] = None


class ExpBlock(_Strict):
    p: int = Field(ge=1)
    c1: float = Field(ge=1)
    c2: float
    c3: float = Field(ge=0)
    rho: float
    gamma: float = Field(ge=0)
    expect: Optional[Expect] = None

    @model_validator(mode="after")
    def _rho(self):
        if not self.rho >= self.c1:
            raise ValueError(f"rho must be >= c1 (rho={self.rho}, c1={self.c1})")
        return self


class PowerBlock(_Strict):
    c: float = Field(gt=0)
    power: float = Field(gt=0)


class RhoBlock(_Strict):
    """``rho(t) = scale * exp(-rate * t)``."""

    scale: float = Field(ge=0)
    rate: float = Field(ge=0)


class PracticalBlock(_Strict):
    mu1: PowerBlock
    mu2: PowerBlock
    mu3: Optional[PowerBlock] = None
    rho: RhoBlock
    M: float = Field(gt=0)
    t_max: float = Field(gt=0)
    expect: Optional[Expect] = None


class CertificatesBlock(_Strict):
    exp: Optional[ExpBlock] = None
    practical: Optional[PracticalBlock] = None


class SamplerBlock(_Strict):
    r_min: float = Field(ge=0)
    r_max: float = Field(gt=0)
    t_min: float = Field(default=0.0, ge=0)
    t_max: float = Field(default=10.0, ge=0)
    n: int = Field(default=10_000, ge=1)
    grid_fraction: float = Field(default=0.5, ge=0, le=1)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _order(self):
        if self.r_min > self.r_max or self.t_min > self.t_max:
            raise ValueError("need r_min <= r_max and t_min <= t_max")
        return self


class GridBlock(_Strict):
    t0: float = Field(default=0.0, ge=0)
    dt: float = Field(gt=0)
    n_steps: int = Field(ge=1)


class EnsembleBlock(_Strict):
    trials: int = Field(ge=1)
    seed: int = Field(ge=0, lt=2**64)
    scheme: Literal[SCHEMES] = "euler_maruyama"
    x0: list[float]
    write_paths: bool = False


class MinPHat(_Strict):
    p_hat_min: float = Field(ge=0, le=1)


class BoundednessBlock(_Strict):
    alpha: float = Field(gt=0)
    c: float = Field(gt=0)
    expect: Optional[MinPHat] = None


class BallStabilityBlock(_Strict):
    k: float = Field(gt=0)
    r: float = Field(ge=0)
    delta: Optional[float] = Field(default=None, gt=0)
    expect: Optional[MinPHat] = None

    @model_validator(mode="after")
    def _k(self):
        if not self.k > self.r:
            raise ValueError("need k > r")
        return self


class AttractivityBlock(_Strict):
    k: float = Field(gt=0)
    T: float = Field(ge=0)
    c: float = Field(gt=0)
    expect: Optional[MinPHat] = None


class ExponentExpect(_Strict):
    p90_slope_max: float


class ExponentBlock(_Strict):
    r: float = Field(ge=0)
    eps_floor: Optional[float] = Field(default=None, gt=0)
    expect: Optional[ExponentExpect] = None


class MartingaleBlock(_Strict):
    g: list[float]
    alpha: float = Field(gt=0)
    beta: float = Field(gt=0)
    T: float = Field(gt=0)
    dt: float = Field(gt=0)
    trials: int = Field(ge=1)
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    expect: Optional[Expect] = None


class ZeroCrossingBlock(_Strict):
    tol: float = Field(ge=0)


class EstimatorsBlock(_Strict):
    boundedness: Optional[BoundednessBlock] = None
    ball_stability: Optional[BallStabilityBlock] = None
    attractivity: Optional[AttractivityBlock] = None
    exponent: Optional[ExponentBlock] = None
    martingale: Optional[MartingaleBlock] = None
    zero_crossing: Optional[ZeroCrossingBlock] = None


class ExperimentConfig(_Strict):
    model: Union[LangevinBlock, AffineBlock]
    lyapunov: Optional[QuadraticBlock] = None
    regularity: Optional[RegularityBlock] = None
    certificates: CertificatesBlock = CertificatesBlock()
    sampler: Optional[SamplerBlock] = None
    grid: Optional[GridBlock] = None
    ensemble: Optional[EnsembleBlock] = None
    estimators: EstimatorsBlock = EstimatorsBlock()
    output_dir: str = "sdestab-out"

    @model_validator(mode="after")
    def _references(self):
        d = self.state_dim
        certs = self.certificates
        if (certs.exp or certs.practical or self.regularity) and self.sampler is None:
            raise ValueError("regularity and certificate checks need a sampler block")
        if (certs.exp or certs.practical) and self.lyapunov is None:
            raise ValueError("certificate checks need a lyapunov block")
        if self.lyapunov is not None and np.shape(self.lyapunov.Q) != (d, d):
            raise ValueError(f"lyapunov.Q must be {d}x{d}")
        ens_needed = any(getattr(self.estimators, k) is not None
                         for k in ("boundedness", "ball_stability", "attractivity", "exponent", "zero_crossing"))
        if ens_needed and (self.grid is None or self.ensemble is None):
            raise ValueError("path estimators need grid and ensemble blocks")
        if self.ensemble is not None and len(self.ensemble.x0) != d:
            raise ValueError(f"ensemble.x0 must have length {d}")
        return self

    @property
    def state_dim(self) -> int:
        return 1 if isinstance(self.model, LangevinBlock) else len(self.model.A)

    # builders

    def build_model(self) -> SdeModel:
        if isinstance(self.model, LangevinBlock):
            return langevin(self.model.alpha, self.model.beta)
        mb = self.model
        return AffineSdeModel(mb.A, mb.a, mb.B, mb.b, label=mb.label)

    def build_lyapunov(self) -> LyapunovFunction:
        lb = self.lyapunov
        if isinstance(self.model, LangevinBlock) and lb.Q == [[1.0]] and lb.constant == 0:
            return langevin_lyapunov(self.model.alpha, self.model.beta)
        return quadratic(lb.Q, lb.constant)

    def build_sampler(self) -> DomainSampler:
        s = self.sampler
        return DomainSampler(self.state_dim, s.r_min, s.r_max, s.t_min, s.t_max, s.grid_fraction, s.seed)

    def build_exp_certificate(self) -> ExpCertificate:
        e = self.certificates.exp
        return ExpCertificate(e.p, e.c1, e.c2, e.c3, e.rho, e.gamma)

    def build_practical_certificate(self) -> PracticalCertificate:
        pb = self.certificates.practical
        mu3 = (KFunction("mu3", lambda s: 0.0, "K") if pb.mu3 is None
               else power(pb.mu3.c, pb.mu3.power, "mu3", "K"))
        scale, rate = pb.rho.scale, pb.rho.rate
        return PracticalCertificate(
            mu1=power(pb.mu1.c, pb.mu1.power, "mu1"),
            mu2=power(pb.mu2.c, pb.mu2.power, "mu2"),
            mu3=mu3,
            rho_fn=lambda t: scale * np.exp(-rate * np.asarray(t, dtype=float)),
            M=pb.M,
        )

    def build_grid(self) -> TimeGrid:
        return TimeGrid(self.grid.t0, self.grid.dt, self.grid.n_steps)


def _path(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def parse_config(data) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        errors = [(_path(e["loc"]), e["msg"]) for e in exc.errors()]
        lines = "\n".join(f"  {p}: {m}" for p, m in errors)
        raise ConfigError(f"invalid config:\n{lines}", errors) from None


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config. Raises :class:`ConfigError` with field paths."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}", [("<file>", str(exc))]) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}",
                          [("<json>", exc.msg)]) from None
    return parse_config(data)


def resolved(config: ExperimentConfig) -> dict:
    """Config echo with defaults filled in; the output directory is left out."""
    return config.model_dump(mode="json", exclude={"output_dir"})
