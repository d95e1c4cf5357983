"""Simulation and Lyapunov-certificate tools for practical stability of SDEs."""

__version__ = "0.1.0"

from .certify import (
    CertificateReport,
    ExpCertificate,
    KFunction,
    PracticalCertificate,
    check_exp_certificate,
    check_practical_certificate,
    decay_rate,
    radius,
)
from .estimate import (
    EstimateReport,
    ExponentReport,
    check_martingale_inequality,
    estimate_attractivity,
    estimate_ball_stability,
    estimate_boundedness,
    estimate_exponent,
    wilson_interval,
)
from .lyapunov import LyapunovFunction, diffusion_gradient_norm_sq, generator, quadratic, validate_derivatives
from .model import AffineSdeModel, DomainSampler, SdeModel, check_linear_growth, check_lipschitz, evaluate, langevin
from .noise import NoiseStream, PathEnsemble, TimeGrid, ou_exact, simulate_ensemble, simulate_path
