"""Riemann-Theta Boltzmann Machines: theta evaluation, densities and networks."""

from .core import Phase, RtbmParams, density, expectation, init_random, log_density, moments
from .mixture import MixtureModel, mixture_density
from .theta import theta_tilde, theta_tilde_naive, log_theta_tilde

__version__ = "0.1.0"

__all__ = [
    "Phase",
    "RtbmParams",
    "MixtureModel",
    "density",
    "expectation",
    "init_random",
    "log_density",
    "mixture_density",
    "moments",
    "theta_tilde",
    "theta_tilde_naive",
    "log_theta_tilde",
]
