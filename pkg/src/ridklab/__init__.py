"""Numerical laboratory for the regularised inertial Dean-Kawasaki model on the torus."""
from ._backend import BACKEND
from .fields import PairState, TorusGrid, energy_norm, hs_norm, pair_norm
from .kernel import KernelSpec, evaluate_kernel, kernel_fourier_coefficient
from .particles import CosinePotential, LangevinParams, ParticleEnsemble, ZeroPotential
from .ridk import RegularisationSpec, RidkConfig, h_delta, propagator_apply, step_ridk
from .specfun import DomainError, bessel_ratio, consecutive_ratio, kernel_normalisation
from .spectrum import EigenSpectrum, SobolevIndex, sobolev_trace, theta_critical

__version__ = "0.1.0"
