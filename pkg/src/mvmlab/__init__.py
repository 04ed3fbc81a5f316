"""Measure-valued martingales on quantile grids: Bass, Root and Azema-Yor
constructions, Wasserstein diagnostics and speed estimates."""

__version__ = "0.1.0"

from ._accel import backend, set_backend, use_backend
from .constructions import (
    AyBarycentre,
    MvmSeries,
    ScaleFunction,
    ay_barycentre,
    ay_mvm_series,
    bass_mvm_series,
    bass_natural_time,
    bass_scale,
    eta_series,
)
from .measure import DensityGrid, QuantileMeasure, potential, tv_distance, wasserstein_p
from .root import Barrier, RootLattice, root_mvm_series, solve_root_barrier
from .speed import SpeedEstimate, estimate_speed, rho_speed
from .stochastic import RngStream, SamplePath, TimeGrid, simulate_brownian

__all__ = [
    "AyBarycentre", "Barrier", "DensityGrid", "MvmSeries", "QuantileMeasure", "RngStream", "RootLattice",
    "SamplePath", "ScaleFunction", "SpeedEstimate", "TimeGrid", "ay_barycentre", "ay_mvm_series", "backend",
    "bass_mvm_series", "bass_natural_time", "bass_scale", "estimate_speed", "eta_series", "potential",
    "rho_speed", "root_mvm_series", "set_backend", "simulate_brownian", "solve_root_barrier", "tv_distance",
    "use_backend", "wasserstein_p",
]
