"""Model of a polarization-entangled photon-pair source built from two
crossed PPKTP crystals with a YVO4 compensator."""

from .compensation import (CompensatorResult, PhaseMap, conjugate_grids, optimize_compensator,
                           residual_phase_map)
from .dispersion import DispersionModel, birefringence, get_model, load_registry, refractive_index
from .errors import (ArgumentError, ConfigurationError, DispersionRangeError, NotPhaseMatchedError,
                     SpdcSourceError, TruncatedSpectrumError)
from .pair_statistics import (DetectionModel, detector_budget, montecarlo_timetags,
                              rates_from_pump_power, visibility_scan)
from .phasematching import (FilterSpec, SourceConfig, delta_k, fwhm, phasematching_curve,
                            solve_signal_idler, spdc_spectrum)
from .polarization_state import (TwoQubitState, build_state, calibrate_mismatch, crystal_spectra,
                                 fidelity, simulate_tomography)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError", "CompensatorResult", "ConfigurationError", "DetectionModel", "DispersionModel",
    "DispersionRangeError", "FilterSpec", "NotPhaseMatchedError", "PhaseMap", "SourceConfig",
    "SpdcSourceError", "TruncatedSpectrumError", "TwoQubitState", "birefringence", "build_state",
    "calibrate_mismatch", "conjugate_grids", "crystal_spectra", "delta_k", "detector_budget",
    "fidelity", "fwhm", "get_model", "load_registry", "montecarlo_timetags", "optimize_compensator",
    "phasematching_curve", "rates_from_pump_power", "refractive_index", "residual_phase_map",
    "simulate_tomography", "solve_signal_idler", "spdc_spectrum", "visibility_scan",
]
