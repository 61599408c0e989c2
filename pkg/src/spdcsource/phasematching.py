"""Collinear type-0 quasi-phase-matching in PPKTP: roots, spectra and widths.

All three fields are polarised along the KTP z axis. Wavelengths in nm,
crystal lengths in mm, poling period and beam waists in um, temperatures in
degC, phase mismatch in rad/m.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from . import dispersion
from .errors import (
    ArgumentError,
    ConfigurationError,
    DispersionRangeError,
    NotPhaseMatchedError,
    TruncatedSpectrumError,
)

SEARCH_WINDOW = (700.0, 950.0)
DEFAULT_GRID = (740.0, 890.0, 0.05)
ROOT_TOL_NM = 1e-9
# |dk L / 2| below this counts as exactly degenerate
DEGENERACY_TOL_RAD = 1e-6


@dataclass(frozen=True)
class FilterSpec:
    """Band-pass filter; ``fwhm`` and ``center`` in nm."""

    center: float = 783.0
    fwhm: float = 3.5
    peak_transmission: float = 0.9
    shape: str = "gaussian"

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ConfigurationError(f"filter fwhm must be > 0, got {self.fwhm}")
        if not 0 < self.peak_transmission <= 1:
            raise ConfigurationError(
                f"filter peak_transmission must be in (0, 1], got {self.peak_transmission}"
            )
        if self.shape not in ("gaussian", "tophat"):
            raise ConfigurationError(f"filter shape must be gaussian or tophat, got {self.shape!r}")

    def transmission(self, wavelength):
        lam = np.asarray(wavelength, dtype=float)
        if self.shape == "gaussian":
            t = np.exp(-4.0 * math.log(2.0) * ((lam - self.center) / self.fwhm) ** 2)
        else:
            t = (np.abs(lam - self.center) <= self.fwhm / 2).astype(float)
        return self.peak_transmission * t


@dataclass(frozen=True)
class SourceConfig:
    """Crossed-crystal source parameters.

    ``crystal_temperatures=None`` tunes crystal 1 so that it emits the signal
    at ``design_signal_wavelength``; crystal 2 then sits at the same
    temperature plus ``temperature_mismatch``. ``pump_bandwidth`` is the pump
    FWHM in nm, 0 meaning a monochromatic (CW single-frequency) pump.
    """

    pump_wavelength: float = 405.04
    crystal_length: float = 20.0
    poling_period: float = 3.425
    crystal_temperatures: tuple[float, float] | None = None
    design_signal_wavelength: float = 783.0
    temperature_mismatch: float = 0.0
    compensator_length: float = 30.01
    filter: FilterSpec | None = field(default_factory=FilterSpec)
    pump_waist: float = 18.0
    collection_waist: float = 24.0
    pump_phase: float = 0.0
    pump_bandwidth: float = 0.0
    sellmeier_file: str | None = None

    def __post_init__(self):
        for name in ("crystal_length", "pump_waist", "collection_waist"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.compensator_length < 0:
            raise ConfigurationError(f"compensator_length must be >= 0, got {self.compensator_length}")
        if not 1 < self.poling_period < 100:
            raise ConfigurationError(f"poling_period must be in (1, 100) um, got {self.poling_period}")
        if not 350 < self.pump_wavelength < 500:
            raise ConfigurationError(f"pump_wavelength must be in (350, 500) nm, got {self.pump_wavelength}")
        if self.pump_bandwidth < 0:
            raise ConfigurationError(f"pump_bandwidth must be >= 0, got {self.pump_bandwidth}")
        if self.crystal_temperatures is not None:
            temps = tuple(float(t) for t in self.crystal_temperatures)
            if len(temps) != 2:
                raise ConfigurationError("crystal_temperatures must hold two values (T1, T2)")
            object.__setattr__(self, "crystal_temperatures", temps)
            model = self.nonlinear_model
            lo, hi = model.temperature_range
            for t in temps:
                if not lo <= t <= hi:
                    raise ConfigurationError(
                        f"crystal temperature {t} degC outside dispersion validity [{lo}, {hi}]"
                    )

    @property
    def registry(self):
        return dispersion.load_registry(self.sellmeier_file)

    @property
    def nonlinear_model(self):
        """KTP z axis: carries pump, signal and idler for type-0 interaction."""
        return self.registry.get("KTP", "z")

    @property
    def degeneracy_wavelength(self) -> float:
        return 2.0 * self.pump_wavelength

    def temperatures(self) -> tuple[float, float]:
        """(T1, T2), tuning to the design signal wavelength when unset."""
        if self.crystal_temperatures is not None:
            return self.crystal_temperatures
        t1 = phase_matching_temperature(self, self.design_signal_wavelength)
        return t1, t1 + self.temperature_mismatch

    def resolved(self) -> "SourceConfig":
        """Copy with explicit crystal temperatures."""
        return replace(self, crystal_temperatures=self.temperatures())

    def with_length(self, length: float) -> "SourceConfig":
        return replace(self, crystal_length=length)


def idler_wavelength(pump_wavelength, signal_wavelength):
    """Energy conservation in vacuum wavelengths: 1/ls + 1/li = 1/lp."""
    ls = np.asarray(signal_wavelength, dtype=float)
    with np.errstate(divide="ignore"):
        li = 1.0 / (1.0 / pump_wavelength - 1.0 / ls)
    return li if np.ndim(li) else float(li)


def delta_k(config: SourceConfig, signal_wavelength, temperature, idler_wavelength_nm=None):
    """Phase mismatch k_p - k_s - k_i - 2 pi / Lambda in rad/m.

    With ``idler_wavelength_nm`` given, the pump wavelength is the one implied
    by energy conservation for that (signal, idler) pair; otherwise the idler
    is derived from the configured pump.
    """
    ls = np.asarray(signal_wavelength, dtype=float)
    if np.any(ls <= config.pump_wavelength):
        raise ArgumentError("signal wavelength must exceed the pump wavelength")
    if idler_wavelength_nm is None:
        lp = config.pump_wavelength
        li = 1.0 / (1.0 / lp - 1.0 / ls)
    else:
        li = np.asarray(idler_wavelength_nm, dtype=float)
        lp = 1.0 / (1.0 / ls + 1.0 / li)
    model = config.nonlinear_model
    k = model.index(lp, temperature) / lp - model.index(ls, temperature) / ls - model.index(li, temperature) / li
    dk = 2.0 * np.pi * (k * 1e9 - 1e6 / config.poling_period)
    return dk if np.ndim(dk) else float(dk)


def _signal_window(config: SourceConfig):
    lo, hi = SEARCH_WINDOW
    # the idler of the shortest signal must also lie inside the window
    lo = max(lo, idler_wavelength(config.pump_wavelength, hi))
    return lo, config.degeneracy_wavelength


def solve_signal_idler(config: SourceConfig, temperature: float) -> tuple[float, float]:
    """Phase-matched (signal, idler) with signal <= idler.

    Only the central dk = 0 root between the window edge and degeneracy is
    bracketed. Raises NotPhaseMatchedError below the degeneracy temperature.
    """
    lo, hi = _signal_window(config)
    half_l = config.crystal_length * 1e-3 / 2.0
    f = lambda ls: delta_k(config, ls, temperature)  # noqa: E731
    f_hi = f(hi)
    if abs(f_hi * half_l) <= DEGENERACY_TOL_RAD:
        return hi, hi
    f_lo = f(lo)
    if np.sign(f_lo) == np.sign(f_hi):
        raise NotPhaseMatchedError(
            f"not phase-matched at {temperature:g} degC: dk has sign {np.sign(f_lo):+.0f} at "
            f"{lo:.1f} nm and {np.sign(f_hi):+.0f} at {hi:.1f} nm",
            edge_signs=(int(np.sign(f_lo)), int(np.sign(f_hi))),
        )
    ls = optimize.brentq(f, lo, hi, xtol=ROOT_TOL_NM, rtol=1e-14, maxiter=200)
    return ls, idler_wavelength(config.pump_wavelength, ls)


def degeneracy_temperature(config: SourceConfig, bracket: tuple[float, float] | None = None) -> float:
    """Temperature where signal and idler are both at twice the pump wavelength."""
    lo, hi = bracket or config.nonlinear_model.temperature_range
    lam = config.degeneracy_wavelength
    f = lambda t: delta_k(config, lam, t)  # noqa: E731
    temps = np.linspace(lo, hi, 151)
    vals = np.array([f(t) for t in temps])
    flips = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
    if not len(flips):
        raise NotPhaseMatchedError(f"no degeneracy point in [{lo:g}, {hi:g}] degC")
    i = flips[0]
    return optimize.brentq(f, temps[i], temps[i + 1], xtol=1e-12, rtol=1e-15)


def phase_matching_temperature(config: SourceConfig, signal_wavelength: float,
                               bracket: tuple[float, float] | None = None) -> float:
    """Temperature at which ``signal_wavelength`` is exactly phase-matched."""
    lo, hi = bracket or config.nonlinear_model.temperature_range
    f = lambda t: delta_k(config, signal_wavelength, t)  # noqa: E731
    temps = np.linspace(lo, hi, 151)
    vals = np.array([f(t) for t in temps])
    flips = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
    if not len(flips):
        raise NotPhaseMatchedError(
            f"{signal_wavelength:g} nm is not phase-matched anywhere in [{lo:g}, {hi:g}] degC"
        )
    i = flips[0]
    return optimize.brentq(f, temps[i], temps[i + 1], xtol=1e-10)


@dataclass(frozen=True)
class Spectrum:
    """Relative spectral density on a strictly increasing wavelength grid (nm).

    ``peak`` keeps the maximum before normalisation (filter transmission, etc.).
    """

    wavelengths: np.ndarray
    intensity: np.ndarray
    label: str = "signal"
    peak: float = 1.0

    def __post_init__(self):
        lam = np.asarray(self.wavelengths, dtype=float)
        inten = np.asarray(self.intensity, dtype=float)
        if lam.shape != inten.shape or lam.ndim != 1:
            raise ArgumentError("wavelengths and intensity must be 1-D arrays of equal length")
        if lam.size and np.any(np.diff(lam) <= 0):
            raise ArgumentError("spectrum wavelengths must be strictly increasing")
        if np.any(inten < 0):
            raise ArgumentError("spectral intensity must be non-negative")
        object.__setattr__(self, "wavelengths", lam)
        object.__setattr__(self, "intensity", inten)

    @classmethod
    def normalized(cls, wavelengths, intensity, label="signal"):
        inten = np.asarray(intensity, dtype=float)
        peak = float(inten.max()) if inten.size else 0.0
        if peak > 0:
            inten = inten / peak
        return cls(wavelengths, inten, label, peak)

    def center(self) -> float:
        """Wavelength of the global maximum."""
        return float(self.wavelengths[np.argmax(self.intensity)])

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["wavelength_nm", "relative_intensity"])
            for lam, i in zip(self.wavelengths, self.intensity):
                w.writerow([repr(float(lam)), repr(float(i))])


def default_grid(start=DEFAULT_GRID[0], stop=DEFAULT_GRID[1], step=DEFAULT_GRID[2]):
    n = int(round((stop - start) / step)) + 1
    return start + step * np.arange(n)


def spdc_spectrum(config: SourceConfig, temperature: float, wavelength_grid=None, label: str = "signal",
                  apply_filter: bool = True, background: float = 0.0) -> Spectrum:
    """sinc^2(dk L / 2) on ``wavelength_grid``, normalised to peak 1.

    ``label`` selects which photon the grid wavelength describes: ``signal``
    keeps the branch below degeneracy, ``idler`` the branch above, and
    ``joint-marginal`` both lobes. ``background`` adds a spectrally flat
    pedestal (relative to the sinc^2 peak) on the kept branch before filtering,
    standing in for broadband non-phase-matched emission.
    """
    grid = default_grid() if wavelength_grid is None else np.asarray(wavelength_grid, dtype=float)
    if grid.size == 0:
        raise ArgumentError("empty wavelength grid")
    if label not in ("signal", "idler", "joint-marginal"):
        raise ArgumentError(f"unknown spectrum label {label!r}")
    x = delta_k(config, grid, temperature) * (config.crystal_length * 1e-3) / 2.0
    inten = np.sinc(x / np.pi) ** 2
    lam0 = config.degeneracy_wavelength
    if label == "signal":
        keep = grid <= lam0
    elif label == "idler":
        keep = grid >= lam0
    else:
        keep = np.ones_like(grid, dtype=bool)
    inten = np.where(keep, inten + background, 0.0)
    if apply_filter and config.filter is not None:
        inten = inten * config.filter.transmission(grid)
    return Spectrum.normalized(grid, inten, label)


def instrument_broadened(spectrum: Spectrum, resolution: float) -> Spectrum:
    """Spectrum as seen by a spectrometer with Gaussian resolution ``resolution`` nm FWHM.

    Needs a uniform grid; the result is renormalised to peak 1.
    """
    lam = spectrum.wavelengths
    if resolution <= 0:
        raise ArgumentError(f"resolution must be > 0, got {resolution}")
    step = np.diff(lam)
    if lam.size < 2 or not np.allclose(step, step[0], rtol=1e-6, atol=0):
        raise ArgumentError("instrument broadening needs a uniform wavelength grid")
    sigma = resolution / (2.0 * math.sqrt(2.0 * math.log(2.0))) / step[0]
    half = int(math.ceil(5 * sigma))
    x = np.arange(-half, half + 1)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    out = np.convolve(spectrum.intensity, kernel / kernel.sum(), mode="same")
    return Spectrum.normalized(lam, np.clip(out, 0.0, None), spectrum.label)


def fwhm(spectrum: Spectrum, around: float | None = None) -> float:
    """Full width at half maximum with linear interpolation of the crossings.

    Uses the global maximum, or the local maximum nearest ``around`` (nm).
    """
    lam, y = spectrum.wavelengths, spectrum.intensity
    if y.size < 3 or not np.any(y > 0):
        raise TruncatedSpectrumError("spectrum too short or empty for a width measurement")
    if around is None:
        i = int(np.argmax(y))
    else:
        i = int(np.argmin(np.abs(lam - around)))
        # climb to the local maximum
        while True:
            left = y[i - 1] if i > 0 else -np.inf
            right = y[i + 1] if i < y.size - 1 else -np.inf
            if left > y[i] and left >= right:
                i -= 1
            elif right > y[i]:
                i += 1
            else:
                break
    half = y[i] / 2.0
    below = np.flatnonzero(y[:i] < half)
    above = np.flatnonzero(y[i + 1:] < half)
    if not below.size or not above.size:
        raise TruncatedSpectrumError(
            f"half-maximum of the lobe at {lam[i]:.3f} nm is not bracketed by the grid"
        )
    j = below[-1]
    left = lam[j] + (half - y[j]) * (lam[j + 1] - lam[j]) / (y[j + 1] - y[j])
    k = i + 1 + above[0]
    right = lam[k - 1] + (half - y[k - 1]) * (lam[k] - lam[k - 1]) / (y[k] - y[k - 1])
    return float(right - left)


@dataclass(frozen=True)
class CurveRow:
    temperature: float
    signal: float = math.nan
    idler: float = math.nan
    fwhm_signal: float = math.nan
    fwhm_idler: float = math.nan
    matched: bool = False


CURVE_HEADER = ["temperature_C", "lambda_s_nm", "lambda_i_nm", "fwhm_s_nm", "fwhm_i_nm"]


def phasematching_curve(config: SourceConfig, temperature_range, step: float = 0.5,
                        wavelength_grid=None) -> list[CurveRow]:
    """(T, signal, idler, FWHM_s, FWHM_i) rows; unmatched rows have matched=False.

    Widths come from the joint-marginal spectrum (unfiltered), measured on the
    lobe that contains each root, so near degeneracy they report the merged
    lobe.
    """
    t0, t1 = temperature_range
    if step <= 0:
        raise ArgumentError("temperature step must be > 0")
    n = int(math.floor((t1 - t0) / step + 1e-9)) + 1
    grid = default_grid() if wavelength_grid is None else np.asarray(wavelength_grid, dtype=float)
    rows = []
    for t in t0 + step * np.arange(n):
        t = float(t)
        try:
            ls, li = solve_signal_idler(config, t)
        except NotPhaseMatchedError:
            rows.append(CurveRow(t))
            continue
        sp = spdc_spectrum(config, t, grid, label="joint-marginal", apply_filter=False)
        try:
            ws = fwhm(sp, around=ls)
            wi = fwhm(sp, around=li)
        except TruncatedSpectrumError:
            ws = wi = math.nan
        rows.append(CurveRow(t, ls, li, ws, wi, True))
    return rows


def curve_to_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for r in rows:
            w.writerow([repr(r.temperature)] + [
                repr(float(v)) if r.matched and not math.isnan(v) else "nan"
                for v in (r.signal, r.idler, r.fwhm_signal, r.fwhm_idler)
            ])


def rayleigh_range(waist: float, wavelength: float) -> float:
    """z_R = pi w^2 / lambda, waist in um and wavelength in nm, result in mm."""
    return math.pi * (waist * 1e-6) ** 2 / (wavelength * 1e-9) * 1e3


def matched_collection_waist(pump_waist: float, pump_wavelength: float, spdc_wavelength: float) -> float:
    """Collection waist (um) whose Rayleigh range equals the pump's."""
    return pump_waist * math.sqrt(spdc_wavelength / pump_wavelength)


__all__ = [
    "CURVE_HEADER", "CurveRow", "DispersionRangeError", "FilterSpec", "SourceConfig", "Spectrum",
    "curve_to_csv", "default_grid", "degeneracy_temperature", "delta_k", "fwhm", "idler_wavelength",
    "matched_collection_waist", "phase_matching_temperature", "phasematching_curve", "rayleigh_range",
    "solve_signal_idler", "spdc_spectrum",
]
