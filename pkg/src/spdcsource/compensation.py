"""Crossed-crystal relative phase, YVO4 compensation and compensator sizing.

The HH amplitude (born in crystal 1) crosses crystal 2 polarised along its y
axis, so it picks up ``2 pi L (n_y(ls)/ls + n_y(li)/li)`` relative to the VV
amplitude. A YVO4 plate with the HH light on its ordinary axis subtracts a
birefringent phase of opposite wavelength slope. Both phases are sums of a
signal term and an idler term, which keeps maps cheap to evaluate.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import dispersion
from .errors import ArgumentError
from .phasematching import SourceConfig, delta_k, idler_wavelength, solve_signal_idler

log = logging.getLogger(__name__)

YVO4_TEMPERATURE = 25.0
# cells with joint spectral weight at or below this are never emitted
_SUPPORT_FLOOR = 1e-300


def _ktp_y_term(config: SourceConfig, wavelength, temperature):
    model = config.registry.get("KTP", "y")
    return model.index(wavelength, temperature) / np.asarray(wavelength, dtype=float)


def _yvo4_term(registry, wavelength):
    lam = np.asarray(wavelength, dtype=float)
    n_o = registry.get("YVO4", "ordinary").index(lam, YVO4_TEMPERATURE)
    n_e = registry.get("YVO4", "extraordinary").index(lam, YVO4_TEMPERATURE)
    return (n_o - n_e) / lam


def crossed_crystal_phase(config: SourceConfig, signal_wavelength, idler_wavelength_nm,
                          temperature: float | None = None):
    """phi_p + 2 pi L (n_y(ls)/ls + n_y(li)/li) in radians.

    ``temperature`` defaults to crystal 2, the crystal the HH pair traverses.
    """
    if temperature is None:
        temperature = config.temperatures()[1]
    length_nm = config.crystal_length * 1e6
    phase = config.pump_phase + 2.0 * np.pi * length_nm * (
        _ktp_y_term(config, signal_wavelength, temperature)
        + _ktp_y_term(config, idler_wavelength_nm, temperature)
    )
    return phase if np.ndim(phase) else float(phase)


def compensator_phase(yvo4_length: float, signal_wavelength, idler_wavelength_nm, registry=None):
    """2 pi L_YVO [(n_o - n_e)(ls)/ls + (n_o - n_e)(li)/li] in radians (YVO4 at 25 degC)."""
    reg = registry or dispersion.load_registry()
    length_nm = yvo4_length * 1e6
    phase = 2.0 * np.pi * length_nm * (_yvo4_term(reg, signal_wavelength) + _yvo4_term(reg, idler_wavelength_nm))
    return phase if np.ndim(phase) else float(phase)


def conjugate_grids(config: SourceConfig, half_width: float = 2.5, step: float = 0.005,
                    center: float | None = None):
    """Signal grid around ``center`` and the idler grid of its energy partners.

    With a monochromatic pump the emitted pairs lie on 1/ls + 1/li = 1/lp; on
    these grids that locus passes exactly through one cell per row. ``step``
    must stay below ~8 pm for a 20 mm crystal or adjacent cells differ by more
    than pi along the pump direction.
    """
    if center is None:
        center = solve_signal_idler(config, config.temperatures()[0])[0]
    n = int(round(2 * half_width / step)) + 1
    signal = center - half_width + step * np.arange(n)
    idler = idler_wavelength(config.pump_wavelength, signal)[::-1]
    return signal, np.ascontiguousarray(idler)


def joint_spectral_density(config: SourceConfig, signal_grid, idler_grid, temperature=None,
                           apply_filter: bool = True) -> np.ndarray:
    """Relative joint spectral intensity on the (signal, idler) grid.

    Monochromatic pump: each signal row carries its sinc^2 weight on the idler
    cell closest to energy conservation. Broadband pump: Gaussian pump envelope
    in optical frequency times sinc^2 evaluated with the pump wavelength each
    cell implies. The filter (signal arm) multiplies the result.
    """
    ls = np.asarray(signal_grid, dtype=float)
    li = np.asarray(idler_grid, dtype=float)
    if ls.size == 0 or li.size == 0:
        raise ArgumentError("empty signal or idler grid")
    if temperature is None:
        temperature = config.temperatures()[0]
    half_l = config.crystal_length * 1e-3 / 2.0
    w = np.zeros((ls.size, li.size))
    if config.pump_bandwidth == 0:
        partner = idler_wavelength(config.pump_wavelength, ls)
        j = np.abs(1.0 / partner[:, None] - 1.0 / li[None, :]).argmin(axis=1)
        x = delta_k(config, ls, temperature, li[j]) * half_l
        w[np.arange(ls.size), j] = np.sinc(x / np.pi) ** 2
    else:
        x = delta_k(config, ls[:, None], temperature, li[None, :]) * half_l
        lp = config.pump_wavelength
        # frequency detuning expressed as an equivalent pump-wavelength offset
        detune = (1.0 / ls[:, None] + 1.0 / li[None, :] - 1.0 / lp) * lp * lp
        w = np.sinc(x / np.pi) ** 2 * np.exp(-4.0 * math.log(2.0) * (detune / config.pump_bandwidth) ** 2)
    if apply_filter and config.filter is not None:
        w = w * config.filter.transmission(ls)[:, None]
    return w


@dataclass(frozen=True)
class PhaseMap:
    """Residual phase (rad) on a (signal, idler) grid with the map mean removed.

    ``weights`` is the joint spectral density of the emitted pairs on the same
    grid; cells with zero weight are never emitted (off the energy locus for a
    monochromatic pump).
    """

    signal_grid: np.ndarray
    idler_grid: np.ndarray
    phase: np.ndarray
    weights: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (np.size(self.signal_grid), np.size(self.idler_grid))
        if np.shape(self.phase) != shape or np.shape(self.weights) != shape:
            raise ArgumentError(
                f"phase/weights shape {np.shape(self.phase)}/{np.shape(self.weights)} "
                f"does not match grid {shape}"
            )

    @property
    def support(self) -> np.ndarray:
        return self.weights > _SUPPORT_FLOOR

    def max_adjacent_jump(self) -> float:
        """Largest phase difference between neighbouring cells along either axis."""
        jumps = [0.0]
        if self.phase.shape[0] > 1:
            jumps.append(np.abs(np.diff(self.phase, axis=0)).max())
        if self.phase.shape[1] > 1:
            jumps.append(np.abs(np.diff(self.phase, axis=1)).max())
        return float(max(jumps))

    def wrapped(self) -> np.ndarray:
        return np.angle(np.exp(1j * self.phase))

    def weighted_std(self) -> float:
        return weighted_std(self.phase[self.support], self.weights[self.support])

    def peak_to_peak(self, band: tuple[float, float] | None = None) -> float:
        """Peak-to-peak over emitted cells, optionally limited to a signal band (nm)."""
        mask = self.support
        if band is not None:
            rows = (self.signal_grid >= band[0]) & (self.signal_grid <= band[1])
            mask = mask & rows[:, None]
        if not mask.any():
            raise ArgumentError("no emitted cells inside the requested band")
        return float(np.ptp(self.phase[mask]))

    def to_csv(self, path, support_only: bool = False):
        """Long format: lambda_s_nm, lambda_i_nm, phase_rad, weight."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda_s_nm", "lambda_i_nm", "phase_rad", "weight"])
            for i, ls in enumerate(self.signal_grid):
                for j, li in enumerate(self.idler_grid):
                    if support_only and not self.weights[i, j] > _SUPPORT_FLOOR:
                        continue
                    w.writerow([repr(float(ls)), repr(float(li)), repr(float(self.phase[i, j])),
                                repr(float(self.weights[i, j]))])


def unwrap2d(wrapped: np.ndarray, order: str = "row") -> np.ndarray:
    """Unwrap a 2-D phase array by 1-D passes.

    ``row``: unwrap the first column, then every row from it; ``col`` the
    transpose. Both agree when neighbouring cells differ by less than pi.
    """
    if order == "row":
        first = np.unwrap(wrapped[:, 0])
        out = np.unwrap(wrapped, axis=1)
        return out + (first - out[:, 0])[:, None]
    if order == "col":
        return unwrap2d(wrapped.T, "row").T
    raise ArgumentError(f"order must be 'row' or 'col', got {order!r}")


def weighted_std(values, weights) -> float:
    w = np.asarray(weights, dtype=float)
    v = np.asarray(values, dtype=float)
    total = w.sum()
    if not total > 0:
        raise ArgumentError("weights sum to zero")
    mean = np.sum(w * v) / total
    return float(math.sqrt(max(np.sum(w * (v - mean) ** 2) / total, 0.0)))


def _phase_terms(config: SourceConfig, signal_grid, idler_grid):
    t2 = config.temperatures()[1]
    length_nm = config.crystal_length * 1e6
    a_s = 2.0 * np.pi * length_nm * _ktp_y_term(config, signal_grid, t2)
    a_i = 2.0 * np.pi * length_nm * _ktp_y_term(config, idler_grid, t2)
    c_s = 2.0 * np.pi * 1e6 * _yvo4_term(config.registry, signal_grid)
    c_i = 2.0 * np.pi * 1e6 * _yvo4_term(config.registry, idler_grid)
    return a_s, a_i, c_s, c_i


def residual_phase_map(config: SourceConfig, signal_grid=None, idler_grid=None,
                       yvo4_length: float | None = None) -> PhaseMap:
    """Cellwise crossed-crystal + compensator phase, mean removed.

    ``yvo4_length`` overrides ``config.compensator_length`` (mm); pass 0 for
    the uncompensated map. Grids default to :func:`conjugate_grids`.
    """
    config = config.resolved()
    if signal_grid is None or idler_grid is None:
        signal_grid, idler_grid = conjugate_grids(config)
    ls = np.asarray(signal_grid, dtype=float)
    li = np.asarray(idler_grid, dtype=float)
    if ls.size == 0 or li.size == 0:
        raise ArgumentError("empty signal or idler grid")
    l_yvo = config.compensator_length if yvo4_length is None else float(yvo4_length)
    a_s, a_i, c_s, c_i = _phase_terms(config, ls, li)
    # separable: the map is an outer sum of a signal and an idler term
    row = a_s + l_yvo * c_s
    col = a_i + l_yvo * c_i
    # subtract the mean before forming the outer sum to keep the cancellation small
    row = row - row.mean()
    col = col - col.mean()
    phase = row[:, None] + col[None, :]
    phase = phase - phase.mean()
    weights = joint_spectral_density(config, ls, li)
    pmap = PhaseMap(ls, li, phase, weights, metadata={
        "pump_wavelength_nm": config.pump_wavelength,
        "crystal_length_mm": config.crystal_length,
        "poling_period_um": config.poling_period,
        "crystal_temperatures_C": list(config.crystal_temperatures),
        "compensator_length_mm": l_yvo,
        "pump_phase_rad": config.pump_phase,
        "pump_bandwidth_nm": config.pump_bandwidth,
    })
    if pmap.max_adjacent_jump() > math.pi:
        log.warning("phase map grid under-resolves the phase (max neighbour jump %.2f rad > pi)",
                    pmap.max_adjacent_jump())
    return pmap


@dataclass
class CompensatorResult:
    length: float
    weighted_std: float
    peak_to_peak: float
    uncompensated_weighted_std: float
    multi_minimum: bool
    scan: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "optimum_mm": self.length,
            "weighted_std_rad": self.weighted_std,
            "peak_to_peak_rad": self.peak_to_peak,
            "uncompensated_weighted_std_rad": self.uncompensated_weighted_std,
            "multi_minimum": self.multi_minimum,
            "scan": [[float(length), float(obj)] for length, obj in self.scan],
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def optimize_compensator(config: SourceConfig, signal_grid=None, idler_grid=None,
                         scan_range: tuple[float, float] = (0.0, 60.0), scan_step: float = 0.5,
                         weights=None) -> CompensatorResult:
    """YVO4 length minimising the spectrally weighted phase variance.

    Weights default to the filtered joint spectral density; only emitted
    cells enter. Coarse scan over ``scan_range`` (mm), then golden-section
    refinement around the best scan point. A scan with more than one local
    minimum (or a minimum on the scan edge) sets ``multi_minimum``.
    """
    config = config.resolved()
    if signal_grid is None or idler_grid is None:
        signal_grid, idler_grid = conjugate_grids(config)
    ls = np.asarray(signal_grid, dtype=float)
    li = np.asarray(idler_grid, dtype=float)
    w2d = joint_spectral_density(config, ls, li) if weights is None else np.asarray(weights, dtype=float)
    mask = w2d > _SUPPORT_FLOOR
    if not mask.any():
        raise ArgumentError("joint spectral density has no support on the given grids")
    a_s, a_i, c_s, c_i = _phase_terms(config, ls, li)
    ii, jj = np.nonzero(mask)
    a = (a_s - a_s.mean())[ii] + (a_i - a_i.mean())[jj]
    c = (c_s - c_s.mean())[ii] + (c_i - c_i.mean())[jj]
    w = w2d[mask]
    w = w / w.sum()

    def objective(length):
        v = a + length * c
        m = np.dot(w, v)
        return float(np.dot(w, (v - m) ** 2))

    lengths = np.arange(scan_range[0], scan_range[1] + scan_step / 2, scan_step)
    values = np.array([objective(x) for x in lengths])
    interior = np.flatnonzero((values[1:-1] < values[:-2]) & (values[1:-1] <= values[2:])) + 1
    best = int(np.argmin(values))
    multi = len(interior) != 1 or best in (0, len(values) - 1)
    if 0 < best < len(values) - 1:
        res = optimize.minimize_scalar(objective, bracket=(lengths[best - 1], lengths[best], lengths[best + 1]),
                                       method="golden", options={"xtol": 1e-10})
        length = float(res.x)
    else:
        length = float(lengths[best])
    if multi:
        log.warning("compensator objective is not unimodal over %s mm; returning the scan minimum", scan_range)
    resid = a + length * c
    return CompensatorResult(
        length=length,
        weighted_std=math.sqrt(objective(length)),
        peak_to_peak=float(np.ptp(resid)),
        uncompensated_weighted_std=math.sqrt(objective(0.0)),
        multi_minimum=bool(multi),
        scan=list(zip(lengths.tolist(), values.tolist())),
    )
