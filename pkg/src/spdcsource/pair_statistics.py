"""Detected rates, multi-pair accidentals and visibility versus pump power.

Two routes to the same numbers: closed-form rate bookkeeping, and a time-tag
Monte Carlo that emits Poissonian pairs, loses photons, adds dark counts and
counts coincidences in a window.

Coincidence window convention: a signal and an idler detection coincide when
``|t_s - t_i| <= t_c`` (``window_convention="pm"``, the default, as in common
time-to-digital converter software), which makes the accidental rate
``2 t_c R_s R_i``. ``window_convention="full"`` uses ``|t_s - t_i| <= t_c/2``
and ``t_c R_s R_i``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from . import kernels
from .errors import ArgumentError, ConfigurationError
from .polarization_state import ORTHOGONAL, TwoQubitState

log = logging.getLogger(__name__)

DETECTED_PAIR_RATE = 640e3  # detected pairs / s / mW
PS = 1e-12
MULTIPAIR_THRESHOLD = 0.1  # R * t_c above which multi-pairs dominate
MIN_EXPECTED_COINCIDENCES = 1000
TIMETAG_DTYPE = np.dtype([("timestamp_ps", "<i8"), ("channel", "u1")])


@dataclass(frozen=True)
class DetectionModel:
    """Detection chain of the two arms.

    Efficiencies are end-to-end probabilities that a generated photon is
    detected. ``efficiency_idler`` equals the conditional coincidence ratio
    R_c/R_s; ``efficiency_signal`` equals R_c/R_i. ``coincidence_window`` in s,
    rates in counts/s. ``detector_quantum_efficiency`` is informational.
    """

    efficiency_signal: float = 0.156
    efficiency_idler: float = 0.18
    detector_quantum_efficiency: float = 0.40
    dark_counts: float = 500.0
    coincidence_window: float = 2.4e-9
    saturation_rate: float = 1e7
    emitted_visibility: float = 0.98
    window_convention: str = "pm"

    def __post_init__(self):
        for name in ("efficiency_signal", "efficiency_idler", "detector_quantum_efficiency",
                     "emitted_visibility"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigurationError(f"{name} must be in (0, 1], got {v}")
        if not self.coincidence_window > 0:
            raise ConfigurationError(f"coincidence_window must be > 0, got {self.coincidence_window}")
        if self.dark_counts < 0:
            raise ConfigurationError(f"dark_counts must be >= 0, got {self.dark_counts}")
        if not self.saturation_rate > 0:
            raise ConfigurationError(f"saturation_rate must be > 0, got {self.saturation_rate}")
        if self.window_convention not in ("pm", "full"):
            raise ConfigurationError(f"window_convention must be 'pm' or 'full', got {self.window_convention!r}")

    @property
    def conditional_ratio(self) -> float:
        return self.efficiency_idler

    @property
    def half_window(self) -> float:
        """Largest |t_s - t_i| counted as a coincidence (s)."""
        return self.coincidence_window if self.window_convention == "pm" else self.coincidence_window / 2

    @property
    def accidental_factor(self) -> float:
        """Accidental rate divided by R_s R_i t_c."""
        return 2.0 if self.window_convention == "pm" else 1.0


@dataclass(frozen=True)
class RatePrediction:
    power: float
    generated_pairs: float
    singles_s: float
    singles_i: float
    true_coincidences: float
    accidental_coincidences: float
    visibility: float
    multipair_parameter: float  # generated pairs per coincidence window, R t_c
    no_data: bool = False


def rates_from_pump_power(power: float, brightness: float = DETECTED_PAIR_RATE,
                          model: DetectionModel | None = None) -> RatePrediction:
    """Rates and visibility at ``power`` mW for a detected brightness (pairs/s/mW).

    Generated R = brightness P / (eta_s eta_i); singles R eta + dark; true
    coincidences brightness P; accidentals k t_c R_s R_i; visibility
    V0 C_t / (C_t + C_a). With no coincidences at all the visibility is V0 and
    ``no_data`` is set.
    """
    model = model or DetectionModel()
    if power < 0:
        raise ArgumentError(f"pump power must be >= 0, got {power}")
    c_t = brightness * power
    r = c_t / (model.efficiency_signal * model.efficiency_idler)
    s = r * model.efficiency_signal + model.dark_counts
    i = r * model.efficiency_idler + model.dark_counts
    c_a = model.accidental_factor * model.coincidence_window * s * i
    total = c_t + c_a
    if total > 0:
        vis, no_data = model.emitted_visibility * c_t / total, False
    else:
        vis, no_data = model.emitted_visibility, True
    return RatePrediction(power, r, s, i, c_t, c_a, vis, r * model.coincidence_window, no_data)


@dataclass(frozen=True)
class ScanRow:
    window: float
    power: float
    generated_pairs: float
    visibility: float
    multipair: bool


SCAN_HEADER = ["window_s", "power_mW", "generated_pairs_per_s", "visibility", "multipair_regime"]


def visibility_scan(powers, model: DetectionModel | None = None, windows=None,
                    brightness: float = DETECTED_PAIR_RATE) -> list[ScanRow]:
    """Analytic V(P) for every coincidence window in ``windows`` (s).

    ``multipair`` flags rows where R t_c exceeds 0.1.
    """
    model = model or DetectionModel()
    powers = np.atleast_1d(np.asarray(powers, dtype=float))
    windows = [model.coincidence_window] if windows is None else list(windows)
    if powers.size == 0 or not windows:
        raise ArgumentError("power and window lists must be non-empty")
    rows = []
    for tc in windows:
        m = _with(model, coincidence_window=float(tc))
        for p in powers:
            pred = rates_from_pump_power(float(p), brightness, m)
            rows.append(ScanRow(float(tc), float(p), pred.generated_pairs, pred.visibility,
                                pred.generated_pairs * tc > MULTIPAIR_THRESHOLD))
    return rows


def scan_to_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_HEADER)
        for r in rows:
            w.writerow([repr(float(r.window)), repr(float(r.power)), repr(float(r.generated_pairs)),
                        repr(float(r.visibility)),
                        int(r.multipair)])


def power_at_visibility(target: float, model: DetectionModel | None = None,
                        brightness: float = DETECTED_PAIR_RATE, max_power: float = 1e4) -> float:
    """Pump power (mW) at which the analytic visibility falls to ``target``."""
    model = model or DetectionModel()
    f = lambda p: rates_from_pump_power(p, brightness, model).visibility - target  # noqa: E731
    lo = 1e-6
    if f(lo) < 0:
        raise ArgumentError(f"visibility is below {target} even at vanishing power")
    if f(max_power) > 0:
        raise ArgumentError(f"visibility stays above {target} up to {max_power} mW")
    return optimize.brentq(f, lo, max_power, xtol=1e-9, rtol=1e-12)


def detector_budget(target_coincidence_rate: float, model: DetectionModel | None = None,
                    load_fraction: float = 0.30) -> tuple[int, float]:
    """Detectors needed to register ``target_coincidence_rate`` (cps).

    Total singles 2 R_c / eta_c spread over detectors each run at
    ``load_fraction`` of saturation, rounded up, with at least one detector
    per arm. Returns (detectors, singles load per detector in cps).
    """
    model = model or DetectionModel()
    if target_coincidence_rate < 0:
        raise ArgumentError("target coincidence rate must be >= 0")
    singles = 2.0 * target_coincidence_rate / model.conditional_ratio
    n = max(2, math.ceil(singles / (load_fraction * model.saturation_rate) - 1e-9))
    return n, singles / n


def _with(model: DetectionModel, **changes) -> DetectionModel:
    return replace(model, **changes)


def _outcome_probabilities(state: TwoQubitState, setting):
    """P(signal pass/block, idler pass/block) for single-port analyzers."""
    a, b = setting
    a_perp, b_perp = _perp(a), _perp(b)
    p = np.array([
        state.probability(a, b),
        state.probability(a, b_perp),
        state.probability(a_perp, b),
        state.probability(a_perp, b_perp),
    ])
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _perp(analyzer):
    if isinstance(analyzer, str):
        return ORTHOGONAL[analyzer.upper()]
    v = np.asarray(analyzer, dtype=complex)
    return np.array([-np.conj(v[1]), np.conj(v[0])])


@dataclass
class SettingCounts:
    setting: tuple
    coincidences: int
    true_coincidences: int
    singles_s: int
    singles_i: int
    duration: float
    expected_accidentals: float

    @property
    def accidentals(self) -> int:
        return self.coincidences - self.true_coincidences


@dataclass
class MonteCarloResult:
    counts: dict
    visibility: float
    visibility_error: float
    duration: float
    generated_rate: float
    low_statistics: bool
    streams: dict = field(default_factory=dict)


@dataclass
class TimeTags:
    """Detections of one run: sorted int64 picosecond stamps per arm."""

    signal: np.ndarray
    idler: np.ndarray
    signal_ids: np.ndarray
    idler_ids: np.ndarray

    def merged(self):
        return kernels.merge_streams(self.signal, self.idler)


def simulate_timetags(duration: float, model: DetectionModel, generated_rate: float, rng,
                      state: TwoQubitState | None = None, setting=None) -> TimeTags:
    """One acquisition: Poisson pair emission, analyzers, losses and dark counts.

    Without ``setting`` the analyzers are removed and every surviving photon
    reaches its detector.
    """
    d_ps = int(round(duration / PS))
    n_pairs = rng.poisson(generated_rate * duration)
    t = np.sort(rng.integers(0, d_ps, size=n_pairs, dtype=np.int64))
    ids = np.arange(n_pairs, dtype=np.int64)
    if setting is None:
        pass_s = pass_i = np.ones(n_pairs, dtype=bool)
    else:
        if state is None:
            state = TwoQubitState.werner(model.emitted_visibility)
        outcome = rng.choice(4, size=n_pairs, p=_outcome_probabilities(state, setting))
        pass_s = outcome < 2
        pass_i = (outcome % 2) == 0
    keep_s = pass_s & (rng.random(n_pairs) < model.efficiency_signal)
    keep_i = pass_i & (rng.random(n_pairs) < model.efficiency_idler)

    def arm(keep):
        n_dark = rng.poisson(model.dark_counts * duration)
        td = rng.integers(0, d_ps, size=n_dark, dtype=np.int64)
        times = np.concatenate([t[keep], td])
        labels = np.concatenate([ids[keep], np.full(n_dark, -1, dtype=np.int64)])
        order = np.argsort(times, kind="stable")
        return times[order], labels[order]

    ts, ids_s = arm(keep_s)
    ti, ids_i = arm(keep_i)
    return TimeTags(ts, ti, ids_s, ids_i)


def expected_setting_rates(model: DetectionModel, generated_rate: float, state: TwoQubitState, setting):
    """Analytic (true, accidental) coincidence rates behind analyzers ``setting``."""
    p = _outcome_probabilities(state, setting)
    eta_s, eta_i = model.efficiency_signal, model.efficiency_idler
    true = generated_rate * eta_s * eta_i * p[0]
    s = generated_rate * eta_s * (p[0] + p[1]) + model.dark_counts
    i = generated_rate * eta_i * (p[0] + p[2]) + model.dark_counts
    acc = model.accidental_factor * model.coincidence_window * s * i
    return true, acc


def montecarlo_timetags(duration: float, model: DetectionModel | None = None,
                        generated_rate: float | None = None, seed=None,
                        state: TwoQubitState | None = None,
                        settings=(("D", "D"), ("D", "A")), shards: int = 1,
                        keep_streams: bool = False) -> MonteCarloResult:
    """Time-tag Monte Carlo of coincidences for each analyzer setting.

    Every setting is an independent acquisition of ``duration`` seconds split
    into ``shards`` sub-runs with seeds spawned from ``seed``; counts merge by
    summation so shard order is irrelevant. The visibility is
    (C_0 - C_1)/(C_0 + C_1) for the first two settings with a binomial error.
    ``low_statistics`` is set when fewer than 1000 coincidences are expected
    in the two together.
    """
    model = model or DetectionModel()
    if generated_rate is None:
        raise ArgumentError("generated_rate is required")
    if duration <= 0 or generated_rate < 0:
        raise ArgumentError("duration must be > 0 and generated_rate >= 0")
    if state is None:
        state = TwoQubitState.werner(model.emitted_visibility)
    window_ps = int(round(model.half_window / PS))
    root = np.random.SeedSequence(seed)
    setting_seeds = root.spawn(len(settings))
    counts = {}
    streams = {}
    expected = []
    for setting, ss in zip(settings, setting_seeds):
        tot = true = n_s = n_i = 0
        for shard_seed in ss.spawn(shards):
            rng = np.random.default_rng(shard_seed)
            tags = simulate_timetags(duration / shards, model, generated_rate, rng, state, setting)
            c, ct = kernels.count_coincidences(tags.signal, tags.idler, tags.signal_ids, tags.idler_ids,
                                               window_ps)
            tot += c
            true += ct
            n_s += tags.signal.size
            n_i += tags.idler.size
            if keep_streams and shards == 1:
                streams[setting] = tags
        exp_true, exp_acc = expected_setting_rates(model, generated_rate, state, setting)
        expected.append((exp_true + exp_acc) * duration)
        counts[setting] = SettingCounts(setting, tot, true, n_s, n_i, duration, exp_acc * duration)
    n_expected = sum(expected[:2])
    low = n_expected < MIN_EXPECTED_COINCIDENCES
    if low:
        log.warning("fewer than %d coincidences expected (%.0f)", MIN_EXPECTED_COINCIDENCES, n_expected)
    vis, err = math.nan, math.nan
    if len(settings) >= 2:
        c0 = counts[settings[0]].coincidences
        c1 = counts[settings[1]].coincidences
        vis, err = fringe_visibility(c0, c1, model.emitted_visibility)
    return MonteCarloResult(counts, vis, err, duration, generated_rate, low, streams)


def fringe_visibility(c_max: int, c_min: int, no_data_value: float = math.nan):
    """(c_max - c_min)/(c_max + c_min) and its binomial standard error."""
    n = c_max + c_min
    if n == 0:
        return no_data_value, math.nan
    p = c_max / n
    return 2 * p - 1, 2 * math.sqrt(max(p * (1 - p), 0.25 / n) / n)


def write_timetags_binary(path, timestamps_ps, channels):
    """Packed records: little-endian int64 picoseconds + uint8 channel (9 bytes)."""
    rec = np.empty(len(timestamps_ps), dtype=TIMETAG_DTYPE)
    rec["timestamp_ps"] = timestamps_ps
    rec["channel"] = channels
    rec.tofile(path)


def read_timetags_binary(path):
    rec = np.fromfile(path, dtype=TIMETAG_DTYPE)
    return rec["timestamp_ps"].copy(), rec["channel"].copy()


def write_timetags_csv(path, timestamps_ps, channels):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_ps", "channel"])
        for t, c in zip(timestamps_ps, channels):
            w.writerow([int(t), int(c)])
