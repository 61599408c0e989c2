"""Acceptance checks, each at its stated tolerance.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdcsource import compensation as cp
from spdcsource import dispersion
from spdcsource import pair_statistics as stats
from spdcsource import phasematching as pm
from spdcsource import polarization_state as ps
from spdcsource.errors import NotPhaseMatchedError
from spdcsource.pair_statistics import DetectionModel
from spdcsource.phasematching import SourceConfig
from spdcsource.polarization_state import TwoQubitState

acceptance = pytest.mark.acceptance
SOURCE = SourceConfig().resolved()


def _anchor_search(pump):
    cfg = SourceConfig(pump_wavelength=pump, crystal_temperatures=(25.0, 25.0))
    hits = []
    for t in np.arange(20.0, 40.0 + 1e-9, 0.1):
        try:
            ls, li = pm.solve_signal_idler(cfg, float(t))
        except NotPhaseMatchedError:
            continue
        if abs(ls - 783.0) <= 5.0 and abs(li - 837.0) <= 5.0:
            hits.append((float(t), ls, li))
    return hits


@acceptance(1, label="phase-matching anchor: 783/837 nm within 5 nm at 20-40 degC, 405.4 nm pump, < 1 s")
def test_phase_matching_anchor():
    t0 = time.perf_counter()
    hits = _anchor_search(405.4)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    assert hits, "no temperature in 20-40 degC phase-matches (783 +- 5, 837 +- 5) nm at 405.4 nm"


@acceptance(2, label="degeneracy identity: signal = idler = 2 x pump to 1e-3 nm")
def test_degeneracy_identity():
    for pump in (405.04, 405.4):
        cfg = SourceConfig(pump_wavelength=pump)
        t_deg = pm.degeneracy_temperature(cfg)
        ls, li = pm.solve_signal_idler(cfg, t_deg)
        assert abs(ls - 2 * pump) < 1e-3 and abs(li - 2 * pump) < 1e-3


@acceptance(3, label="bandwidth law: non-degenerate FWHM x L constant within 5% for L = 10, 20, 40 mm")
def test_bandwidth_law():
    t = SOURCE.crystal_temperatures[0]
    products = []
    for length in (10.0, 20.0, 40.0):
        sp = pm.spdc_spectrum(SOURCE.with_length(length), t, pm.default_grid(740.0, 890.0, 0.01),
                                apply_filter=False)
        products.append(pm.fwhm(sp, around=783.0) * length)
    ref = products[1]
    assert all(abs(p / ref - 1) < 0.05 for p in products)


@acceptance(4, label="compensator optimum 30 +- 2 mm and >= 20x smaller weighted phase std, < 30 s")
def test_compensator_optimum():
    t0 = time.perf_counter()
    res = cp.optimize_compensator(SOURCE, *cp.conjugate_grids(SOURCE))
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    assert abs(res.length - 30.0) <= 2.0
    assert res.uncompensated_weighted_std >= 20 * res.weighted_std


@pytest.fixture(scope="module")
def mismatch():
    return ps.calibrate_mismatch(SOURCE, target_overlap=0.91)


@acceptance(5, label="spectral overlap: 0.91 +- 0.02 unfiltered, > 0.99 filtered")
def test_spectral_overlap(mismatch):
    raw = ps.crystal_spectra(SOURCE, filtered=False, mismatch=mismatch)
    filt = ps.crystal_spectra(SOURCE, filtered=True, mismatch=mismatch)
    assert abs(ps.spectral_overlap(raw.spectrum_H, raw.spectrum_V) - 0.91) <= 0.02
    assert ps.spectral_overlap(filt.spectrum_H, filt.spectrum_V) > 0.99


@acceptance(6, label="state quality: F >= 0.98 and D/A visibility >= 0.96")
def test_state_quality(mismatch):
    ls, li = cp.conjugate_grids(SOURCE)
    state = ps.build_state(cp.residual_phase_map(SOURCE, ls, li),
                           ps.crystal_spectra(SOURCE, ls, filtered=True, mismatch=mismatch))
    assert ps.fidelity(state) >= 0.98
    assert ps.correlation_visibility(state, "D/A") >= 0.96


@acceptance(7, label="rate bookkeeping at 0.025 mW: R_c = 16 kcps and R_s = 89 kcps within 5%")
def test_rate_bookkeeping():
    model = DetectionModel()
    assert model.conditional_ratio == 0.18
    r = stats.rates_from_pump_power(0.025, 640e3, model)
    assert abs(r.true_coincidences / 16e3 - 1) < 0.05
    assert abs(r.singles_s / 89e3 - 1) < 0.05


@acceptance(8, label="visibility collapse: 0.80 at 2.2 +- 0.4 mW; < 0.90 above 20 mW at 100 ps; MC within 3 sigma")
def test_visibility_collapse():
    t0 = time.perf_counter()
    model = DetectionModel(coincidence_window=2.4e-9, emitted_visibility=0.98)
    assert abs(stats.power_at_visibility(0.80, model) - 2.2) <= 0.4
    short = DetectionModel(coincidence_window=100e-12, emitted_visibility=0.98)
    powers = np.linspace(20.0, 200.0, 181)[1:]
    assert all(r.visibility < 0.90 for r in stats.visibility_scan(powers, short))
    werner = TwoQubitState.werner(model.emitted_visibility)
    for k, p in enumerate(np.geomspace(0.025, 20.0, 10)):
        pred = stats.rates_from_pump_power(float(p), 640e3, model)
        rate = sum(sum(stats.expected_setting_rates(model, pred.generated_pairs, werner, s))
                   for s in (("D", "D"), ("D", "A")))
        duration = min(2.0, 2e4 / rate)
        assert rate * duration >= 1e3
        res = stats.montecarlo_timetags(duration, model, pred.generated_pairs, seed=[2024, k], state=werner)
        assert abs(res.visibility - pred.visibility) <= 3 * res.visibility_error
    assert time.perf_counter() - t0 < 300.0


_PROPERTY_BUDGET = {"elapsed": 0.0}


@pytest.fixture
def budget():
    t0 = time.perf_counter()
    yield
    _PROPERTY_BUDGET["elapsed"] += time.perf_counter() - t0
    assert _PROPERTY_BUDGET["elapsed"] < 600.0


@acceptance(9, label="property suites (smoothness, energy, rho invariants, Werner, slope 2, seeds) < 10 min")
@settings(max_examples=100, deadline=None)
@given(lam=st.floats(420.0, 1500.0), t=st.floats(0.0, 150.0))
def test_property_dispersion_smooth(lam, t):
    m = dispersion.get_model("KTP", "z")
    h = 1e-3
    fd = (m.index(lam + h, t) - m.index(lam - h, t)) / (2 * h)
    assert fd == pytest.approx(m.dn_dwavelength(lam, t), rel=1e-4)


@acceptance(9, label="")
@settings(max_examples=60, deadline=None)
@given(t=st.floats(31.0, 60.0))
def test_property_energy_conservation(t):
    ls, li = pm.solve_signal_idler(SOURCE, t)
    assert abs(1 / ls + 1 / li - 1 / SOURCE.pump_wavelength) * SOURCE.pump_wavelength < 1e-14


@acceptance(9, label="")
@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), spread=st.floats(0.0, 20.0))
def test_property_density_matrix_invariants(seed, spread):
    rng = np.random.default_rng(seed)
    ls = np.linspace(782.0, 784.0, 11)
    li = cp.idler_wavelength(SOURCE.pump_wavelength, ls)[::-1].copy()
    w = rng.random((11, 11))
    pmap = cp.PhaseMap(ls, li, spread * rng.standard_normal((11, 11)), w)
    spectra = ps.CrystalSpectra(pm.Spectrum(ls, rng.random(11) + 1e-3), pm.Spectrum(ls, rng.random(11) + 1e-3))
    rho = ps.build_state(pmap, spectra).rho
    assert abs(np.trace(rho).real - 1) <= 1e-12
    assert np.max(np.abs(rho - rho.conj().T)) <= 1e-12
    assert np.linalg.eigvalsh(rho).min() >= -1e-10


@acceptance(9, label="")
@settings(max_examples=40, deadline=None)
@given(p=st.floats(0.0, 1.0))
def test_property_werner_visibility(p):
    w = TwoQubitState.werner(p)
    angles = np.linspace(0, math.pi, 721)
    for fixed in ("H", "D"):
        probs = [w.probability(fixed, np.array([math.cos(a), math.sin(a)])) for a in angles]
        scan = (max(probs) - min(probs)) / (max(probs) + min(probs))
        assert scan == pytest.approx(p, abs=1e-4)
        assert ps.correlation_visibility(w, fixed) == pytest.approx(p, abs=1e-12)


@acceptance(9, label="")
def test_property_accidental_slope(budget):
    p = np.geomspace(1.0, 10.0, 10)
    ca = [stats.rates_from_pump_power(x).accidental_coincidences for x in p]
    slope = np.polyfit(np.log(p), np.log(ca), 1)[0]
    assert abs(slope - 2.0) <= 0.05


@acceptance(9, label="")
def test_property_seed_reproducible_mc(budget):
    a = stats.montecarlo_timetags(0.01, DetectionModel(), 5e7, seed=9, keep_streams=True)
    b = stats.montecarlo_timetags(0.01, DetectionModel(), 5e7, seed=9, keep_streams=True)
    for k in a.counts:
        assert a.counts[k].coincidences == b.counts[k].coincidences
        assert np.array_equal(a.streams[k].idler, b.streams[k].idler)
        assert np.all(np.diff(a.streams[k].idler) >= 0)


@acceptance(10, label="tomography round trip at 1e7 counts/setting: fidelity >= 0.999")
def test_tomography_round_trip():
    phi = TwoQubitState.from_ket(ps.bell_state("phi+"))
    res = ps.simulate_tomography(phi, 10**7, seed=123)
    assert ps.fidelity(res.state, ps.bell_state("phi+")) >= 0.999
