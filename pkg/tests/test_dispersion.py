import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdcsource import dispersion
from spdcsource.errors import ConfigurationError, DispersionRangeError

MODELS = [("KTP", "z"), ("KTP", "y"), ("YVO4", "ordinary"), ("YVO4", "extraordinary")]


def fradkin_nz(lam_um):
    # hand-evaluated KTP z-axis formula, independent of the data-file parser
    l2 = lam_um**2
    n2 = 2.12725 + 1.18431 / (1 - 5.14852e-2 / l2) + 0.6603 / (1 - 100.00507 / l2) - 9.68956e-3 * l2
    return math.sqrt(n2)


def test_ktp_z_matches_hand_evaluation():
    m = dispersion.get_model("KTP", "z")
    for lam in (405.0, 783.0, 810.0, 1064.0):
        assert m.index(lam) == pytest.approx(fradkin_nz(lam / 1000), abs=1e-12)


def test_ktp_z_at_1064_within_publication_spread():
    # commonly tabulated n_z(1064 nm) of flux-grown KTP
    assert dispersion.get_model("KTP", "z").index(1064.0, 25.0) == pytest.approx(1.8305, abs=3e-3)
    assert dispersion.get_model("KTP", "y").index(1064.0, 25.0) == pytest.approx(1.7454, abs=3e-3)


def test_determinism():
    m = dispersion.get_model("KTP", "z")
    assert m.index(812.3, 31.7) == m.index(812.3, 31.7)


@pytest.mark.parametrize("material,axis", MODELS)
def test_normal_dispersion_and_index_above_one(material, axis):
    m = dispersion.get_model(material, axis)
    lam = np.linspace(max(400.0, m.valid_range[0]), 900.0, 200)
    n = m.index(lam, 25.0)
    assert np.all(n > 1)
    assert np.all(np.diff(n) < 0)


@pytest.mark.parametrize("material,axis", MODELS)
def test_analytic_derivative_matches_finite_difference(material, axis):
    m = dispersion.get_model(material, axis)
    for lam in (450.0, 600.0, 810.0, 1200.0):
        h = 1e-3
        fd = (m.index(lam + h, 40.0) - m.index(lam - h, 40.0)) / (2 * h)
        assert m.dn_dwavelength(lam, 40.0) == pytest.approx(fd, rel=1e-4)


@pytest.mark.parametrize("material,axis", MODELS)
def test_thermo_optic_zero_at_reference(material, axis):
    m = dispersion.get_model(material, axis)
    assert m.thermo_optic_shift(800.0, m.reference_temperature) == 0.0
    assert m.index(800.0, m.reference_temperature) == m.index(800.0)


def test_out_of_range_errors_name_model_and_value():
    m = dispersion.get_model("KTP", "y")
    with pytest.raises(DispersionRangeError, match="KTP.*1900"):
        m.index(1900.0)
    with pytest.raises(DispersionRangeError, match="200"):
        m.index(800.0, 200.0)
    with pytest.raises(DispersionRangeError):
        m.index(np.array([800.0, 300.0]))


def test_birefringence_signs():
    assert dispersion.birefringence("YVO4", 810.0) > 0
    assert dispersion.birefringence("KTP", 810.0) > 0
    with pytest.raises(ConfigurationError):
        dispersion.birefringence("BBO", 810.0)


@pytest.mark.parametrize("material", ["KTP", "YVO4"])
def test_birefringence_continuous(material):
    lam = np.linspace(450.0, 1000.0, 100)
    dn = dispersion.birefringence(material, lam, 25.0)
    step = np.abs(np.diff(dn))
    local = np.abs(np.gradient(dn, lam))[1:] * (lam[1] - lam[0])
    assert np.all(step <= 10 * local + 1e-15)


def test_registry_swappable(tmp_path):
    text = dispersion.resources.files("spdcsource").joinpath("data/sellmeier.toml").read_text()
    alt = tmp_path / "alt.toml"
    alt.write_text(text.replace("2.12725", "2.13725"))
    reg = dispersion.load_registry(str(alt))
    assert reg.get("KTP", "z").index(800.0) > dispersion.get_model("KTP", "z").index(800.0)
    assert reg.version == 1


def test_malformed_registry(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[[model]]\nmaterial = 'KTP'\n")
    with pytest.raises(ConfigurationError, match="axis"):
        dispersion.load_registry(str(bad))


@settings(max_examples=200, deadline=None)
@given(lam=st.floats(420.0, 1500.0), t=st.floats(0.0, 150.0))
def test_smooth_in_temperature_and_wavelength(lam, t):
    m = dispersion.get_model("KTP", "z")
    n0 = m.index(lam, t)
    # first-order Taylor step stays accurate: no kinks in either argument
    assert abs(m.index(lam + 0.01, t) - n0 - 0.01 * m.dn_dwavelength(lam, t)) < 1e-9
    assert abs(m.index(lam, min(t + 0.01, 150.0)) - n0) < 1e-6
