"""Refractive indices of KTP and YVO4 as functions of wavelength and temperature.

Coefficient sets are read from a TOML data file (``data/sellmeier.toml`` by
default). Alternate files can be loaded with :func:`load_registry` for
sensitivity studies. Wavelengths are vacuum wavelengths in nm, temperatures
in degrees Celsius.
"""

from __future__ import annotations

import functools
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DispersionRangeError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_FORMULAS = ("pole", "shifted")


@dataclass(frozen=True)
class DispersionModel:
    """One (material, axis) refractive-index function n(lambda, T).

    ``coefficients`` is ``[A, B_1, C_1, ..., B_k, C_k, D]`` for either formula::

        pole:     n^2 = A + sum B_k / (1 - C_k / lam^2) - D lam^2
        shifted:  n^2 = A + sum B_k / (lam^2 - C_k)     - D lam^2

    with ``lam`` in micrometres. ``thermo_optic`` holds ``[c0, c1, c2, c3]`` in
    1/degC, giving ``dn = (T - reference_temperature) * sum c_m / lam^m``.
    """

    material: str
    axis: str
    coefficients: tuple[float, ...]
    formula: str = "pole"
    thermo_optic: tuple[float, ...] = ()
    reference_temperature: float = 25.0
    valid_range: tuple[float, float] = (400.0, 1600.0)
    temperature_range: tuple[float, float] = (0.0, 150.0)
    citation: str = ""

    def __post_init__(self):
        if self.formula not in _FORMULAS:
            raise ConfigurationError(f"unknown dispersion formula {self.formula!r} for {self.name}")
        if len(self.coefficients) < 2 or len(self.coefficients) % 2:
            raise ConfigurationError(
                f"{self.name}: coefficients must be [A, B1, C1, ..., D] (even length >= 2), "
                f"got {len(self.coefficients)} values"
            )
        lo, hi = self.valid_range
        if not 0 < lo < hi:
            raise ConfigurationError(f"{self.name}: bad valid_range {self.valid_range}")

    @property
    def name(self) -> str:
        return f"{self.material}/{self.axis}"

    @property
    def _terms(self):
        c = self.coefficients
        return c[0], list(zip(c[1:-1:2], c[2:-1:2])), c[-1]

    def _check(self, wavelength, temperature):
        lam = np.asarray(wavelength, dtype=float)
        lo, hi = self.valid_range
        bad = (lam < lo) | (lam > hi) | ~np.isfinite(lam)
        if np.any(bad):
            value = lam[bad].flat[0] if lam.ndim else float(lam)
            raise DispersionRangeError(
                f"{self.name}: wavelength {value:g} nm outside valid range [{lo:g}, {hi:g}] nm"
            )
        tlo, thi = self.temperature_range
        t = np.asarray(temperature, dtype=float)
        tbad = (t < tlo) | (t > thi) | ~np.isfinite(t)
        if np.any(tbad):
            value = t[tbad].flat[0] if t.ndim else float(t)
            raise DispersionRangeError(
                f"{self.name}: temperature {value:g} degC outside [{tlo:g}, {thi:g}] degC"
            )
        return lam * 1e-3, t

    def _n_squared(self, um):
        a, terms, d = self._terms
        l2 = um * um
        n2 = a - d * l2
        for b, c in terms:
            n2 = n2 + (b / (1.0 - c / l2) if self.formula == "pole" else b / (l2 - c))
        return n2

    def _dn2_dum(self, um):
        _, terms, d = self._terms
        l2 = um * um
        out = -2.0 * d * um
        for b, c in terms:
            if self.formula == "pole":
                # d/dl [b l^2 / (l^2 - c)] = -2 b c l / (l^2 - c)^2
                out = out - 2.0 * b * c * um / (l2 - c) ** 2
            else:
                out = out - 2.0 * b * um / (l2 - c) ** 2
        return out

    def thermo_optic_shift(self, wavelength, temperature):
        """Index change relative to the reference temperature (zero there)."""
        um, t = self._check(wavelength, temperature)
        return self._thermo(um, t)

    def _thermo(self, um, t):
        if not self.thermo_optic:
            return np.zeros(np.broadcast(um, t).shape) if np.ndim(um) or np.ndim(t) else 0.0
        slope = sum(cm / um**m for m, cm in enumerate(self.thermo_optic))
        return (t - self.reference_temperature) * slope

    def index(self, wavelength, temperature=None):
        """Refractive index; ``temperature`` defaults to the reference temperature."""
        if temperature is None:
            temperature = self.reference_temperature
        um, t = self._check(wavelength, temperature)
        n = np.sqrt(self._n_squared(um)) + self._thermo(um, t)
        return n if np.ndim(n) else float(n)

    def dn_dwavelength(self, wavelength, temperature=None):
        """Analytic dn/dlambda in 1/nm."""
        if temperature is None:
            temperature = self.reference_temperature
        um, t = self._check(wavelength, temperature)
        dn = self._dn2_dum(um) / (2.0 * np.sqrt(self._n_squared(um)))
        if self.thermo_optic:
            dslope = sum(-m * cm / um ** (m + 1) for m, cm in enumerate(self.thermo_optic))
            dn = dn + (t - self.reference_temperature) * dslope
        dn = dn * 1e-3
        return dn if np.ndim(dn) else float(dn)

    def group_index(self, wavelength, temperature=None):
        """n - lambda dn/dlambda."""
        lam = np.asarray(wavelength, dtype=float)
        return self.index(wavelength, temperature) - lam * self.dn_dwavelength(wavelength, temperature)


@dataclass(frozen=True)
class Registry:
    """All models loaded from one data file, keyed by (material, axis)."""

    models: dict = field(default_factory=dict)
    birefringent_axes: dict = field(default_factory=dict)
    version: int = 0
    source: str = ""

    def get(self, material: str, axis: str) -> DispersionModel:
        try:
            return self.models[(material.upper(), axis.lower())]
        except KeyError:
            known = ", ".join(f"{m}/{a}" for m, a in sorted(self.models))
            raise ConfigurationError(
                f"no dispersion model for {material}/{axis} (known: {known})"
            ) from None


def _parse_registry(data: dict, source: str) -> Registry:
    models = {}
    for entry in data.get("model", []):
        try:
            model = DispersionModel(
                material=str(entry["material"]).upper(),
                axis=str(entry["axis"]).lower(),
                formula=entry.get("formula", "pole"),
                coefficients=tuple(float(c) for c in entry["coefficients"]),
                thermo_optic=tuple(float(c) for c in entry.get("thermo_optic", ())),
                reference_temperature=float(entry.get("reference_temperature", 25.0)),
                valid_range=tuple(float(v) for v in entry["valid_range"]),
                temperature_range=tuple(float(v) for v in entry.get("temperature_range", (0.0, 150.0))),
                citation=str(entry.get("citation", "")),
            )
        except KeyError as exc:
            raise ConfigurationError(f"{source}: model entry missing field {exc.args[0]!r}") from None
        models[(model.material, model.axis)] = model
    axes = {}
    for material, entry in data.get("birefringence", {}).items():
        axes[material.upper()] = (str(entry["slow"]).lower(), str(entry["fast"]).lower())
    return Registry(models=models, birefringent_axes=axes,
                    version=int(data.get("version", 0)), source=source)


@functools.lru_cache(maxsize=8)
def load_registry(path: str | None = None) -> Registry:
    """Load a coefficient file; ``None`` selects the packaged default set."""
    if path is None:
        text = resources.files("spdcsource").joinpath("data/sellmeier.toml").read_text()
        source = "spdcsource/data/sellmeier.toml"
    else:
        text = Path(path).read_text()
        source = str(path)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    return _parse_registry(data, source)


def get_model(material: str, axis: str, registry: Registry | None = None) -> DispersionModel:
    return (registry or load_registry()).get(material, axis)


def refractive_index(model: DispersionModel, wavelength, temperature=None):
    """n(lambda, T) for ``model``; raises DispersionRangeError out of range."""
    return model.index(wavelength, temperature)


def birefringence(material: str, wavelength, temperature=None, registry: Registry | None = None):
    """n_slow - n_fast for ``material`` (KTP: n_z - n_y, YVO4: n_e - n_o)."""
    reg = registry or load_registry()
    try:
        slow, fast = reg.birefringent_axes[material.upper()]
    except KeyError:
        raise ConfigurationError(f"unknown material {material!r} for birefringence") from None
    return reg.get(material, slow).index(wavelength, temperature) - reg.get(material, fast).index(
        wavelength, temperature
    )
