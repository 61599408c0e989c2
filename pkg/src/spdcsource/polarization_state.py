"""Two-qubit polarisation state of the source, fidelity, visibilities, tomography.

Basis order is (HH, HV, VH, VV); the first qubit is the signal photon.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .compensation import PhaseMap
from .errors import ArgumentError
from .phasematching import SourceConfig, Spectrum, default_grid, spdc_spectrum

_trapz = getattr(np, "trapezoid", None) or np.trapz

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_FLOOR = -1e-10

_S = 1.0 / math.sqrt(2.0)
POLARIZATIONS = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_S, _S], dtype=complex),
    "A": np.array([_S, -_S], dtype=complex),
    "R": np.array([_S, -1j * _S], dtype=complex),
    "L": np.array([_S, 1j * _S], dtype=complex),
}
ORTHOGONAL = {"H": "V", "V": "H", "D": "A", "A": "D", "R": "L", "L": "R"}
TOMOGRAPHY_SETTINGS = tuple(itertools.product("HVDARL", repeat=2))


def bell_state(name: str = "phi+") -> np.ndarray:
    """Bell state ket: phi+, phi-, psi+ or psi-."""
    vecs = {
        "phi+": [1, 0, 0, 1],
        "phi-": [1, 0, 0, -1],
        "psi+": [0, 1, 1, 0],
        "psi-": [0, 1, -1, 0],
    }
    try:
        return np.array(vecs[name.lower()], dtype=complex) * _S
    except KeyError:
        raise ArgumentError(f"unknown Bell state {name!r}") from None


@dataclass(frozen=True)
class TwoQubitState:
    """Density matrix over (HH, HV, VH, VV); validated on construction."""

    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (4, 4):
            raise ArgumentError(f"density matrix must be 4x4, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise ArgumentError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > TRACE_TOL:
            raise ArgumentError(f"density matrix trace {np.trace(rho).real!r} != 1")
        if np.linalg.eigvalsh(rho).min() < PSD_FLOOR:
            raise ArgumentError("density matrix is not positive semidefinite")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_ket(cls, ket) -> "TwoQubitState":
        psi = np.asarray(ket, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def werner(cls, p: float, ket=None) -> "TwoQubitState":
        """p |psi><psi| + (1 - p) I/4 (phi+ by default)."""
        psi = bell_state() if ket is None else np.asarray(ket, dtype=complex)
        pure = np.outer(psi, psi.conj())
        return cls(p * pure + (1 - p) * np.eye(4) / 4)

    def probability(self, a, b) -> float:
        """Probability of passing analyzer ``a`` (signal) and ``b`` (idler)."""
        ket = np.kron(_jones(a), _jones(b))
        return float(np.real(ket.conj() @ self.rho @ ket))

    def to_text(self) -> str:
        """Row-major text matrix: each row lists re im pairs."""
        lines = []
        for row in self.rho:
            lines.append(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TwoQubitState":
        rows = [line.split() for line in text.strip().splitlines() if line.strip()]
        vals = np.array(rows, dtype=float)
        if vals.shape != (4, 8):
            raise ArgumentError(f"expected 4 rows of 8 numbers, got shape {vals.shape}")
        return cls(vals[:, 0::2] + 1j * vals[:, 1::2])


def _jones(analyzer) -> np.ndarray:
    if isinstance(analyzer, str):
        try:
            return POLARIZATIONS[analyzer.upper()]
        except KeyError:
            raise ArgumentError(f"unknown analyzer {analyzer!r}") from None
    vec = np.asarray(analyzer, dtype=complex)
    if vec.shape != (2,) or not math.isclose(np.linalg.norm(vec), 1.0, rel_tol=1e-9):
        raise ArgumentError("analyzer Jones vector must be a normalised 2-vector")
    return vec


@dataclass(frozen=True)
class CrystalSpectra:
    """Signal spectra of HH pairs (crystal 1) and VV pairs (crystal 2).

    ``balance`` is the HH/VV amplitude ratio.
    """

    spectrum_H: Spectrum
    spectrum_V: Spectrum
    balance: float = 1.0

    def __post_init__(self):
        if not np.array_equal(self.spectrum_H.wavelengths, self.spectrum_V.wavelengths):
            raise ArgumentError("H and V spectra must share a wavelength grid")
        if not self.balance > 0:
            raise ArgumentError("balance must be > 0")


def spectral_overlap(a: Spectrum, b: Spectrum) -> float:
    """Amplitude overlap  int sqrt(Ia Ib) / sqrt(int Ia int Ib)  on a common grid."""
    if not np.array_equal(a.wavelengths, b.wavelengths):
        raise ArgumentError("spectra must share a wavelength grid")
    lam = a.wavelengths
    ea = _trapz(a.intensity, lam)
    eb = _trapz(b.intensity, lam)
    if not (ea > 0 and eb > 0):
        raise ArgumentError("spectral overlap of a zero-energy spectrum")
    ov = _trapz(np.sqrt(a.intensity * b.intensity), lam) / math.sqrt(ea * eb)
    return float(min(ov, 1.0))


@dataclass(frozen=True)
class CrystalMismatch:
    """Which-crystal spectral distinguishability.

    Crystal 2 emits at ``temperature_offset`` (degC) relative to the tuned
    operating point and carries a broadband background pedestal of
    ``background`` relative to its sinc^2 peak.
    """

    temperature_offset: float = 0.0
    background: float = 0.0


def crystal_spectra(config: SourceConfig, wavelength_grid=None, filtered: bool = True,
                    mismatch: CrystalMismatch | None = None, balance: float = 1.0) -> CrystalSpectra:
    """Signal spectra of both crystals on a common grid.

    The grid defaults to the signal branch of the standard grid (740 nm up to
    degeneracy).
    """
    mismatch = mismatch or CrystalMismatch()
    t1 = config.temperatures()[0]
    if wavelength_grid is None:
        grid = default_grid()
        grid = grid[grid <= config.degeneracy_wavelength]
    else:
        grid = np.asarray(wavelength_grid, dtype=float)
    h = spdc_spectrum(config, t1, grid, "signal", apply_filter=filtered)
    v = spdc_spectrum(config, t1 + mismatch.temperature_offset, grid, "signal", apply_filter=filtered,
                      background=mismatch.background)
    return CrystalSpectra(h, v, balance)


def calibrate_mismatch(config: SourceConfig, target_overlap: float = 0.91, temperature_offset: float = 0.0,
                       wavelength_grid=None) -> CrystalMismatch:
    """Background level reproducing ``target_overlap`` for the unfiltered spectra.

    The temperature offset is held fixed; the pedestal is solved for. Raises
    ArgumentError when the offset alone already pushes the overlap below target.
    """
    def gap(bg):
        spectra = crystal_spectra(config, wavelength_grid, filtered=False,
                                  mismatch=CrystalMismatch(temperature_offset, bg))
        return spectral_overlap(spectra.spectrum_H, spectra.spectrum_V) - target_overlap

    if gap(0.0) < 0:
        raise ArgumentError("temperature offset alone gives an overlap below the target")
    hi = 1e-3
    while gap(hi) > 0:
        hi *= 2
        if hi > 10:
            raise ArgumentError(f"cannot reach overlap {target_overlap} with a background pedestal")
    bg = optimize.brentq(gap, 0.0, hi, xtol=1e-12)
    return CrystalMismatch(temperature_offset, bg)


def build_state(phase_map: PhaseMap, spectra: CrystalSpectra, phase_plate="auto",
                wdm_transmission: tuple[float, float] | None = None) -> TwoQubitState:
    """Polarisation density matrix of the detected pairs.

    Averages (|VV> + b e^{i phi}|HH>)/sqrt(1 + b^2) over the emitted cells,
    each weighted by the joint spectral density (phase-map weights redistributed
    so that each signal row carries the mean H/V spectral intensity). The HH-VV
    coherence is then scaled by the spectral amplitude overlap of the two
    crystals. ``phase_plate="auto"`` adds the constant phase that makes the
    coherence real and positive (the tuned phase plate); a number adds that
    phase instead. ``wdm_transmission=(t_H, t_V)`` attenuates the signal arm
    polarisation-dependently before analysis.
    """
    grid = spectra.spectrum_H.wavelengths
    if grid.shape != phase_map.signal_grid.shape or not np.allclose(grid, phase_map.signal_grid, rtol=0, atol=1e-9):
        raise ArgumentError("phase map and spectra must share the signal grid")
    w2d = phase_map.weights
    row_total = w2d.sum(axis=1)
    share = np.divide(w2d, row_total[:, None], out=np.zeros_like(w2d), where=row_total[:, None] > 0)
    intensity = 0.5 * (spectra.spectrum_H.intensity + spectra.spectrum_V.intensity)
    cells = share * intensity[:, None]
    total = cells.sum()
    if not total > 0:
        raise ArgumentError("no emitted cells: phase-map support and spectra do not overlap")
    phasor = np.sum(cells * np.exp(1j * phase_map.phase)) / total
    if phase_plate == "auto":
        if abs(phasor) > 0:
            phasor = abs(phasor)
    else:
        phasor = phasor * np.exp(1j * float(phase_plate))
    b = spectra.balance
    overlap = spectral_overlap(spectra.spectrum_H, spectra.spectrum_V)
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = b * b / (1 + b * b)
    rho[3, 3] = 1 / (1 + b * b)
    rho[0, 3] = b / (1 + b * b) * overlap * phasor
    rho[3, 0] = np.conj(rho[0, 3])
    if wdm_transmission is not None:
        t_h, t_v = wdm_transmission
        m = np.kron(np.diag([math.sqrt(t_h), math.sqrt(t_v)]), np.eye(2))
        rho = m @ rho @ m.conj().T
        rho = rho / np.trace(rho).real
    return TwoQubitState(rho)


def fidelity(state: TwoQubitState, target=None) -> float:
    """<t|rho|t> for a normalised pure target (phi+ by default)."""
    t = bell_state() if target is None else np.asarray(target, dtype=complex)
    if t.shape != (4,) or not math.isclose(np.linalg.norm(t), 1.0, rel_tol=0, abs_tol=1e-10):
        raise ArgumentError("fidelity target must be a normalised 4-vector")
    return float(np.real(t.conj() @ state.rho @ t))


_BASIS_PAIRS = {"H/V": ("H", "V"), "D/A": ("D", "A"), "R/L": ("R", "L")}


def fringe_coefficients(state: TwoQubitState, fixed, rotating=("H", "V")):
    """Offset and amplitude of P(theta) = <a, e(theta)|rho|a, e(theta)>.

    The rotating analyzer sweeps e(theta) = cos(theta) e1 + sin(theta) e2.
    Returns (mean, amplitude) so that max/min = mean +- amplitude.
    """
    a = _jones(fixed)
    e1, e2 = (_jones(v) for v in rotating)
    k1 = np.kron(a, e1)
    k2 = np.kron(a, e2)
    p11 = np.real(k1.conj() @ state.rho @ k1)
    p22 = np.real(k2.conj() @ state.rho @ k2)
    p12 = np.real(k1.conj() @ state.rho @ k2)
    mean = (p11 + p22) / 2
    amp = math.hypot((p11 - p22) / 2, p12)
    return float(mean), float(amp)


def correlation_visibility(state: TwoQubitState, basis="D/A", rotating=("H", "V")) -> float:
    """Fringe visibility (max - min)/(max + min) as the idler analyzer rotates.

    ``basis`` names the fixed signal analyzer: "H/V" or "D/A" (first member,
    i.e. H or D), a single label such as "A", or a Jones vector. The idler
    analyzer sweeps the great circle through ``rotating``; the default is a
    linear polariser.
    """
    fixed = _BASIS_PAIRS.get(basis, (basis,))[0] if isinstance(basis, str) else basis
    mean, amp = fringe_coefficients(state, fixed, rotating)
    if mean <= 0:
        return 0.0
    return amp / mean


def setting_probabilities(state: TwoQubitState) -> dict:
    """Single-projector probabilities for the 36 settings {H,V,D,A,R,L}^2."""
    return {(a, b): state.probability(a, b) for a, b in TOMOGRAPHY_SETTINGS}


_PAULI = [
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
]


def _design_matrix():
    rows = []
    for a, b in TOMOGRAPHY_SETTINGS:
        pa = np.outer(POLARIZATIONS[a], POLARIZATIONS[a].conj())
        pb = np.outer(POLARIZATIONS[b], POLARIZATIONS[b].conj())
        proj = np.kron(pa, pb)
        rows.append([np.real(np.trace(proj @ np.kron(si, sj))) / 4 for si in _PAULI for sj in _PAULI])
    return np.array(rows)


def project_to_state(matrix: np.ndarray) -> np.ndarray:
    """Closest (Frobenius) positive semidefinite, unit-trace matrix."""
    h = (matrix + matrix.conj().T) / 2
    vals, vecs = np.linalg.eigh(h)
    # Euclidean projection of the eigenvalues onto the probability simplex
    u = np.sort(vals)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.flatnonzero(u - css / np.arange(1, len(u) + 1) > 0)[-1]
    tau = css[k] / (k + 1)
    lam = np.maximum(vals - tau, 0.0)
    rho = (vecs * lam) @ vecs.conj().T
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


@dataclass(frozen=True)
class TomographyResult:
    state: TwoQubitState
    counts: dict
    linear_estimate: np.ndarray

    def counts_to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["analyzer_signal", "analyzer_idler", "counts"])
            for (a, b), n in self.counts.items():
                w.writerow([a, b, int(n)])


def reconstruct(counts: dict) -> tuple[np.ndarray, np.ndarray]:
    """Linear inversion of 36 setting counts followed by projection to a state.

    Counts are normalised within each of the nine basis pairs
    ({H,V},{D,A},{R,L})^2 so that uneven exposure does not bias the estimate.
    """
    freqs = []
    for a, b in TOMOGRAPHY_SETTINGS:
        group = [(x, y) for x in (a, ORTHOGONAL[a]) for y in (b, ORTHOGONAL[b])]
        norm = sum(counts[g] for g in group)
        freqs.append(counts[(a, b)] / norm if norm else 0.25)
    coeffs, *_ = np.linalg.lstsq(_design_matrix(), np.array(freqs), rcond=None)
    lin = sum(c * np.kron(si, sj) for c, (si, sj) in zip(coeffs, itertools.product(_PAULI, _PAULI))) / 4
    return lin, project_to_state(lin)


def simulate_tomography(state: TwoQubitState, counts_per_setting: int, seed=None) -> TomographyResult:
    """Multinomial counts for the 36 projector settings and their reconstruction.

    Each of the nine analyzer-basis pairs is measured with
    ``counts_per_setting`` detected pairs split multinomially over its four
    outcomes, which yields the 36 single-projector counts.
    """
    if int(counts_per_setting) < 1:
        raise ArgumentError("counts_per_setting must be >= 1")
    rng = np.random.default_rng(seed)
    counts = {}
    for a, b in itertools.product("HDR", repeat=2):
        group = [(x, y) for x in (a, ORTHOGONAL[a]) for y in (b, ORTHOGONAL[b])]
        p = np.array([state.probability(x, y) for x, y in group])
        p = np.clip(p, 0, None)
        n = rng.multinomial(int(counts_per_setting), p / p.sum())
        counts.update(zip(group, n.tolist()))
    counts = {s: counts[s] for s in TOMOGRAPHY_SETTINGS}
    lin, rho = reconstruct(counts)
    return TomographyResult(TwoQubitState(rho), counts, lin)

