"""Essential-states model of three-path two-photon double ionization.

A pump-probe sequence with peak-to-peak delay tau reaches the double
continuum through three coherent routes: both photons from the pump,
both from the probe (direct paths, amplitude gamma_K each), or one
photon from each pulse via a manifold of autoionizing intermediate
states (amplitude beta_K summed over resonances m).  The delayed path
picks up exp(-i (E_m - E0) tau) per resonance with complex E_m, so the
windowed ionization yield carries fast fringes at the pump transition
energies and slow quantum beats at the resonance splittings.

Energy reference: all resonance energies and the ground energy are
measured from the double-ionization threshold (both electrons free and
at rest = 0), so bound/quasi-bound energies are negative and the
(eps1, eps2) grid of continuum energies is nonnegative.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .pulses import Pulse, spectral_amplitude

__all__ = [
    "Resonance",
    "ResonanceSet",
    "PathAmplitudes",
    "EnergyWindow",
    "DelayScan",
    "CouplingSpec",
    "uniform_energy_grid",
    "beta_hat",
    "probability_map",
    "modulation_amplitude",
    "pump_probe_yield",
    "background_yield",
    "interference_term",
    "total_windowed_yield",
    "default_window",
    "synthesize_amplitudes",
    "delay_scan",
]


@dataclass(frozen=True)
class Resonance:
    """One autoionizing state: complex energy E - i Gamma/2."""

    label: str
    energy: complex

    def __post_init__(self):
        if not self.label:
            raise ValueError("resonance label must be a nonempty string")
        if self.energy.imag > 0.0:
            raise ValueError(
                f"{self.label}: Im(E) must be <= 0, got {self.energy.imag}"
            )

    @property
    def width(self) -> float:
        """Decay rate Gamma = -2 Im(E)."""
        return -2.0 * self.energy.imag


@dataclass(frozen=True)
class ResonanceSet:
    """Ground energy plus a manifold of autoionizing states."""

    ground_energy: float
    states: tuple[Resonance, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        labels = [s.label for s in self.states]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate resonance labels: {labels}")
        for s in self.states:
            if s.energy.real <= self.ground_energy:
                raise ValueError(
                    f"{s.label}: Re(E)={s.energy.real} not above ground "
                    f"energy {self.ground_energy}"
                )

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.states)

    def delta_energies(self) -> np.ndarray:
        """Complex transition energies E_m - E0."""
        return np.array([s.energy - self.ground_energy for s in self.states])

    def widths(self) -> np.ndarray:
        return np.array([s.width for s in self.states])


def uniform_energy_grid(n_bins: int = 512, e_max: float = 3.0) -> np.ndarray:
    """Bin centers of a uniform energy grid over [0, e_max]."""
    if n_bins < 2:
        raise ValueError(f"need at least 2 bins, got {n_bins}")
    if e_max <= 0.0:
        raise ValueError(f"e_max must be positive, got {e_max}")
    return (np.arange(n_bins) + 0.5) * (e_max / n_bins)


@dataclass(frozen=True)
class PathAmplitudes:
    """Direct and delayed-path amplitudes on a uniform (eps1, eps2) grid.

    gamma has shape (n1, n2); betas has shape (m, n1, n2) with one
    slice per resonance, ordered as `labels`.
    """

    eps1: np.ndarray
    eps2: np.ndarray
    gamma: np.ndarray
    betas: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        eps1 = np.asarray(self.eps1, dtype=float)
        eps2 = np.asarray(self.eps2, dtype=float)
        object.__setattr__(self, "eps1", eps1)
        object.__setattr__(self, "eps2", eps2)
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=complex))
        object.__setattr__(self, "betas", np.asarray(self.betas, dtype=complex))
        object.__setattr__(self, "labels", tuple(self.labels))
        for name, eps in (("eps1", eps1), ("eps2", eps2)):
            if eps.ndim != 1 or eps.size < 2:
                raise ValueError(f"{name} must be a 1d grid with >= 2 points")
            d = np.diff(eps)
            if np.any(d <= 0.0):
                raise ValueError(f"{name} must be strictly increasing")
            if not np.allclose(d, d[0], rtol=1e-9):
                raise ValueError(f"{name} must be uniformly spaced")
        if self.gamma.shape != (eps1.size, eps2.size):
            raise ValueError(
                f"gamma shape {self.gamma.shape} does not match grid "
                f"({eps1.size}, {eps2.size})"
            )
        if self.betas.ndim != 3 or self.betas.shape[1:] != self.gamma.shape:
            raise ValueError(f"betas shape {self.betas.shape} does not match grid")
        if len(self.labels) != self.betas.shape[0]:
            raise ValueError("one label per beta slice required")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate amplitude labels: {self.labels}")
        if not (np.all(np.isfinite(self.gamma)) and np.all(np.isfinite(self.betas))):
            raise ValueError("amplitudes must be finite")

    @property
    def bin_area(self) -> float:
        return float((self.eps1[1] - self.eps1[0]) * (self.eps2[1] - self.eps2[0]))


@dataclass(frozen=True)
class EnergyWindow:
    """Half-open energy window [lo, hi) on the first-electron energy."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi):
            raise ValueError(f"need 0 <= lo < hi, got [{self.lo}, {self.hi})")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def select(self, centers: np.ndarray) -> np.ndarray:
        """Boolean mask of bin centers inside the window."""
        centers = np.asarray(centers)
        return (centers >= self.lo) & (centers < self.hi)


@dataclass(frozen=True)
class DelayScan:
    """Per-delay interferometric quantities (all in a.u.)."""

    taus: np.ndarray
    a_mod: np.ndarray
    p_beta: np.ndarray
    p_background: np.ndarray
    yield_windowed: np.ndarray

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        object.__setattr__(self, "taus", taus)
        for name in ("a_mod", "p_beta", "p_background", "yield_windowed"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != taus.shape:
                raise ValueError(f"{name} must have one entry per delay")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        if np.any(np.diff(taus) <= 0.0):
            raise ValueError("delays must be strictly increasing")
        for name in ("a_mod", "p_beta", "p_background"):
            if np.any(getattr(self, name) < 0.0):
                raise ValueError(f"{name} must be nonnegative")

    def __len__(self) -> int:
        return self.taus.size


def _check_labels(amps: PathAmplitudes, res: ResonanceSet):
    if amps.labels != res.labels:
        raise ValueError(
            f"amplitude labels {amps.labels} do not match resonance "
            f"labels {res.labels}"
        )


def _phases(res: ResonanceSet, tau: float) -> np.ndarray:
    if tau < 0.0:
        raise ValueError(f"delay must be nonnegative, got {tau}")
    return np.exp(-1j * res.delta_energies() * tau)


def _window_rows(amps: PathAmplitudes, window: EnergyWindow) -> np.ndarray:
    rows = np.nonzero(window.select(amps.eps1))[0]
    if rows.size == 0:
        raise ValueError(
            f"energy window [{window.lo}, {window.hi}) contains no grid bins"
        )
    return rows


def beta_hat(amps: PathAmplitudes, res: ResonanceSet, tau: float) -> np.ndarray:
    """Delayed-path amplitude at delay tau: sum_m exp(-i dE_m tau) beta_m."""
    _check_labels(amps, res)
    ph = _phases(res, tau)
    return np.tensordot(ph, amps.betas, axes=(0, 0))


def probability_map(
    amps: PathAmplitudes,
    res: ResonanceSet,
    tau: float,
    include_direct_background: bool = False,
) -> np.ndarray:
    """|gamma + beta_hat|^2 on the energy grid.

    With include_direct_background=True the incoherent |gamma|^2 of the
    second direct path (both photons from the pump) is added on top.
    """
    p = np.abs(amps.gamma + beta_hat(amps, res, tau)) ** 2
    if include_direct_background:
        p = p + np.abs(amps.gamma) ** 2
    return p


def modulation_amplitude(
    amps: PathAmplitudes, res: ResonanceSet, window: EnergyWindow, tau: float
) -> float:
    """Peak-to-peak fringe amplitude 4 |integral_M gamma* beta_hat dK|.

    The window restricts eps1; eps2 is integrated fully.
    """
    rows = _window_rows(amps, window)
    bh = beta_hat(amps, res, tau)
    overlap = np.sum(np.conj(amps.gamma[rows, :]) * bh[rows, :]) * amps.bin_area
    return 4.0 * float(np.abs(overlap))


def pump_probe_yield(
    amps: PathAmplitudes, res: ResonanceSet, window: EnergyWindow, tau: float
) -> float:
    """Windowed population of the delayed path alone, integral |beta_hat|^2."""
    rows = _window_rows(amps, window)
    bh = beta_hat(amps, res, tau)
    return float(np.sum(np.abs(bh[rows, :]) ** 2)) * amps.bin_area


def background_yield(amps: PathAmplitudes, window: EnergyWindow) -> float:
    """Delay-independent direct-path background 2 integral |gamma|^2."""
    rows = _window_rows(amps, window)
    return 2.0 * float(np.sum(np.abs(amps.gamma[rows, :]) ** 2)) * amps.bin_area


def interference_term(
    amps: PathAmplitudes, res: ResonanceSet, window: EnergyWindow, tau: float
) -> float:
    """Signed cross term 2 Re integral_M gamma* beta_hat dK.

    This is the oscillating part of the windowed yield; its local
    peak-to-peak excursion is modulation_amplitude.
    """
    rows = _window_rows(amps, window)
    bh = beta_hat(amps, res, tau)
    overlap = np.sum(np.conj(amps.gamma[rows, :]) * bh[rows, :]) * amps.bin_area
    return 2.0 * float(overlap.real)


def total_windowed_yield(
    amps: PathAmplitudes,
    res: ResonanceSet,
    window: EnergyWindow,
    tau: float,
    include_direct_background: bool = True,
) -> float:
    """Windowed yield of the full superposition.

    integral_M |gamma + beta_hat|^2, plus the incoherent |gamma|^2 of
    the pump-side direct path when include_direct_background is set
    (the three-path analogue of counting both direct routes).
    """
    rows = _window_rows(amps, window)
    bh = beta_hat(amps, res, tau)
    p = np.abs(amps.gamma[rows, :] + bh[rows, :]) ** 2
    if include_direct_background:
        p = p + np.abs(amps.gamma[rows, :]) ** 2
    return float(np.sum(p)) * amps.bin_area


def default_window(omega: float, i1: float, i2: float) -> EnergyWindow:
    """Window (omega - i2, omega - i1) between the sequential peaks.

    omega is the probing photon energy and i1 < i2 the first and second
    ionization thresholds, all in hartree.  Electrons released by
    one-photon ionization of the intermediate quasi-bound states land
    between the two sequential lines; the window excludes both.
    """
    if not (0.0 < i1 < i2):
        raise ValueError(f"need 0 < i1 < i2, got i1={i1}, i2={i2}")
    if omega <= i2:
        raise ValueError(
            f"photon energy {omega} does not open the window (needs > i2={i2})"
        )
    return EnergyWindow(lo=omega - i2, hi=omega - i1)


@dataclass(frozen=True)
class CouplingSpec:
    """Shapes and strengths for synthesizing path amplitudes.

    threshold_i1/threshold_i2: ionization thresholds (hartree) placing
    the sequential peaks.  gamma_width / total_width default to the
    probe bandwidth (HWHM of the sin^2 envelope transform is exactly
    2 pi / T); sharing_width sets how broadly the delayed path spreads
    energy between the two electrons along the total-energy diagonal.
    excitation gives per-resonance dipole strengths (default 1).
    """

    threshold_i1: float
    threshold_i2: float
    gamma_strength: float = 1.0
    gamma_width: float | None = None
    total_width: float | None = None
    sharing_width: float = 0.5
    excitation: Mapping[str, complex] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.threshold_i1 < self.threshold_i2):
            raise ValueError(
                f"need 0 < i1 < i2, got {self.threshold_i1}, {self.threshold_i2}"
            )
        for name in ("gamma_strength", "sharing_width"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("gamma_width", "total_width"):
            v = getattr(self, name)
            if v is not None and v <= 0.0:
                raise ValueError(f"{name} must be positive when given")


def _gaussian(x, center, sigma):
    return np.exp(-0.5 * ((x - center) / sigma) ** 2)


def synthesize_amplitudes(
    res: ResonanceSet,
    pump: Pulse,
    probe: Pulse,
    couplings: CouplingSpec,
    n_bins: int = 512,
    e_max: float = 3.0,
) -> PathAmplitudes:
    """Build model amplitudes for a resonance set and pulse pair.

    gamma: exchange-symmetric Gaussian blobs at the sequential peaks
    (probe_omega - i1, probe_omega - i2).  beta_m: the pump spectral
    amplitude at the transition energy Re(E_m) - E0 times an ionization
    profile concentrated on the total-energy diagonal
    eps1 + eps2 = Re(E_m) + probe_omega.

    Resonances whose final total energy falls outside the grid are
    assigned zero amplitude with a warning.
    """
    eps = uniform_energy_grid(n_bins, e_max)
    e1 = eps[:, None]
    e2 = eps[None, :]

    om = probe.energy
    i1, i2 = couplings.threshold_i1, couplings.threshold_i2
    if om <= i2:
        raise ValueError(
            f"probe energy {om} cannot place sequential peaks (needs > i2={i2})"
        )
    # HWHM of the sin^2 envelope transform is exactly 2 pi / T
    probe_hw = 2.0 * np.pi / probe.duration
    sig_gamma = couplings.gamma_width or probe_hw / np.sqrt(2.0 * np.log(2.0))
    sig_total = couplings.total_width or probe_hw / np.sqrt(2.0 * np.log(2.0))

    peak_hi, peak_lo = om - i1, om - i2
    gamma = couplings.gamma_strength * (
        _gaussian(e1, peak_hi, sig_gamma) * _gaussian(e2, peak_lo, sig_gamma)
        + _gaussian(e1, peak_lo, sig_gamma) * _gaussian(e2, peak_hi, sig_gamma)
    )

    sum_lo = eps[0] + eps[0]
    sum_hi = eps[-1] + eps[-1]
    betas = np.zeros((len(res.states), n_bins, n_bins), dtype=complex)
    for k, state in enumerate(res.states):
        e_total = state.energy.real + om
        if not (sum_lo <= e_total <= sum_hi):
            warnings.warn(
                f"{state.label}: final energy {e_total:.4f} outside the "
                f"grid range [{sum_lo:.4f}, {sum_hi:.4f}], amplitude set to 0",
                stacklevel=2,
            )
            continue
        weight = complex(
            couplings.excitation.get(state.label, 1.0)
        ) * spectral_amplitude(pump, state.energy.real - res.ground_energy)
        profile = _gaussian(e1 + e2, e_total, sig_total) * _gaussian(
            e1 - e2, 0.0, couplings.sharing_width
        )
        betas[k] = weight * profile

    return PathAmplitudes(eps, eps.copy(), gamma, betas, res.labels)


def window_reduction(amps: PathAmplitudes, window: EnergyWindow):
    """Window integrals that make delay scans O(m^2) per point.

    Returns (g, cross, bg): g_m = integral_M gamma* beta_m,
    cross_mm' = integral_M beta_m* beta_m', bg = 2 integral_M |gamma|^2.
    """
    rows = _window_rows(amps, window)
    a = amps.bin_area
    g = np.einsum("ij,mij->m", np.conj(amps.gamma[rows, :]), amps.betas[:, rows, :]) * a
    cross = (
        np.einsum("mij,nij->mn", np.conj(amps.betas[:, rows, :]), amps.betas[:, rows, :])
        * a
    )
    bg = 2.0 * float(np.sum(np.abs(amps.gamma[rows, :]) ** 2)) * a
    return g, cross, bg


def delay_scan(
    amps: PathAmplitudes,
    res: ResonanceSet,
    window: EnergyWindow,
    taus,
    include_direct_background: bool = True,
) -> DelayScan:
    """Evaluate the model over a set of delays (a.u.)."""
    _check_labels(amps, res)
    taus = np.asarray(taus, dtype=float)
    if taus.size and taus.min() < 0.0:
        raise ValueError("delays must be nonnegative")
    g, cross, bg = window_reduction(amps, window)
    de = res.delta_energies()
    a_mod = np.empty(taus.size)
    p_beta = np.empty(taus.size)
    total = np.empty(taus.size)
    for i, tau in enumerate(taus):
        ph = np.exp(-1j * de * tau)
        overlap = np.sum(ph * g)
        a_mod[i] = 4.0 * np.abs(overlap)
        p_beta[i] = np.real(np.conj(ph) @ cross @ ph)
        direct = bg if include_direct_background else bg / 2.0
        total[i] = direct + 2.0 * overlap.real + p_beta[i]
    return DelayScan(
        taus=taus,
        a_mod=a_mod,
        p_beta=p_beta,
        p_background=np.full(taus.size, bg),
        yield_windowed=total,
    )
