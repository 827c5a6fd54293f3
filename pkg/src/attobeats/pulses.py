"""Finite sin^2 pulses: time-domain field, analytic spectrum, durations.

The field convention is

    F(t) = F0 * sin^2(pi (t - t0) / T) * cos(w (t - t0) + cep)

on the support [t0, t0 + T] and exactly zero outside.  F0 is derived
from the cycle-peak intensity.  The sin^2 envelope multiplies the
*field*; the cycle-averaged intensity envelope is then sin^4.  Both
duration conventions (sin^2 on the field vs sin^2 on the intensity)
are available from :func:`intensity_fwhm`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .units import (
    as_to_au,
    ev_to_au,
    field_from_intensity,
    photon_energy_from_wavelength,
)

__all__ = [
    "Pulse",
    "field_at",
    "envelope_at",
    "spectral_amplitude",
    "envelope_transform",
    "vector_potential",
    "intensity_fwhm",
]


@dataclass(frozen=True)
class Pulse:
    """One linearly polarized sin^2 pulse.

    Parameters
    ----------
    duration : float
        Total duration T in a.u. of time (support length, not FWHM).
    energy : float
        Carrier photon energy in hartree.
    intensity : float
        Cycle-peak intensity in W/cm^2.
    cep : float
        Carrier-envelope phase in rad, referenced to the pulse start.
    t_start : float
        Start of the support in a.u. of time.
    """

    duration: float
    energy: float
    intensity: float = 1.0e12
    cep: float = 0.0
    t_start: float = 0.0

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError(f"pulse duration must be positive, got {self.duration}")
        if self.energy <= 0.0:
            raise ValueError(f"carrier energy must be positive, got {self.energy}")
        if self.intensity < 0.0:
            raise ValueError(f"intensity must be nonnegative, got {self.intensity}")

    @classmethod
    def from_lab(
        cls,
        duration_as: float,
        energy_ev: float | None = None,
        wavelength_nm: float | None = None,
        intensity_wcm2: float = 1.0e12,
        cep: float = 0.0,
        start_as: float = 0.0,
    ) -> "Pulse":
        """Build a pulse from lab-frame quantities (as, eV or nm, W/cm^2)."""
        if (energy_ev is None) == (wavelength_nm is None):
            raise ValueError("give exactly one of energy_ev or wavelength_nm")
        if energy_ev is None:
            energy_ev = photon_energy_from_wavelength(wavelength_nm)
        return cls(
            duration=as_to_au(duration_as),
            energy=ev_to_au(energy_ev),
            intensity=intensity_wcm2,
            cep=cep,
            t_start=as_to_au(start_as),
        )

    @property
    def peak_field(self) -> float:
        """Peak field amplitude F0 in a.u."""
        return field_from_intensity(self.intensity)

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    @property
    def t_peak(self) -> float:
        """Time of the envelope maximum."""
        return self.t_start + 0.5 * self.duration

    @property
    def carrier_period(self) -> float:
        return 2.0 * np.pi / self.energy


def envelope_at(pulse: Pulse, t):
    """Field envelope F0 sin^2(pi (t-t0)/T), zero outside the support."""
    t = np.asarray(t, dtype=float)
    s = t - pulse.t_start
    inside = (s >= 0.0) & (s <= pulse.duration)
    env = np.where(
        inside, np.sin(np.pi * np.where(inside, s, 0.0) / pulse.duration) ** 2, 0.0
    )
    return pulse.peak_field * env


def field_at(pulse: Pulse, t):
    """Electric field in a.u. at time(s) t (a.u.).  Exactly zero outside."""
    t = np.asarray(t, dtype=float)
    s = t - pulse.t_start
    inside = (s >= 0.0) & (s <= pulse.duration)
    s_in = np.where(inside, s, 0.0)
    f = (
        pulse.peak_field
        * np.sin(np.pi * s_in / pulse.duration) ** 2
        * np.cos(pulse.energy * s_in + pulse.cep)
    )
    return np.where(inside, f, 0.0)


def vector_potential(pulse: Pulse, t):
    """A(t) = -integral of the field, analytic for the sin^2 shape.

    Zero before the support, constant (the residual field integral)
    after it.  Written with the three-term splitting of
    sin^2(pi s/T) cos(w s + phi); each term integrates in closed form.
    """
    t = np.asarray(t, dtype=float)
    s = np.clip(t - pulse.t_start, 0.0, pulse.duration)
    cap_omega = 2.0 * np.pi / pulse.duration
    phi = pulse.cep

    def term(w, s):
        w = float(w)
        if abs(w) < 1e-12:
            return s * np.cos(phi)
        return (np.sin(w * s + phi) - np.sin(phi)) / w

    integral = (
        0.5 * term(pulse.energy, s)
        - 0.25 * term(pulse.energy + cap_omega, s)
        - 0.25 * term(pulse.energy - cap_omega, s)
    )
    return -pulse.peak_field * integral


def _interval_transform(u, length):
    """D(u) = integral_0^T exp(i u s) ds for T = length."""
    u = np.asarray(u, dtype=complex)
    return length * np.exp(0.5j * u * length) * np.sinc(u.real * length / (2.0 * np.pi))


def envelope_transform(pulse: Pulse, u):
    """W(u) = integral_0^T sin^2(pi s/T) exp(i u s) ds.

    This is the transform of the bare envelope (peak field divided
    out); |W| is even in u, with maximum T/2 at u = 0.
    """
    cap_omega = 2.0 * np.pi / pulse.duration
    d0 = _interval_transform(u, pulse.duration)
    dp = _interval_transform(np.asarray(u) + cap_omega, pulse.duration)
    dm = _interval_transform(np.asarray(u) - cap_omega, pulse.duration)
    return 0.5 * d0 - 0.25 * (dp + dm)


def spectral_amplitude(pulse: Pulse, energy):
    """Analytic Fourier transform S(E) = integral F(t) exp(i E t) dt.

    Energies in hartree.  Both rotating and counter-rotating terms are
    kept; |S| peaks near E = +carrier energy.  With this sign
    convention S(dE) weights an upward transition of energy dE in
    first-order perturbation theory.
    """
    energy = np.asarray(energy, dtype=float)
    wp = envelope_transform(pulse, energy + pulse.energy)
    wm = envelope_transform(pulse, energy - pulse.energy)
    phase = np.exp(1j * energy * pulse.t_start)
    return (
        0.5
        * pulse.peak_field
        * phase
        * (np.exp(1j * pulse.cep) * wp + np.exp(-1j * pulse.cep) * wm)
    )


def intensity_fwhm(pulse: Pulse, convention: str = "field") -> float:
    """FWHM of the cycle-averaged intensity envelope, in a.u. of time.

    convention="field": the stored sin^2 envelope shapes the field, so
    the intensity envelope is sin^4 and the FWHM solves
    sin^4(pi t/T) = 1/2.  convention="intensity": the sin^2 shape is
    read as the intensity envelope itself, giving exactly T/2.
    """
    if convention == "field":
        half = np.arcsin(2.0 ** (-0.25)) / np.pi
        return pulse.duration * (1.0 - 2.0 * half)
    if convention == "intensity":
        return 0.5 * pulse.duration
    raise ValueError(f"unknown duration convention {convention!r}")
