"""Unit constants and conversions between atomic units and lab units.

All internal physics is done in Hartree atomic units.  Conversions to
eV / nm / attoseconds / W/cm^2 happen only at input and output
boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "UnitConstants",
    "UNITS",
    "ev_to_au",
    "au_to_ev",
    "as_to_au",
    "au_to_as",
    "fs_to_au",
    "au_to_fs",
    "photon_energy_from_wavelength",
    "wavelength_from_photon_energy",
    "field_from_intensity",
    "intensity_from_field",
    "helium_reference",
]


@dataclass(frozen=True)
class UnitConstants:
    """Conversion factors anchoring the atomic-unit system.

    Attributes
    ----------
    hartree_ev : float
        One hartree in electronvolt.
    autime_as : float
        One atomic unit of time in attoseconds.
    nm_ev : float
        Product wavelength[nm] * photon energy[eV] for light.
    au_intensity_wcm2 : float
        One atomic unit of intensity in W/cm^2.
    """

    hartree_ev: float = 27.211386
    autime_as: float = 24.188843
    nm_ev: float = 1239.84198
    au_intensity_wcm2: float = 3.50945e16


UNITS = UnitConstants()


def ev_to_au(energy_ev):
    """Energy in eV -> hartree."""
    return energy_ev / UNITS.hartree_ev


def au_to_ev(energy_au):
    """Energy in hartree -> eV."""
    return energy_au * UNITS.hartree_ev


def as_to_au(time_as):
    """Time in attoseconds -> atomic units."""
    return time_as / UNITS.autime_as


def au_to_as(time_au):
    """Time in atomic units -> attoseconds."""
    return time_au * UNITS.autime_as


def fs_to_au(time_fs):
    """Time in femtoseconds -> atomic units."""
    return time_fs * 1000.0 / UNITS.autime_as


def au_to_fs(time_au):
    """Time in atomic units -> femtoseconds."""
    return time_au * UNITS.autime_as / 1000.0


def photon_energy_from_wavelength(wavelength_nm):
    """Photon energy in eV for a wavelength in nm."""
    if np.any(np.asarray(wavelength_nm) <= 0.0):
        raise ValueError(f"wavelength must be positive, got {wavelength_nm} nm")
    return UNITS.nm_ev / wavelength_nm


def wavelength_from_photon_energy(energy_ev):
    """Wavelength in nm for a photon energy in eV."""
    if np.any(np.asarray(energy_ev) <= 0.0):
        raise ValueError(f"photon energy must be positive, got {energy_ev} eV")
    return UNITS.nm_ev / energy_ev


def field_from_intensity(intensity_wcm2):
    """Peak electric field in a.u. for a cycle-peak intensity in W/cm^2."""
    if np.any(np.asarray(intensity_wcm2) < 0.0):
        raise ValueError(f"intensity must be nonnegative, got {intensity_wcm2}")
    return (intensity_wcm2 / UNITS.au_intensity_wcm2) ** 0.5


def intensity_from_field(field_au):
    """Cycle-peak intensity in W/cm^2 for a peak field in a.u."""
    return field_au**2 * UNITS.au_intensity_wcm2


def helium_reference() -> dict[str, float]:
    """Bundled literature energies for the real helium atom (hartree).

    Loads data/helium_reference.txt, a table of published values kept
    for examples and cross-checks of the analysis helpers.  The solvers
    never read it; they work with the package's own 1D model.
    """
    from importlib.resources import files

    text = files("attobeats").joinpath("data/helium_reference.txt").read_text()
    out: dict[str, float] = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = line.split()
        out[key] = float(value)
    return out
