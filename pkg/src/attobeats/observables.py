"""Pair-distance and emission observables on the two-electron grid.

The delay analysis tracks the quasi-bound part of the wavepacket through
quadratic forms that weight small interelectronic distance: the bare
pair-proximity moment <1/r12^2>, the same moment sandwiched between
total-momentum operators, and the channel-resolved emission strength
into single-ion continua.  All forms are evaluated as raw sandwiches
<psi|O|psi> without dividing by the norm, because the states of interest
(projected quasi-bound content) decay and the envelope is the signal.

The pair distance is regularized the same way the propagation is:
r12^2 = (x1 - x2)^2 + a_ee^2, so 1/r12 equals the repulsion kernel of
the model up to the coupling strength.
"""

from __future__ import annotations

import numpy as np

from .model import EnergyWindow
from .tdse import Grid2e, SoftCoreModel, Wavefunction2e, ion_states

__all__ = [
    "pair_inverse_square",
    "momentum_sum_apply",
    "expval_r12inv2",
    "expval_mu2r12inv2",
    "dipole_moment",
    "ts1_probability",
]


def pair_inverse_square(grid: Grid2e, model: SoftCoreModel) -> np.ndarray:
    """Kernel 1/((x1 - x2)^2 + a_ee^2) on the grid."""
    d = grid.x[:, None] - grid.x[None, :]
    return 1.0 / (d**2 + model.a_ee**2)


def momentum_sum_apply(psi: Wavefunction2e) -> np.ndarray:
    """(p1 + p2) psi by spectral differentiation.

    The total momentum is the length-form dipole's conjugate variable
    and the transition operator used throughout the emission analysis.
    """
    k = psi.grid.k
    ksum = k[:, None] + k[None, :]
    return np.fft.ifft2(ksum * np.fft.fft2(psi.values))


def expval_r12inv2(psi: Wavefunction2e, model: SoftCoreModel) -> float:
    """Raw sandwich <psi| 1/r12^2 |psi>, no norm division."""
    w = pair_inverse_square(psi.grid, model)
    return float(np.sum(w * np.abs(psi.values) ** 2) * psi.grid.spacing**2)


def expval_mu2r12inv2(psi: Wavefunction2e, model: SoftCoreModel) -> float:
    """Raw sandwich <(mu psi)| 1/r12^2 |(mu psi)> with mu = p1 + p2.

    Symmetric operator ordering makes this manifestly nonnegative; it is
    the closure bound for the summed emission strength in
    :func:`ts1_probability`.
    """
    mup = momentum_sum_apply(psi)
    w = pair_inverse_square(psi.grid, model)
    return float(np.sum(w * np.abs(mup) ** 2) * psi.grid.spacing**2)


def dipole_moment(psi: Wavefunction2e) -> float:
    """Raw sandwich <psi| x1 + x2 |psi>, no norm division."""
    x = psi.grid.x
    xsum = x[:, None] + x[None, :]
    return float(np.sum(xsum * np.abs(psi.values) ** 2) * psi.grid.spacing**2)


def ts1_probability(
    psi: Wavefunction2e,
    model: SoftCoreModel,
    window: EnergyWindow,
    ion_basis: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Emission strength into ion-ground channels inside the window.

    Projects (1/r12) mu |psi> on symmetrized products of the ion ground
    orbital with box-normalized ion eigenstates of positive energy and
    sums |amplitude|^2 over the states whose energy falls inside the
    window (the window selects the outgoing electron's energy).  An
    empty selection gives 0, which keeps the value monotone under
    window growth.  Pass ion_basis=(energies, states) from
    :func:`attobeats.tdse.ion_states` to reuse a diagonalization.
    """
    grid = psi.grid
    if ion_basis is None:
        ion_basis = ion_states(grid, model)
    energies, states = ion_basis
    u0 = states[:, 0]

    kernel = 1.0 / np.sqrt(
        (grid.x[:, None] - grid.x[None, :]) ** 2 + model.a_ee**2
    )
    source = kernel * momentum_sum_apply(psi)
    # symmetrized channel <(u_j u_0 + u_0 u_j)/sqrt(2)|source>; for an
    # exchange-symmetric source both terms coincide
    amp_j = states.T @ (source @ u0) * grid.spacing**2
    amp_0 = u0 @ (source @ states) * grid.spacing**2
    amps = (amp_j + amp_0) / np.sqrt(2.0)

    open_channel = energies > 0.0
    selected = open_channel & (energies >= window.lo) & (energies <= window.hi)
    return float(np.sum(np.abs(amps[selected]) ** 2))
