"""Resonance search by exterior complex scaling on a 1D grid.

Beyond |x| = radius the coordinate continues into the complex plane,
x(s) = +-radius + (s -+ radius) e^{i angle}, which rotates continuum
branches into the lower half energy plane while bound states stay put
and metastable states show up as isolated complex eigenvalues
E - i Gamma/2 that do not move when the angle changes.

The kinetic term is discretized in flux form with exact divided
differences of the contour map on each interval, then symmetrized by
a sqrt-metric similarity so every matrix here is complex symmetric.
Eigenvectors live in that symmetrized representation; the natural
inner product is the c-product (no conjugation) with plain h^d
weights, and `contour_function` undoes the similarity when the bare
amplitudes on the contour are needed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix, diags, identity, kron
from scipy.sparse.linalg import eigs

from .model import Resonance, ResonanceSet
from .tdse import SoftCoreModel, Wavefunction2e

__all__ = [
    "ScalingContour",
    "EcsGrid",
    "EigenState",
    "ProjectionResult",
    "contour_positions",
    "kinetic_tridiag",
    "ecs_hamiltonian_1d",
    "build_ecs_hamiltonian",
    "c_product",
    "contour_function",
    "eigenpairs_near",
    "classify_by_rotation",
    "resonance_set_from_states",
    "quasi_bound_projection",
]


@dataclass(frozen=True)
class ScalingContour:
    """Rotation of the coordinate beyond |x| = radius by angle radians."""

    radius: float
    angle: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError(f"scaling radius must be positive, got {self.radius}")
        if not 0.0 <= self.angle < 0.25 * np.pi:
            raise ValueError(
                f"scaling angle must lie in [0, pi/4), got {self.angle}"
            )


@dataclass(frozen=True)
class EcsGrid:
    """Interior nodes of [-extent, extent] with Dirichlet walls."""

    extent: float
    points: int
    contour: ScalingContour

    def __post_init__(self):
        if self.extent <= 0.0:
            raise ValueError("extent must be positive")
        if self.points < 32:
            raise ValueError(f"need at least 32 interior points, got {self.points}")
        if self.contour.radius >= self.extent:
            raise ValueError(
                f"scaling radius {self.contour.radius} must sit inside the "
                f"box extent {self.extent}"
            )

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / (self.points + 1)

    @property
    def s(self) -> np.ndarray:
        h = self.spacing
        return -self.extent + h * np.arange(1, self.points + 1)

    @property
    def x(self) -> np.ndarray:
        return contour_positions(self.s, self.contour)

    @property
    def metric(self) -> np.ndarray:
        """dx/ds at the nodes, from the interval divided differences."""
        half = self._half_metric()
        return 0.5 * (half[:-1] + half[1:])

    def _half_metric(self) -> np.ndarray:
        h = self.spacing
        s_all = -self.extent + h * np.arange(self.points + 2)
        x_all = contour_positions(s_all, self.contour)
        return np.diff(x_all) / h


def contour_positions(s, contour: ScalingContour) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    r = contour.radius
    phase = np.exp(1j * contour.angle)
    out = s.astype(complex)
    out = np.where(s > r, r + (s - r) * phase, out)
    out = np.where(s < -r, -r + (s + r) * phase, out)
    return out


def kinetic_tridiag(grid: EcsGrid) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrized -1/2 (1/f) d/ds (1/f) d/ds as (diagonal, off-diagonal)."""
    h = grid.spacing
    f_half = grid._half_metric()
    f_node = grid.metric
    inv2h2 = 1.0 / (2.0 * h * h)
    diag = inv2h2 / f_node * (1.0 / f_half[:-1] + 1.0 / f_half[1:])
    off = -inv2h2 / (f_half[1:-1] * np.sqrt(f_node[:-1] * f_node[1:]))
    return diag, off


def ecs_hamiltonian_1d(grid: EcsGrid, potential) -> csr_matrix:
    """One-coordinate complex symmetric Hamiltonian, sparse tridiagonal.

    potential is a callable evaluated at the complex contour positions.
    """
    diag, off = kinetic_tridiag(grid)
    v = np.asarray(potential(grid.x), dtype=complex)
    if v.shape != (grid.points,):
        raise ValueError("potential must return one value per grid node")
    return diags([off, diag + v, off], offsets=[-1, 0, 1], format="csr")


def build_ecs_hamiltonian(grid: EcsGrid, model: SoftCoreModel) -> csr_matrix:
    """Two-electron complex symmetric Hamiltonian on the contour."""
    t1 = ecs_hamiltonian_1d(grid, lambda x: np.zeros_like(x))
    eye = identity(grid.points, format="csr")
    x = grid.x
    v2 = (
        model.v_nuclear(x)[:, None]
        + model.v_nuclear(x)[None, :]
        + model.v_pair(x[:, None] - x[None, :])
    )
    ham = kron(t1, eye) + kron(eye, t1) + diags(v2.ravel())
    return ham.tocsr()


def c_product(u: np.ndarray, v: np.ndarray, volume: float) -> complex:
    """Bilinear (no conjugation) product for symmetrized ECS vectors."""
    u = np.asarray(u).ravel()
    v = np.asarray(v).ravel()
    if u.shape != v.shape:
        raise ValueError(f"size mismatch: {u.shape} vs {v.shape}")
    return complex(np.sum(u * v) * volume)


def contour_function(vector: np.ndarray, grid: EcsGrid) -> np.ndarray:
    """Undo the sqrt-metric similarity: amplitudes on the contour.

    Accepts a 1D vector (points,) or a flattened or square two-electron
    vector; returns the same shape with each coordinate divided by
    sqrt(metric).
    """
    root = np.sqrt(grid.metric)
    n = grid.points
    vector = np.asarray(vector)
    if vector.shape == (n,):
        return vector / root
    square = vector.reshape(n, n)
    return square / (root[:, None] * root[None, :])


def eigenpairs_near(
    ham: csr_matrix,
    sigma: complex,
    k: int = 8,
    volume: float = 1.0,
    residual_tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Shift-invert Arnoldi eigenpairs closest to sigma, c-normalized.

    Returns (values, vectors) sorted by distance from sigma, vectors in
    columns with c_product(v, v) = 1 and the largest component rotated
    to the positive real axis for reproducibility.
    """
    # fixed start vector: ARPACK's random default would make eigenvectors
    # (and everything derived from them) differ between identical runs
    v0 = np.full(ham.shape[0], 1.0 / np.sqrt(ham.shape[0]))
    vals, vecs = eigs(ham, k=k, sigma=sigma, which="LM", v0=v0)
    order = np.argsort(np.abs(vals - sigma))
    vals, vecs = vals[order], vecs[:, order]
    for j in range(vecs.shape[1]):
        v = vecs[:, j]
        res = np.linalg.norm(ham @ v - vals[j] * v) / np.linalg.norm(v)
        if res > residual_tol:
            raise RuntimeError(
                f"eigenpair {j} near sigma={sigma}: residual {res:.2e} "
                f"exceeds {residual_tol:.1e}"
            )
        cn = np.sqrt(c_product(v, v, volume))
        if abs(cn) < 1e-12:
            raise RuntimeError(
                f"eigenpair {j} is self-orthogonal under the c-product; "
                "move the scaling radius or angle"
            )
        v = v / cn
        # only a sign is free after c-normalization (bilinear product);
        # fix it by the largest component for reproducibility
        peak = v[np.argmax(np.abs(v))]
        if peak.real < 0.0 or (peak.real == 0.0 and peak.imag < 0.0):
            v = -v
        vecs[:, j] = v
    return vals, vecs


@dataclass(frozen=True)
class EigenState:
    """Classified ECS eigenpair (vector in the symmetrized representation)."""

    energy: complex
    kind: str  # "bound" | "resonance" | "continuum"
    exchange: int  # +1 symmetric, -1 antisymmetric
    parity: int  # spatial parity under x -> -x
    vector: np.ndarray


def _match_distance(value: complex, pool: np.ndarray) -> float:
    return float(np.min(np.abs(pool - value))) if pool.size else np.inf


def _symmetry_signs(vector: np.ndarray, n: int) -> tuple[int, int]:
    sq = vector.reshape(n, n)
    scale = np.max(np.abs(sq))
    exch = 1 if np.max(np.abs(sq - sq.T)) < 1e-6 * scale else -1
    flipped = sq[::-1, ::-1]
    par = 1 if np.max(np.abs(sq - flipped)) < 1e-6 * scale else -1
    # mixed states (neither sign matches) should not appear for clean pairs
    return exch, par


def classify_by_rotation(
    extent: float,
    points: int,
    radius: float,
    model: SoftCoreModel,
    sigma: complex,
    k: int = 10,
    angle: float = 0.35,
    angle_step: float = 0.1,
    stability_tol: float = 1e-4,
    bound_im_tol: float = 1e-6,
) -> list[EigenState]:
    """Eigenpairs near sigma, tagged by their response to the angle.

    Eigenvalues that stay within stability_tol when the rotation angle
    changes by angle_step are physical (bound if essentially real,
    resonances otherwise); the rest are rotated-continuum artifacts.
    """
    grids = [
        EcsGrid(extent, points, ScalingContour(radius, a))
        for a in (angle, angle - angle_step)
    ]
    vol = grids[0].spacing ** 2
    vals_ref, vecs_ref = eigenpairs_near(
        build_ecs_hamiltonian(grids[0], model), sigma, k=k, volume=vol
    )
    vals_alt, _ = eigenpairs_near(
        build_ecs_hamiltonian(grids[1], model), sigma, k=k, volume=vol
    )
    states = []
    for val, vec in zip(vals_ref, vecs_ref.T):
        stable = _match_distance(val, vals_alt) < stability_tol
        if stable and abs(val.imag) < bound_im_tol:
            kind = "bound"
        elif stable and val.imag < 0.0:
            kind = "resonance"
        else:
            kind = "continuum"
        exch, par = _symmetry_signs(vec, points)
        states.append(
            EigenState(energy=complex(val), kind=kind, exchange=exch,
                       parity=par, vector=vec)
        )
    return states


def resonance_set_from_states(
    states: list[EigenState],
    ground_energy: float,
    exchange: int = 1,
    parity: int | None = -1,
) -> ResonanceSet:
    """Bundle stable resonances into a ResonanceSet, labeled by ordinal.

    Keeps the requested exchange symmetry (and spatial parity unless
    parity is None), orders by Re E, and labels r1+/r1-/... with the
    sign giving the spatial parity.  Warns and returns an empty set when
    nothing qualifies.
    """
    picked = [
        s
        for s in states
        if s.kind == "resonance"
        and s.exchange == exchange
        and (parity is None or s.parity == parity)
        and s.energy.real > ground_energy
    ]
    picked.sort(key=lambda s: s.energy.real)
    if not picked:
        warnings.warn("no stable resonances found near the requested energy")
        return ResonanceSet(ground_energy=ground_energy, states=())
    resonances = tuple(
        Resonance(label=f"r{i + 1}{'+' if s.parity > 0 else '-'}", energy=s.energy)
        for i, s in enumerate(picked)
    )
    return ResonanceSet(ground_energy=ground_energy, states=resonances)


class ProjectionResult:
    """Quasi-bound content of a grid wavefunction.

    Holds the interior-restricted resonance functions interpolated onto
    the analysis grid, the c-product coefficients of the projected
    state, and the complex energies that drive their free evolution.
    """

    def __init__(self, labels, energies, coefficients, functions, grid):
        self.labels = tuple(labels)
        self.energies = np.asarray(energies, dtype=complex)
        self.coefficients = np.asarray(coefficients, dtype=complex)
        self.functions = np.asarray(functions, dtype=complex)
        self.grid = grid
        if not (
            len(self.labels)
            == self.energies.size
            == self.coefficients.size
            == self.functions.shape[0]
        ):
            raise ValueError("inconsistent projection component counts")

    def evolve(self, tau: float) -> np.ndarray:
        """Coefficients after free evolution for tau (decay included)."""
        if tau < 0.0:
            raise ValueError("tau must be nonnegative")
        return self.coefficients * np.exp(-1j * self.energies * tau)

    def synthesize(self, tau: float) -> np.ndarray:
        """Sum of evolved components on the analysis grid."""
        c = self.evolve(tau)
        return np.tensordot(c, self.functions, axes=(0, 0))

    def populations(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2


def quasi_bound_projection(
    psi: Wavefunction2e,
    states: list[EigenState],
    grid: EcsGrid,
    labels: tuple[str, ...] | None = None,
) -> ProjectionResult:
    """Project a wavefunction on resonance interiors (|x| < radius).

    Inside the scaling radius the contour is the real axis, so each
    resonance eigenvector restricted there is an ordinary (if slowly
    leaking) wavefunction.  The projection uses the c-product, the
    natural pairing for complex symmetric operators.
    """
    from scipy.interpolate import RectBivariateSpline

    picked = [s for s in states if s.kind == "resonance"]
    if labels is None:
        labels = tuple(f"r{i + 1}{'+' if s.parity > 0 else '-'}"
                       for i, s in enumerate(picked))
    if len(labels) != len(picked):
        raise ValueError(
            f"{len(labels)} labels for {len(picked)} resonance states"
        )
    if not picked:
        return ProjectionResult((), (), (), np.zeros((0,) + psi.values.shape), psi.grid)

    r0 = grid.contour.radius
    inside_s = np.abs(grid.s) < r0
    s_in = grid.s[inside_s]
    xg = psi.grid.x
    inside_x = np.abs(xg) < r0
    x_in = xg[inside_x]
    if x_in.size < 8 or s_in.size < 8:
        raise ValueError("interior region too small for projection")

    h = psi.grid.spacing
    n_pts = psi.grid.points
    energies, functions, coefficients = [], [], []
    for s in picked:
        u = contour_function(s.vector, grid)[np.ix_(inside_s, inside_s)]
        spline_re = RectBivariateSpline(s_in, s_in, np.real(u), kx=3, ky=3)
        spline_im = RectBivariateSpline(s_in, s_in, np.imag(u), kx=3, ky=3)
        f = np.zeros((n_pts, n_pts), dtype=complex)
        block = spline_re(x_in, x_in) + 1j * spline_im(x_in, x_in)
        f[np.ix_(inside_x, inside_x)] = block
        # c-product projection, no conjugation on the resonance side
        coefficients.append(np.sum(f * psi.values) * h * h)
        energies.append(s.energy)
        functions.append(f)
    return ProjectionResult(labels, energies, coefficients, functions, psi.grid)
