"""Beat analysis: envelope extraction, damped-cosine fits, correlation.

The fitting model is

    y(t) = offset + sum_i A_i exp(-g_i t) cos(w_i t + phi_i)

with A_i >= 0 and g_i >= 0.  Initial guesses come from FFT peak
picking; a trust-region least-squares refinement is restarted from a
fixed number of seeded perturbations and the best solution kept, so
results are deterministic for a given seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .model import PathAmplitudes, ResonanceSet

__all__ = [
    "BeatComponent",
    "BeatFit",
    "CorrelationReport",
    "envelope_extract",
    "fit_damped_cosines",
    "correlate",
    "couplings_from_scan",
    "amplitudes_from_couplings",
]

N_RESTARTS = 16


@dataclass(frozen=True)
class BeatComponent:
    """One damped cosine: amplitude, angular frequency, decay, phase."""

    amplitude: float
    frequency: float
    decay: float
    phase: float


@dataclass(frozen=True)
class BeatFit:
    """Fitted beat decomposition, components sorted by frequency."""

    components: tuple[BeatComponent, ...]
    offset: float
    residual: float
    converged: bool

    def __post_init__(self):
        freqs = [c.frequency for c in self.components]
        if sorted(freqs) != freqs:
            raise ValueError("components must be sorted by ascending frequency")

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([c.frequency for c in self.components])

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        y = np.full_like(t, self.offset)
        for c in self.components:
            y = y + c.amplitude * np.exp(-c.decay * t) * np.cos(
                c.frequency * t + c.phase
            )
        return y


@dataclass(frozen=True)
class CorrelationReport:
    """Pearson correlation at zero lag, best lag in scan points, NRMSD."""

    pearson_r: float
    lag: int
    nrmsd: float

    def __post_init__(self):
        if not -1.0 <= self.pearson_r <= 1.0 + 1e-12:
            raise ValueError(f"pearson_r out of range: {self.pearson_r}")


def _uniform_spacing(times: np.ndarray) -> float:
    d = np.diff(times)
    if d.size == 0 or np.any(d <= 0.0):
        raise ValueError("times must be strictly increasing")
    if not np.allclose(d, d[0], rtol=1e-8):
        raise ValueError("times must be uniformly spaced")
    return float(d[0])


def envelope_extract(times, values, fast_frequency: float, method: str = "demodulation"):
    """Slow envelope of a signal oscillating near fast_frequency.

    Returns (times_out, envelope) trimmed to the region where the
    estimate is valid.  "demodulation" mixes down with a complex
    carrier and averages over one fast period; "extrema" interpolates
    between local maxima and minima.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise ValueError("times and values must be matching 1d arrays")
    if fast_frequency <= 0.0:
        raise ValueError("fast_frequency must be positive")
    dt = _uniform_spacing(times)
    period = 2.0 * np.pi / fast_frequency
    per_period = period / dt
    if per_period < 6.0:
        raise ValueError(
            f"sampling violates the Nyquist margin: {per_period:.2f} points per "
            f"fast period, need >= 6"
        )

    if method == "demodulation":
        npts = int(round(per_period))
        if values.size < 2 * npts:
            raise ValueError("series shorter than two fast periods")
        z = (values - values.mean()) * np.exp(-1j * fast_frequency * times)
        kernel = np.ones(npts) / npts
        smooth = np.convolve(z, kernel, mode="valid")
        env = 2.0 * np.abs(smooth)
        start = (npts - 1) // 2
        t_out = times[start : start + env.size]
        return t_out, env

    if method == "extrema":
        inner = values[1:-1]
        is_max = (inner > values[:-2]) & (inner >= values[2:])
        is_min = (inner < values[:-2]) & (inner <= values[2:])
        t_max, y_max = times[1:-1][is_max], inner[is_max]
        t_min, y_min = times[1:-1][is_min], inner[is_min]
        if t_max.size < 2 or t_min.size < 2:
            raise ValueError("too few oscillation extrema to build an envelope")
        lo = max(t_max[0], t_min[0])
        hi = min(t_max[-1], t_min[-1])
        keep = (times >= lo) & (times <= hi)
        t_out = times[keep]
        upper = np.interp(t_out, t_max, y_max)
        lower = np.interp(t_out, t_min, y_min)
        return t_out, 0.5 * (upper - lower)

    raise ValueError(f"unknown envelope method {method!r}")


def _fft_peak_guesses(times, values, max_components):
    """Candidate (frequency, amplitude) pairs from a windowed FFT."""
    n = values.size
    dt = _uniform_spacing(times)
    detrended = values - values.mean()
    window = np.hanning(n)
    spec = np.abs(np.fft.rfft(detrended * window))
    freqs = 2.0 * np.pi * np.fft.rfftfreq(n, d=dt)
    # local maxima, excluding the DC bin
    interior = np.arange(1, spec.size - 1)
    peaks = interior[(spec[interior] > spec[interior - 1]) & (spec[interior] >= spec[interior + 1])]
    if peaks.size == 0:
        return []
    floor = 1e-8 * spec.max()
    peaks = peaks[spec[peaks] > floor]
    order = peaks[np.argsort(spec[peaks])[::-1]]
    guesses = []
    scale = 2.0 / np.sum(window)
    for idx in order[:max_components]:
        guesses.append((freqs[idx], scale * spec[idx]))
    return guesses


def _pack(offset, comps):
    x = [offset]
    for a, w, g, p in comps:
        x.extend([a, w, g, p])
    return np.array(x)


def _unpack(x):
    offset = x[0]
    comps = x[1:].reshape(-1, 4)
    return offset, comps


def _model_eval(x, t):
    offset, comps = _unpack(x)
    y = np.full_like(t, offset)
    for a, w, g, p in comps:
        y = y + a * np.exp(-g * t) * np.cos(w * t + p)
    return y


def fit_damped_cosines(times, values, max_components: int, seed: int = 0) -> BeatFit:
    """Least-squares fit of a sum of damped cosines plus an offset.

    The number of fitted components is the number of detected FFT
    peaks, capped at max_components.  A constant series yields zero
    components.  Non-convergence is reported through the `converged`
    flag on a best-effort result rather than raised.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise ValueError("times and values must be matching 1d arrays")
    if max_components < 1:
        raise ValueError("max_components must be >= 1")
    n_param = 1 + 4 * max_components
    if values.size < 4 * n_param:
        raise ValueError(
            f"series too short: {values.size} points for {n_param} parameters "
            f"(need >= {4 * n_param})"
        )
    _uniform_spacing(times)

    mean = float(values.mean())
    rms_about_mean = float(np.sqrt(np.mean((values - mean) ** 2)))
    scale = float(np.max(np.abs(values - mean)))
    if scale == 0.0 or rms_about_mean < 1e-300:
        return BeatFit((), mean, 0.0, True)

    guesses = _fft_peak_guesses(times, values, max_components)
    if not guesses:
        return BeatFit((), mean, rms_about_mean, True)

    t0 = times - times[0]
    span = times[-1] - times[0]
    nyquist = np.pi / _uniform_spacing(times)

    def residual(x):
        return _model_eval(x, t0) - values

    base = [(a, w, 0.0, 0.0) for w, a in guesses]
    k = len(base)
    lower = [-np.inf] + [0.0, 0.0, 0.0, -2.0 * np.pi] * k
    upper = [np.inf] + [np.inf, nyquist, 50.0 / span, 2.0 * np.pi] * k

    rng = np.random.RandomState(seed)
    best = None
    for trial in range(N_RESTARTS):
        comps = []
        for a, w, g, p in base:
            if trial == 0:
                comps.append((a, w, g, p))
            else:
                dw = 2.0 * np.pi / span
                comps.append(
                    (
                        a * rng.uniform(0.5, 1.5),
                        max(0.0, w + dw * rng.uniform(-1.0, 1.0)),
                        rng.uniform(0.0, 2.0) / span,
                        rng.uniform(-np.pi, np.pi),
                    )
                )
        x0 = _pack(mean, comps)
        try:
            sol = least_squares(
                residual,
                x0,
                bounds=(lower, upper),
                method="trf",
                xtol=1e-15,
                ftol=1e-15,
                gtol=1e-15,
                max_nfev=2000 * (k + 1),
            )
        except Exception:  # singular steps on pathological starts
            continue
        if best is None or sol.cost < best.cost:
            best = sol

    if best is None:
        warnings.warn("damped-cosine fit failed to run; returning offset only")
        return BeatFit((), mean, rms_about_mean, False)

    offset, comps = _unpack(best.x)
    out = []
    for a, w, g, p in comps:
        p = float(np.remainder(p + np.pi, 2.0 * np.pi) - np.pi)
        out.append(BeatComponent(float(a), float(w), float(g), p))
    out.sort(key=lambda c: c.frequency)
    resid = float(np.sqrt(np.mean(residual(best.x) ** 2)))
    converged = bool(best.status > 0)
    if not converged:
        warnings.warn("damped-cosine fit did not converge; best effort returned")
    return BeatFit(tuple(out), float(offset), resid, converged)


def correlate(series_a, series_b) -> CorrelationReport:
    """Pearson correlation of two equal-length series with a lag scan.

    pearson_r is evaluated at zero lag after mean removal; the lag scan
    covers +-10% of the series length and reports the lag maximizing r.
    NRMSD is the zero-lag RMS difference over the range of series_a.
    """
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("series must be matching 1d arrays")
    n = a.size
    if n < 8:
        raise ValueError(f"need at least 8 points, got {n}")
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise ValueError("correlation undefined for a zero-variance series")

    def pearson(x, y):
        x = x - x.mean()
        y = y - y.mean()
        den = np.sqrt(np.sum(x**2) * np.sum(y**2))
        if den == 0.0:
            return np.nan
        return float(np.sum(x * y) / den)

    r0 = pearson(a, b)
    max_lag = max(1, int(round(0.1 * n)))
    best_lag, best_r = 0, -np.inf
    for lag in range(-max_lag, max_lag + 1):
        if lag < 0:
            x, y = a[-lag:], b[: n + lag]
        elif lag > 0:
            x, y = a[:-lag], b[lag:]
        else:
            x, y = a, b
        if x.size < 2:
            continue
        r = pearson(x, y)
        if np.isfinite(r) and r > best_r:
            best_r, best_lag = r, lag
    nrmsd = float(np.sqrt(np.mean((a - b) ** 2)) / np.ptp(a))
    return CorrelationReport(pearson_r=r0, lag=best_lag, nrmsd=nrmsd)


@dataclass(frozen=True)
class CouplingFit:
    """Linear decomposition of a yield scan over fixed complex energies.

    The model is

        y(tau) = offset
               + 2 Re sum_m fast_m exp(-i dE_m tau)
               + sum_m slow_m exp(-Gamma_m tau)
               + 2 Re sum_{m<m'} cross_mm' exp(-i (E_m - E_m'*) tau)

    with dE_m = E_m - E0.  The fast terms carry the pump-probe
    interference; the slow and cross terms carry the delayed-path
    population and its splitting beats.  With a single zero-width
    resonance some columns turn collinear (a constant equals a
    non-decaying slow term); the least-norm solution keeps predict()
    well defined even then.
    """

    labels: tuple[str, ...]
    delta_energies: np.ndarray
    pair_labels: tuple[tuple[str, str], ...]
    pair_energies: np.ndarray
    fast: np.ndarray
    slow: np.ndarray
    cross: np.ndarray
    offset: float
    rms: float

    def predict(self, taus) -> np.ndarray:
        taus = np.asarray(taus, dtype=float)
        y = np.full(taus.shape, self.offset)
        for gm, dem in zip(self.fast, self.delta_energies):
            y = y + 2.0 * np.real(gm * np.exp(-1j * dem * taus))
        widths = -2.0 * self.delta_energies.imag
        for pm, gam in zip(self.slow, widths):
            y = y + pm * np.exp(-gam * taus)
        for qm, em in zip(self.cross, self.pair_energies):
            y = y + 2.0 * np.real(qm * np.exp(-1j * em * taus))
        return y


def couplings_from_scan(res: ResonanceSet, taus, yields) -> CouplingFit:
    """Window-overlap couplings from a measured yield scan.

    Linear least squares with every transition energy fixed by the
    resonance set: fast lines at dE_m = E_m - E0, slow population decays
    exp(-Gamma_m tau), and splitting beats at E_m - E_m'* for each pair.
    Only the coefficients are free, so the fit is direct and global.
    """
    taus = np.asarray(taus, dtype=float)
    yields = np.asarray(yields, dtype=float)
    de = res.delta_energies()
    energies = np.array([s.energy for s in res.states])
    cols = [np.ones_like(taus)]
    for dem in de:
        damp = np.exp(dem.imag * taus)
        cols.append(2.0 * damp * np.cos(dem.real * taus))
        cols.append(2.0 * damp * np.sin(dem.real * taus))
    for dem in de:
        cols.append(np.exp(2.0 * dem.imag * taus))
    pair_labels = []
    pair_energies = []
    labels = res.labels
    for m in range(len(labels)):
        for mp in range(m + 1, len(labels)):
            pair_labels.append((labels[m], labels[mp]))
            pair_energies.append(energies[m] - np.conj(energies[mp]))
    pair_energies = np.asarray(pair_energies, dtype=complex)
    for em in pair_energies:
        damp = np.exp(em.imag * taus)
        cols.append(2.0 * damp * np.cos(em.real * taus))
        cols.append(2.0 * damp * np.sin(em.real * taus))
    design = np.column_stack(cols)
    coeff, *_ = np.linalg.lstsq(design, yields, rcond=None)
    n = de.size
    fast = coeff[1 : 1 + 2 * n : 2] + 1j * coeff[2 : 2 + 2 * n : 2]
    slow = coeff[1 + 2 * n : 1 + 3 * n]
    rest = coeff[1 + 3 * n :]
    cross = rest[0::2] + 1j * rest[1::2]
    fitted = design @ coeff
    rms = float(np.sqrt(np.mean((fitted - yields) ** 2)))
    return CouplingFit(
        labels=labels,
        delta_energies=de,
        pair_labels=tuple(pair_labels),
        pair_energies=pair_energies,
        fast=fast,
        slow=slow,
        cross=cross,
        offset=float(coeff[0]),
        rms=rms,
    )


def amplitudes_from_couplings(
    template: PathAmplitudes, window, g
) -> PathAmplitudes:
    """Path amplitudes whose window overlaps equal the given g_m.

    Each beta_m is the template gamma scaled so that
    integral_M gamma* beta_m dK = g_m exactly.
    """
    g = np.asarray(g, dtype=complex)
    if g.size != len(template.labels):
        raise ValueError("one coupling per resonance required")
    rows = np.nonzero(window.select(template.eps1))[0]
    if rows.size == 0:
        raise ValueError("window contains no grid bins")
    norm = np.sum(np.abs(template.gamma[rows, :]) ** 2) * template.bin_area
    betas = np.stack([(gk / norm) * template.gamma for gk in g])
    return PathAmplitudes(
        template.eps1, template.eps2, template.gamma, betas, template.labels
    )
