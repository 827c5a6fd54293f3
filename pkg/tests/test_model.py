import numpy as np
import pytest

from attobeats import model
from attobeats.model import (
    CouplingSpec,
    DelayScan,
    EnergyWindow,
    PathAmplitudes,
    Resonance,
    ResonanceSet,
    background_yield,
    beta_hat,
    default_window,
    delay_scan,
    interference_term,
    modulation_amplitude,
    probability_map,
    pump_probe_yield,
    synthesize_amplitudes,
    total_windowed_yield,
    uniform_energy_grid,
)
from attobeats.pulses import Pulse
from attobeats.units import au_to_as, ev_to_au

# fast fringe period for a transition energy of 2.2109 a.u.
# (frozen from 2*pi / 2.2109)
FRINGE_PERIOD_AU = 2.841912934632768
FRINGE_PERIOD_AS = 68.74258579550128


def blob(eps, c1, c2, s=0.08, phase=0.0):
    e1 = eps[:, None]
    e2 = eps[None, :]
    g = np.exp(-0.5 * (((e1 - c1) / s) ** 2 + ((e2 - c2) / s) ** 2))
    sym = g + g.T
    return sym * np.exp(1j * phase)


def make_amps(labels, centers, eps=None, gamma_phase=0.0, beta_scale=1.0):
    if eps is None:
        eps = uniform_energy_grid(96, 1.2)
    gamma = blob(eps, 0.75, 0.25, s=0.1, phase=gamma_phase)
    betas = np.stack(
        [beta_scale * blob(eps, c, 0.5 - (c - 0.5), s=0.12) for c in centers]
    )
    return PathAmplitudes(eps, eps.copy(), gamma, betas, labels)


@pytest.fixture
def single_res():
    res = ResonanceSet(-2.9, (Resonance("r0", -2.9 + 2.2109),))
    amps = make_amps(("r0",), (0.5,))
    return amps, res


@pytest.fixture
def pair_res():
    res = ResonanceSet(
        -2.9,
        (
            Resonance("r0", -2.9 + 2.2109 - 0.05j * 0.0),
            Resonance("r1", -2.9 + 2.2609),
        ),
    )
    amps = make_amps(("r0", "r1"), (0.45, 0.55))
    return amps, res


WINDOW = EnergyWindow(0.35, 0.95)


class TestTypes:
    def test_resonance_validation(self):
        with pytest.raises(ValueError):
            Resonance("", -1.0 + 0j)
        with pytest.raises(ValueError):
            Resonance("x", -1.0 + 0.01j)
        r = Resonance("x", -1.0 - 0.005j)
        assert r.width == pytest.approx(0.01)

    def test_resonance_set_validation(self):
        with pytest.raises(ValueError):
            ResonanceSet(-2.9, (Resonance("a", -1.0), Resonance("a", -0.9)))
        with pytest.raises(ValueError):
            ResonanceSet(-0.5, (Resonance("a", -1.0),))
        rs = ResonanceSet(-2.9, (Resonance("a", -1.0 - 0.001j),))
        np.testing.assert_allclose(rs.delta_energies(), [1.9 - 0.001j])
        np.testing.assert_allclose(rs.widths(), [0.002])

    def test_amplitude_validation(self):
        eps = uniform_energy_grid(16, 1.0)
        good = np.zeros((16, 16), complex)
        with pytest.raises(ValueError):
            PathAmplitudes(eps, eps, good[:8], np.zeros((1, 16, 16)), ("a",))
        with pytest.raises(ValueError):
            PathAmplitudes(eps, eps, good, np.zeros((2, 16, 16)), ("a",))
        with pytest.raises(ValueError):
            PathAmplitudes(eps[::-1], eps, good, np.zeros((1, 16, 16)), ("a",))
        bad = good.copy()
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            PathAmplitudes(eps, eps, bad, np.zeros((1, 16, 16)), ("a",))
        nonuniform = np.concatenate([eps[:8], eps[8:] * 1.1])
        with pytest.raises(ValueError):
            PathAmplitudes(nonuniform, eps, good, np.zeros((1, 16, 16)), ("a",))

    def test_window_validation(self):
        with pytest.raises(ValueError):
            EnergyWindow(0.5, 0.5)
        with pytest.raises(ValueError):
            EnergyWindow(-0.1, 0.5)
        w = EnergyWindow(0.2, 0.4)
        assert w.width == pytest.approx(0.2)

    def test_delay_scan_validation(self):
        taus = np.array([0.0, 1.0, 2.0])
        ones = np.ones(3)
        DelayScan(taus, ones, ones, ones, ones)
        with pytest.raises(ValueError):
            DelayScan(taus[::-1], ones, ones, ones, ones)
        with pytest.raises(ValueError):
            DelayScan(taus, -ones, ones, ones, ones)
        with pytest.raises(ValueError):
            DelayScan(taus, ones, ones, ones, np.array([1.0, np.inf, 1.0]))


class TestBetaHat:
    def test_phase_advance_period(self, single_res):
        amps, res = single_res
        b0 = beta_hat(amps, res, 10.0)
        b1 = beta_hat(amps, res, 10.0 + FRINGE_PERIOD_AU)
        np.testing.assert_allclose(b1, b0, rtol=1e-9)
        bq = beta_hat(amps, res, 10.0 + 0.25 * FRINGE_PERIOD_AU)
        np.testing.assert_allclose(bq, b0 * np.exp(-0.5j * np.pi), rtol=1e-9)
        assert au_to_as(FRINGE_PERIOD_AU) == pytest.approx(FRINGE_PERIOD_AS, rel=1e-12)

    def test_linear_in_resonances(self, pair_res):
        amps, res = pair_res
        tau = 7.3
        both = beta_hat(amps, res, tau)
        parts = []
        for k, state in enumerate(res.states):
            sub_res = ResonanceSet(res.ground_energy, (state,))
            sub_amp = PathAmplitudes(
                amps.eps1, amps.eps2, amps.gamma, amps.betas[k : k + 1], (state.label,)
            )
            parts.append(beta_hat(sub_amp, sub_res, tau))
        np.testing.assert_allclose(both, parts[0] + parts[1], rtol=1e-12)

    def test_negative_delay_rejected(self, single_res):
        amps, res = single_res
        with pytest.raises(ValueError):
            beta_hat(amps, res, -1.0)

    def test_label_mismatch_rejected(self, single_res):
        amps, res = single_res
        other = ResonanceSet(-2.9, (Resonance("zz", -0.7),))
        with pytest.raises(ValueError):
            beta_hat(amps, other, 1.0)


class TestWindowQuantities:
    def test_probability_map_is_pointwise_square(self, pair_res):
        amps, res = pair_res
        tau = 12.0
        p = probability_map(amps, res, tau)
        direct = np.abs(amps.gamma + beta_hat(amps, res, tau)) ** 2
        np.testing.assert_allclose(p, direct, rtol=1e-13)
        pb = probability_map(amps, res, tau, include_direct_background=True)
        np.testing.assert_allclose(pb, direct + np.abs(amps.gamma) ** 2, rtol=1e-13)

    def test_empty_window_rejected(self, single_res):
        amps, res = single_res
        w = EnergyWindow(2.0, 3.0)  # off the grid
        with pytest.raises(ValueError):
            modulation_amplitude(amps, res, w, 1.0)
        with pytest.raises(ValueError):
            background_yield(amps, w)

    def test_disjoint_windows_add(self, pair_res):
        amps, res = pair_res
        tau = 5.0
        w_lo = EnergyWindow(0.35, 0.65)
        w_hi = EnergyWindow(0.65, 0.95)
        w_all = EnergyWindow(0.35, 0.95)
        for f in (
            lambda w: pump_probe_yield(amps, res, w, tau),
            lambda w: background_yield(amps, w),
            lambda w: total_windowed_yield(amps, res, w, tau),
        ):
            assert f(w_lo) + f(w_hi) == pytest.approx(f(w_all), rel=1e-12)

    def test_common_phase_invariance(self, pair_res):
        amps, res = pair_res
        tau = 9.1
        chi = np.exp(1j * 0.7321)
        rotated = PathAmplitudes(
            amps.eps1, amps.eps2, amps.gamma * chi, amps.betas * chi, amps.labels
        )
        for f in (modulation_amplitude, pump_probe_yield, total_windowed_yield):
            assert f(rotated, res, WINDOW, tau) == pytest.approx(
                f(amps, res, WINDOW, tau), rel=1e-12
            )
        assert background_yield(rotated, WINDOW) == pytest.approx(
            background_yield(amps, WINDOW), rel=1e-12
        )

    def test_cauchy_schwarz_bound(self):
        # A_M <= 4 sqrt((P_bg/2) P_beta) for random amplitude sets
        rng = np.random.RandomState(42)
        eps = uniform_energy_grid(48, 1.2)
        for _ in range(25):
            n_res = rng.randint(1, 4)
            labels = tuple(f"r{k}" for k in range(n_res))
            states = tuple(
                Resonance(
                    lab,
                    complex(-2.9 + rng.uniform(1.5, 2.5), -rng.uniform(0.0, 0.01)),
                )
                for lab in labels
            )
            res = ResonanceSet(-2.9, states)
            gamma = rng.randn(48, 48) + 1j * rng.randn(48, 48)
            betas = rng.randn(n_res, 48, 48) + 1j * rng.randn(n_res, 48, 48)
            amps = PathAmplitudes(eps, eps.copy(), gamma, betas, labels)
            w = EnergyWindow(0.2, 1.0)
            tau = rng.uniform(0.0, 50.0)
            a = modulation_amplitude(amps, res, w, tau)
            bound = 4.0 * np.sqrt(
                (background_yield(amps, w) / 2.0) * pump_probe_yield(amps, res, w, tau)
            )
            assert a <= bound * (1.0 + 1e-12)


class TestOscillationStructure:
    def test_modulation_amplitude_is_local_peak_to_peak(self, single_res):
        # brute-force oracle: scan the yield over one fast period and
        # compare its excursion with the closed-form amplitude
        amps, res = single_res
        tau0 = 20.0
        a_m = modulation_amplitude(amps, res, WINDOW, tau0)
        local = np.linspace(tau0, tau0 + FRINGE_PERIOD_AU, 4001)
        y = np.array(
            [total_windowed_yield(amps, res, WINDOW, t) for t in local]
        )
        assert y.max() - y.min() == pytest.approx(a_m, rel=1e-5)

    def test_two_resonance_local_peak_to_peak(self, pair_res):
        amps, res = pair_res
        tau0 = 15.0
        a_m = modulation_amplitude(amps, res, WINDOW, tau0)
        period = 2.0 * np.pi / 2.2359  # mean transition energy
        local = np.linspace(tau0 - period / 2, tau0 + period / 2, 4001)
        y = np.array([interference_term(amps, res, WINDOW, t) for t in local])
        assert y.max() - y.min() == pytest.approx(a_m, rel=5e-2)

    def test_fringe_period_in_yield(self, single_res):
        # zero crossings of the oscillating part are half a period apart
        amps, res = single_res
        taus = np.linspace(5.0, 5.0 + 6 * FRINGE_PERIOD_AU, 60001)
        y = np.array([interference_term(amps, res, WINDOW, t) for t in taus])
        sgn = np.sign(y)
        crossings = taus[:-1][np.diff(sgn) != 0]
        gaps = np.diff(crossings)
        assert np.allclose(gaps, FRINGE_PERIOD_AU / 2.0, rtol=1e-5)

    def test_decay_slopes(self):
        # single resonance with Gamma = 1e-3: A_M ~ exp(-Gamma tau / 2),
        # P_beta ~ exp(-Gamma tau)
        gamma_w = 1e-3
        res = ResonanceSet(-2.9, (Resonance("r0", -2.9 + 2.2109 - 0.5j * gamma_w),))
        amps = make_amps(("r0",), (0.5,))
        taus = np.linspace(0.0, 400.0, 81)
        scan = delay_scan(amps, res, WINDOW, taus)
        slope_a, _ = np.polyfit(taus, np.log(scan.a_mod), 1)
        slope_p, _ = np.polyfit(taus, np.log(scan.p_beta), 1)
        assert slope_a == pytest.approx(-gamma_w / 2.0, rel=1e-8)
        assert slope_p == pytest.approx(-gamma_w, rel=1e-8)
        resid_a = np.log(scan.a_mod) - np.polyval(
            np.polyfit(taus, np.log(scan.a_mod), 1), taus
        )
        assert np.max(np.abs(resid_a)) < 1e-8

    def test_fft_line_positions(self, pair_res):
        # the yield carries the fast transition frequencies; the
        # envelope quantities carry only the splitting (and, for the
        # modulus A_M, its harmonics)
        amps, res = pair_res
        n = 8192
        dt = 0.25
        taus = np.arange(n) * dt
        scan = delay_scan(amps, res, WINDOW, taus)
        freqs = 2.0 * np.pi * np.fft.rfftfreq(n, d=dt)
        df = freqs[1] - freqs[0]
        hann = np.hanning(n)

        spec_y = np.abs(np.fft.rfft(hann * (scan.yield_windowed - scan.yield_windowed.mean())))
        fast = freqs[(freqs > 1.0)]
        spec_fast = spec_y[(freqs > 1.0)]
        top = fast[np.argsort(spec_fast)[-6:]]
        assert np.min(np.abs(top - 2.2109)) < 2 * df
        assert np.min(np.abs(top - 2.2609)) < 2 * df

        for series in (scan.a_mod, scan.p_beta):
            spec = np.abs(np.fft.rfft(hann * (series - series.mean())))
            peak = freqs[np.argmax(spec)]
            assert abs(peak - 0.05) < 2 * df
            # no lines at the fast transition frequencies
            band = (freqs > 2.0) & (freqs < 2.5)
            assert spec[band].max() < 1e-3 * spec.max()


class TestDelayScan:
    def test_matches_single_point_ops(self, pair_res):
        amps, res = pair_res
        taus = np.linspace(1.0, 40.0, 23)
        scan = delay_scan(amps, res, WINDOW, taus)
        for i, tau in enumerate(taus):
            assert scan.a_mod[i] == pytest.approx(
                modulation_amplitude(amps, res, WINDOW, tau), rel=1e-10
            )
            assert scan.p_beta[i] == pytest.approx(
                pump_probe_yield(amps, res, WINDOW, tau), rel=1e-10
            )
            assert scan.yield_windowed[i] == pytest.approx(
                total_windowed_yield(amps, res, WINDOW, tau), rel=1e-10
            )
        np.testing.assert_allclose(scan.p_background, background_yield(amps, WINDOW))

    def test_negative_delays_rejected(self, pair_res):
        amps, res = pair_res
        with pytest.raises(ValueError):
            delay_scan(amps, res, WINDOW, [-1.0, 0.0, 1.0])


class TestDefaultWindow:
    def test_helium_photon_placement(self):
        i1 = ev_to_au(24.5916)
        i2 = ev_to_au(54.4228)
        w = default_window(ev_to_au(61.992099), i1, i2)
        assert w.lo == pytest.approx(ev_to_au(7.5693), abs=2e-4)
        assert w.hi == pytest.approx(ev_to_au(37.4005), abs=2e-4)

    def test_closed_window_rejected(self):
        with pytest.raises(ValueError):
            default_window(ev_to_au(50.0), ev_to_au(24.6), ev_to_au(54.4))
        with pytest.raises(ValueError):
            default_window(2.0, 1.5, 1.0)


class TestSynthesize:
    def setup_method(self):
        self.res = ResonanceSet(
            -2.9037,
            (
                Resonance("r0", -0.6928 - 0.0007j),
                Resonance("r1", -0.5622 - 0.0002j),
            ),
        )
        self.pump = Pulse.from_lab(duration_as=1000.0, energy_ev=60.2, intensity_wcm2=1e12)
        self.probe = self.pump
        self.coupl = CouplingSpec(
            threshold_i1=ev_to_au(24.5916), threshold_i2=ev_to_au(54.4228)
        )

    def test_exchange_symmetry(self):
        amps = synthesize_amplitudes(self.res, self.pump, self.probe, self.coupl, 128)
        np.testing.assert_allclose(amps.gamma, amps.gamma.T, rtol=1e-12)
        for k in range(amps.betas.shape[0]):
            np.testing.assert_allclose(amps.betas[k], amps.betas[k].T, rtol=1e-12)

    def test_gamma_peaks_at_sequential_energies(self):
        amps = synthesize_amplitudes(self.res, self.pump, self.probe, self.coupl, 256)
        i, j = np.unravel_index(np.argmax(np.abs(amps.gamma)), amps.gamma.shape)
        om = self.probe.energy
        peaks = sorted([om - self.coupl.threshold_i1, om - self.coupl.threshold_i2])
        found = sorted([amps.eps1[i], amps.eps2[j]])
        de = amps.eps1[1] - amps.eps1[0]
        assert abs(found[0] - peaks[0]) < de
        assert abs(found[1] - peaks[1]) < de

    def test_beta_rides_total_energy_diagonal(self):
        amps = synthesize_amplitudes(self.res, self.pump, self.probe, self.coupl, 256)
        k = 0
        i, j = np.unravel_index(np.argmax(np.abs(amps.betas[k])), amps.gamma.shape)
        e_total = self.res.states[k].energy.real + self.probe.energy
        de = amps.eps1[1] - amps.eps1[0]
        assert abs(amps.eps1[i] + amps.eps2[j] - e_total) < 2 * de

    def test_detuned_resonance_negligible(self):
        far = ResonanceSet(
            self.res.ground_energy,
            self.res.states + (Resonance("far", -0.1),),
        )
        amps = synthesize_amplitudes(far, self.pump, self.probe, self.coupl, 128)
        w_near = np.max(np.abs(amps.betas[0]))
        w_far = np.max(np.abs(amps.betas[2]))
        assert w_far < 0.02 * w_near

    def test_off_grid_resonance_warned_and_zeroed(self):
        off = ResonanceSet(
            self.res.ground_energy,
            self.res.states + (Resonance("off", 4.5),),
        )
        with pytest.warns(UserWarning, match="off"):
            amps = synthesize_amplitudes(off, self.pump, self.probe, self.coupl, 128)
        assert np.all(amps.betas[2] == 0.0)

    def test_closed_channel_rejected(self):
        dim = Pulse.from_lab(duration_as=1000.0, energy_ev=40.0)
        with pytest.raises(ValueError):
            synthesize_amplitudes(self.res, self.pump, dim, self.coupl, 64)
