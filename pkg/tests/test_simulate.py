import hashlib

import numpy as np
import pytest
from scipy.integrate import quad

from photonstats import simulate
from photonstats.model import (
    ConfigError,
    DataError,
    DetectorConfig,
    EmitterConfig,
    ExperimentConfig,
    OpticsConfig,
    PhotonRecord,
    Photons,
    TopologyError,
)


def _digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


class TestBlinkingTrajectory:
    def test_zero_strength_is_always_on(self):
        traj = simulate.blinking_trajectory(0.0, 1.0, 1e9, seed=0)
        assert traj.initial_on and traj.switch_times.size == 0
        assert traj.on_fraction() == 1.0
        assert traj.state_at(np.array([0, 5e8, 1e9 - 1])).all()

    @pytest.mark.parametrize("a,tau", [(-0.1, 100.0), (1.0, 0.0), (1.0, -5.0)])
    def test_invalid_parameters(self, a, tau):
        with pytest.raises(ConfigError):
            simulate.blinking_trajectory(a, tau, 1e6, seed=0)

    def test_switch_times_increase_within_duration(self):
        traj = simulate.blinking_trajectory(2.0, 50_000.0, 5e8, seed=1)
        assert np.all(np.diff(traj.switch_times) > 0)
        assert traj.switch_times[-1] < 5e8

    def test_on_fraction_approaches_stationary_value(self):
        # strength 2.71 -> bright fraction 1/3.71
        traj = simulate.blinking_trajectory(2.71, 294_000.0, 5e10, seed=2)
        assert traj.on_fraction() == pytest.approx(1 / 3.71, abs=0.015)

    def test_indicator_autocorrelation_matches_telegraph_form(self):
        # normalized autocorrelation should fit 1 + a*exp(-|t|/tau_b)
        a_true, tau_true = 1.0, 100_000.0
        traj = simulate.blinking_trajectory(a_true, tau_true, 4e9, seed=3)
        dt = 5_000.0
        s = traj.sample(dt).astype(float)
        lags = np.arange(1, 100)
        acf = np.array([(s[:-k] * s[k:]).mean() for k in lags]) / s.mean() ** 2
        from photonstats.metrics import _weighted_lm, blinking_jacobian, blinking_model

        params, _, _, _ = _weighted_lm(
            blinking_model, blinking_jacobian, lags * dt, acf,
            np.full(lags.size, 0.02), (1.0, 0.5, 50_000.0), (True, True, True))
        assert params[1] == pytest.approx(a_true, rel=0.10)
        assert params[2] == pytest.approx(tau_true, rel=0.10)


class TestGenerateEmissions:
    def test_ideal_source_emits_once_per_pulse(self):
        cfg = EmitterConfig(t1=300.0)
        photons = simulate.generate_emissions(cfg, 100_000, seed=0)
        assert len(photons) == 100_000
        assert np.unique(photons.pulse_index).size == 100_000

    def test_byte_exact_determinism(self):
        cfg = EmitterConfig(t1=300.0, epsilon=0.01, sigma_detuning=1e-3)
        a = simulate.generate_emissions(cfg, 50_000, seed=5)
        b = simulate.generate_emissions(cfg, 50_000, seed=5)
        assert _digest(a.emit_t, a.origin_t, a.detuning, a.pulse_index) == \
            _digest(b.emit_t, b.origin_t, b.detuning, b.pulse_index)
        c = simulate.generate_emissions(cfg, 50_000, seed=6)
        assert not np.array_equal(a.emit_t, c.emit_t)

    def test_pulse_ranges_concatenate_to_full_run(self):
        cfg = EmitterConfig(t1=300.0, epsilon=0.02, sigma_detuning=5e-4)
        n = 300_000
        full = simulate.generate_emissions(cfg, 2 * n, seed=9)
        head = simulate.generate_emissions(cfg, n, seed=9)
        tail = simulate.generate_emissions(cfg, n, seed=9, first_pulse=n)
        cat = Photons.concatenate([head, tail]).sorted_by_emit()
        assert np.array_equal(full.emit_t, cat.emit_t)
        assert np.array_equal(full.detuning, cat.detuning)
        assert np.all(np.diff(cat.emit_t) >= 0)

    def test_no_double_emission_without_reexcitation(self):
        cfg = EmitterConfig(t1=300.0, epsilon=0.0)
        photons = simulate.generate_emissions(cfg, 200_000, seed=1)
        counts = np.bincount(photons.pulse_index)
        assert counts.max() == 1

    def test_second_photon_rate_matches_epsilon(self):
        cfg = EmitterConfig(t1=300.0, epsilon=0.05)
        photons = simulate.generate_emissions(cfg, 200_000, seed=2)
        doubles = int(len(photons)) - 200_000
        assert doubles == pytest.approx(0.05 * 200_000, rel=0.05)

    def test_emission_delays_are_exponential_with_t1(self):
        cfg = EmitterConfig(t1=450.0)
        photons = simulate.generate_emissions(cfg, 100_000, seed=3)
        delays = photons.emit_t - photons.pulse_index * cfg.pulse_period
        # exponential MLE is the sample mean
        assert delays.mean() == pytest.approx(450.0, rel=0.02)

    def test_detuning_spread(self):
        cfg = EmitterConfig(t1=300.0, sigma_detuning=2e-3)
        photons = simulate.generate_emissions(cfg, 100_000, seed=4)
        assert photons.detuning.std() == pytest.approx(2e-3, rel=0.02)

    def test_refill_delays_second_photon_from_pulse(self):
        cfg = EmitterConfig(t1=300.0, epsilon=0.5, refill_tau=5_000.0)
        photons = simulate.generate_emissions(cfg, 50_000, seed=5)
        order = np.lexsort((photons.origin_t, photons.pulse_index))
        idx = photons.pulse_index[order]
        seconds = order[np.nonzero(np.diff(idx) == 0)[0] + 1]
        waits = photons.origin_t[seconds] - photons.pulse_index[seconds] * cfg.pulse_period
        assert waits.mean() == pytest.approx(5_000.0, rel=0.05)

    def test_rejects_zero_pulses(self):
        with pytest.raises(ConfigError):
            simulate.generate_emissions(EmitterConfig(), 0, seed=0)


class TestEpsilonForG2:
    @pytest.mark.parametrize("target", [0.0, 0.008, 0.017, 0.194, 0.4])
    def test_round_trips_through_photon_statistics(self, target):
        eps = simulate.epsilon_for_g2(target)
        assert 2 * eps / (1 + eps) ** 2 == pytest.approx(target, abs=1e-12)

    @pytest.mark.parametrize("target", [-0.01, 0.5, 0.9])
    def test_domain(self, target):
        with pytest.raises(ConfigError):
            simulate.epsilon_for_g2(target)


class TestPairOverlap:
    def _record(self, origin, detuning, gamma=1 / 300):
        return PhotonRecord(0, origin, origin, gamma, detuning, 0)

    def test_identical_wavepackets(self):
        assert simulate.pair_overlap(self._record(0, 0.0), self._record(0, 0.0)) == 1.0

    def test_orthogonal_polarization_kills_overlap(self):
        m = simulate.pair_overlap(self._record(0, 0.0), self._record(0, 0.0),
                                  polarization="orthogonal")
        assert m == 0.0

    def test_detuning_equal_to_gamma_halves_overlap(self):
        gamma = 1 / 300
        m = simulate.pair_overlap(self._record(0, 0.0, gamma),
                                  self._record(0, gamma, gamma))
        assert m == pytest.approx(0.5, abs=1e-12)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            gamma = rng.uniform(1e-3, 1e-2)
            p1 = self._record(int(rng.integers(-2_000, 2_000)), rng.normal(0, 5e-3), gamma)
            p2 = self._record(int(rng.integers(-2_000, 2_000)), rng.normal(0, 5e-3), gamma)
            m12 = simulate.pair_overlap(p1, p2)
            m21 = simulate.pair_overlap(p2, p1)
            assert m12 == pytest.approx(m21, rel=1e-12)
            assert 0.0 <= m12 <= 1.0

    def test_matches_wavepacket_inner_product_quadrature(self):
        rng = np.random.default_rng(1)
        for _ in range(8):
            gamma = rng.uniform(2e-3, 8e-3)
            dt = float(rng.integers(0, 600))
            dw = rng.uniform(-3 * gamma, 3 * gamma)

            def product(t, part):
                amp = gamma * np.exp(-gamma * (t - 0) / 2) * np.exp(-gamma * (t - dt) / 2)
                return amp * part(dw * t)

            lo = max(0.0, dt)
            hi = lo + 250 / gamma
            re = quad(lambda t: product(t, np.cos), lo, hi, limit=400)[0]
            im = quad(lambda t: product(t, np.sin), lo, hi, limit=400)[0]
            expected = re**2 + im**2
            got = simulate.pair_overlap(self._record(0, 0.0, gamma),
                                        self._record(int(dt), dw, gamma))
            assert got == pytest.approx(expected, rel=1e-7)

    def test_gamma_mismatch_rejected(self):
        with pytest.raises(DataError):
            simulate.pair_overlap(self._record(0, 0.0, 1 / 300),
                                  self._record(0, 0.0, 1 / 400))


class TestRouteDemux:
    def test_parity_split_and_delay(self):
        photons = Photons([0, 1, 2, 3], [0, 12_500, 25_000, 37_500],
                          [10, 12_510, 25_010, 37_510], [0.0] * 4, [0] * 4, 1 / 300)
        arm1, arm2 = simulate.route_demux(photons, OpticsConfig())
        assert arm1.pulse_index.tolist() == [0, 2]
        assert arm2.pulse_index.tolist() == [1, 3]
        # odd arm is delayed by one pulse period on both time columns
        assert arm2.origin_t.tolist() == [25_000, 50_000]
        assert arm2.emit_t.tolist() == [25_010, 50_010]

    def test_empty_input(self):
        arm1, arm2 = simulate.route_demux(Photons.empty(), OpticsConfig())
        assert len(arm1) == 0 and len(arm2) == 0

    def test_unsorted_input_rejected(self):
        photons = Photons([0, 1], [0, 0], [100, 50], [0.0, 0.0], [0, 0], 1.0)
        with pytest.raises(DataError):
            simulate.route_demux(photons, OpticsConfig())


def _hom_pairs(n_slots, detuning=0.0, gamma=1 / 300):
    """One photon per arm per slot, perfectly overlapped unless detuned."""
    odd = np.arange(1, 2 * n_slots, 2)
    even = odd + 1
    period = 12_500
    arm1 = Photons(even, even * period, even * period + 30,
                   np.zeros(n_slots), np.zeros(n_slots, np.uint8), gamma)
    arm2 = Photons(odd, odd * period + period, odd * period + period + 30,
                   np.full(n_slots, detuning), np.zeros(n_slots, np.uint8), gamma)
    return arm1, arm2


class TestBeamsplitter:
    def test_hbt_requires_empty_second_arm(self):
        arm1, arm2 = _hom_pairs(10)
        with pytest.raises(TopologyError):
            simulate.beamsplitter(arm1, arm2, OpticsConfig(mode="hbt"), seed=0)

    def test_hbt_routing_follows_splitter_ratio(self):
        arm1, _ = _hom_pairs(20_000)
        optics = OpticsConfig(mode="hbt", splitter_ratio=0.3)
        _, ch = simulate.beamsplitter(arm1, Photons.empty(arm1.gamma), optics, seed=1)
        assert (ch == 0).mean() == pytest.approx(0.3, abs=0.01)

    def test_perfect_overlap_never_coincides(self):
        arm1, arm2 = _hom_pairs(5_000)
        combined, ch = simulate.beamsplitter(arm1, arm2, OpticsConfig(mode="hom"), seed=2)
        slots = (combined.pulse_index + 1) // 2
        for s in np.unique(slots):
            pair = ch[slots == s]
            assert pair[0] == pair[1]

    def test_orthogonal_pairs_coincide_half_the_time(self):
        arm1, arm2 = _hom_pairs(20_000)
        optics = OpticsConfig(mode="hom", polarization="orthogonal")
        combined, ch = simulate.beamsplitter(arm1, arm2, optics, seed=3)
        slots = (combined.pulse_index + 1) // 2
        order = np.argsort(slots, kind="stable")
        a = ch[order][0::2]
        b = ch[order][1::2]
        assert (a != b).mean() == pytest.approx(0.5, abs=0.015)

    def test_empty_arms(self):
        combined, ch = simulate.beamsplitter(Photons.empty(), Photons.empty(),
                                             OpticsConfig(mode="hom"), seed=0)
        assert len(combined) == 0 and ch.size == 0


class TestDetect:
    def _photons(self, times):
        times = np.asarray(times, np.int64)
        n = times.size
        return Photons(np.arange(n), times, times, np.zeros(n), np.zeros(n, np.uint8),
                       1 / 300)

    def test_ideal_detector_passes_tags_through(self):
        times = np.array([10, 500, 90_000])
        stream, stats = simulate.detect(self._photons(times), np.array([0, 1, 0]),
                                        DetectorConfig(), duration=100_000, seed=0)
        assert stream.times.tolist() == [10, 500, 90_000]
        assert stream.channels.tolist() == [0, 1, 0]
        assert stats.photon_tags == 3 and stats.dark_tags == 0

    def test_dark_counts_are_poisson(self):
        det = DetectorConfig(dark_rate=100.0)
        stream, stats = simulate.detect(Photons.empty(), np.empty(0, np.uint8), det,
                                        duration=int(1e12), seed=4)
        per_channel = [int((stream.channels == c).sum()) for c in (0, 1)]
        for n in per_channel:
            assert 60 <= n <= 140  # ~100 +- 3*sqrt(100)

    def test_dead_time_enforced_exactly(self):
        times = np.array([0, 10_000, 20_001, 25_000, 80_000])
        det = DetectorConfig(dead_time=20_000.0)
        stream, stats = simulate.detect(self._photons(times),
                                        np.zeros(5, np.uint8), det,
                                        duration=100_000, seed=0)
        assert stream.times.tolist() == [0, 20_001, 80_000]
        assert stats.dead_time_discarded == 2
        gaps = np.diff(stream.times)
        assert (gaps >= 20_000).all()

    def test_negative_jitter_clamped_and_counted(self):
        det = DetectorConfig(jitter_sigma=500.0)
        stream, stats = simulate.detect(self._photons([3] * 2_000),
                                        np.zeros(2_000, np.uint8), det,
                                        duration=10_000, seed=5)
        assert stats.clamped_negative > 0
        assert stream.times.min() == 0

    def test_efficiency_thins_stream(self):
        det = DetectorConfig(efficiency=0.25)
        stream, _ = simulate.detect(self._photons(np.arange(40_000) * 100),
                                    np.zeros(40_000, np.uint8), det,
                                    duration=4_000_000, seed=6)
        assert len(stream) == pytest.approx(10_000, rel=0.05)

    def test_duration_must_cover_photons(self):
        with pytest.raises(DataError):
            simulate.detect(self._photons([100, 2_000]), np.zeros(2, np.uint8),
                            DetectorConfig(), duration=1_000, seed=0)


class TestSimulateExperiment:
    def test_worker_count_does_not_change_stream(self):
        cfg = ExperimentConfig(
            emitter=EmitterConfig(t1=300.0, epsilon=0.01, sigma_detuning=1e-3),
            optics=OpticsConfig(mode="hom"),
            detector=DetectorConfig(efficiency=0.8, jitter_sigma=20.0, dark_rate=200.0),
        )
        streams = [simulate.simulate_experiment(cfg, 120_000, seed=8, workers=w)[0]
                   for w in (1, 3)]
        assert _digest(streams[0].channels, streams[0].times) == \
            _digest(streams[1].channels, streams[1].times)

    def test_output_is_sorted_and_two_channel(self):
        cfg = ExperimentConfig(optics=OpticsConfig(mode="hbt"))
        stream, _ = simulate.simulate_experiment(cfg, 50_000, seed=0)
        stream.check_sorted()
        assert stream.channel_count == 2
        assert set(np.unique(stream.channels)) <= {0, 1}

    def test_hbt_keeps_even_pulses_only(self):
        cfg = ExperimentConfig(
            emitter=EmitterConfig(t1=300.0),
            optics=OpticsConfig(mode="hbt"),
            detector=DetectorConfig(),
        )
        stream, stats = simulate.simulate_experiment(cfg, 100_000, seed=1)
        # odd-pulse photons are lost at the blocked input
        assert stats.photon_tags == len(stream)
        assert len(stream) == 50_000
        assert (np.sort(stream.times % 25_000) < 12_500).all()
