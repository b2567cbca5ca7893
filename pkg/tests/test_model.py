import numpy as np
import pytest

from photonstats.model import (
    ConfigError,
    DataError,
    DetectorConfig,
    EmitterConfig,
    Histogram,
    LossBudget,
    MetricResult,
    OpticsConfig,
    PeakAreas,
    Photons,
    TagStream,
    TimeTag,
)


class TestConfigs:
    def test_defaults_valid(self):
        EmitterConfig()
        OpticsConfig()
        DetectorConfig()

    def test_pulse_period_is_integer_ps(self):
        assert EmitterConfig(rep_rate=80e6).pulse_period == 12_500

    @pytest.mark.parametrize("kwargs", [
        dict(t1=0.0),
        dict(t1=-5.0),
        dict(p_exc=1.5),
        dict(epsilon=-0.1),
        dict(rep_rate=0.0),
        dict(blink_strength=-1.0),
        dict(blink_strength=1.0, blink_tau=0.0),
        dict(sigma_detuning=-1e-3),
        dict(refill_tau=0.0),
    ])
    def test_emitter_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            EmitterConfig(**kwargs)

    @pytest.mark.parametrize("kwargs", [
        dict(mode="xyz"),
        dict(polarization="diagonal"),
        dict(splitter_ratio=0.0),
        dict(splitter_ratio=1.0),
        dict(demux_period=0),
    ])
    def test_optics_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            OpticsConfig(**kwargs)

    def test_optics_warns_on_mismatched_arm_delay(self):
        with pytest.warns(UserWarning):
            OpticsConfig(arm_delay=10_000)

    @pytest.mark.parametrize("kwargs", [
        dict(efficiency=1.2),
        dict(efficiency=-0.1),
        dict(jitter_sigma=-1.0),
        dict(dead_time=-1.0),
        dict(dark_rate=-1.0),
    ])
    def test_detector_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            DetectorConfig(**kwargs)


class TestTagStream:
    def test_getitem_returns_timetag(self):
        s = TagStream([0, 1], [5, 9], 2)
        assert s[1] == TimeTag(1, 9)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            TagStream([0, 1], [5], 2)

    def test_channel_out_of_range(self):
        with pytest.raises(DataError, match="channel 3"):
            TagStream([0, 3], [1, 2], 2)

    def test_check_sorted_names_index(self):
        s = TagStream([0, 0, 0], [5, 9, 7], 2)
        with pytest.raises(DataError, match="index 2"):
            s.check_sorted()

    def test_sorted_orders_by_time_then_channel(self):
        s = TagStream([1, 0, 1], [9, 9, 2], 2).sorted()
        assert s.times.tolist() == [2, 9, 9]
        assert s.channels.tolist() == [1, 0, 1]

    def test_concatenate(self):
        a = TagStream([0], [1], 2)
        b = TagStream([1], [4], 2)
        c = TagStream.concatenate([a, b])
        assert len(c) == 2 and c.times.tolist() == [1, 4]


class TestHistogram:
    def _random(self, rng):
        return Histogram(10, -100, rng.integers(0, 1000, 20).astype(np.uint64))

    def test_total_entries(self):
        h = Histogram(1, 0, [1, 2, 3])
        assert h.total_entries == 6

    def test_merge_is_elementwise_sum(self):
        rng = np.random.default_rng(0)
        a, b = self._random(rng), self._random(rng)
        merged = a.merge(b)
        assert np.array_equal(merged.counts, a.counts + b.counts)
        assert merged.total_entries == a.total_entries + b.total_entries

    def test_merge_commutative_and_associative(self):
        rng = np.random.default_rng(1)
        a, b, c = (self._random(rng) for _ in range(3))
        assert a.merge(b) == b.merge(a)
        assert a.merge(b).merge(c) == a.merge(b.merge(c))

    def test_merge_identity(self):
        rng = np.random.default_rng(2)
        a = self._random(rng)
        zero = Histogram.zeros(10, -100, 20)
        assert a.merge(zero) == a

    def test_merge_shape_mismatch(self):
        a = Histogram(10, 0, np.zeros(5, np.uint64))
        for bad in (Histogram(20, 0, np.zeros(5, np.uint64)),
                    Histogram(10, 10, np.zeros(5, np.uint64)),
                    Histogram(10, 0, np.zeros(6, np.uint64))):
            with pytest.raises(DataError, match="mismatch"):
                a.merge(bad)

    def test_edges_and_span(self):
        h = Histogram(100, -300, np.zeros(6, np.uint64))
        assert h.span == (-300, 300)
        assert h.left_edges().tolist() == [-300, -200, -100, 0, 100, 200]

    def test_rejects_zero_bin_width(self):
        with pytest.raises(ConfigError):
            Histogram(0, 0, [1])


class TestPeakAreas:
    def _peaks(self):
        centers = np.array([-50_000, -25_000, 0, 25_000, 50_000])
        areas = np.array([10, 20, 3, 22, 11])
        return PeakAreas(centers, areas, np.sqrt(areas), 3_000)

    def test_center_and_sides(self):
        p = self._peaks()
        assert p.center_area == 3
        assert p.side().areas.tolist() == [10, 20, 22, 11]
        assert sorted(p.innermost_side().areas.tolist()) == [20, 22]

    def test_errors_are_sqrt_of_areas(self):
        p = self._peaks()
        assert np.allclose(p.errors, np.sqrt(p.areas))

    def test_missing_center(self):
        p = PeakAreas([25_000], [5], [np.sqrt(5)], 3_000)
        with pytest.raises(DataError):
            _ = p.center_area

    def test_window_must_be_positive(self):
        with pytest.raises(ConfigError):
            PeakAreas([0], [1], [1.0], 0)


class TestMetricResult:
    def test_rejects_negative_sigma(self):
        with pytest.raises(ConfigError):
            MetricResult(1.0, -0.1)

    def test_as_dict(self):
        assert MetricResult(0.5, 0.1).as_dict() == {"value": 0.5, "sigma": 0.1}


class TestLossBudget:
    def test_rejects_out_of_range_transmission(self):
        for bad in (0.0, 1.2, -0.5):
            with pytest.raises(ConfigError):
                LossBudget([("x", bad)], 1e5, 80e6)

    def test_accepts_unity(self):
        LossBudget([("x", 1.0)], 1e5, 80e6)


class TestPhotons:
    def _photons(self):
        return Photons([0, 1], [0, 12_500], [50, 12_600], [0.1, -0.2], [0, 0], 1 / 300)

    def test_record_view(self):
        p = self._photons()[1]
        assert p.pulse_index == 1 and p.emit_t == 12_600 and p.pol == 0

    def test_shifted_moves_both_time_columns(self):
        p = self._photons().shifted(100)
        assert p.origin_t.tolist() == [100, 12_600]
        assert p.emit_t.tolist() == [150, 12_700]

    def test_concatenate_rejects_mixed_gamma(self):
        a = self._photons()
        b = Photons([2], [0], [1], [0.0], [0], 1 / 400)
        with pytest.raises(DataError):
            Photons.concatenate([a, b])

    def test_sorted_by_emit(self):
        p = Photons([0, 1], [0, 0], [90, 10], [0.0, 0.0], [0, 0], 1.0).sorted_by_emit()
        assert p.emit_t.tolist() == [10, 90]
