"""Domain types shared by the simulator and the analysis pipeline.

Everything time-like is an integer number of picoseconds. Detection streams,
histograms and peak areas never hold floating-point times; this keeps
cross-checks against brute-force oracles exact and matches what time-tagging
hardware produces.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

PS_PER_SECOND = 1_000_000_000_000

HBT = "hbt"
HOM = "hom"
PARALLEL = "parallel"
ORTHOGONAL = "orthogonal"

POL_H = 0
POL_V = 1


class ConfigError(ValueError):
    """Invalid configuration or parameters. CLI exit code 2."""

    exit_code = 2


class DataError(ValueError):
    """Invalid or insufficient input data. CLI exit code 3."""

    exit_code = 3


class TopologyError(DataError):
    """Photons routed into an optical topology that cannot accept them."""


class MetricError(DataError):
    """A figure of merit is undefined for the given inputs."""


class FitError(RuntimeError):
    """Nonlinear fit failed to converge. CLI exit code 4."""

    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TimeTag(NamedTuple):
    """One detection event: detector channel and picosecond timestamp."""

    channel: int
    t: int


@dataclass
class TagStream:
    """A time-ordered detection record.

    ``times`` is non-decreasing (ties across channels allowed) and every
    channel index is below ``channel_count``.
    """

    channels: np.ndarray
    times: np.ndarray
    channel_count: int = 2

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        self.times = np.asarray(self.times, dtype=np.int64)
        if self.channels.shape != self.times.shape:
            raise DataError("channel and time arrays differ in length")
        if self.channels.size and int(self.channels.max()) >= self.channel_count:
            raise DataError(
                f"channel {int(self.channels.max())} out of range "
                f"(channel_count={self.channel_count})"
            )

    def __len__(self):
        return self.times.size

    def __getitem__(self, i) -> TimeTag:
        return TimeTag(int(self.channels[i]), int(self.times[i]))

    def check_sorted(self):
        """Raise DataError naming the first out-of-order index."""
        bad = np.nonzero(np.diff(self.times) < 0)[0]
        if bad.size:
            raise DataError(f"stream not sorted by time at index {int(bad[0]) + 1}")

    def channel_times(self, channel) -> np.ndarray:
        return self.times[self.channels == channel]

    def sorted(self) -> "TagStream":
        order = np.lexsort((self.channels, self.times))
        return TagStream(self.channels[order], self.times[order], self.channel_count)

    @classmethod
    def empty(cls, channel_count=2) -> "TagStream":
        return cls(np.empty(0, np.uint8), np.empty(0, np.int64), channel_count)

    @classmethod
    def concatenate(cls, streams) -> "TagStream":
        streams = list(streams)
        if not streams:
            return cls.empty()
        n_ch = max(s.channel_count for s in streams)
        return cls(
            np.concatenate([s.channels for s in streams]),
            np.concatenate([s.times for s in streams]),
            n_ch,
        )


def _check_unit_interval(name, value):
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must be in [0, 1], got {value!r}")


@dataclass(frozen=True)
class EmitterConfig:
    """Pulsed emitter parameters.

    rep_rate        pulse repetition rate in Hz
    p_exc           excitation probability per pulse while the emitter is on
    t1              excited-state lifetime in ps
    epsilon         probability of a second (re-excited) photon per excited pulse
    blink_strength  dark/bright weight ratio of the on-off intermittency;
                    0 disables blinking, stationary on-fraction is 1/(1+strength)
    blink_tau       intermittency timescale in ps (total switching rate 1/blink_tau)
    sigma_detuning  std dev of the per-photon angular frequency offset, rad/ps
    refill_tau      when set, the re-excited photon is delayed by an extra
                    Exp(refill_tau) from the pulse instead of following the
                    first emission; reproduces a slowly decaying pedestal
                    around zero delay
    """

    rep_rate: float = 80e6
    p_exc: float = 1.0
    t1: float = 300.0
    epsilon: float = 0.0
    blink_strength: float = 0.0
    blink_tau: float = 294_000.0
    sigma_detuning: float = 0.0
    refill_tau: float | None = None

    def __post_init__(self):
        if self.rep_rate <= 0:
            raise ConfigError(f"rep_rate must be positive, got {self.rep_rate!r}")
        _check_unit_interval("p_exc", self.p_exc)
        _check_unit_interval("epsilon", self.epsilon)
        if self.t1 <= 0:
            raise ConfigError(f"t1 must be positive, got {self.t1!r}")
        if self.blink_strength < 0:
            raise ConfigError("blink_strength must be >= 0")
        if self.blink_strength > 0 and self.blink_tau <= 0:
            raise ConfigError("blink_tau must be positive when blinking is enabled")
        if self.sigma_detuning < 0:
            raise ConfigError("sigma_detuning must be >= 0")
        if self.refill_tau is not None and self.refill_tau <= 0:
            raise ConfigError("refill_tau must be positive when set")

    @property
    def pulse_period(self) -> int:
        """Pulse spacing in integer ps."""
        period = PS_PER_SECOND / self.rep_rate
        rounded = int(round(period))
        if abs(period - rounded) > 1e-6:
            warnings.warn(
                f"rep_rate {self.rep_rate} Hz does not give an integer ps period; "
                f"rounding {period} to {rounded}",
                stacklevel=2,
            )
        return rounded

    @property
    def gamma(self) -> float:
        """Decay rate 1/t1 in 1/ps."""
        return 1.0 / self.t1


@dataclass(frozen=True)
class OpticsConfig:
    """Demultiplexer plus interference-splitter topology.

    mode          "hbt" (one splitter input blocked) or "hom"
    polarization  relative polarization of the two splitter inputs (HOM only)
    demux_period  full demultiplexer cycle in ps (two pulse periods)
    arm_delay     extra path delay on the odd-pulse arm in ps; one pulse
                  period makes consecutive photons meet at the splitter
    splitter_ratio  transmission of the interference splitter
    """

    mode: str = HBT
    polarization: str = PARALLEL
    demux_period: int = 25_000
    arm_delay: int = 12_500
    splitter_ratio: float = 0.5

    def __post_init__(self):
        if self.mode not in (HBT, HOM):
            raise ConfigError(f"mode must be '{HBT}' or '{HOM}', got {self.mode!r}")
        if self.polarization not in (PARALLEL, ORTHOGONAL):
            raise ConfigError(
                f"polarization must be '{PARALLEL}' or '{ORTHOGONAL}', "
                f"got {self.polarization!r}"
            )
        if self.demux_period <= 0 or self.arm_delay < 0:
            raise ConfigError("demux_period must be > 0 and arm_delay >= 0")
        if not 0.0 < self.splitter_ratio < 1.0:
            raise ConfigError("splitter_ratio must be in (0, 1)")
        if self.arm_delay != self.demux_period // 2:
            warnings.warn(
                f"arm_delay {self.arm_delay} ps is not half the demux period "
                f"{self.demux_period} ps; consecutive photons will not meet at "
                "the splitter",
                stacklevel=2,
            )


@dataclass(frozen=True)
class DetectorConfig:
    """Single-photon detector imperfections (applied per output channel)."""

    efficiency: float = 1.0
    jitter_sigma: float = 0.0
    dead_time: float = 0.0
    dark_rate: float = 0.0

    def __post_init__(self):
        _check_unit_interval("efficiency", self.efficiency)
        if self.jitter_sigma < 0 or self.dead_time < 0 or self.dark_rate < 0:
            raise ConfigError("jitter_sigma, dead_time and dark_rate must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulated run: emitter, optics and detector together."""

    emitter: EmitterConfig = field(default_factory=EmitterConfig)
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    scheme: str | None = None


class PhotonRecord(NamedTuple):
    """One emitted photon.

    origin_t is the start of the wavepacket (excitation time); emit_t is the
    moment the photon would be registered, origin plus the exponential decay
    draw. Interference visibilities depend on origin_t, detection times on
    emit_t.
    """

    pulse_index: int
    origin_t: int
    emit_t: int
    gamma: float
    detuning: float
    pol: int


@dataclass
class Photons:
    """Columnar batch of PhotonRecords sharing one decay rate."""

    pulse_index: np.ndarray
    origin_t: np.ndarray
    emit_t: np.ndarray
    detuning: np.ndarray
    pol: np.ndarray
    gamma: float

    def __post_init__(self):
        self.pulse_index = np.asarray(self.pulse_index, dtype=np.int64)
        self.origin_t = np.asarray(self.origin_t, dtype=np.int64)
        self.emit_t = np.asarray(self.emit_t, dtype=np.int64)
        self.detuning = np.asarray(self.detuning, dtype=np.float64)
        self.pol = np.asarray(self.pol, dtype=np.uint8)

    def __len__(self):
        return self.emit_t.size

    def __getitem__(self, i) -> PhotonRecord:
        return PhotonRecord(
            int(self.pulse_index[i]),
            int(self.origin_t[i]),
            int(self.emit_t[i]),
            self.gamma,
            float(self.detuning[i]),
            int(self.pol[i]),
        )

    def take(self, index) -> "Photons":
        return Photons(
            self.pulse_index[index],
            self.origin_t[index],
            self.emit_t[index],
            self.detuning[index],
            self.pol[index],
            self.gamma,
        )

    def shifted(self, delay: int) -> "Photons":
        """Copy with both time columns moved by ``delay`` ps."""
        return Photons(
            self.pulse_index,
            self.origin_t + int(delay),
            self.emit_t + int(delay),
            self.detuning,
            self.pol,
            self.gamma,
        )

    def sorted_by_emit(self) -> "Photons":
        return self.take(np.argsort(self.emit_t, kind="stable"))

    @classmethod
    def empty(cls, gamma=1.0) -> "Photons":
        z = np.empty(0, np.int64)
        return cls(z, z.copy(), z.copy(), np.empty(0, np.float64), np.empty(0, np.uint8), gamma)

    @classmethod
    def concatenate(cls, batches) -> "Photons":
        batches = list(batches)
        if not batches:
            return cls.empty()
        gammas = {b.gamma for b in batches if len(b)}
        if len(gammas) > 1:
            raise DataError("cannot concatenate photon batches with different decay rates")
        gamma = gammas.pop() if gammas else batches[0].gamma
        return cls(
            np.concatenate([b.pulse_index for b in batches]),
            np.concatenate([b.origin_t for b in batches]),
            np.concatenate([b.emit_t for b in batches]),
            np.concatenate([b.detuning for b in batches]),
            np.concatenate([b.pol for b in batches]),
            gamma,
        )


@dataclass(eq=False)
class Histogram:
    """Fixed-bin-width counting histogram over integer picosecond delays.

    Bin j covers [origin + j*bin_width, origin + (j+1)*bin_width).
    """

    bin_width: int
    origin: int
    counts: np.ndarray

    def __post_init__(self):
        if self.bin_width < 1:
            raise ConfigError(f"bin_width must be >= 1 ps, got {self.bin_width!r}")
        self.counts = np.asarray(self.counts, dtype=np.uint64)

    @property
    def n_bins(self) -> int:
        return self.counts.size

    @property
    def total_entries(self) -> int:
        return int(self.counts.sum())

    @property
    def span(self) -> tuple[int, int]:
        """(lowest covered delay, one past highest covered delay)."""
        return self.origin, self.origin + self.bin_width * self.n_bins

    def left_edges(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(self.n_bins, dtype=np.int64)

    def centers(self) -> np.ndarray:
        return self.left_edges() + self.bin_width / 2.0

    def same_shape(self, other) -> bool:
        return (
            self.bin_width == other.bin_width
            and self.origin == other.origin
            and self.n_bins == other.n_bins
        )

    def merge(self, other: "Histogram") -> "Histogram":
        """Element-wise sum; requires identical binning."""
        if not self.same_shape(other):
            raise DataError(
                "histogram shape mismatch: "
                f"(bin_width={self.bin_width}, origin={self.origin}, n={self.n_bins}) vs "
                f"(bin_width={other.bin_width}, origin={other.origin}, n={other.n_bins})"
            )
        return Histogram(self.bin_width, self.origin, self.counts + other.counts)

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return self.same_shape(other) and bool(np.array_equal(self.counts, other.counts))

    @classmethod
    def zeros(cls, bin_width, origin, n_bins) -> "Histogram":
        return cls(bin_width, origin, np.zeros(n_bins, np.uint64))


@dataclass
class PeakAreas:
    """Integrated correlation-peak areas with Poisson errors.

    centers are the nominal peak delays in ps; errors are sqrt(areas).
    """

    centers: np.ndarray
    areas: np.ndarray
    errors: np.ndarray
    window: int

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.int64)
        self.areas = np.asarray(self.areas, dtype=np.int64)
        self.errors = np.asarray(self.errors, dtype=np.float64)
        if self.window <= 0:
            raise ConfigError("window must be positive")

    def __len__(self):
        return self.centers.size

    @property
    def center_area(self) -> int:
        """Area of the zero-delay peak."""
        idx = np.nonzero(self.centers == 0)[0]
        if not idx.size:
            raise DataError("no zero-delay peak present")
        return int(self.areas[idx[0]])

    def side(self) -> "PeakAreas":
        """All peaks away from zero delay."""
        keep = self.centers != 0
        return PeakAreas(self.centers[keep], self.areas[keep], self.errors[keep], self.window)

    def innermost_side(self) -> "PeakAreas":
        """The +/- pair of side peaks closest to zero delay."""
        side = self.side()
        if not len(side):
            raise DataError("no side peaks present")
        spacing = int(np.min(np.abs(side.centers)))
        keep = np.abs(side.centers) == spacing
        return PeakAreas(side.centers[keep], side.areas[keep], side.errors[keep], self.window)


@dataclass
class MetricResult:
    """Scalar figure of merit with a propagated 1-sigma uncertainty."""

    value: float
    sigma: float

    def __post_init__(self):
        self.value = float(self.value)
        self.sigma = float(self.sigma)
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")

    def as_dict(self) -> dict:
        return {"value": self.value, "sigma": self.sigma}

    def __str__(self):
        return f"{self.value:.6g} +/- {self.sigma:.2g}"


@dataclass
class LossBudget:
    """Ordered optical-path transmissions plus the measured click rate."""

    components: list[tuple[str, float]]
    measured_click_rate: float
    rep_rate: float

    def __post_init__(self):
        for name, transmission in self.components:
            if not 0.0 < transmission <= 1.0:
                raise ConfigError(
                    f"transmission for {name!r} must be in (0, 1], got {transmission!r}"
                )
        if self.rep_rate <= 0:
            raise ConfigError("rep_rate must be positive")
        if self.measured_click_rate < 0:
            raise ConfigError("measured_click_rate must be >= 0")
