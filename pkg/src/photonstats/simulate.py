"""Monte Carlo generation of detection streams for the two splitter topologies.

Randomness is organized as counter-based substreams keyed on
(seed, stage, block): emission draws for a block of pulses never depend on
which worker produced them or on how a run was chunked, so a fixed
(config, seed) pair always yields a bit-identical stream.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .model import (
    HBT,
    HOM,
    PARALLEL,
    ConfigError,
    DataError,
    DetectorConfig,
    ExperimentConfig,
    Photons,
    TagStream,
    TopologyError,
)

# pulses per RNG block; emission draws are made for whole blocks keyed by the
# global block index, so any pulse range [a, b) reproduces the same photons
BLOCK_PULSES = 1 << 18

_STAGE_BLINK = 1
_STAGE_PULSE = 2
_STAGE_SPLIT = 3
_STAGE_DETECT = 4
_STAGE_CHUNK = 5


def _substream(seed, *key) -> np.random.Generator:
    entropy = (int(seed),) + tuple(int(k) for k in key)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _derived_seed(seed, stage, index) -> int:
    ss = np.random.SeedSequence((int(seed), int(stage), int(index)))
    return int(ss.generate_state(1, np.uint64)[0])


def default_workers() -> int:
    value = os.environ.get("PHOTONSTATS_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# emitter intermittency


@dataclass
class Telegraph:
    """Piecewise-constant on/off trajectory with exponential dwell times."""

    switch_times: np.ndarray
    initial_on: bool
    duration: float

    def state_at(self, t):
        """True where the emitter is bright; t may be scalar or array."""
        flips = np.searchsorted(self.switch_times, t, side="right")
        return (flips % 2 == 0) == self.initial_on

    def on_fraction(self) -> float:
        edges = np.concatenate(([0.0], self.switch_times, [self.duration]))
        seg = np.diff(edges)
        on = (np.arange(seg.size) % 2 == 0) == self.initial_on
        return float(seg[on].sum() / self.duration)

    def sample(self, dt) -> np.ndarray:
        """State on the regular grid 0, dt, 2*dt, ... inside the duration."""
        grid = np.arange(0.0, self.duration, dt)
        return self.state_at(grid)


def blinking_trajectory(a, tau_b, duration, seed) -> Telegraph:
    """Two-state telegraph process for the emitter's bright/dark switching.

    The stationary on-probability is 1/(1+a) and the total switching rate
    1/tau_b, which makes the normalized on-indicator autocorrelation
    1 + a*exp(-|t|/tau_b). a = 0 never leaves the bright state.
    """
    if a < 0:
        raise ConfigError(f"blinking strength must be >= 0, got {a!r}")
    if tau_b <= 0:
        raise ConfigError(f"blinking time must be positive, got {tau_b!r}")
    if duration <= 0:
        raise ConfigError("duration must be positive")
    rng = _substream(seed, _STAGE_BLINK)
    if a == 0:
        return Telegraph(np.empty(0, np.float64), True, float(duration))
    p_on = 1.0 / (1.0 + a)
    mean_on = tau_b / (1.0 - p_on)
    mean_off = tau_b / p_on
    initial_on = bool(rng.random() < p_on)

    pieces = []
    t = 0.0
    on = initial_on
    while t < duration:
        n = max(64, int(2.0 * (duration - t) / (mean_on + mean_off)) + 16)
        scales = np.empty(n)
        first, second = (mean_on, mean_off) if on else (mean_off, mean_on)
        scales[0::2] = first
        scales[1::2] = second
        cumulative = t + np.cumsum(rng.exponential(scales))
        inside = cumulative < duration
        pieces.append(cumulative[inside])
        if not inside.all():
            break
        t = cumulative[-1]
        if n % 2 == 1:
            on = not on
    switches = np.concatenate(pieces) if pieces else np.empty(0, np.float64)
    return Telegraph(switches, initial_on, float(duration))


# ---------------------------------------------------------------------------
# photon emission


def epsilon_for_g2(target) -> float:
    """Re-excitation probability giving a target zero-delay autocorrelation.

    Inverts g2 = 2*eps/(1+eps)^2 for the photon-number statistics
    P(1) = 1-eps, P(2) = eps; valid for targets below 0.5.
    """
    if not 0.0 <= target < 0.5:
        raise ConfigError(f"target g2 must be in [0, 0.5), got {target!r}")
    if target == 0.0:
        return 0.0
    return float((1.0 - target - np.sqrt(1.0 - 2.0 * target)) / target)


def generate_emissions(cfg, n_pulses, seed, first_pulse=0, trajectory=None) -> Photons:
    """Emit photons for pulses [first_pulse, first_pulse + n_pulses).

    Per excited pulse one photon starts at the pulse time with an Exp(t1)
    decay delay; with probability epsilon a second photon follows, its
    wavepacket starting at the first emission (or at pulse + Exp(refill_tau)
    when the slow-refill tail is enabled). Output is sorted by emission time
    and byte-exact for a fixed (cfg, seed).

    When a trajectory is passed it is read at absolute pulse times; otherwise
    one is created spanning this pulse range.
    """
    if n_pulses < 1:
        raise ConfigError(f"n_pulses must be >= 1, got {n_pulses!r}")
    period = cfg.pulse_period
    absolute_trajectory = trajectory is not None
    if trajectory is None and cfg.blink_strength > 0:
        trajectory = blinking_trajectory(
            cfg.blink_strength, cfg.blink_tau, n_pulses * period, seed
        )

    batches = []
    first_block = first_pulse // BLOCK_PULSES
    last_block = (first_pulse + n_pulses - 1) // BLOCK_PULSES
    for block in range(first_block, last_block + 1):
        lo = max(block * BLOCK_PULSES, first_pulse)
        hi = min((block + 1) * BLOCK_PULSES, first_pulse + n_pulses)
        batches.append(_emit_block(cfg, block, lo, hi, seed, trajectory,
                                   first_pulse, absolute_trajectory))
    return Photons.concatenate(batches).sorted_by_emit()


def _emit_block(cfg, block, lo, hi, seed, trajectory, first_pulse, absolute_trajectory):
    rng = _substream(seed, _STAGE_PULSE, block)
    period = cfg.pulse_period
    # whole-block draws keep results independent of the requested range
    u_exc = rng.random(BLOCK_PULSES)
    d1 = rng.exponential(cfg.t1, BLOCK_PULSES)
    z1 = rng.standard_normal(BLOCK_PULSES)
    u_second = rng.random(BLOCK_PULSES)
    d2 = rng.exponential(cfg.t1, BLOCK_PULSES)
    z2 = rng.standard_normal(BLOCK_PULSES)
    refill = rng.exponential(cfg.refill_tau, BLOCK_PULSES) if cfg.refill_tau else None

    sel = slice(lo - block * BLOCK_PULSES, hi - block * BLOCK_PULSES)
    pulses = np.arange(lo, hi, dtype=np.int64)
    pulse_t = pulses * period
    if trajectory is not None:
        query = pulse_t if absolute_trajectory else (pulses - first_pulse) * period
        on = trajectory.state_at(query)
    else:
        on = np.ones(pulses.size, bool)

    first_mask = on & (u_exc[sel] < cfg.p_exc)
    origin1 = pulse_t[first_mask]
    emit1 = origin1 + np.rint(d1[sel][first_mask]).astype(np.int64)
    det1 = z1[sel][first_mask] * cfg.sigma_detuning

    second_mask = first_mask & (u_second[sel] < cfg.epsilon)
    if cfg.refill_tau:
        origin2 = pulse_t[second_mask] + np.rint(refill[sel][second_mask]).astype(np.int64)
    else:
        # re-excitation: the second wavepacket starts when the first photon left
        emit1_full = pulse_t + np.rint(d1[sel]).astype(np.int64)
        origin2 = emit1_full[second_mask]
    emit2 = origin2 + np.rint(d2[sel][second_mask]).astype(np.int64)
    det2 = z2[sel][second_mask] * cfg.sigma_detuning

    return Photons(
        pulse_index=np.concatenate((pulses[first_mask], pulses[second_mask])),
        origin_t=np.concatenate((origin1, origin2)),
        emit_t=np.concatenate((emit1, emit2)),
        detuning=np.concatenate((det1, det2)),
        pol=np.zeros(first_mask.sum() + second_mask.sum(), np.uint8),
        gamma=cfg.gamma,
    )


# ---------------------------------------------------------------------------
# optics


def route_demux(photons: Photons, optics) -> tuple[Photons, Photons]:
    """Split photons by pulse parity: even pulses to arm 1, odd to arm 2.

    Arm 2 picks up the extra path delay so that consecutive photons meet at
    the interference splitter.
    """
    if len(photons) and np.any(np.diff(photons.emit_t) < 0):
        raise DataError("photons must be sorted by emission time")
    even = photons.pulse_index % 2 == 0
    return photons.take(even), photons.take(~even).shifted(optics.arm_delay)


def _overlap_arrays(gamma, dt, dw, pol_factor):
    return pol_factor * np.exp(-gamma * np.abs(dt)) * gamma**2 / (gamma**2 + dw**2)


def pair_overlap(p1, p2, polarization=PARALLEL) -> float:
    """Squared wavepacket overlap of two photons meeting at the splitter.

    Both wavepackets are one-sided exponentials with equal decay rate; the
    overlap is exp(-gamma*|dt|) * gamma^2/(gamma^2 + dw^2) for a start-time
    mismatch dt and frequency offset dw, and zero for orthogonal
    polarizations.
    """
    if p1.gamma != p2.gamma:
        raise DataError("pair overlap assumes equal decay rates")
    pol_factor = 1.0 if polarization == PARALLEL else 0.0
    dt = p2.origin_t - p1.origin_t
    dw = p2.detuning - p1.detuning
    return float(_overlap_arrays(p1.gamma, dt, dw, pol_factor))


def beamsplitter(arm1: Photons, arm2: Photons, optics, seed):
    """Assign every photon to one of the two splitter outputs.

    In the two-input topology, slots holding exactly one photon per arm
    interfere: the pair coincides with probability T^2 + R^2 - 2*T*R*m and
    bunches otherwise. Slots with any other occupancy route each photon
    independently. Returns the combined photons and their output channels.
    """
    ratio = optics.splitter_ratio
    rng = _substream(seed, _STAGE_SPLIT)
    if optics.mode == HBT:
        if len(arm2):
            raise TopologyError(
                "the single-input topology requires an empty second arm "
                f"(got {len(arm2)} photons)"
            )
        channels = (rng.random(len(arm1)) >= ratio).astype(np.uint8)
        return arm1, channels

    combined = Photons.concatenate([arm1, arm2])
    n1, n2 = len(arm1), len(arm2)
    arm = np.concatenate((np.zeros(n1, np.uint8), np.ones(n2, np.uint8)))
    channels = np.zeros(n1 + n2, np.uint8)
    if n1 + n2 == 0:
        return combined, channels

    # photons from pulses (2s-1, 2s) meet in slot s after the arm delay
    slot = (combined.pulse_index + 1) // 2
    uniq, inverse = np.unique(slot, return_inverse=True)
    occ1 = np.bincount(inverse[arm == 0], minlength=uniq.size)
    occ2 = np.bincount(inverse[arm == 1], minlength=uniq.size)
    interfering = (occ1 == 1) & (occ2 == 1)
    is_pair = interfering[inverse]

    i1 = np.nonzero(is_pair & (arm == 0))[0]
    i2 = np.nonzero(is_pair & (arm == 1))[0]
    i1 = i1[np.argsort(slot[i1], kind="stable")]
    i2 = i2[np.argsort(slot[i2], kind="stable")]

    t_ratio, r_ratio = ratio, 1.0 - ratio
    pol_factor = 1.0 if optics.polarization == PARALLEL else 0.0
    m = _overlap_arrays(
        combined.gamma,
        combined.origin_t[i2] - combined.origin_t[i1],
        combined.detuning[i2] - combined.detuning[i1],
        pol_factor,
    )
    p_coinc = t_ratio**2 + r_ratio**2 - 2.0 * t_ratio * r_ratio * m
    u_outcome = rng.random(i1.size)
    u_branch = rng.random(i1.size)
    coincide = u_outcome < p_coinc
    # relative weight of (arm1 photon transmitted) among coincidences
    with np.errstate(invalid="ignore", divide="ignore"):
        w_keep = np.where(p_coinc > 0, (t_ratio**2 - t_ratio * r_ratio * m) / p_coinc, 0.5)
    ch1 = np.where(
        coincide,
        np.where(u_branch < w_keep, 0, 1),
        np.where(u_branch < 0.5, 0, 1),
    ).astype(np.uint8)
    ch2 = np.where(coincide, 1 - ch1, ch1).astype(np.uint8)
    channels[i1] = ch1
    channels[i2] = ch2

    rest = np.nonzero(~is_pair)[0]
    if rest.size:
        p_out0 = np.where(arm[rest] == 0, t_ratio, r_ratio)
        channels[rest] = (rng.random(rest.size) >= p_out0).astype(np.uint8)
    return combined, channels


# ---------------------------------------------------------------------------
# detection


@dataclass
class DetectStats:
    """Bookkeeping from the detector stage."""

    photons_in: int = 0
    photon_tags: int = 0
    dark_tags: int = 0
    clamped_negative: int = 0
    dead_time_discarded: int = 0

    def merge(self, other: "DetectStats") -> "DetectStats":
        return DetectStats(
            *(getattr(self, f.name) + getattr(other, f.name) for f in fields(self))
        )

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _detector_list(detectors, channel_count):
    if isinstance(detectors, DetectorConfig):
        return [detectors] * channel_count
    detectors = list(detectors)
    if len(detectors) != channel_count:
        raise ConfigError(
            f"expected {channel_count} detector configs, got {len(detectors)}"
        )
    return detectors


def _detect_photons(photons, channels, det_list, rng):
    """Efficiency thinning plus timing jitter; returns tag arrays and stats."""
    stats = DetectStats(photons_in=len(photons))
    eff = np.array([d.efficiency for d in det_list])
    survive = rng.random(len(photons)) < eff[channels]
    t = photons.emit_t[survive]
    ch = channels[survive]
    jitter = np.array([d.jitter_sigma for d in det_list])[ch]
    t = t + np.rint(rng.standard_normal(t.size) * jitter).astype(np.int64)
    negative = t < 0
    stats.clamped_negative = int(negative.sum())
    t[negative] = 0
    stats.photon_tags = t.size
    return ch, t, stats


def _dark_tags(det_list, t_lo, t_hi, rng):
    """Homogeneous Poisson dark counts per channel over [t_lo, t_hi)."""
    chans, times = [], []
    span_s = (t_hi - t_lo) / 1e12
    for channel, det in enumerate(det_list):
        if det.dark_rate <= 0:
            continue
        n = rng.poisson(det.dark_rate * span_s)
        if n:
            chans.append(np.full(n, channel, np.uint8))
            times.append(rng.integers(t_lo, t_hi, n, dtype=np.int64))
    if not chans:
        return np.empty(0, np.uint8), np.empty(0, np.int64)
    return np.concatenate(chans), np.concatenate(times)


def _dead_time_keep(times, dead_time):
    """Mask of accepted events: each acceptance opens a dead window."""
    keep = np.ones(times.size, bool)
    last = None
    for i, t in enumerate(times):
        if last is not None and t - last < dead_time:
            keep[i] = False
        else:
            last = t
    return keep


def _apply_dead_time(channels, times, det_list):
    discarded = 0
    keep = np.ones(times.size, bool)
    for channel, det in enumerate(det_list):
        if det.dead_time <= 0:
            continue
        on_channel = np.nonzero(channels == channel)[0]
        mask = _dead_time_keep(times[on_channel], det.dead_time)
        keep[on_channel[~mask]] = False
        discarded += int((~mask).sum())
    return keep, discarded


def detect(photons: Photons, channels, detectors, duration, seed,
           channel_count=2) -> tuple[TagStream, DetectStats]:
    """Turn routed photons into a sorted detection stream.

    Applies per-channel efficiency, Gaussian timing jitter (rounded to
    integer ps, negatives clamped to zero and counted), adds Poisson dark
    counts over [0, duration), and discards events landing within a
    channel's dead time after an accepted event.
    """
    channels = np.asarray(channels, dtype=np.uint8)
    if len(photons) != channels.size:
        raise DataError("photon batch and channel assignment differ in length")
    if len(photons) and int(photons.emit_t.max()) > duration:
        raise DataError("duration does not cover all photon times")
    det_list = _detector_list(detectors, channel_count)
    rng = _substream(seed, _STAGE_DETECT)

    ch, t, stats = _detect_photons(photons, channels, det_list, rng)
    dark_ch, dark_t = _dark_tags(det_list, 0, int(duration), rng)
    stats.dark_tags = dark_t.size
    ch = np.concatenate((ch, dark_ch))
    t = np.concatenate((t, dark_t))

    order = np.lexsort((ch, t))
    ch, t = ch[order], t[order]
    keep, discarded = _apply_dead_time(ch, t, det_list)
    stats.dead_time_discarded = discarded
    return TagStream(ch[keep], t[keep], channel_count), stats


# ---------------------------------------------------------------------------
# full experiment


def _chunk_bounds(n_pulses, chunk_pulses):
    """Chunk ends fall on odd pulse indices so no interference slot is split."""
    bounds = [0]
    k = 1
    while bounds[-1] < n_pulses:
        end = min(n_pulses, k * chunk_pulses + 1)
        if end <= bounds[-1]:
            end = n_pulses
        bounds.append(end)
        k += 1
    return bounds


def simulate_experiment(config: ExperimentConfig, n_pulses, seed,
                        chunk_pulses=1 << 21, workers=None):
    """Run emitter -> demultiplexer -> splitter -> detectors end to end.

    Work proceeds in pulse chunks so memory stays bounded; chunk substreams
    are keyed by chunk index, which keeps the output identical for any
    worker count. Returns the sorted TagStream and aggregate DetectStats.
    """
    emitter, optics, detector = config.emitter, config.optics, config.detector
    period = emitter.pulse_period
    if optics.demux_period != 2 * period:
        import warnings

        warnings.warn(
            f"demux period {optics.demux_period} ps is not two pulse periods "
            f"({2 * period} ps); slot pairing assumes alternating pulses",
            stacklevel=2,
        )
    margin = int(20 * emitter.t1 + optics.arm_delay + 10 * detector.jitter_sigma + 1000)
    if emitter.refill_tau:
        margin += int(20 * emitter.refill_tau)
    duration = n_pulses * period + margin

    trajectory = None
    if emitter.blink_strength > 0:
        trajectory = blinking_trajectory(
            emitter.blink_strength, emitter.blink_tau, duration, seed
        )

    det_list = _detector_list(detector, 2)
    quiet = [DetectorConfig(d.efficiency, d.jitter_sigma, 0.0, 0.0) for d in det_list]

    def run_chunk(index_and_span):
        index, (start, end) = index_and_span
        photons = generate_emissions(
            emitter, end - start, seed, first_pulse=start, trajectory=trajectory
        )
        arm1, arm2 = route_demux(photons, optics)
        if optics.mode == HBT:
            arm2 = Photons.empty(photons.gamma)
        combined, out_ch = beamsplitter(
            arm1, arm2, optics, _derived_seed(seed, _STAGE_CHUNK, 2 * index)
        )
        rng = _substream(_derived_seed(seed, _STAGE_CHUNK, 2 * index + 1), _STAGE_DETECT)
        ch, t, stats = _detect_photons(combined, out_ch, quiet, rng)
        return ch, t, stats

    bounds = _chunk_bounds(n_pulses, chunk_pulses)
    spans = list(enumerate(zip(bounds[:-1], bounds[1:])))
    if workers is None:
        workers = default_workers()
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chunk, spans))
    else:
        results = [run_chunk(span) for span in spans]

    stats = DetectStats()
    for _, _, s in results:
        stats = stats.merge(s)
    dark_rng = _substream(seed, _STAGE_DETECT)
    dark_ch, dark_t = _dark_tags(det_list, 0, duration, dark_rng)
    stats.dark_tags = dark_t.size

    ch = np.concatenate([r[0] for r in results] + [dark_ch])
    t = np.concatenate([r[1] for r in results] + [dark_t])
    order = np.lexsort((ch, t))
    ch, t = ch[order], t[order]
    keep, discarded = _apply_dead_time(ch, t, det_list)
    stats.dead_time_discarded = discarded
    return TagStream(ch[keep], t[keep], 2), stats
