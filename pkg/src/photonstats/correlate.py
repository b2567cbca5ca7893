"""Correlation and decay histograms from time-tag streams.

The correlator slides a +/- max_delay window over the sorted stream, so the
cost is O(n log n + pairs) and memory stays bounded by the window occupancy.
Results are exact integer counts, directly comparable against an all-pairs
brute force.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .model import DataError, Histogram, PeakAreas, TagStream

DEFAULT_BIN_WIDTH = 100
DEFAULT_SPACING = 25_000
DEFAULT_WINDOW = 3_000
DEFAULT_N_SIDE = 2


@njit(cache=True, nogil=True)
def _first_unsorted(times):
    for i in range(1, times.size):
        if times[i] < times[i - 1]:
            return i
    return -1


@njit(cache=True, nogil=True)
def _pair_histogram(ta, tb, bin_width, max_delay, counts, exclude_self, offset):
    """Sliding-window pair binning: counts[(t_b - t_a + max_delay) // bin] += 1.

    Both inputs are sorted, so the window bounds only ever move forward:
    O(len(ta) + len(tb) + pairs) with no temporaries. When exclude_self is
    set, ta is assumed to be tb[offset:offset+len(ta)] and identical-tag
    pairs are skipped.
    """
    lo = 0
    hi = 0
    n_b = tb.size
    for i in range(ta.size):
        t = ta[i]
        t_lo = t - max_delay
        t_hi = t + max_delay
        while lo < n_b and tb[lo] < t_lo:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < n_b and tb[hi] < t_hi:
            hi += 1
        own = i + offset if exclude_self else -1
        for j in range(lo, hi):
            if j == own:
                continue
            counts[(tb[j] - t + max_delay) // bin_width] += 1


@njit(cache=True, nogil=True)
def _stream_pair_histogram(channels, times, ch_a, ch_b, bin_width, max_delay, counts):
    """Single pass over the interleaved stream, no per-channel copies."""
    lo = 0
    hi = 0
    n = times.size
    for i in range(n):
        if channels[i] != ch_a:
            continue
        t = times[i]
        t_lo = t - max_delay
        t_hi = t + max_delay
        while lo < n and times[lo] < t_lo:
            lo += 1
        if hi < lo:
            hi = lo
        while hi < n and times[hi] < t_hi:
            hi += 1
        for j in range(lo, hi):
            if channels[j] == ch_b and j != i:
                counts[(times[j] - t + max_delay) // bin_width] += 1


def _accumulate_pairs(counts, ta, tb, bin_width, max_delay, self_offset=None):
    """Histogram delays t_b - t_a for all pairs within the window.

    self_offset, when given, is the index offset of ta within tb and enables
    exclusion of identical-tag pairs (autocorrelation).
    """
    if ta.size == 0 or tb.size == 0:
        return
    _pair_histogram(ta, tb, np.int64(bin_width), np.int64(max_delay), counts,
                    self_offset is not None,
                    np.int64(self_offset if self_offset is not None else -1))


def _validate_correlation_args(bin_width, max_delay):
    if bin_width < 1:
        raise DataError(f"bin_width must be >= 1 ps, got {bin_width}")
    if max_delay <= 0 or max_delay % bin_width != 0:
        raise DataError(
            f"max_delay ({max_delay}) must be a positive multiple of bin_width ({bin_width})"
        )


def cross_correlate(stream: TagStream, ch_a, ch_b, bin_width=DEFAULT_BIN_WIDTH,
                    max_delay=60_000) -> Histogram:
    """Histogram of delays d = t_b - t_a over [-max_delay, +max_delay).

    ch_a == ch_b gives the autocorrelation; a tag is never paired with
    itself, but distinct tags sharing a timestamp do count.
    """
    _validate_correlation_args(bin_width, max_delay)
    if len(stream):
        bad = _first_unsorted(stream.times)
        if bad >= 0:
            raise DataError(f"stream not sorted by time at index {bad}")
    n_bins = 2 * max_delay // bin_width
    counts = np.zeros(n_bins, np.int64)
    _stream_pair_histogram(stream.channels, stream.times, np.uint8(ch_a),
                           np.uint8(ch_b), np.int64(bin_width),
                           np.int64(max_delay), counts)
    return Histogram(bin_width, -max_delay, counts)


def cross_correlate_chunks(chunks, ch_a, ch_b, bin_width=DEFAULT_BIN_WIDTH,
                           max_delay=60_000) -> Histogram:
    """Correlate a stream delivered as consecutive time-ordered pieces.

    Equals cross_correlate on the concatenated stream exactly: pairs inside
    each piece are counted directly and pairs straddling a boundary are
    recovered from a carry buffer holding the trailing max_delay window.
    """
    _validate_correlation_args(bin_width, max_delay)
    n_bins = 2 * max_delay // bin_width
    counts = np.zeros(n_bins, np.int64)
    carry_a = np.empty(0, np.int64)
    carry_b = np.empty(0, np.int64)
    last_t = None
    for chunk in chunks:
        chunk.check_sorted()
        if len(chunk):
            if last_t is not None and chunk.times[0] < last_t:
                raise DataError("chunks overlap in time; expected an ordered partition")
            last_t = int(chunk.times[-1])
        ta = chunk.channel_times(ch_a)
        tb = chunk.channel_times(ch_b)
        _accumulate_pairs(counts, ta, tb, bin_width, max_delay,
                          self_offset=0 if ch_a == ch_b else None)
        # cross-boundary pairs, both orientations
        _accumulate_pairs(counts, carry_a, tb, bin_width, max_delay)
        _accumulate_pairs(counts, ta, carry_b, bin_width, max_delay)
        if last_t is not None:
            keep_from = last_t - max_delay
            carry_a = np.concatenate((carry_a[carry_a > keep_from], ta[ta > keep_from]))
            carry_b = np.concatenate((carry_b[carry_b > keep_from], tb[tb > keep_from]))
    return Histogram(bin_width, -max_delay, counts)


def sync_histogram(stream: TagStream, ch, sync_period, bin_width=DEFAULT_BIN_WIDTH,
                   offset=0) -> Histogram:
    """Arrival times folded modulo a sync period, e.g. the pump-laser clock.

    ch may be a single channel or None for all channels.
    """
    if sync_period <= 0:
        raise DataError(f"sync_period must be positive, got {sync_period}")
    if bin_width < 1:
        raise DataError(f"bin_width must be >= 1 ps, got {bin_width}")
    times = stream.times if ch is None else stream.channel_times(ch)
    n_bins = -(-sync_period // bin_width)
    folded = (times - offset) % sync_period
    counts = np.bincount(folded // bin_width, minlength=n_bins).astype(np.uint64)
    return Histogram(bin_width, 0, counts)


def integrate_peaks(h: Histogram, spacing=DEFAULT_SPACING, window=DEFAULT_WINDOW,
                    n_side=DEFAULT_N_SIDE) -> PeakAreas:
    """Integrate counts around nominal peak centers 0, +/-spacing, ...

    Each peak is summed over [center - window/2, center + window/2), taken
    over bins whose left edge falls inside the interval. Windows are centered
    on the nominal delays; no peak search is performed.
    """
    if window > spacing:
        raise DataError(f"window ({window}) must not exceed peak spacing ({spacing})")
    lo_span, hi_span = h.span
    centers = np.arange(-n_side, n_side + 1, dtype=np.int64) * spacing
    areas = np.empty(centers.size, np.int64)
    for i, c in enumerate(centers):
        left = int(c) - window // 2
        right = left + window
        if left < lo_span or right > hi_span:
            raise DataError(
                f"histogram range [{lo_span}, {hi_span}) ps does not cover the "
                f"peak at {int(c)} ps (window [{left}, {right}))"
            )
        i_lo = -((h.origin - left) // h.bin_width)
        i_hi = -((h.origin - right) // h.bin_width)
        areas[i] = int(h.counts[i_lo:i_hi].sum())
    return PeakAreas(centers, areas, np.sqrt(areas.astype(np.float64)), window)


def merge(h1: Histogram, h2: Histogram) -> Histogram:
    """Element-wise sum of two identically-binned histograms."""
    return h1.merge(h2)


def write_histogram_csv(h: Histogram, path):
    """Plot-ready CSV: two comment header lines, then bin_left_edge_ps,counts."""
    edges = h.left_edges()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# bin_width_ps={h.bin_width}\n")
        fh.write(f"# origin_ps={h.origin}\n")
        fh.write("bin_left_edge_ps,counts\n")
        for edge, count in zip(edges, h.counts):
            fh.write(f"{int(edge)},{int(count)}\n")


def read_histogram_csv(path) -> Histogram:
    bin_width = origin = None
    counts = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line.lstrip("# ").partition("=")
                if key.strip() == "bin_width_ps":
                    bin_width = int(value)
                elif key.strip() == "origin_ps":
                    origin = int(value)
                continue
            if line.startswith("bin_left_edge_ps"):
                continue
            _, _, count = line.partition(",")
            counts.append(int(count))
    if bin_width is None or origin is None:
        raise DataError(f"{path}: missing bin_width_ps/origin_ps header lines")
    return Histogram(bin_width, origin, np.asarray(counts, np.uint64))
