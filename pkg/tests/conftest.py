"""Shared test helpers."""

import numpy as np

from photonstats.model import TagStream


def brute_force_correlation(stream, ch_a, ch_b, bin_width, max_delay):
    """All-pairs O(n^2) reference correlator.

    Deliberately independent of the streaming implementation: for every tag
    on ch_a the full ch_b vector is scanned.
    """
    ta = stream.channel_times(ch_a).astype(np.int64)
    tb = stream.channel_times(ch_b).astype(np.int64)
    n_bins = 2 * max_delay // bin_width
    counts = np.zeros(n_bins, np.uint64)
    auto = ch_a == ch_b
    for i in range(ta.size):
        d = tb - ta[i]
        keep = (d >= -max_delay) & (d < max_delay)
        if auto:
            keep[i] = False
        if keep.any():
            counts += np.bincount((d[keep] + max_delay) // bin_width,
                                  minlength=n_bins).astype(np.uint64)
    return counts


def random_tag_stream(rng, n, t_max, channels=2):
    times = np.sort(rng.integers(0, t_max, n))
    ch = rng.integers(0, channels, n).astype(np.uint8)
    return TagStream(ch, times, channels)
