"""Deterministic random streams.

Every random draw in the package flows from one run seed through a named
substream, so runs are reproducible and streams never collide. Philox is
counter-based, which also lets samplers re-derive any batch from
(seed, stream, counters) without storing data.
"""

from __future__ import annotations

import numpy as np

STREAM_INIT = 1
STREAM_DATA = 2
STREAM_SHUFFLE = 3
STREAM_TEST = 4
STREAM_GAUSSIAN = 5


def substream(seed, stream, *counters):
    """Generator keyed by (seed, stream, *counters)."""
    key = (int(seed), int(stream)) + tuple(int(c) for c in counters)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
