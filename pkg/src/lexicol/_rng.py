"""Counter-based random streams shared by the sampler, the splitter, and the GCN.

All randomness in the library flows through Philox (counter-based, 64-bit
output words), keyed by (seed, purpose, a, b). Streams with distinct keys are
independent, so e.g. dropout masks keyed by (seed, epoch, layer) never collide
with the split sampler for the same seed.
"""

from __future__ import annotations

import numpy as np

# Purpose tags; keep distinct so keyed streams never overlap.
STREAM_INIT = 1      # weight initialization, sub-key = layer
STREAM_DROPOUT = 2   # dropout masks, sub-keys = (epoch, layer)
STREAM_SPLIT = 3     # train/test split sampling
STREAM_SAMPLER = 4   # diverse candidate sampler, sub-key = class (per-class mode)
STREAM_TIES = 5      # randomized tie-breaking in the partitioner
STREAM_SYNTH = 6     # synthetic fixtures in the test suite

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, purpose: int, a: int = 0, b: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, purpose, a, b).

    The 128-bit key packs the seed in the high word and the stream tags in the
    low word; identical arguments reproduce the identical stream on any
    platform.
    """
    key = ((int(seed) & _MASK64) << 64) | ((int(purpose) & 0xFFFF) << 48) \
        | ((int(a) & 0xFFFFFF) << 24) | (int(b) & 0xFFFFFF)
    return np.random.Generator(np.random.Philox(key=key))
