"""Deterministic per-subsystem RNG streams from one 64-bit run seed.

Each consumer asks for a stream by a fixed label, so adding draws in one
subsystem never shifts another's sequence.  Labels in use:

- "noise"      detection center jitter (simulate)
- "dropout"    per-frame detection dropout (simulate)
- "flicker"    class-flip events (simulate)
- "satellite"  satellite-image speckle (simulate)
- "matches"    correspondence sampling and outlier corruption (simulate)
- "ransac"     consensus sampling (calibrate)
- "distortion" evolution-strategy mutations (calibrate)
"""

from __future__ import annotations

import zlib

import numpy as np


def subsystem_seed(seed: int, label: str) -> int:
    """Derive a child seed for `label` from the run seed."""
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=(zlib.crc32(label.encode("utf-8")),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def subsystem_rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(subsystem_seed(seed, label))
