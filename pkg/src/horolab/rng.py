"""Counter-based random streams for reproducible parallel Monte Carlo.

Every variate is a pure function of (seed, sample index, slot), so a batch
split across any number of workers produces bit-identical results. The
generator is the SplitMix64 finalizer applied to a per-(index, slot) counter;
its avalanche quality is more than enough for Monte Carlo sampling.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_PHI = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SLOT_STRIDE = np.uint64(0x2545F4914F6CDD1D)


def _mix64(z):
    """SplitMix64 finalizer, vectorized over uint64 arrays."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


class SampleStreams:
    """Per-sample counter-based uniform streams derived from one 64-bit seed."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        base = _mix64(np.uint64(self.seed))
        with np.errstate(over="ignore"):
            self._base = _mix64(base + _PHI)

    def uniforms(self, indices, slot: int) -> np.ndarray:
        """u in [0,1) for each sample index at the given variate slot."""
        idx = np.asarray(indices, dtype=np.uint64)
        with np.errstate(over="ignore"):
            key = self._base + _mix64(idx * _PHI + np.uint64(1))
            v = _mix64(key + np.uint64(slot) * _SLOT_STRIDE)
        return (v >> np.uint64(11)).astype(np.float64) * (2.0**-53)

    def uniform(self, index: int, slot: int) -> float:
        return float(self.uniforms(np.array([index], dtype=np.uint64), slot)[0])

    def substream(self, tag: int) -> "SampleStreams":
        """An independent stream family, for nested experiments under one seed."""
        return SampleStreams(int(_mix64(np.uint64(self.seed) ^ _mix64(np.uint64(tag)))))
