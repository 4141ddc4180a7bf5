"""Counter-based random streams with one independent substream per trial.

Each trajectory draws from Philox keyed by (seed, trial), so any trial can
be regenerated in isolation and results do not depend on scheduling or
batch size. Every protocol step consumes exactly two uniforms, detection
first and branch second, whether or not each is ultimately used; this
keeps outcome sequences identical across kernel backends and detector
efficiencies.
"""

import numpy as np

ALGORITHM = "philox4x64-10"
UNIFORMS_PER_STEP = 2

_MASK64 = (1 << 64) - 1

__all__ = [
    "ALGORITHM",
    "UNIFORMS_PER_STEP",
    "derive_substream_seed",
    "trial_generator",
    "trial_uniforms",
]


def trial_generator(seed: int, trial: int) -> np.random.Generator:
    """Generator for one trajectory, keyed by (seed, trial)."""
    key = np.array([seed & _MASK64, trial & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def trial_uniforms(seed: int, trial: int, count: int) -> np.ndarray:
    """The first `count` uniforms of the trial's stream."""
    return trial_generator(seed, trial).random(count)


def _splitmix64(x: int) -> int:
    """One splitmix64 output step; a fixed 64-bit mixing function."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_substream_seed(seed: int, index: int) -> int:
    """Stable child seed for sweep cell `index` of a run seeded by `seed`.

    Pinned to splitmix64 so sweep results are reproducible across
    versions and platforms.
    """
    return _splitmix64((seed & _MASK64) ^ _splitmix64(index & _MASK64))
