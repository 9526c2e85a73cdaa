"""Seedable randomness for the mechanisms: a uniform stream with a
deterministic zero-noise override, plus inverse-CDF Laplace sampling."""

from __future__ import annotations

import math
import random


class NoiseSource:
    """Stream of uniform variates in (0, 1) derived from a 64-bit seed.

    Identical seeds yield identical streams (Mersenne Twister, stable across
    platforms). With ``zero_override`` every draw is replaced by the stream
    median 0.5, which the Laplace inverse CDF maps to 0 -- deterministic
    traces for tests and debugging, NOT private.

    A source is single-owner: one consumer, one pass; never share one
    mid-stream. Parallel trials use :meth:`spawn`, which seeds trial ``i``
    with ``seed XOR i``.
    """

    __slots__ = ("seed", "zero_override", "_rng")

    def __init__(self, seed: int, zero_override: bool = False):
        self.seed = seed
        self.zero_override = zero_override
        self._rng = random.Random(seed)

    @property
    def mode(self) -> str:
        return "zero-override" if self.zero_override else "sampled"

    def uniform(self) -> float:
        """Next uniform in the open interval (0, 1); 0.5 under zero-override."""
        if self.zero_override:
            return 0.5
        u = self._rng.random()
        while u <= 0.0:  # random() covers [0, 1); exclude the 0 endpoint
            u = self._rng.random()
        return u

    def laplace(self, scale: float) -> float:
        return sample_laplace(scale, self)

    def spawn(self, index: int) -> "NoiseSource":
        """Independent source for trial ``index`` (seed = base XOR index)."""
        return NoiseSource(self.seed ^ index, self.zero_override)

    def __repr__(self) -> str:
        return f"NoiseSource(seed={self.seed}, mode={self.mode})"


def sample_laplace(scale: float, src: NoiseSource) -> float:
    """One Laplace(scale) variate: -scale * sign(u - 1/2) * ln(1 - 2|u - 1/2|).

    A single uniform from ``src`` is pushed through the inverse CDF, so a
    replayed stream reproduces the variate exactly; zero-override yields 0.
    """
    if not scale > 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    u = src.uniform()
    d = u - 0.5
    if d == 0.0:
        return 0.0
    return -scale * math.copysign(1.0, d) * math.log1p(-2.0 * abs(d))
