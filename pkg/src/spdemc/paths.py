"""Reproducible Brownian driver streams and the coarse-from-fine level coupling.

Every sample of every level owns a counter-based stream keyed by
(experiment_seed, level, sample_index), so results are bit-reproducible and
independent of scheduling.  Coarse paths are always derived from fine ones by
block-summing increments, which is what keeps the multilevel correction
variance small.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["SeedSpec", "BrownianPath", "generate_fine_path", "coarsen_path",
           "coarsen_draws"]


@dataclass(frozen=True)
class SeedSpec:
    """Identifies one sample's random stream: (experiment seed, level, index)."""

    experiment_seed: int
    level: int
    sample_index: int

    def generator(self, *extra):
        """Counter-based generator for this sample; extra ints key sub-streams."""
        seq = np.random.SeedSequence(entropy=self.experiment_seed,
                                     spawn_key=(self.level, self.sample_index, *extra))
        return np.random.Generator(np.random.Philox(seq))


@dataclass
class BrownianPath:
    """Standard normal draws z_n for one path; increments are sqrt(k) * z_n."""

    level: int
    n_steps: int
    z: np.ndarray
    k: float

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if self.z.shape != (self.n_steps,):
            raise ValueError(f"expected {self.n_steps} draws, got shape {self.z.shape}")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("non-finite draws in Brownian path")

    @property
    def increments(self):
        return math.sqrt(self.k) * self.z

    @property
    def endpoint(self):
        """Terminal Brownian value M_T = sqrt(k) * sum(z)."""
        return math.sqrt(self.k) * float(np.sum(self.z))


def generate_fine_path(seed, n_steps, k):
    """Draw the fine-level path of one sample from its dedicated stream."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    z = seed.generator().standard_normal(n_steps)
    return BrownianPath(level=seed.level, n_steps=n_steps, z=z, k=k)


def coarsen_draws(z, time_ratio):
    """Block-sum normal draws over the trailing axis: z_c = sum(block)/sqrt(ratio)."""
    z = np.asarray(z, dtype=float)
    n = z.shape[-1]
    if time_ratio < 1 or n % time_ratio:
        raise ValueError(f"time ratio {time_ratio} does not divide {n} steps")
    shape = z.shape[:-1] + (n // time_ratio, time_ratio)
    return z.reshape(shape).sum(axis=-1) / math.sqrt(time_ratio)


def coarsen_path(fine, time_ratio):
    """Coarse path sharing the fine path's Brownian motion at block boundaries.

    Coarse increments are the sums of their fine sub-increments, so the
    Brownian endpoint is preserved exactly (up to roundoff).
    """
    zc = coarsen_draws(fine.z, time_ratio)
    halvings = round(math.log(time_ratio, 4)) if time_ratio > 1 else 0
    if 4**halvings != time_ratio:
        halvings = 1
    return BrownianPath(level=fine.level - halvings, n_steps=zc.shape[-1],
                        z=zc, k=fine.k * time_ratio)
