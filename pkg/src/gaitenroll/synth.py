"""Synthetic identity-clustered embeddings.

Emulates the geometry of embeddings produced by metric-learning recognition
backbones: one centroid per identity on a sphere of radius centroid_scale,
walks scattered around it with per-identity isotropic Gaussian noise. The
per-identity noise scale can itself be drawn from a range, which creates the
heteroscedastic regime where no single global distance threshold separates
known from novel probes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .gallery import EmbeddingRecord, make_record
from .rng import Rng


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the generator; identical specs yield identical datasets."""

    n_ids: int
    walks_per_id: int
    dim: int = 128
    centroid_scale: float = 10.0
    sigma_lo: float = 0.1
    sigma_hi: float | None = None  # None: fixed sigma_lo for every identity
    normalize: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_ids < 1 or self.walks_per_id < 1 or self.dim < 1:
            raise ConfigError("n_ids, walks_per_id and dim must be positive")
        if self.centroid_scale <= 0:
            raise ConfigError("centroid_scale must be positive")
        if self.sigma_lo < 0:
            raise ConfigError("sigma_lo must be nonnegative")
        if self.sigma_hi is not None and self.sigma_hi < self.sigma_lo:
            raise ConfigError("sigma_hi must be >= sigma_lo")


def gen_synthetic(spec: SynthSpec) -> list[EmbeddingRecord]:
    """Generate records named s0001/w001 ...; deterministic given the spec.

    Draw order per identity: centroid direction (dim Gaussians), then the
    noise scale when a range is configured (one uniform), then each walk
    (dim Gaussians). Names sort in generation order.
    """
    rng = Rng(spec.seed)
    records: list[EmbeddingRecord] = []
    for i in range(spec.n_ids):
        gid = f"s{i + 1:04d}"
        direction = rng.gaussians(spec.dim)
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:  # probability zero, but keep the contract total
            direction = np.ones(spec.dim)
            norm = float(np.linalg.norm(direction))
        centroid = direction * (spec.centroid_scale / norm)
        if spec.sigma_hi is None:
            sigma = spec.sigma_lo
        else:
            sigma = spec.sigma_lo + (spec.sigma_hi - spec.sigma_lo) * rng.uniform()
        for w in range(spec.walks_per_id):
            vec = centroid + sigma * rng.gaussians(spec.dim)
            if spec.normalize:
                vec = vec / np.linalg.norm(vec)
            records.append(make_record(gid, f"w{w + 1:03d}", vec))
    return records
