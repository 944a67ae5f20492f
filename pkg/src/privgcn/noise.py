"""Perturbation noise: columns uniform on a sphere with Erlang(d, beta) radius."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Recorded in artifacts so a run can be reproduced bit for bit.
RNG_DESCRIPTION = "numpy.random.Generator(PCG64) via SeedSequence; normals by ziggurat; exponentials by ziggurat"


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def child_seed(seed: int, *path: int) -> np.random.SeedSequence:
    """Deterministic child stream ``path`` under the root ``seed``."""
    return np.random.SeedSequence(seed, spawn_key=tuple(path))


def _check(d, beta):
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")


def sample_radius(d: int, beta: float, rng) -> float:
    """One Erlang(d, beta) draw as a sum of ``d`` exponential(beta) draws."""
    _check(d, beta)
    rng = make_rng(rng)
    return float(rng.standard_exponential(int(d)).sum() / beta)


def sample_radii(d: int, beta: float, rng, size: int) -> np.ndarray:
    """``size`` independent Erlang(d, beta) radii."""
    _check(d, beta)
    rng = make_rng(rng)
    return rng.standard_exponential((size, int(d))).sum(axis=1) / beta


def sample_direction(d: int, rng) -> np.ndarray:
    rng = make_rng(rng)
    while True:
        u = rng.standard_normal(int(d))
        norm = np.linalg.norm(u)
        if norm > 0:
            return u / norm


def sample_noise_column(d: int, beta: float, rng) -> np.ndarray:
    rng = make_rng(rng)
    a = sample_radius(d, beta, rng)
    return a * sample_direction(d, rng)


@dataclass(frozen=True, eq=False)
class NoiseMatrix:
    B: np.ndarray
    radii: np.ndarray
    seed: int | None


def sample_noise_matrix(d: int, c: int, beta: float, seed) -> NoiseMatrix:
    """Draw ``c`` independent columns; ``beta = inf`` yields the zero matrix.

    Column ``j`` uses its own child stream of ``seed`` so columns can be
    drawn in any order or concurrently.
    """
    if int(c) != c or c < 1:
        raise ValueError(f"column count must be a positive integer, got {c}")
    if math.isinf(beta) and beta > 0:
        return NoiseMatrix(np.zeros((int(d), int(c))), np.zeros(int(c)), _seed_int(seed))
    _check(d, beta)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    B = np.empty((int(d), int(c)))
    radii = np.empty(int(c))
    for j in range(int(c)):
        # explicit spawn keys: SeedSequence.spawn would mutate a caller-owned root
        rng = make_rng(np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key + (j,)))
        radii[j] = sample_radius(d, beta, rng)
        B[:, j] = radii[j] * sample_direction(d, rng)
    return NoiseMatrix(B, radii, _seed_int(seed))


def _seed_int(seed):
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if isinstance(seed, np.random.SeedSequence) and isinstance(seed.entropy, int):
        return seed.entropy
    return None
