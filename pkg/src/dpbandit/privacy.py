"""Laplace noise and the continual-release noisy reward sum.

A :class:`NoisySumState` holds the running sum of every reward seen so far
plus one Laplace(1/eps) draw per completed batch.  Releasing those prefix sums
is post-processing of the per-batch noisy sums, which are eps-DP by parallel
composition over disjoint batches (each batch sum has sensitivity 1 for
rewards in [0, 1]).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

__all__ = [
    "SeededRng",
    "laplace_sample",
    "laplace_samples",
    "NoisySumState",
    "init_noisy_sum",
    "noisy_extend",
    "private_mean",
    "release_noisy_sums",
    "AuditRecord",
    "sensitivity_audit",
]


class SeededRng:
    """A reproducible uniform stream keyed by ``(seed, stream_id)``.

    Streams with different ``stream_id`` come from independent children of the
    same ``numpy.random.SeedSequence``.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream_id={self.stream_id})"

    def uniform(self) -> float:
        """One draw from the open interval (0, 1)."""
        u = self.generator.random()
        while u == 0.0:
            u = self.generator.random()
        return u

    def uniforms(self, size) -> np.ndarray:
        u = self.generator.random(size)
        bad = u == 0.0
        while bad.any():
            u[bad] = self.generator.random(int(bad.sum()))
            bad = u == 0.0
        return u


def _laplace_from_uniform(u, scale):
    c = u - 0.5
    return np.sign(c) * scale * np.log(1.0 - 2.0 * np.abs(c))


def laplace_sample(rng, scale: float) -> float:
    """One Lap(scale) draw by inverse CDF of a single uniform from ``rng``.

    ``scale = 0`` is the degenerate point mass at 0 (used with ``eps = inf``).
    """
    if not scale >= 0.0:
        raise ValueError(f"scale must be >= 0, got {scale!r}")
    return float(_laplace_from_uniform(rng.uniform(), scale))


def laplace_samples(rng, scale: float, size) -> np.ndarray:
    """Vectorised :func:`laplace_sample`; same transform, one uniform per draw."""
    if not scale >= 0.0:
        raise ValueError(f"scale must be >= 0, got {scale!r}")
    return _laplace_from_uniform(rng.uniforms(size), scale)


@dataclass(frozen=True)
class NoisySumState:
    eps: float
    noisy_sum: float = 0.0
    epoch: int = -1
    clean_count: int = 0
    noise_count: int = 0
    clean_sum: float = field(default=0.0, repr=False)

    @property
    def initialized(self) -> bool:
        return self.noise_count > 0


def _validate_batch(reward_batch: Sequence[float]) -> np.ndarray:
    batch = np.asarray(reward_batch, dtype=float)
    if batch.ndim != 1 or batch.size == 0:
        raise ValueError("reward batch must be a nonempty 1-d sequence")
    if not np.all((batch >= 0.0) & (batch <= 1.0)):
        raise ValueError("rewards must lie in [0, 1]; sensitivity-1 assumption violated")
    return batch


def noisy_extend(state: NoisySumState, reward_batch: Sequence[float], rng) -> NoisySumState:
    """Add one batch of rewards and exactly one fresh Lap(1/eps) draw.

    The first call initialises the state (epoch 0, one noise draw); each later
    call advances the epoch by one.
    """
    if not state.eps > 0.0:
        raise ValueError("eps must be > 0")
    batch = _validate_batch(reward_batch)
    total = float(batch.sum())
    noise = laplace_sample(rng, 1.0 / state.eps)
    return replace(
        state,
        noisy_sum=state.noisy_sum + total + noise,
        epoch=state.epoch + 1,
        clean_count=state.clean_count + batch.size,
        noise_count=state.noise_count + 1,
        clean_sum=state.clean_sum + total,
    )


def init_noisy_sum(eps: float, reward_batch: Sequence[float], rng) -> NoisySumState:
    return noisy_extend(NoisySumState(eps=eps), reward_batch, rng)


def private_mean(state: NoisySumState) -> float:
    """Noisy sum over clean count, unclipped (may fall outside [0, 1])."""
    if state.clean_count < 1:
        raise ValueError("private mean undefined before any reward is summed")
    return state.noisy_sum / state.clean_count


def release_noisy_sums(clean_sums, n_noises: int, eps: float, rng) -> np.ndarray:
    """Add ``n_noises`` independent Lap(1/eps) draws to each clean sum.

    This matches what ``n_noises`` successive :func:`noisy_extend` calls add to
    a reward sum, and uses the same inverse-CDF transform.
    """
    clean = np.asarray(clean_sums, dtype=float)
    if n_noises == 0:
        return clean.copy()
    noise = laplace_samples(rng, 1.0 / eps, (clean.size, n_noises)).sum(axis=1)
    return clean + noise.reshape(clean.shape)


@dataclass
class AuditRecord:
    differing_index: int | None
    phase_bounds: list[tuple[int, int]]
    prefix_diffs: list[float]
    phase_diffs: list[float]

    @property
    def changed_phases(self) -> list[int]:
        return [k for k, d in enumerate(self.phase_diffs) if d != 0.0]

    @property
    def ok(self) -> bool:
        """Per-phase sums differ in at most one phase, by at most 1."""
        changed = self.changed_phases
        return len(changed) <= 1 and all(d <= 1.0 for d in self.phase_diffs)

    def to_dict(self) -> dict:
        return {
            "differing_index": self.differing_index,
            "phase_bounds": [list(b) for b in self.phase_bounds],
            "prefix_diffs": self.prefix_diffs,
            "phase_diffs": self.phase_diffs,
            "changed_phases": self.changed_phases,
            "ok": self.ok,
        }


def _sum_gap(a: np.ndarray, b: np.ndarray) -> float:
    # |sum a - sum b| correctly rounded; naive float sums drift by a few ulp
    return abs(math.fsum(np.concatenate([a, -b])))


def sensitivity_audit(
    rewards_a: Sequence[float], rewards_b: Sequence[float], phase_boundaries: Sequence[int]
) -> AuditRecord:
    """Compare clean per-phase and prefix sums of two neighbouring reward lists.

    ``phase_boundaries`` are the strictly increasing start indices of phases
    after the first; phase k covers ``[b_{k-1}, b_k)`` with ``b_{-1} = 0`` and
    the last phase running to the end of the lists.
    """
    a = np.asarray(rewards_a, dtype=float)
    b = np.asarray(rewards_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("reward lists must be 1-d and of equal length")
    diff_at = np.flatnonzero(a != b)
    if diff_at.size > 1:
        raise ValueError(f"lists differ in {diff_at.size} positions; neighbours differ in at most one")
    cuts = [int(c) for c in phase_boundaries]
    if any(c2 <= c1 for c1, c2 in zip(cuts, cuts[1:])):
        raise ValueError("phase boundaries must be strictly increasing")
    if cuts and (cuts[0] <= 0 or cuts[-1] >= a.size):
        raise ValueError("phase boundaries must lie strictly inside the lists")
    edges = [0, *cuts, a.size]
    bounds = list(zip(edges[:-1], edges[1:]))
    phase_diffs = [_sum_gap(a[s:e], b[s:e]) for s, e in bounds]
    prefix_diffs = [_sum_gap(a[:e], b[:e]) for _, e in bounds]
    return AuditRecord(
        differing_index=int(diff_at[0]) if diff_at.size else None,
        phase_bounds=bounds,
        prefix_diffs=prefix_diffs,
        phase_diffs=phase_diffs,
    )
