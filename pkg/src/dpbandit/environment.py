"""Bernoulli environments, the interaction loop and pseudo-regret traces."""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .policies import BatchSchedule, Policy, PolicyKind, default_params, env_stream, make_policy
from .privacy import SeededRng

__all__ = [
    "BanditInstance",
    "PRESETS",
    "preset",
    "sample_reward",
    "RewardSource",
    "RunTrace",
    "geometric_checkpoints",
    "pseudo_regret",
    "run_episode",
    "MonteCarloResult",
    "monte_carlo",
    "resolve_workers",
    "format_float",
]

PRESETS: dict[str, tuple[float, ...]] = {
    "mu1": (0.75, 0.7, 0.7, 0.7, 0.7),
    "mu2": (0.75, 0.625, 0.5, 0.375, 0.25),
    "mu3": (0.75, 0.53125, 0.375, 0.28125, 0.25),
    "mu4": (0.75, 0.71875, 0.625, 0.46875, 0.25),
}


@dataclass(frozen=True)
class BanditInstance:
    means: tuple[float, ...]
    name: str | None = None

    def __post_init__(self):
        means = tuple(float(m) for m in self.means)
        object.__setattr__(self, "means", means)
        if len(means) < 2:
            raise ValueError("a bandit instance needs at least two arms")
        bad = [m for m in means if not 0.0 <= m <= 1.0]
        if bad:
            raise ValueError(f"arm means must lie in [0, 1], got {bad}")

    @property
    def K(self) -> int:
        return len(self.means)

    @property
    def best_mean(self) -> float:
        return max(self.means)

    @property
    def gaps(self) -> tuple[float, ...]:
        best = self.best_mean
        return tuple(best - m for m in self.means)


def preset(name: str) -> BanditInstance:
    try:
        return BanditInstance(PRESETS[name], name)
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def sample_reward(env: BanditInstance, arm: int, rng) -> int:
    if not 0 <= arm < env.K:
        raise IndexError(f"arm {arm} out of range for {env.K} arms")
    return int(rng.uniform() < env.means[arm])


class RewardSource:
    """Per-arm reward streams.

    Arm ``a``'s ``n``-th reward depends only on ``(seed, a, n)``, so two
    policies run with the same seed see identical reward sequences per arm.
    """

    CHUNK = 4096

    def __init__(self, env: BanditInstance, seed: int):
        self.env = env
        self.rngs = [SeededRng(seed, env_stream(a)) for a in range(env.K)]
        self._buf = [np.empty(0) for _ in range(env.K)]
        self._pos = [0] * env.K

    def draw(self, arm: int, n: int) -> np.ndarray:
        if not 0 <= arm < self.env.K:
            raise IndexError(f"arm {arm} out of range for {self.env.K} arms")
        out = np.empty(n)
        filled = 0
        while filled < n:
            buf, pos = self._buf[arm], self._pos[arm]
            if pos == buf.size:
                buf = self._buf[arm] = self.rngs[arm].uniforms(self.CHUNK)
                pos = 0
            take = min(n - filled, buf.size - pos)
            out[filled:filled + take] = buf[pos:pos + take]
            self._pos[arm] = pos + take
            filled += take
        return (out < self.env.means[arm]).astype(float)


def pseudo_regret(gaps: Sequence[float], counts: Sequence[int]) -> float:
    total = 0.0
    for g, n in zip(gaps, counts):
        total += g * n
    return total


def geometric_checkpoints(horizon: int, n: int = 100) -> list[int]:
    """About ``n`` geometrically spaced rounds in ``[1, horizon]``, always including both ends."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    pts = np.unique(np.round(np.geomspace(1, horizon, max(n, 2))).astype(np.int64))
    pts = sorted(set(int(p) for p in pts) | {1, horizon})
    return pts


def format_float(v: float) -> str:
    return format(float(v), ".17g")


@dataclass
class RunTrace:
    horizon: int
    pull_counts: list[int]
    checkpoints: list[tuple[int, float, tuple[int, ...]]]
    seed: int
    policy: str = ""
    means: tuple[float, ...] = ()
    choices: list[tuple[int, int]] = field(default_factory=list, repr=False)
    noise_draws: int = 0

    @property
    def final_regret(self) -> float:
        return self.checkpoints[-1][1]

    @property
    def times(self) -> list[int]:
        return [c[0] for c in self.checkpoints]

    @property
    def regrets(self) -> list[float]:
        return [c[1] for c in self.checkpoints]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "regret", *[f"N_{a + 1}" for a in range(len(self.pull_counts))]])
        for t, r, counts in self.checkpoints:
            w.writerow([t, format_float(r), *counts])
        return buf.getvalue()

    def to_json(self) -> str:
        d = asdict(self)
        d["checkpoints"] = [[t, r, list(c)] for t, r, c in self.checkpoints]
        d["choices"] = [list(c) for c in self.choices]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunTrace":
        d = json.loads(text)
        d["checkpoints"] = [(t, r, tuple(c)) for t, r, c in d["checkpoints"]]
        d["choices"] = [tuple(c) for c in d["choices"]]
        d["means"] = tuple(d["means"])
        return cls(**d)


def run_episode(policy: Policy, env: BanditInstance, horizon: int, seed: int,
                checkpoint_grid: Sequence[int] | None = None) -> RunTrace:
    """Drive ``policy`` for exactly ``horizon`` pulls and record pseudo-regret.

    Within a block the same arm is pulled repeatedly, so the pseudo-regret at a
    checkpoint falling inside it is exact.
    """
    if policy.K != env.K:
        raise ValueError("policy and environment disagree on the number of arms")
    if policy.T != horizon:
        raise ValueError("policy was built for a different horizon")
    grid = sorted(set(int(c) for c in (checkpoint_grid or geometric_checkpoints(horizon))))
    if grid and (grid[0] < 1 or grid[-1] > horizon):
        raise ValueError("checkpoints must lie in [1, horizon]")
    if not grid or grid[-1] != horizon:
        grid.append(horizon)

    source = RewardSource(env, seed)
    gaps = env.gaps
    counts = [0] * env.K
    checkpoints = []
    choices: list[tuple[int, int]] = []
    t, ci = 0, 0
    while t < horizon:
        arm, size = policy.next_batch()
        size = min(int(size), horizon - t)
        if size < 1:
            raise RuntimeError(f"{policy.name} requested an empty batch")
        rewards = source.draw(arm, size)
        while ci < len(grid) and grid[ci] <= t + size:
            c = grid[ci]
            snap = list(counts)
            snap[arm] += c - t
            checkpoints.append((c, pseudo_regret(gaps, snap), tuple(snap)))
            ci += 1
        counts[arm] += size
        t += size
        if choices and choices[-1][0] == arm:
            choices[-1] = (arm, choices[-1][1] + size)
        else:
            choices.append((arm, size))
        policy.observe(arm, rewards)
    return RunTrace(
        horizon=horizon,
        pull_counts=counts,
        checkpoints=checkpoints,
        seed=seed,
        policy=policy.name,
        means=env.means,
        choices=choices,
        noise_draws=policy.noise_draws,
    )


@dataclass
class MonteCarloResult:
    policy: str
    eps: float
    seeds: list[int]
    times: list[int]
    mean: np.ndarray
    std: np.ndarray
    finals: np.ndarray
    traces: list[RunTrace] = field(default_factory=list, repr=False)

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])

    @property
    def final_std(self) -> float:
        return float(self.std[-1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mean_regret", "std_regret"])
        for t, m, s in zip(self.times, self.mean, self.std):
            w.writerow([t, format_float(m), format_float(s)])
        return buf.getvalue()


def resolve_workers(workers: int | None = None) -> int:
    env = os.environ.get("DPB_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, int(workers or 1))


def _replicate(args) -> RunTrace:
    kind, means, horizon, eps, sched, seed, grid = args
    env = BanditInstance(means)
    policy = make_policy(kind, env.K, horizon, eps, sched, seed)
    return run_episode(policy, env, horizon, seed, grid)


def monte_carlo(policy_kind, env: BanditInstance, horizon: int, eps: float, n_seeds: int,
                base_seed: int = 0, sched: BatchSchedule = BatchSchedule(),
                checkpoints: int | Sequence[int] = 100, workers: int | None = None,
                keep_traces: bool = False) -> MonteCarloResult:
    """Independent replications with seeds ``base_seed .. base_seed + n_seeds - 1``.

    Results are aggregated in seed order, so the output does not depend on the
    worker count or on completion order.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    if not isinstance(policy_kind, PolicyKind):
        policy_kind = PolicyKind(policy_kind, default_params(policy_kind, horizon))
    grid = geometric_checkpoints(horizon, checkpoints) if isinstance(checkpoints, int) else list(checkpoints)
    seeds = [base_seed + i for i in range(n_seeds)]
    jobs = [(policy_kind, env.means, horizon, eps, sched, s, grid) for s in seeds]
    workers = resolve_workers(workers)
    if workers > 1 and n_seeds > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_replicate, jobs))
    else:
        traces = [_replicate(j) for j in jobs]
    regrets = np.array([tr.regrets for tr in traces], dtype=float)
    return MonteCarloResult(
        policy=policy_kind.label,
        eps=eps,
        seeds=seeds,
        times=traces[0].times,
        mean=regrets.mean(axis=0),
        std=regrets.std(axis=0),
        finals=regrets[:, -1].copy(),
        traces=traces if keep_traces else [],
    )
