"""Bandit policies behind one batch-oriented interface.

Every policy answers ``next_batch() -> (arm, size)`` and then receives the
rewards through ``observe(arm, rewards)``.  The interaction loop may cut the
last batch short at the horizon.

``DpIndexPolicy`` implements DP-KLUCB and DP-IMED: arm-dependent geometric
batches, one Laplace draw per batch, and no forgetting.  The baselines are
non-private KL-UCB and IMED (one pull per round), DP-SE, AdaP-KLUCB and
Lazy-DP-TS, the last three forgetting all but the latest phase.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Mapping, Sequence

import numpy as np

from .kernel import bernoulli_kl, clip01, imed_score, klucb_upper
from .privacy import (
    NoisySumState,
    SeededRng,
    init_noisy_sum,
    laplace_sample,
    noisy_extend,
    private_mean,
)

__all__ = [
    "BatchSchedule",
    "batch_size",
    "cumulative",
    "ArmState",
    "Kind",
    "PolicyKind",
    "Policy",
    "DpIndexPolicy",
    "KlucbPolicy",
    "ImedPolicy",
    "DpSePolicy",
    "AdapKlucbPolicy",
    "LazyDpTsPolicy",
    "make_policy",
    "default_params",
    "noise_stream",
    "policy_stream",
    "env_stream",
]

# stream ids: (purpose << 32) | index, so purposes never collide
_ENV, _NOISE, _POLICY = 1, 2, 3


def env_stream(arm: int) -> int:
    return (_ENV << 32) | arm


def noise_stream(arm: int) -> int:
    return (_NOISE << 32) | arm


def policy_stream() -> int:
    return _POLICY << 32


# ---------------------------------------------------------------- schedule


@dataclass(frozen=True)
class BatchSchedule:
    n0: int = 1
    alpha: float = 2.0

    def __post_init__(self):
        if int(self.n0) != self.n0 or self.n0 < 1:
            raise ValueError(f"n0 must be a positive integer, got {self.n0!r}")
        if not (math.isfinite(self.alpha) and self.alpha > 1.0):
            raise ValueError(f"alpha must be > 1, got {self.alpha!r}")


@lru_cache(maxsize=None)
def _cumulative(n0: int, alpha: float, m: int) -> int:
    if m < 0:
        return 0
    # decimal-exact ratio: alpha=1.1 means 11/10, not its binary neighbour
    a = Fraction(repr(float(alpha)))
    v = n0 * (a ** (m + 1) - 1) / (a - 1)
    return math.ceil(v)


def cumulative(sched: BatchSchedule, m: int) -> int:
    """``n_m = ceil(n0 (alpha^(m+1) - 1) / (alpha - 1))``, evaluated exactly."""
    if m < 0:
        raise ValueError("m must be >= 0")
    return _cumulative(sched.n0, sched.alpha, m)


def batch_size(sched: BatchSchedule, m: int) -> int:
    """``B_m = n_m - n_{m-1}``; equals ``n0 * alpha**m`` for integer alpha."""
    if m < 0:
        raise ValueError("m must be >= 0")
    return _cumulative(sched.n0, sched.alpha, m) - _cumulative(sched.n0, sched.alpha, m - 1)


# ---------------------------------------------------------------- kinds


class Kind(str, enum.Enum):
    DP_KLUCB = "dp_klucb"
    DP_IMED = "dp_imed"
    KLUCB = "klucb"
    IMED = "imed"
    DP_SE = "dp_se"
    ADAP_KLUCB = "adap_klucb"
    LAZY_DP_TS = "lazy_dp_ts"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        by_key = {k.value.replace("_", ""): k.value for k in cls}
        key = by_key.get(key, key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown policy kind {value!r}; expected one of {names}") from None


_REQUIRED = {
    Kind.DP_SE: ("beta",),
    Kind.ADAP_KLUCB: ("alpha",),
}


def default_params(kind, horizon: int) -> dict[str, float]:
    """Baseline parameters used in the experiments: beta = 1/T, alpha = 3.1."""
    kind = Kind.parse(kind)
    if kind is Kind.DP_SE:
        return {"beta": 1.0 / horizon}
    if kind is Kind.ADAP_KLUCB:
        return {"alpha": 3.1}
    if kind is Kind.LAZY_DP_TS:
        return {"correction": 1.0}
    return {}


@dataclass(frozen=True)
class PolicyKind:
    kind: Kind
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        missing = [p for p in _REQUIRED.get(self.kind, ()) if p not in self.params]
        if missing:
            raise ValueError(f"policy {self.kind.value} missing params: {', '.join(missing)}")

    @property
    def label(self) -> str:
        return self.kind.value


# ---------------------------------------------------------------- base


class Policy:
    """Common interface.  ``t`` counts pulls executed so far."""

    name = "policy"
    private = True

    def __init__(self, n_arms: int, horizon: int, eps: float, seed: int = 0):
        if n_arms < 2:
            raise ValueError("need at least two arms")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not eps > 0.0:
            raise ValueError("eps must be > 0")
        self.K = n_arms
        self.T = horizon
        self.eps = eps
        self.seed = seed
        self.t = 0
        self.noise_draws = 0

    def next_batch(self) -> tuple[int, int]:
        raise NotImplementedError

    def observe(self, arm: int, rewards: Sequence[float]) -> None:
        raise NotImplementedError

    def _advance(self, n: int) -> bool:
        """Advance time; True if this batch was cut short by the horizon."""
        self.t += n
        if self.t > self.T:
            raise ValueError("more pulls than the horizon")
        return self.t == self.T

    def _laplace(self, rng) -> float:
        self.noise_draws += 1
        return laplace_sample(rng, 1.0 / self.eps)


def _argmax_low(values: Sequence[float]) -> int:
    best, arg = -math.inf, 0
    for i, v in enumerate(values):
        if v > best:
            best, arg = v, i
    return arg


def _argmin_low(values: Sequence[float]) -> int:
    best, arg = math.inf, 0
    for i, v in enumerate(values):
        if v < best:
            best, arg = v, i
    return arg


# ---------------------------------------------------------------- DP-KLUCB / DP-IMED


@dataclass(frozen=True)
class ArmState:
    epoch: int
    pulls: int
    noisy: NoisySumState
    clipped_mean: float


class DpIndexPolicy(Policy):
    """DP-KLUCB (``index="klucb"``) or DP-IMED (``index="imed"``).

    Each arm keeps a never-forgotten noisy reward sum.  After the ``K * B_0``
    initial pulls, the selected arm is pulled ``B_{m+1}`` times in one block
    and its noisy sum gets one fresh Lap(1/eps) draw.
    """

    def __init__(self, n_arms, horizon, eps, sched: BatchSchedule = BatchSchedule(),
                 index: str = "imed", seed: int = 0, noise_rngs=None):
        super().__init__(n_arms, horizon, eps, seed)
        if index not in ("klucb", "imed"):
            raise ValueError(f"index must be 'klucb' or 'imed', got {index!r}")
        self.index = index
        self.name = "dp_klucb" if index == "klucb" else "dp_imed"
        self.sched = sched
        self.noise_rngs = list(noise_rngs) if noise_rngs is not None else [
            SeededRng(seed, noise_stream(a)) for a in range(n_arms)
        ]
        self.arms: list[ArmState | None] = [None] * n_arms

    @property
    def initialized(self) -> bool:
        return all(a is not None for a in self.arms)

    def indexes(self, round_t: int) -> list[float]:
        states = self.arms
        if self.index == "klucb":
            log_t = math.log(round_t)
            return [klucb_upper(s.clipped_mean, log_t / s.pulls, self.eps) for s in states]
        best = max(s.clipped_mean for s in states)
        return [imed_score(s.clipped_mean, s.pulls, best, self.eps) for s in states]

    def select_arm(self, round_t: int) -> int:
        if not self.initialized:
            raise RuntimeError("every arm must be initialised before selection")
        values = self.indexes(round_t)
        return _argmax_low(values) if self.index == "klucb" else _argmin_low(values)

    def next_batch(self):
        for a, s in enumerate(self.arms):
            if s is None:
                return a, batch_size(self.sched, 0)
        arm = self.select_arm(self.t + 1)
        return arm, batch_size(self.sched, self.arms[arm].epoch + 1)

    def _initialize_arm(self, arm, rewards, rng=None):
        rng = rng if rng is not None else self.noise_rngs[arm]
        if len(rewards) != batch_size(self.sched, 0) and not self._at_horizon(len(rewards)):
            raise ValueError("initial batch must have B_0 rewards")
        noisy = init_noisy_sum(self.eps, rewards, rng)
        self.noise_draws += 1
        self.arms[arm] = ArmState(0, noisy.clean_count, noisy, clip01(private_mean(noisy)))

    def _at_horizon(self, n: int) -> bool:
        return self.t + n == self.T

    def commit_batch(self, arm: int, reward_batch, rng=None) -> ArmState:
        """Fold one block of rewards into ``arm``'s noisy sum and advance its epoch."""
        s = self.arms[arm]
        if s is None:
            raise RuntimeError(f"arm {arm} not initialised")
        expected = batch_size(self.sched, s.epoch + 1)
        n = len(reward_batch)
        if n != expected and not (0 < n < expected and self._at_horizon(n)):
            raise ValueError(f"arm {arm} at epoch {s.epoch} needs a batch of {expected}, got {n}")
        rng = rng if rng is not None else self.noise_rngs[arm]
        noisy = noisy_extend(s.noisy, reward_batch, rng)
        self.noise_draws += 1
        new = ArmState(s.epoch + 1, noisy.clean_count, noisy, clip01(private_mean(noisy)))
        self.arms[arm] = new
        self._advance(n)
        return new

    def observe(self, arm, rewards):
        if self.arms[arm] is None:
            self._initialize_arm(arm, rewards)
            self._advance(len(rewards))
        else:
            self.commit_batch(arm, rewards)


# ---------------------------------------------------------------- non-private baselines


class _EmpiricalPolicy(Policy):
    private = False

    def __init__(self, n_arms, horizon, eps=math.inf, seed=0):
        super().__init__(n_arms, horizon, math.inf, seed)
        self.counts = [0] * n_arms
        self.sums = [0.0] * n_arms

    def means(self):
        return [s / n for s, n in zip(self.sums, self.counts)]

    def next_batch(self):
        for a, n in enumerate(self.counts):
            if n == 0:
                return a, 1
        return self.select_arm(self.t + 1), 1

    def observe(self, arm, rewards):
        self.counts[arm] += len(rewards)
        self.sums[arm] += float(np.sum(rewards))
        self._advance(len(rewards))


class KlucbPolicy(_EmpiricalPolicy):
    """KL-UCB with exploration level ``log t``."""

    name = "klucb"

    def select_arm(self, round_t):
        log_t = math.log(round_t)
        return _argmax_low([klucb_upper(m, log_t / n, math.inf)
                            for m, n in zip(self.means(), self.counts)])


class ImedPolicy(_EmpiricalPolicy):
    """IMED: play the arm minimising ``N_a kl(mean_a, best mean) + log N_a``."""

    name = "imed"

    def select_arm(self, round_t):
        means = self.means()
        best = max(means)
        return _argmin_low([n * bernoulli_kl(m, best) + math.log(n)
                            for m, n in zip(means, self.counts)])


# ---------------------------------------------------------------- DP baselines


class DpSePolicy(Policy):
    """DP successive elimination with per-epoch forgetting.

    Epoch ``e`` pulls every active arm ``R_e`` times, privatises each arm's
    epoch mean with Lap(1/(eps R_e)) and drops arms whose private mean trails
    the leader by more than ``2 (h_e + c_e)``.
    """

    name = "dp_se"

    def __init__(self, n_arms, horizon, eps, beta: float, seed=0, noise_rngs=None):
        super().__init__(n_arms, horizon, eps, seed)
        if not 0.0 < beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        self.beta = beta
        self.noise_rngs = list(noise_rngs) if noise_rngs is not None else [
            SeededRng(seed, noise_stream(a)) for a in range(n_arms)
        ]
        self.active = list(range(n_arms))
        self.epoch = 0
        self._start_epoch()

    def _logs(self, e, k):
        return math.log(8 * k * e * e / self.beta), math.log(4 * k * e * e / self.beta)

    def _start_epoch(self):
        self.epoch += 1
        e, k = self.epoch, len(self.active)
        gap = 2.0 ** -e
        l8, l4 = self._logs(e, k)
        self.R = 1 + int(max(32.0 * l8 / gap**2, 8.0 * l4 / (gap * self.eps)))
        self.queue = list(self.active)
        self.private_means: dict[int, float] = {}

    def next_batch(self):
        if len(self.active) == 1:
            return self.active[0], self.T - self.t
        return self.queue[0], self.R

    def observe(self, arm, rewards):
        cut = self._advance(len(rewards))
        if len(self.active) == 1 or cut:
            return
        if arm != self.queue[0] or len(rewards) != self.R:
            raise ValueError("DP-SE expects its scheduled block")
        self.queue.pop(0)
        noisy = float(np.sum(rewards)) + self._laplace(self.noise_rngs[arm])
        self.private_means[arm] = noisy / self.R
        if not self.queue:
            self._eliminate()
            self._start_epoch()

    def _eliminate(self):
        k = len(self.active)
        l8, l4 = self._logs(self.epoch, k)
        h = math.sqrt(l8 / (2.0 * self.R))
        c = l4 / (self.R * self.eps)
        top = max(self.private_means.values())
        self.active = [a for a in self.active if top - self.private_means[a] <= 2.0 * (h + c)]


class AdapKlucbPolicy(Policy):
    """AdaP-KLUCB: arm-dependent doubling, forgetting and a privacy-shifted KL-UCB index.

    An arm's statistic is the Laplace-noised mean of its latest episode only.
    The index inflates that mean by ``alpha log t / (eps n)`` before the KL-UCB
    step with exploration level ``alpha log t / n``, where ``n`` is the
    episode length.
    """

    name = "adap_klucb"

    def __init__(self, n_arms, horizon, eps, alpha: float = 3.1, seed=0, noise_rngs=None):
        super().__init__(n_arms, horizon, eps, seed)
        self.alpha = alpha
        self.noise_rngs = list(noise_rngs) if noise_rngs is not None else [
            SeededRng(seed, noise_stream(a)) for a in range(n_arms)
        ]
        self.pulls = [0] * n_arms
        self.last_len = [0] * n_arms
        self.last_mean = [0.0] * n_arms

    def index(self, arm, t):
        n = self.last_len[arm]
        log_t = math.log(max(t, 2))
        shifted = clip01(self.last_mean[arm] + self.alpha * log_t / (self.eps * n))
        return klucb_upper(shifted, self.alpha * log_t / n, math.inf)

    def next_batch(self):
        for a, n in enumerate(self.pulls):
            if n == 0:
                return a, 1
        arm = _argmax_low([self.index(a, self.t) for a in range(self.K)])
        return arm, self.pulls[arm]

    def observe(self, arm, rewards):
        n = len(rewards)
        self._advance(n)
        self.pulls[arm] += n
        self.last_len[arm] = n
        self.last_mean[arm] = (float(np.sum(rewards)) + self._laplace(self.noise_rngs[arm])) / n


class LazyDpTsPolicy(Policy):
    """Thompson sampling on Beta posteriors refreshed only at phase ends.

    Arm ``a`` collects rewards into phases of length 1, 2, 4, ...  When a
    phase completes its sum is privatised with one Lap(1/eps) draw and the
    previous phase is forgotten.  The posterior uses the phase mean shifted up
    by ``correction * log t / (eps n)`` and clipped to [0, 1].
    """

    name = "lazy_dp_ts"

    def __init__(self, n_arms, horizon, eps, correction: float = 1.0, seed=0, noise_rngs=None):
        super().__init__(n_arms, horizon, eps, seed)
        self.correction = correction
        self.noise_rngs = list(noise_rngs) if noise_rngs is not None else [
            SeededRng(seed, noise_stream(a)) for a in range(n_arms)
        ]
        self.sampler = SeededRng(seed, policy_stream()).generator
        self.phase_len = [1] * n_arms
        self.buffer_sum = [0.0] * n_arms
        self.buffer_n = [0] * n_arms
        self.post_mean = [None] * n_arms
        self.post_n = [0] * n_arms

    def next_batch(self):
        for a, m in enumerate(self.post_mean):
            if m is None and self.buffer_n[a] == 0:
                return a, 1
        log_t = math.log(max(self.t + 1, 2))
        a_par, b_par = [], []
        for a in range(self.K):
            n = self.post_n[a]
            if n == 0:
                a_par.append(1.0)
                b_par.append(1.0)
                continue
            m = clip01(self.post_mean[a] + self.correction * log_t / (self.eps * n))
            a_par.append(1.0 + n * m)
            b_par.append(1.0 + n * (1.0 - m))
        theta = self.sampler.beta(a_par, b_par)
        return int(np.argmax(theta)), 1

    def observe(self, arm, rewards):
        self._advance(len(rewards))
        for r in np.asarray(rewards, dtype=float):
            self.buffer_sum[arm] += r
            self.buffer_n[arm] += 1
            if self.buffer_n[arm] == self.phase_len[arm]:
                n = self.buffer_n[arm]
                self.post_mean[arm] = (self.buffer_sum[arm] + self._laplace(self.noise_rngs[arm])) / n
                self.post_n[arm] = n
                self.buffer_sum[arm], self.buffer_n[arm] = 0.0, 0
                self.phase_len[arm] *= 2


# ---------------------------------------------------------------- factory


def make_policy(kind, n_arms: int, horizon: int, eps: float,
                sched: BatchSchedule = BatchSchedule(), seed: int = 0) -> Policy:
    """Build a fresh policy instance from a :class:`PolicyKind` (or bare kind name)."""
    if not isinstance(kind, PolicyKind):
        k = Kind.parse(kind)
        kind = PolicyKind(k, default_params(k, horizon))
    p = dict(kind.params)
    k = kind.kind
    if k is Kind.DP_KLUCB:
        return DpIndexPolicy(n_arms, horizon, eps, sched, "klucb", seed)
    if k is Kind.DP_IMED:
        return DpIndexPolicy(n_arms, horizon, eps, sched, "imed", seed)
    if k is Kind.KLUCB:
        return KlucbPolicy(n_arms, horizon, seed=seed)
    if k is Kind.IMED:
        return ImedPolicy(n_arms, horizon, seed=seed)
    if k is Kind.DP_SE:
        return DpSePolicy(n_arms, horizon, eps, beta=float(p["beta"]), seed=seed)
    if k is Kind.ADAP_KLUCB:
        return AdapKlucbPolicy(n_arms, horizon, eps, alpha=float(p["alpha"]), seed=seed)
    if k is Kind.LAZY_DP_TS:
        return LazyDpTsPolicy(n_arms, horizon, eps, correction=float(p.get("correction", 1.0)), seed=seed)
    raise ValueError(f"unknown policy kind {k!r}")
