"""Monte Carlo check of the private-sum concentration bound.

A trial draws ``n`` Bernoulli(mu) rewards and ``m`` Laplace(1/eps) noises and
forms the private sum exactly as the bandit policies do.  The empirical tail
at the threshold mean ``x`` is compared with the analytic bound.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import binomtest

from .bounds import chernoff_bound, private_sum_bound
from .kernel import bernoulli_kl, d_eps
from .privacy import SeededRng, release_noisy_sums

__all__ = ["ConcentrationConfig", "ConcentrationReport", "run_concentration",
           "simulate_private_means", "standard_panel", "CI_LEVEL"]

CI_LEVEL = 0.99
_CHUNK = 250_000


@dataclass(frozen=True)
class ConcentrationConfig:
    n: int
    m: int
    mu: float
    eps: float
    x: float
    trials: int = 10**6
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.m < 0:
            raise ValueError("m must be >= 0")
        if not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie in (0, 1)")
        if not self.eps > 0.0:
            raise ValueError("eps must be > 0")
        if not 0.0 <= self.x <= 1.0:
            raise ValueError("x must lie in [0, 1]")
        if self.trials < 10**4:
            raise ValueError("trials must be >= 10^4")


@dataclass(frozen=True)
class ConcentrationReport:
    config: ConcentrationConfig
    tail: str
    count: int
    empirical: float
    ci_low: float
    ci_high: float
    analytic: float
    chernoff: float
    d_eps: float
    kl: float

    @property
    def vacuous(self) -> bool:
        return self.analytic >= 1.0

    @property
    def passed(self) -> bool:
        """The analytic bound is at least the upper end of the empirical CI."""
        return self.analytic >= self.ci_high

    @property
    def exponent(self) -> float | None:
        """``-log(p_hat) / n``, or None when nothing was observed."""
        if self.count == 0:
            return None
        return -math.log(self.empirical) / self.config.n

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "config"}
        d.update(config=asdict(self.config), vacuous=self.vacuous, passed=self.passed,
                 exponent=self.exponent, flag="PASS" if self.passed else "FAIL")
        return d


def simulate_private_means(n: int, m: int, mu: float, eps: float, trials: int, seed: int) -> np.ndarray:
    """``trials`` draws of (sum of n Ber(mu) + sum of m Lap(1/eps)) / n."""
    clean_rng = SeededRng(seed, 0)
    noise_rng = SeededRng(seed, 1)
    out = np.empty(trials)
    for start in range(0, trials, _CHUNK):
        k = min(_CHUNK, trials - start)
        clean = clean_rng.generator.binomial(n, mu, size=k).astype(float)
        out[start:start + k] = release_noisy_sums(clean, m, eps, noise_rng) / n
    return out


def run_concentration(cfg: ConcentrationConfig) -> ConcentrationReport:
    means = simulate_private_means(cfg.n, cfg.m, cfg.mu, cfg.eps, cfg.trials, cfg.seed)
    upper = cfg.x >= cfg.mu
    hits = means >= cfg.x if upper else means <= cfg.x
    count = int(hits.sum())
    ci = binomtest(count, cfg.trials).proportion_ci(confidence_level=CI_LEVEL, method="exact")
    return ConcentrationReport(
        config=cfg,
        tail="upper" if upper else "lower",
        count=count,
        empirical=count / cfg.trials,
        ci_low=float(ci.low),
        ci_high=float(ci.high),
        analytic=private_sum_bound(cfg.n, cfg.m, cfg.n * cfg.x, cfg.mu, cfg.eps),
        chernoff=chernoff_bound(cfg.n, cfg.x, cfg.mu),
        d_eps=d_eps(cfg.x, cfg.mu, cfg.eps),
        kl=bernoulli_kl(cfg.x, cfg.mu),
    )


def standard_panel(mu: float = 0.5, trials: int = 10**6, seed: int = 0) -> list[ConcentrationConfig]:
    """n in {200, 1000}, m in {0, 1, 5, ceil(log2 n)}, eps in {0.25, 1}, x in {mu +- 0.05, mu +- 0.1}."""
    panel = []
    for n in (200, 1000):
        for m in sorted({0, 1, 5, math.ceil(math.log2(n))}):
            for eps in (0.25, 1.0):
                for dx in (-0.1, -0.05, 0.05, 0.1):
                    panel.append(ConcentrationConfig(n, m, mu, eps, round(mu + dx, 12), trials, seed))
    return panel
