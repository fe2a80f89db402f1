"""Regret-rate constants and tail bounds for private sums.

All bounds are returned raw; a value above 1 is vacuous but still reported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import Regime, bernoulli_kl, d_eps_closed

__all__ = [
    "ArmBound",
    "BoundReport",
    "lower_bound_rate",
    "regime_threshold",
    "regime_classify",
    "laplace_cum_tail_bound",
    "private_sum_constant",
    "private_sum_bound",
    "chernoff_bound",
    "INNER_GRID",
]

INNER_GRID = 1000


@dataclass(frozen=True)
class ArmBound:
    arm: int
    gap: float
    divergence: float
    regime: Regime


@dataclass(frozen=True)
class BoundReport:
    eps: float
    alpha: float
    lower_rate: float
    upper_rate: float
    per_arm: list[ArmBound] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "alpha": self.alpha,
            "lower_rate": self.lower_rate,
            "upper_rate": self.upper_rate,
            "per_arm": [
                {"arm": a.arm, "gap": a.gap, "d_eps": a.divergence, "regime": a.regime.value}
                for a in self.per_arm
            ],
        }


def lower_bound_rate(means, eps: float, alpha: float = 2.0) -> BoundReport:
    """Coefficient of ``log T`` in the regret lower bound, ``sum_a gap_a / d_eps(mu_a, mu*)``.

    ``upper_rate`` is the matching upper-bound constant ``alpha * lower_rate``
    of the batched index policies.  Arms with zero gap contribute nothing.
    """
    means = [float(m) for m in getattr(means, "means", means)]
    best = max(means)
    per_arm, rate = [], 0.0
    for a, mu in enumerate(means):
        gap = best - mu
        if gap <= 0.0:
            continue
        res = d_eps_closed(mu, best, eps)
        per_arm.append(ArmBound(a, gap, res.value, res.regime))
        rate += gap / res.value
    return BoundReport(eps, alpha, rate, alpha * rate, per_arm)


def regime_threshold(mu_a: float, mu_star: float) -> float:
    """Budget above which privacy is free: ``log(mu*/mu_a) + log((1-mu_a)/(1-mu*))``."""
    if not 0.0 < mu_a < mu_star < 1.0:
        raise ValueError("need 0 < mu_a < mu_star < 1")
    return math.log(mu_star / mu_a) + math.log((1.0 - mu_a) / (1.0 - mu_star))


def regime_classify(mu_a: float, mu_star: float, eps: float) -> Regime:
    return Regime.LOW_PRIVACY if eps >= regime_threshold(mu_a, mu_star) else Regime.HIGH_PRIVACY


def laplace_cum_tail_bound(z: float, m: int, eps: float) -> float:
    """``exp(-(eps z - 1 - m log(1 + m eps z)))`` bounding P[sum of m Lap(1/eps) >= z]."""
    if z < 0.0:
        raise ValueError("z must be >= 0")
    if m < 1:
        raise ValueError("m must be >= 1")
    f = eps * z - 1.0 - m * math.log1p(m * eps * z)
    return math.exp(-f)


def private_sum_constant(n: int, m: int, x: float, mu: float, eps: float,
                         grid: int = INNER_GRID) -> float:
    """The prefactor multiplying ``exp(-n d_eps(x/n, mu))`` in the private-sum tail bound.

    ``x`` is a threshold on the sum.  Upper tail when ``x >= n mu`` (weight
    ``log 1/mu``), lower tail otherwise (weight ``log 1/(1-mu)``).  The inner
    maximum over the mean ``y`` between ``mu`` and ``x/n`` is taken on a grid.
    """
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    upper = x >= n * mu
    dev = (x - n * mu) if upper else (n * mu - x)
    weight = math.log(1.0 / mu) if upper else math.log(1.0 / (1.0 - mu))
    ys = np.linspace(mu, x / n, grid)
    gaps = (x - ys * n) if upper else (ys * n - x)
    gaps = np.maximum(gaps, 0.0)
    inner = float(np.max(math.e * (1.0 + m * eps * gaps) ** m * weight))
    return dev * inner + math.e * (1.0 + m * eps * dev) ** m + 1.0


def private_sum_bound(n: int, m: int, x: float, mu: float, eps: float,
                      grid: int = INNER_GRID) -> float:
    """Tail bound on the sum of n Ber(mu) and m Lap(1/eps) variables at sum-threshold ``x``.

    ``P[S >= x] <= A e^{-n d_eps(x/n, mu)}`` for ``x >= n mu`` and the mirrored
    statement for ``x <= n mu``.  Not clamped to 1.
    """
    xn = x / n
    if not 0.0 <= xn <= 1.0:
        raise ValueError("threshold mean x/n must lie in [0, 1]")
    a = private_sum_constant(n, m, x, mu, eps, grid)
    return a * math.exp(-n * d_eps_closed(xn, mu, eps).value)


def chernoff_bound(n: int, x_mean: float, mu: float) -> float:
    """``exp(-n kl(x, mu))`` for the mean of n Ber(mu) variables."""
    return math.exp(-n * bernoulli_kl(x_mean, mu))
