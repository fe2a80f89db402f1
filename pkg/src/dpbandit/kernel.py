"""Bernoulli kl, the privacy-smoothed divergence d_eps, and the policy indexes.

``d_eps(x, y) = inf_{z between x and y} eps * |z - x| + kl(z, y)`` interpolates
between ``kl(x, y)`` (large eps) and ``eps * |x - y|`` (small eps).

Every function here is pure.  ``eps = math.inf`` is accepted wherever a
privacy budget is taken and makes ``d_eps`` collapse onto ``kl``; the
non-private baselines rely on this.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Regime",
    "DivergenceResult",
    "bernoulli_kl",
    "d_eps",
    "d_eps_closed",
    "d_eps_oracle",
    "klucb_upper",
    "imed_score",
    "clip01",
    "BISECTION_TOL",
]

BISECTION_TOL = 1e-9


class Regime(str, enum.Enum):
    LOW_PRIVACY = "LowPrivacy"
    HIGH_PRIVACY = "HighPrivacy"


@dataclass(frozen=True)
class DivergenceResult:
    value: float
    minimizer_z: float
    regime: Regime


def clip01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def _check_unit(name: str, v: float) -> None:
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {v!r}")


def _check_eps(eps: float) -> None:
    if not eps > 0.0:
        raise ValueError(f"eps must be > 0, got {eps!r}")


def bernoulli_kl(p: float, q: float) -> float:
    """kl(Ber(p), Ber(q)) with the limit conventions ``0 log 0 = 0``.

    Returns ``math.inf`` when ``q`` is 0 or 1 and ``p != q``.
    """
    if p == q:
        return 0.0
    if q <= 0.0 or q >= 1.0:
        return math.inf
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    # rounding can push tiny divergences below zero
    return out if out > 0.0 else 0.0


def _tilted_down(y: float, eps: float) -> float:
    # stationary point of eps*(z - x) + kl(z, y) for x <= y: y / (y + (1-y) e^eps)
    if y <= 0.0:
        return 0.0
    if y >= 1.0:
        return 1.0
    return 1.0 / (1.0 + (1.0 - y) / y * math.exp(eps))


def _tilted_up(y: float, eps: float) -> float:
    # stationary point of eps*(x - z) + kl(z, y) for x >= y: y e^eps / (y e^eps + 1 - y)
    if y <= 0.0:
        return 0.0
    if y >= 1.0:
        return 1.0
    return 1.0 / (1.0 + (1.0 - y) / y * math.exp(-eps))


def d_eps_closed(x: float, y: float, eps: float) -> DivergenceResult:
    """Closed-form ``d_eps(x, y)`` together with its minimiser and regime.

    The regime is ``LOW_PRIVACY`` exactly when the minimiser is ``x`` itself,
    i.e. when ``d_eps(x, y) == kl(x, y)``.
    """
    _check_unit("x", x)
    _check_unit("y", y)
    _check_eps(eps)
    # the tilts lie on y's side of x mathematically; clamp against under/overflow
    if x <= y:
        z = max(x, min(_tilted_down(y, eps), y))
    else:
        z = min(max(_tilted_up(y, eps), y), x)
    if z == x:
        return DivergenceResult(bernoulli_kl(x, y), x, Regime.LOW_PRIVACY)
    return DivergenceResult(bernoulli_kl(z, y) + eps * abs(z - x), z, Regime.HIGH_PRIVACY)


def d_eps(x: float, y: float, eps: float) -> float:
    """Value-only shortcut for :func:`d_eps_closed`."""
    return d_eps_closed(x, y, eps).value


def _grid_objective(z: np.ndarray, x: float, y: float, eps: float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if 0.0 < y < 1.0:
            a = np.where(z > 0.0, z * np.log(z / y), 0.0)
            b = np.where(z < 1.0, (1.0 - z) * np.log((1.0 - z) / (1.0 - y)), 0.0)
            kl = np.maximum(a + b, 0.0)
        else:
            kl = np.where(z == y, 0.0, np.inf)
    return eps * np.abs(z - x) + kl


def _point_objective(z: float, x: float, y: float, eps: float) -> float:
    # scalar twin of _grid_objective, same arithmetic
    if 0.0 < y < 1.0:
        a = z * math.log(z / y) if z > 0.0 else 0.0
        b = (1.0 - z) * math.log((1.0 - z) / (1.0 - y)) if z < 1.0 else 0.0
        kl = max(a + b, 0.0)
    else:
        kl = 0.0 if z == y else math.inf
    return eps * abs(z - x) + kl


def d_eps_oracle(
    x: float, y: float, eps: float, grid_points: int = 10**6, method: str = "auto"
) -> float:
    """Minimum of ``eps|z - x| + kl(z, y)`` over a uniform grid on ``[x ^ y, x v y]``.

    This is a test oracle and never consults the closed form.

    ``method="scan"`` evaluates every grid point.  ``method="convex"`` finds the
    same grid minimum with a discrete bisection on the grid index, which is
    exact because the objective is convex in ``z``.  ``"auto"`` scans grids of
    up to 2**16 points and bisects larger ones.
    """
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    lo, hi = min(x, y), max(x, y)
    if lo == hi:
        return float(_grid_objective(np.array([lo]), x, y, eps)[0])
    if method == "auto":
        method = "scan" if grid_points <= 2**16 else "convex"

    def point(i):
        return lo + (hi - lo) * (np.asarray(i, dtype=float) / (grid_points - 1))

    if method == "scan":
        best = np.inf
        chunk = 1 << 16
        for start in range(0, grid_points, chunk):
            idx = np.arange(start, min(start + chunk, grid_points))
            best = min(best, float(_grid_objective(point(idx), x, y, eps).min()))
        return best
    if method != "convex":
        raise ValueError(f"unknown method {method!r}")

    def f(i: int) -> float:
        z = lo + (hi - lo) * (i / (grid_points - 1))
        return _point_objective(z, x, y, eps)

    a, b = 0, grid_points - 1
    while b - a > 2:
        mid = (a + b) // 2
        if f(mid) <= f(mid + 1):
            b = mid + 1
        else:
            a = mid + 1
    candidates = [f(i) for i in range(a, b + 1)]
    # an all-infinite interior (y at 0 or 1) leaves only the endpoints finite
    return min(min(candidates), f(0), f(grid_points - 1))


def klucb_upper(clipped_mean: float, exploration_budget: float, eps: float) -> float:
    """Largest ``mu`` in ``[clipped_mean, 1]`` with ``d_eps(clipped_mean, mu) <= budget``.

    Bisection to ``BISECTION_TOL``; ``d_eps(x, .)`` is nondecreasing on ``[x, 1]``.
    """
    x = clipped_mean
    _check_unit("clipped_mean", x)
    if exploration_budget < 0.0:
        raise ValueError("exploration_budget must be >= 0")
    if exploration_budget == 0.0 or x >= 1.0:
        return x
    if math.isfinite(eps) and exploration_budget >= eps * (1.0 - x):
        return 1.0
    lo, hi = x, 1.0
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if d_eps_closed(x, mid, eps).value <= exploration_budget:
            lo = mid
        else:
            hi = mid
    return lo


def imed_score(clipped_mean_i: float, pulls_i: int, clipped_best_mean: float, eps: float) -> float:
    """``n * d_eps(mean_i, best_mean) + log n``; the arm minimising it is played."""
    if pulls_i < 1:
        raise ValueError("pulls_i must be >= 1")
    return pulls_i * d_eps_closed(clipped_mean_i, clipped_best_mean, eps).value + math.log(pulls_i)
