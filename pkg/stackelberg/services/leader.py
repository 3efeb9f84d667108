"""
IRS operator pricing.

Given the follower's shrinkage norms ||x_s||_2, module s stays triggered iff
||x_s||_2 > r*alpha, in which case ||theta_s||_2 = (||x_s||_2 - r*alpha) / c.
The operator's revenue r*alpha*sum_s ||theta_s||_2 is therefore

    V(r) = sum_s kappa_s * rho * (||x_s||_2 - rho) / c,   rho = r*alpha,

a piecewise downward parabola in rho. With alpha = 1 this is exactly the
(-r^2 + ||x_s|| r) / c form.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..exceptions import NoReflectionDemandError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PriceState:
    price: float
    kappa: Tuple[int, ...]
    x_norms: Tuple[float, ...]


def kappa(price: float, x_norms: np.ndarray, balance: float = 1.0) -> np.ndarray:
    """1 for modules still triggered at this price, 0 for priced-out ones."""
    return (np.asarray(x_norms, dtype=float) > price * balance).astype(int)


def price_state(price: float, x_norms: np.ndarray, balance: float = 1.0) -> PriceState:
    if price <= 0:
        raise ValueError(f"price must be positive, got {price}")
    norms = np.asarray(x_norms, dtype=float)
    return PriceState(
        price=float(price),
        kappa=tuple(int(k) for k in kappa(price, norms, balance)),
        x_norms=tuple(float(n) for n in norms),
    )


def leader_utility(price: float, x_norms: np.ndarray, penalty: float, balance: float = 1.0) -> float:
    norms = np.asarray(x_norms, dtype=float)
    rho = price * balance
    active = norms > rho
    return float(np.sum(rho * (norms[active] - rho)) / penalty)


def best_response_curve(x_norms: np.ndarray, penalty: float, balance: float,
                        prices: np.ndarray) -> np.ndarray:
    """V evaluated on a price grid, vectorized over the grid."""
    norms = np.asarray(x_norms, dtype=float)[None, :]
    rho = np.asarray(prices, dtype=float)[:, None] * balance
    gain = np.where(norms > rho, rho * (norms - rho), 0.0)
    return gain.sum(axis=1) / penalty


def price_candidates(x_norms: np.ndarray, balance: float = 1.0) -> np.ndarray:
    """Prices at which V can peak.

    For every prefix T of the norms sorted descending, rho_T = sum_T ||x_s|| / (2|T|)
    is kept when the threshold rule selects exactly T; every norm value is a
    boundary candidate as well.
    """
    norms = np.sort(np.asarray(x_norms, dtype=float))[::-1]
    norms = norms[norms > 0]
    candidates = []
    for t in range(1, norms.size + 1):
        rho = norms[:t].sum() / (2.0 * t)
        selects_prefix = norms[t - 1] > rho and (t == norms.size or norms[t] <= rho)
        if selects_prefix:
            candidates.append(rho)
    candidates.extend(norms.tolist())
    return np.asarray(candidates) / balance


def optimal_price(x_norms: np.ndarray, penalty: float, balance: float = 1.0) -> float:
    """Exact maximizer of V(r) over r > 0."""
    norms = np.asarray(x_norms, dtype=float)
    if norms.size == 0 or not np.any(norms > 0):
        raise NoReflectionDemandError("no reflection demand: every shrinkage norm is zero")
    candidates = price_candidates(norms, balance)
    values = [leader_utility(r, norms, penalty, balance) for r in candidates]
    best = int(np.argmax(values))
    logger.debug("[LEADER] %d candidates, best price %.6g (V=%.6g)", len(candidates), candidates[best], values[best])
    return float(candidates[best])


def random_price(rng: np.random.Generator, r_max: float) -> float:
    """Uniform draw on (0, r_max]."""
    if r_max <= 0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    return float(r_max * (1.0 - rng.uniform()))


def price_grid(upper: float, floor: float, points: int) -> np.ndarray:
    """Log-spaced prices on [floor * upper, upper]."""
    if upper <= 0:
        raise ValueError(f"upper price must be positive, got {upper}")
    return np.geomspace(floor * upper, upper, points)
