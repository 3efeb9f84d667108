"""
Outer price loop, baseline schemes and the equilibrium check.

Every reported quantity is recomputed from the final (W, phi, r) through
scenario.utilities; solver internals never leak into an outcome.

The leader values a price by the follower's actual reaction to it: a full
follower solve at that price (ReactionMap). The closed-form price of
leader.optimal_price, which holds the shrinkage norms fixed, is offered as
one candidate among the scanned ones.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
from scipy import optimize

from ..exceptions import NoReflectionDemandError
from . import follower, leader
from .scenario import ChannelSet, ReflectionVector, ScenarioConfig, is_feasible, utilities

logger = logging.getLogger(__name__)


class Scheme(str, Enum):
    STACKELBERG = "stackelberg"
    RANDOM_PRICING = "random-pricing"
    DIRECT_LINK = "direct-link"


@dataclass(frozen=True)
class EquilibriumReport:
    follower_max_gain: float
    leader_max_gain: float
    tolerance: float
    leader_tolerance: float

    @property
    def follower_ok(self) -> bool:
        return self.follower_max_gain <= self.tolerance

    @property
    def leader_ok(self) -> bool:
        return self.leader_max_gain <= self.leader_tolerance


@dataclass(frozen=True, eq=False)
class GameOutcome:
    scheme: Scheme
    price: float
    W: np.ndarray
    reflection: ReflectionVector
    bs_utility: float
    irs_utility: float
    sum_rate: float
    rates: np.ndarray
    triggered: int
    feasible: bool = True
    inner_iterations: int = 0
    outer_iterations: int = 0
    inner_converged: bool = True
    outer_converged: bool = True
    admm_warning: bool = False
    direct_fallback: bool = False
    x_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    price_state: Optional[leader.PriceState] = None
    trace: Optional[List[follower.TraceRecord]] = None
    equilibrium: Optional[EquilibriumReport] = None

    def as_dict(self) -> Dict[str, Any]:
        """JSON-ready view; complex arrays become [[re, im], ...]."""
        def complex_list(a: np.ndarray):
            return np.stack([a.real, a.imag], axis=-1).tolist()

        data = {
            "scheme": self.scheme.value,
            "price": self.price,
            "U": self.bs_utility,
            "V": self.irs_utility,
            "sum_rate": self.sum_rate,
            "rates": self.rates.tolist(),
            "triggered": self.triggered,
            "feasible": self.feasible,
            "inner_iterations": self.inner_iterations,
            "outer_iterations": self.outer_iterations,
            "inner_converged": self.inner_converged,
            "outer_converged": self.outer_converged,
            "admm_warning": self.admm_warning,
            "direct_fallback": self.direct_fallback,
            "x_norms": self.x_norms.tolist(),
            "W": complex_list(self.W),
            "phi": complex_list(self.reflection.phi),
        }
        if self.price_state is not None:
            data["price_state"] = {
                "price": self.price_state.price,
                "kappa": list(self.price_state.kappa),
                "x_norms": list(self.price_state.x_norms),
            }
        if self.equilibrium is not None:
            data["equilibrium"] = {
                "follower_max_gain": self.equilibrium.follower_max_gain,
                "leader_max_gain": self.equilibrium.leader_max_gain,
                "follower_ok": self.equilibrium.follower_ok,
                "leader_ok": self.equilibrium.leader_ok,
            }
        return data


def outcome_from_state(scheme: Scheme, ch: ChannelSet, cfg: ScenarioConfig, W: np.ndarray,
                       phi: np.ndarray, price: float, **flags) -> GameOutcome:
    report = utilities(ch, W, phi, price, cfg)
    feasible = is_feasible(W, phi, cfg)
    if not feasible:
        logger.warning("[GAME] %s outcome violates the power or modulus constraint", Scheme(scheme).value)
    return GameOutcome(
        scheme=scheme,
        price=float(price),
        W=np.array(W),
        reflection=ReflectionVector(phi, ch.elements_per_module),
        bs_utility=report.bs_utility,
        irs_utility=report.irs_utility,
        sum_rate=report.sum_rate,
        rates=report.rates,
        triggered=len(report.triggered),
        feasible=feasible,
        **flags,
    )


def _follower_outcome(scheme: Scheme, ch: ChannelSet, cfg: ScenarioConfig, price: float,
                      result: follower.FollowerResult, **flags) -> GameOutcome:
    state = result.state
    x_norms = follower.shrinkage_inputs(state.phi, state.Lambda, state.penalty, ch.elements_per_module).norms
    return outcome_from_state(
        scheme, ch, cfg, state.W, follower.reported_reflection(state), price,
        inner_converged=result.converged,
        admm_warning=result.admm_warning,
        direct_fallback=result.direct_fallback,
        x_norms=x_norms,
        trace=result.trace,
        **flags,
    )


def run_direct_link(ch: ChannelSet, cfg: ScenarioConfig) -> GameOutcome:
    """No module triggered: phi = 0 and only the (alpha, beta, W) cycle runs."""
    result = follower.direct_response(ch, cfg)
    phi = np.zeros(ch.total_elements, dtype=complex)
    return outcome_from_state(
        Scheme.DIRECT_LINK, ch, cfg, result.state.W, phi, 0.0,
        inner_iterations=result.iterations,
        inner_converged=result.converged,
        trace=result.trace,
    )


def _initial_norms(ch: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    state = follower.initial_state(ch, cfg.max_power, cfg.solver.penalty)
    return follower.shrinkage_inputs(state.phi, state.Lambda, state.penalty, ch.elements_per_module).norms


def initial_price_ceiling(ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """2 * max_s ||x_s||_2 at the follower's initial state."""
    return 2.0 * float(_initial_norms(ch, cfg).max())


def price_search_grid(ch: ChannelSet, cfg: ScenarioConfig, points: Optional[int] = None) -> np.ndarray:
    """Log-spaced prices up to max_s ||x_s||_2 / alpha at the initial state,
    the price at which the first shrinkage step switches every module off."""
    settings = cfg.solver
    upper = float(_initial_norms(ch, cfg).max()) / cfg.balance_alpha
    return leader.price_grid(upper, settings.price_floor, points or settings.price_grid_points)


class ReactionMap:
    """Follower reactions by price.

    Each reaction is a full follower solve from the deterministic initial
    state, so the value of a price does not depend on the order in which
    prices are visited. Reactions are cached per price.
    """

    def __init__(self, ch: ChannelSet, cfg: ScenarioConfig,
                 direct: Optional[follower.FollowerResult] = None):
        self.ch = ch
        self.cfg = cfg
        self.direct = direct if direct is not None else follower.direct_response(ch, cfg)
        self.grid = price_search_grid(ch, cfg)
        self.iterations = 0
        self._outcomes: Dict[float, GameOutcome] = {}

    def __call__(self, price: float) -> GameOutcome:
        price = float(price)
        outcome = self._outcomes.get(price)
        if outcome is None:
            result = follower.solve_follower(self.ch, price, self.cfg, direct=self.direct)
            self.iterations += result.iterations
            outcome = _follower_outcome(
                Scheme.STACKELBERG, self.ch, self.cfg, price, result, inner_iterations=result.iterations,
            )
            self._outcomes[price] = outcome
        return outcome

    def __len__(self) -> int:
        return len(self._outcomes)

    def best(self) -> GameOutcome:
        """Highest leader utility solved so far; ties go to the lower price."""
        by_price = sorted(self._outcomes.values(), key=lambda o: o.price)
        return max(by_price, key=lambda o: o.irs_utility)


def _local_peaks(values: np.ndarray) -> List[int]:
    peaks = []
    for i, v in enumerate(values):
        if v <= 0.0:
            continue
        left = values[i - 1] if i > 0 else -np.inf
        right = values[i + 1] if i + 1 < values.size else -np.inf
        if v >= left and v >= right:
            peaks.append(i)
    return peaks


def leader_best_response(reactions: ReactionMap, candidates: Iterable[float] = ()) -> GameOutcome:
    """Best price against recomputed follower reactions.

    Scans the log price grid, refines each local peak of the scan by a
    bounded search in log-price between its grid neighbours, solves any
    extra candidate prices, and returns the best reaction seen.
    """
    settings = reactions.cfg.solver
    grid = reactions.grid
    values = np.array([reactions(r).irs_utility for r in grid])
    for price in candidates:
        reactions(price)

    def loss(log_price: float) -> float:
        return -reactions(math.exp(log_price)).irs_utility

    for i in _local_peaks(values):
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        optimize.minimize_scalar(
            loss, bounds=(math.log(lo), math.log(hi)), method="bounded",
            options={"xatol": settings.tol_outer / 10.0, "maxiter": settings.price_refine_steps},
        )
    best = reactions.best()
    logger.debug("[LEADER] %d reactions solved, best price %.6g (V=%.6e)", len(reactions), best.price, best.irs_utility)
    return best


def run_random_pricing(ch: ChannelSet, cfg: ScenarioConfig, rng: np.random.Generator,
                       r_max: Optional[float] = None) -> GameOutcome:
    """One random price, ignoring the BS, followed by one best response."""
    if ch.total_elements == 0:
        return replace(run_direct_link(ch, cfg), scheme=Scheme.RANDOM_PRICING)
    r_max = initial_price_ceiling(ch, cfg) if r_max is None else r_max
    price = leader.random_price(rng, r_max)
    result = follower.solve_follower(ch, price, cfg)
    logger.debug("[RANDOM] price %.4g -> %d follower iterations", price, result.iterations)
    return _follower_outcome(
        Scheme.RANDOM_PRICING, ch, cfg, price, result,
        inner_iterations=result.iterations, outer_iterations=1,
    )


def run_stackelberg(ch: ChannelSet, cfg: ScenarioConfig, check: bool = True,
                    rng: Optional[np.random.Generator] = None) -> GameOutcome:
    """Alternate follower solves and leader best responses until the price settles.

    Round tau solves the follower at the current price, warm-started from the
    previous round when solver.warm_start is set, and offers the leader the
    closed-form prices for the shrinkage norms of that state and of the
    reaction at the current price, besides its own scan.
    The loop ends once no price pays the leader more than (1 + tol_outer)
    times what the current one does; the returned outcome is the follower's
    reaction to that price.
    """
    if ch.total_elements == 0:
        return replace(run_direct_link(ch, cfg), scheme=Scheme.STACKELBERG)

    settings = cfg.solver
    reactions = ReactionMap(ch, cfg)
    price = settings.initial_price
    state = None
    inner_total = 0
    outer_converged = False

    for tau in range(1, settings.max_outer + 1):
        init = state if settings.warm_start else None
        result = follower.solve_follower(ch, price, cfg, init=init, direct=reactions.direct)
        state = result.state
        inner_total += result.iterations

        current = reactions(price)
        main_norms = follower.shrinkage_inputs(state.phi, state.Lambda, state.penalty, ch.elements_per_module).norms
        candidates = []
        for norms in (main_norms, current.x_norms):
            try:
                candidates.append(leader.optimal_price(norms, state.penalty, cfg.balance_alpha))
            except NoReflectionDemandError:
                logger.debug("[LEADER] tau=%d: shrinkage norms all zero, no closed-form candidate", tau)

        best = leader_best_response(reactions, candidates)
        logger.debug("[LEADER] tau=%d price=%.6g V=%.6e -> best %.6g V=%.6e",
                     tau, price, current.irs_utility, best.price, best.irs_utility)
        if best.irs_utility <= current.irs_utility * (1.0 + settings.tol_outer):
            outer_converged = True
            break
        price = best.price

    if not outer_converged:
        logger.warning("[LEADER] price loop did not settle within %d rounds", settings.max_outer)

    final = reactions(price)
    if final.irs_utility <= 0.0:
        logger.warning("[LEADER] no scanned price gets any module triggered; the outcome is the direct link")
    outcome = replace(
        final,
        inner_iterations=inner_total + reactions.iterations,
        outer_iterations=tau,
        outer_converged=outer_converged,
        price_state=leader.price_state(final.price, final.x_norms, cfg.balance_alpha),
    )

    if check:
        rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
        outcome = replace(outcome, equilibrium=check_equilibrium(outcome, ch, cfg, rng, reactions=reactions))
    return outcome


def check_equilibrium(outcome: GameOutcome, ch: ChannelSet, cfg: ScenarioConfig,
                      rng: np.random.Generator, reactions: Optional[ReactionMap] = None,
                      num_perturbations: int = 100, grid_points: int = 40,
                      relative_step: float = 1e-2, tolerance: float = 1e-6) -> EquilibriumReport:
    """Both halves of the equilibrium condition, measured rather than asserted.

    Follower side: U at random feasible perturbations of (W, phi) of the given
    relative size. Leader side: V at the follower's recomputed reaction to
    every price of the leader's scan grid, a second log grid of grid_points
    prices and any price already solved in `reactions`; a gain within
    tol_outer of V counts as none.
    """
    W, phi = outcome.W, outcome.reflection.phi
    price = outcome.price
    base = outcome.bs_utility
    w_scale = max(np.linalg.norm(W), 1e-300)

    follower_gain = -np.inf
    for _ in range(num_perturbations):
        dW = rng.standard_normal(W.shape) + 1j * rng.standard_normal(W.shape)
        W_try = W + relative_step * w_scale * dW / np.linalg.norm(dW)
        power = np.sum(np.abs(W_try) ** 2)
        if power > cfg.max_power:
            W_try = W_try * np.sqrt(cfg.max_power / power)
        dphi = rng.standard_normal(phi.shape) + 1j * rng.standard_normal(phi.shape)
        phi_try = phi + relative_step * dphi / np.sqrt(2.0)
        phi_try = phi_try / np.maximum(1.0, np.abs(phi_try))
        trial = utilities(ch, W_try, phi_try, price, cfg).bs_utility
        follower_gain = max(follower_gain, trial - base)

    leader_gain = 0.0
    if ch.total_elements > 0:
        reactions = reactions if reactions is not None else ReactionMap(ch, cfg)
        for r in np.union1d(reactions.grid, price_search_grid(ch, cfg, grid_points)):
            reactions(r)
        leader_gain = float(reactions.best().irs_utility - outcome.irs_utility)

    report = EquilibriumReport(
        follower_max_gain=float(follower_gain),
        leader_max_gain=leader_gain,
        tolerance=tolerance,
        leader_tolerance=cfg.solver.tol_outer * abs(outcome.irs_utility) + 1e-15,
    )
    logger.debug("[EQUILIBRIUM] follower gain %.3e, leader gain %.3e", report.follower_max_gain, report.leader_max_gain)
    return report


def run_scheme(scheme: Scheme, ch: ChannelSet, cfg: ScenarioConfig,
               rng: np.random.Generator, check: bool = False) -> GameOutcome:
    scheme = Scheme(scheme)
    if scheme is Scheme.STACKELBERG:
        return run_stackelberg(ch, cfg, check=check, rng=rng)
    if scheme is Scheme.RANDOM_PRICING:
        return run_random_pricing(ch, cfg, rng)
    return run_direct_link(ch, cfg)
