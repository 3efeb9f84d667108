"""
Best response of the base station for a fixed module price.

The follower maximizes U = sum_k log2(1 + gamma_k) - r*alpha*sum_s ||phi_s||_2
subject to the power budget and |phi_i| <= 1 by alternating:

    alpha  (Lagrangian dual transform)      -> update_alpha
    beta   (quadratic transform, W side)    -> update_beta
    W, l0  (power-constrained beamformer)   -> update_w
    eps    (quadratic transform, phi side)  -> update_epsilon
    phi    (ADMM primal, box projection)    -> update_phi
    theta  (group soft-thresholding)        -> update_theta
    Lambda (ADMM multiplier)                -> update_lambda

Rates are in bits, so every fractional/surrogate term carries RATE_SCALE = 1/ln 2
while the price term does not.

The follower can always switch every module off, so a solve never reports
less than that zero-reflection response.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg
from typing_extensions import TypedDict

from ..exceptions import DimensionMismatchError, FollowerDivergenceError
from .scenario import (
    ChannelSet,
    ScenarioConfig,
    SolverSettings,
    combined_channels,
    effective_gains,
    l12_norm,
    sinr_all,
    utilities,
)

logger = logging.getLogger(__name__)

RATE_SCALE = 1.0 / math.log(2.0)


@dataclass
class FollowerState:
    """All follower iterates. Vectors of length S*N are stacked per module."""
    W: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    Lambda: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    epsilon: np.ndarray
    mu: np.ndarray
    lambda0: float = 0.0
    penalty: float = 1.0

    def copy(self) -> "FollowerState":
        return replace(
            self,
            W=self.W.copy(), phi=self.phi.copy(), theta=self.theta.copy(),
            Lambda=self.Lambda.copy(), alpha=self.alpha.copy(), beta=self.beta.copy(),
            epsilon=self.epsilon.copy(), mu=self.mu.copy(),
        )

    @property
    def alpha_bar(self) -> np.ndarray:
        return 1.0 + self.alpha


class ShrinkageInputs(NamedTuple):
    x: np.ndarray       # (S, N), x_s = c*phi_s - Lambda_s
    norms: np.ndarray   # (S,)


class TraceRecord(TypedDict):
    iteration: int
    objective: float
    residual: float


@dataclass
class FollowerResult:
    state: FollowerState
    trace: List[TraceRecord] = field(default_factory=list)
    converged: bool = False
    admm_warning: bool = False
    direct_fallback: bool = False

    @property
    def iterations(self) -> int:
        return len(self.trace)


def initial_state(ch: ChannelSet, max_power: float, penalty: float) -> FollowerState:
    """Feasible deterministic start.

    phi = theta = all ones, Lambda = 0, and W matched to the combined
    channels with the budget split equally between users.
    """
    K, SN = ch.num_users, ch.total_elements
    phi = np.ones(SN, dtype=complex)
    h = combined_channels(ch, phi)
    norms = np.linalg.norm(h, axis=1)
    W = np.zeros((ch.num_antennas, K), dtype=complex)
    active = norms > 0
    W[:, active] = (h[active] / norms[active, None]).T * math.sqrt(max_power / K)
    return FollowerState(
        W=W,
        phi=phi,
        theta=phi.copy(),
        Lambda=np.zeros(SN, dtype=complex),
        alpha=np.zeros(K),
        beta=np.zeros(K, dtype=complex),
        epsilon=np.zeros(K, dtype=complex),
        mu=np.zeros(SN),
        penalty=penalty,
    )


# =========================================================
# Objectives
# =========================================================

def dual_objective(alpha: np.ndarray, gamma: np.ndarray, price_term: float) -> float:
    """Lagrangian dual-transform objective, in bits. Maximized over alpha at alpha = gamma."""
    alpha = np.asarray(alpha, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    inner = np.log1p(alpha) - alpha + (1.0 + alpha) * gamma / (1.0 + gamma)
    return float(RATE_SCALE * inner.sum() - price_term)


def beta_objective(beta: np.ndarray, alpha: np.ndarray, gains: np.ndarray, noise_power: float) -> float:
    """Quadratic-transform surrogate of the W subproblem; gains[k, j] = h_k^H w_j."""
    desired = np.diag(gains)
    denominators = (np.abs(gains) ** 2).sum(axis=1) + noise_power
    value = 2.0 * np.sqrt(1.0 + alpha) * np.real(np.conj(beta) * desired) - np.abs(beta) ** 2 * denominators
    return float(RATE_SCALE * value.sum())


def cascaded_terms(ch: ChannelSet, W: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """a[k, j] = diag(g_k^H) H w_j  (shape K, K, S*N) and b[k, j] = h_{d,k}^H w_j (K, K)."""
    HW = ch.H @ W
    a = np.einsum('ki,ij->kji', ch.G.conj(), HW)
    b = ch.Hd.conj() @ W
    return a, b


def _phi_gains(a: np.ndarray, b: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """e[k, j] = b_{j,k} + phi^H a_{j,k}."""
    return b + np.einsum('kji,i->kj', a, np.conj(phi))


def epsilon_objective(epsilon: np.ndarray, alpha: np.ndarray, a: np.ndarray, b: np.ndarray,
                      phi: np.ndarray, noise_power: float) -> float:
    """Quadratic-transform surrogate of the phi subproblem, without the price term."""
    gains = _phi_gains(a, b, phi)
    return beta_objective(epsilon, alpha, gains, noise_power)


def augmented_lagrangian(state: FollowerState, a: np.ndarray, b: np.ndarray, noise_power: float,
                         price: float, balance: float, elements_per_module: int,
                         phi: Optional[np.ndarray] = None) -> float:
    """L_c(phi, theta, Lambda) with the non-squared group norm on theta."""
    phi = state.phi if phi is None else phi
    smooth = epsilon_objective(state.epsilon, state.alpha, a, b, phi, noise_power)
    gap = state.theta - phi
    return float(
        smooth
        - price * balance * l12_norm(state.theta, elements_per_module)
        - np.real(np.vdot(state.Lambda, gap))
        - 0.5 * state.penalty * np.vdot(gap, gap).real
    )


def prox_objective(theta_s: np.ndarray, phi_s: np.ndarray, Lambda_s: np.ndarray,
                   threshold: float, penalty: float) -> float:
    """Per-module theta objective; threshold is r*alpha."""
    gap = theta_s - phi_s
    return float(
        -threshold * np.linalg.norm(theta_s)
        - np.real(np.vdot(Lambda_s, gap))
        - 0.5 * penalty * np.vdot(gap, gap).real
    )


# =========================================================
# Block updates
# =========================================================

def update_alpha(state: FollowerState, ch: ChannelSet, noise_power: float) -> np.ndarray:
    return sinr_all(ch, state.W, state.phi, noise_power)


def update_beta(state: FollowerState, ch: ChannelSet, noise_power: float) -> np.ndarray:
    gains = effective_gains(ch, state.W, state.phi)
    denominators = (np.abs(gains) ** 2).sum(axis=1) + noise_power
    return np.sqrt(state.alpha_bar) * np.diag(gains) / denominators


def update_w(state: FollowerState, ch: ChannelSet, max_power: float,
             settings: SolverSettings) -> Tuple[np.ndarray, float]:
    """Beamformer for fixed beta with lambda_0 set by complementary slackness.

    w_k(l0) = sqrt(abar_k) beta_k (l0 I + sum_j |beta_j|^2 h_j h_j^H)^{-1} h_k.
    The power of w(l0) is strictly decreasing in l0, so l0 = 0 when the
    (pseudo-inverse) l0 = 0 solution fits the budget and bisection otherwise.
    """
    h = combined_channels(ch, state.phi)
    M, K = ch.num_antennas, ch.num_users
    weights = np.abs(state.beta) ** 2
    if not np.any(weights > 0):
        return np.zeros((M, K), dtype=complex), 0.0

    B = (h.T * weights) @ h.conj()
    rhs = h.T * (np.sqrt(state.alpha_bar) * state.beta)

    d, U = scipy.linalg.eigh(B)
    d = np.clip(d, 0.0, None)
    P = U.conj().T @ rhs
    energy = (np.abs(P) ** 2).sum(axis=1)

    def power(l0: float) -> float:
        return float((energy / (l0 + d) ** 2).sum())

    def beamformer(l0: float, keep: np.ndarray) -> np.ndarray:
        return U[:, keep] @ (P[keep] / (l0 + d[keep])[:, None])

    # l0 = 0: directions outside the range of B carry no energy
    keep = d > 1e-12 * d.max()
    free_power = float((energy[keep] / d[keep] ** 2).sum())
    if free_power <= max_power:
        return beamformer(0.0, keep), 0.0

    # power(l0) <= sum(energy) / l0^2, so this upper end is already feasible
    hi = math.sqrt(energy.sum() / max_power)
    while power(hi) > max_power:
        hi *= 2.0
    lo = 0.0
    for _ in range(settings.max_bisection):
        if abs(power(hi) - max_power) <= settings.tol_power * max_power:
            break
        mid = 0.5 * (lo + hi)
        if power(mid) > max_power:
            lo = mid
        else:
            hi = mid
    everything = np.ones_like(d, dtype=bool)
    return beamformer(hi, everything), hi


def update_epsilon(state: FollowerState, ch: ChannelSet, noise_power: float) -> np.ndarray:
    a, b = cascaded_terms(ch, state.W)
    gains = _phi_gains(a, b, state.phi)
    denominators = (np.abs(gains) ** 2).sum(axis=1) + noise_power
    return np.sqrt(state.alpha_bar) * np.diag(gains) / denominators


def solve_phi_system(state: FollowerState, ch: ChannelSet) -> np.ndarray:
    """Stationary point of L_c over phi with the modulus multipliers mu = 0.

    (2/ln2 sum_k |eps_k|^2 sum_j a a^H + c I) phi
        = 2/ln2 sum_k (sqrt(abar_k) conj(eps_k) a_kk - |eps_k|^2 sum_j conj(b_jk) a_jk) + Lambda + c theta
    """
    SN = ch.total_elements
    a, b = cascaded_terms(ch, state.W)
    K = a.shape[0]
    c = state.penalty
    eps_power = np.abs(state.epsilon) ** 2

    A = c * np.eye(SN, dtype=complex)
    v = state.Lambda + c * state.theta
    if K:
        A = A + 2.0 * RATE_SCALE * np.einsum('k,kji,kjl->il', eps_power, a, a.conj())
        own = a[np.arange(K), np.arange(K)]
        v = v + 2.0 * RATE_SCALE * (
            np.einsum('k,ki->i', np.sqrt(state.alpha_bar) * np.conj(state.epsilon), own)
            - np.einsum('k,kj,kji->i', eps_power, np.conj(b), a)
        )
    assert np.all(np.isfinite(A)), "phi system has non-finite entries"
    return scipy.linalg.solve(A, v, assume_a='her')


def update_phi(state: FollowerState, ch: ChannelSet) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (phi, mu); the modulus constraint is enforced by projection, so mu stays 0."""
    phi = solve_phi_system(state, ch)
    phi = phi / np.maximum(1.0, np.abs(phi))
    return phi, np.zeros(phi.size)


def shrinkage_inputs(phi: np.ndarray, Lambda: np.ndarray, penalty: float,
                     elements_per_module: int) -> ShrinkageInputs:
    x = (penalty * phi - Lambda).reshape(-1, elements_per_module)
    return ShrinkageInputs(x=x, norms=np.linalg.norm(x, axis=1))


def update_theta(state: FollowerState, price: float, balance: float,
                 elements_per_module: int) -> np.ndarray:
    """Block soft-thresholding of x_s / c with threshold r*alpha, module by module."""
    x, norms = shrinkage_inputs(state.phi, state.Lambda, state.penalty, elements_per_module)
    threshold = price * balance
    keep = norms > threshold
    scale = np.zeros_like(norms)
    scale[keep] = (norms[keep] - threshold) / (state.penalty * norms[keep])
    return (scale[:, None] * x).ravel()


def update_lambda(state: FollowerState) -> np.ndarray:
    return state.Lambda + state.penalty * (state.theta - state.phi)


def reported_reflection(state: FollowerState) -> np.ndarray:
    """Block-sparse copy theta, projected onto |phi_i| <= 1."""
    return state.theta / np.maximum(1.0, np.abs(state.theta))


def admm_residual(state: FollowerState) -> float:
    return float(np.linalg.norm(state.theta - state.phi) / max(1.0, np.linalg.norm(state.phi)))


def _diagnostics(state: FollowerState, iteration: int, price: float) -> dict:
    return {
        "iteration": iteration,
        "price": price,
        "power": float(np.sum(np.abs(state.W) ** 2)),
        "lambda0": state.lambda0,
        "max_abs_phi": float(np.max(np.abs(state.phi), initial=0.0)),
        "max_abs_Lambda": float(np.max(np.abs(state.Lambda), initial=0.0)),
        "alpha": state.alpha.tolist(),
        "finite_W": bool(np.all(np.isfinite(state.W))),
        "finite_phi": bool(np.all(np.isfinite(state.phi))),
    }


def solve_follower(ch: ChannelSet, price: float, cfg: ScenarioConfig,
                   init: Optional[FollowerState] = None,
                   direct: Optional[FollowerResult] = None) -> FollowerResult:
    """Alternating optimization of (W, phi) for a fixed price.

    Works on the noise-normalized channels; W, phi, theta and Lambda are
    invariant under that normalization. Stops once the dual-transform
    objective changes by less than tol_inner (relative) and the ADMM
    residual is below tol_admm, or after max_inner cycles.

    With reflection modules present the ADMM result is then settled: W is
    re-optimized for the reported (block-sparse) reflection, and if switching
    every module off pays more, the state becomes that zero-reflection
    response instead. `direct` may carry a precomputed zero-reflection
    response for this channel set.
    """
    if price < 0:
        raise ValueError(f"price must be non-negative, got {price}")
    if ch.num_users != cfg.num_users or ch.num_antennas != cfg.num_antennas:
        raise DimensionMismatchError("channel set does not match the scenario dimensions")

    settings = cfg.solver
    N = ch.elements_per_module
    chn = ch.normalized(cfg.noise_power)
    state = init.copy() if init is not None else initial_state(chn, cfg.max_power, settings.penalty)
    if state.phi.size != ch.total_elements:
        raise DimensionMismatchError("warm-start state does not match the channel set")
    has_irs = ch.total_elements > 0

    result = FollowerResult(state=state)
    previous = None
    for t in range(1, settings.max_inner + 1):
        state.alpha = update_alpha(state, chn, 1.0)
        state.beta = update_beta(state, chn, 1.0)
        state.W, state.lambda0 = update_w(state, chn, cfg.max_power, settings)
        if has_irs:
            state.epsilon = update_epsilon(state, chn, 1.0)
            state.phi, state.mu = update_phi(state, chn)
            state.theta = update_theta(state, price, cfg.balance_alpha, N)
            state.Lambda = update_lambda(state)

        gamma = sinr_all(chn, state.W, state.phi, 1.0)
        objective = dual_objective(state.alpha, gamma, price * cfg.balance_alpha * l12_norm(state.phi, N))
        residual = admm_residual(state) if has_irs else 0.0
        if not (math.isfinite(objective) and math.isfinite(residual)):
            diagnostics = _diagnostics(state, t, price)
            logger.error("[FOLLOWER] non-finite objective: %s", diagnostics)
            raise FollowerDivergenceError(f"follower objective became non-finite at iteration {t}", diagnostics)

        result.trace.append(TraceRecord(iteration=t, objective=objective, residual=residual))
        logger.debug("[FOLLOWER] t=%d objective=%.6e residual=%.3e", t, objective, residual)

        if previous is not None:
            change = abs(objective - previous)
            scale = max(abs(previous), abs(objective))
            if (change <= settings.tol_inner * scale or change <= 1e-15) and residual < settings.tol_admm:
                result.converged = True
                break
        previous = objective

    if has_irs and admm_residual(state) >= settings.tol_admm:
        result.admm_warning = True
        logger.warning("[FOLLOWER] ADMM residual %.3e above %.1e at exit", admm_residual(state), settings.tol_admm)
    if not result.converged:
        logger.warning("[FOLLOWER] no convergence within %d iterations (price %.4g)", settings.max_inner, price)
    else:
        logger.debug("[FOLLOWER] converged after %d iterations (price %.4g)", result.iterations, price)

    if has_irs:
        _settle(result, ch, price, cfg, direct)
    return result


def fixed_reflection_response(ch: ChannelSet, phi: np.ndarray, cfg: ScenarioConfig,
                              W: Optional[np.ndarray] = None) -> FollowerResult:
    """Best beamformer for a reflection that is held fixed: the (alpha, beta, W) cycle
    on the folded channel, started from W when given."""
    folded = ch.with_reflection(phi)
    init = None
    if W is not None:
        init = initial_state(folded, cfg.max_power, cfg.solver.penalty)
        init.W = np.array(W, dtype=complex)
    return solve_follower(folded, 0.0, cfg, init=init)


def direct_response(ch: ChannelSet, cfg: ScenarioConfig) -> FollowerResult:
    """Best response with every module switched off (theta = 0)."""
    return solve_follower(ch.direct_only(), 0.0, cfg)


def _settle(result: FollowerResult, ch: ChannelSet, price: float, cfg: ScenarioConfig,
            direct: Optional[FollowerResult]) -> None:
    state = result.state
    reflection = reported_reflection(state)
    polished = fixed_reflection_response(ch, reflection, cfg, W=state.W)
    kept = utilities(ch, polished.state.W, reflection, price, cfg).bs_utility

    direct = direct if direct is not None else direct_response(ch, cfg)
    off = np.zeros(ch.total_elements, dtype=complex)
    dropped = utilities(ch, direct.state.W, off, price, cfg).bs_utility

    if kept >= dropped:
        state.W = polished.state.W
        return
    logger.debug("[FOLLOWER] switching every module off pays more (U %.6e vs %.6e, price %.4g)", dropped, kept, price)
    state.W = direct.state.W.copy()
    state.phi = off
    state.theta = off.copy()
    state.Lambda = off.copy()
    result.direct_fallback = True
