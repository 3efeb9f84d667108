"""
System dimensions, geometry, channel generation and the composite-channel
algebra of the IRS-aided downlink.

Conventions used throughout the app:
    H   : (S*N, M)  stacked BS -> module channels, block s = rows s*N .. s*N+N-1
    G   : (K, S*N)  row k is g_k (stacked module -> user channels)
    Hd  : (K, M)    row k is h_{d,k}
    phi : (S*N,)    reflection vector; Phi = diag(conj(phi))
    W   : (M, K)    column k is w_k
"""

import logging
import math
from dataclasses import dataclass
from typing import FrozenSet, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..exceptions import DimensionMismatchError

logger = logging.getLogger(__name__)

Point = Tuple[float, float]


def dbm_to_watts(p_dbm: float) -> float:
    """p_watts = 10^((p_dbm - 30) / 10)."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_watts: float) -> float:
    return 10.0 * math.log10(p_watts) + 30.0


# =========================================================
# Configuration
# =========================================================

class PathLossExponents(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    bs_user: float = Field(3.5, gt=0)
    bs_irs: float = Field(2.2, gt=0)
    irs_user: float = Field(2.2, gt=0)


class SolverSettings(BaseModel):
    """Tolerances and iteration limits of the follower/leader loops."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    penalty: float = Field(1.0, gt=0, description="ADMM penalty factor c")
    tol_inner: float = Field(1e-4, gt=0, description="relative change of the dual-transform objective")
    max_inner: int = Field(500, ge=1)
    tol_admm: float = Field(1e-3, gt=0, description="relative residual ||theta - phi||")
    tol_feas: float = Field(1e-9, ge=0, description="slack on the power budget (relative) and on |phi_i| <= 1")
    tol_zero: float = Field(1e-6, gt=0, description="triggered-module threshold, relative to the largest block")
    tol_power: float = Field(1e-8, gt=0, description="relative power accuracy of the lambda_0 bisection")
    max_bisection: int = Field(100, ge=1)
    initial_price: float = Field(1.0, gt=0)
    tol_outer: float = Field(1e-3, gt=0, description="relative leader-utility gain that ends the price loop")
    max_outer: int = Field(50, ge=1)
    warm_start: bool = Field(True, description="seed each outer follower solve from the previous one")
    price_grid_points: int = Field(16, ge=2, description="log-spaced prices scanned by the leader")
    price_floor: float = Field(1e-6, gt=0, lt=1, description="lowest scanned price, relative to the highest")
    price_refine_steps: int = Field(30, ge=1, description="bounded-search evaluations per local peak")


class ScenarioConfig(BaseModel):
    """Dimensions, geometry, powers and seeds of one simulated cell.

    Powers are in watts, distances in meters. Defaults follow the
    evaluation setup: M = K = 4, N = 8, alpha = 0.1, BS at the origin,
    IRS at (200, 50) and users in a 10 m disk centred at (200, 0).
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    num_antennas: int = Field(4, ge=1)
    num_users: int = Field(4, ge=1)
    num_modules: int = Field(6, ge=0)
    elements_per_module: int = Field(8, ge=1)
    balance_alpha: float = Field(0.1, gt=0)
    noise_power: float = Field(dbm_to_watts(-80.0), gt=0)
    max_power: float = Field(dbm_to_watts(0.0), gt=0)
    bs_position: Point = (0.0, 0.0)
    irs_position: Point = (200.0, 50.0)
    cell_center: Point = (200.0, 0.0)
    cell_radius: float = Field(10.0, gt=0)
    path_loss_exponents: PathLossExponents = PathLossExponents()
    reference_loss_db: float = 30.0
    rng_seed: int = Field(2020, ge=0, lt=2**64)
    solver: SolverSettings = SolverSettings()

    @model_validator(mode="after")
    def _finite_geometry(self) -> "ScenarioConfig":
        for name in ("bs_position", "irs_position", "cell_center"):
            if not all(math.isfinite(v) for v in getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        return self

    @property
    def total_elements(self) -> int:
        return self.num_modules * self.elements_per_module


# =========================================================
# Channels
# =========================================================

def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """One quasi-static realization of every link in the cell."""
    H: np.ndarray
    G: np.ndarray
    Hd: np.ndarray
    elements_per_module: int
    user_positions: Optional[np.ndarray] = None

    def __post_init__(self):
        H, G, Hd = _frozen(self.H), _frozen(self.G), _frozen(self.Hd)
        if Hd.ndim != 2:
            raise DimensionMismatchError(f"Hd must be (K, M), got {Hd.shape}")
        num_users, num_antennas = Hd.shape
        if H.size == 0 and H.ndim != 2:
            H = H.reshape(0, num_antennas)
        if G.size == 0 and G.ndim != 2:
            G = G.reshape(num_users, 0)
        if H.ndim != 2 or H.shape[1] != num_antennas:
            raise DimensionMismatchError(f"H must be (S*N, {num_antennas}), got {H.shape}")
        if G.shape != (num_users, H.shape[0]):
            raise DimensionMismatchError(f"G must be ({num_users}, {H.shape[0]}), got {G.shape}")
        if H.shape[0] % self.elements_per_module:
            raise DimensionMismatchError(
                f"{H.shape[0]} reflection elements is not a multiple of N={self.elements_per_module}"
            )
        for name, value in (("H", H), ("G", G), ("Hd", Hd)):
            if not np.all(np.isfinite(value)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, value)

    @property
    def num_antennas(self) -> int:
        return self.Hd.shape[1]

    @property
    def num_users(self) -> int:
        return self.Hd.shape[0]

    @property
    def total_elements(self) -> int:
        return self.H.shape[0]

    @property
    def num_modules(self) -> int:
        return self.total_elements // self.elements_per_module

    def module_block(self, s: int) -> np.ndarray:
        """H_{0,s}, the rows of H generated for module s."""
        n = self.elements_per_module
        return self.H[s * n:(s + 1) * n]

    def normalized(self, noise_power: float) -> "ChannelSet":
        """Same realization divided by sigma, to be used with unit noise.

        Both hops of the reflected path are scaled by sigma^(-1/2) so the
        cascaded term shrinks by exactly 1/sigma like the direct link.
        """
        scale = 1.0 / math.sqrt(noise_power)
        return ChannelSet(
            H=self.H * math.sqrt(scale),
            G=self.G * math.sqrt(scale),
            Hd=self.Hd * scale,
            elements_per_module=self.elements_per_module,
            user_positions=self.user_positions,
        )

    def direct_only(self) -> "ChannelSet":
        """The S = 0 view of this realization."""
        return ChannelSet(
            H=np.zeros((0, self.num_antennas), dtype=complex),
            G=np.zeros((self.num_users, 0), dtype=complex),
            Hd=self.Hd,
            elements_per_module=self.elements_per_module,
            user_positions=self.user_positions,
        )

    def with_reflection(self, phi: np.ndarray) -> "ChannelSet":
        """Fold a fixed reflection into the direct link; the result has S = 0."""
        return ChannelSet(
            H=np.zeros((0, self.num_antennas), dtype=complex),
            G=np.zeros((self.num_users, 0), dtype=complex),
            Hd=combined_channels(self, phi),
            elements_per_module=self.elements_per_module,
            user_positions=self.user_positions,
        )


@dataclass(frozen=True, eq=False)
class ReflectionVector:
    """Stacked reflection vector phi, with phi_s the conjugated diagonal of Phi_s."""
    phi: np.ndarray
    elements_per_module: int

    def __post_init__(self):
        phi = _frozen(np.ravel(self.phi))
        if phi.size % self.elements_per_module:
            raise DimensionMismatchError(
                f"length {phi.size} is not a multiple of N={self.elements_per_module}"
            )
        object.__setattr__(self, "phi", phi)

    @classmethod
    def zeros(cls, num_modules: int, elements_per_module: int) -> "ReflectionVector":
        return cls(np.zeros(num_modules * elements_per_module, dtype=complex), elements_per_module)

    @classmethod
    def from_matrix(cls, Phi: np.ndarray, elements_per_module: int) -> "ReflectionVector":
        return cls(np.conj(np.diag(Phi)), elements_per_module)

    @property
    def num_modules(self) -> int:
        return self.phi.size // self.elements_per_module

    def block(self, s: int) -> np.ndarray:
        n = self.elements_per_module
        return self.phi[s * n:(s + 1) * n]

    def blocks(self) -> np.ndarray:
        return self.phi.reshape(self.num_modules, self.elements_per_module)

    def matrix(self) -> np.ndarray:
        """Phi = diag(conj(phi))."""
        return np.diag(np.conj(self.phi))

    def is_feasible(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(self.phi) <= 1.0 + tol))


def path_gain(distance: float, exponent: float, reference_loss_db: float) -> float:
    """Log-distance large-scale gain.

    gain_dB = -(reference_loss_db + 10 * exponent * log10(d / 1 m)),
    distances below the 1 m reference are clamped to it.
    """
    d = max(float(distance), 1.0)
    return 10.0 ** (-(reference_loss_db + 10.0 * exponent * math.log10(d)) / 10.0)


def trial_rng(seed: int, draw_index: int, stream: int = 0) -> np.random.Generator:
    """Independent, schedule-free random stream for one Monte-Carlo draw."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(draw_index, stream)))


def drop_users(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """(K, 2) user positions, uniform over the cell disk (sqrt-radius polar draw)."""
    radius = cfg.cell_radius * np.sqrt(rng.uniform(size=cfg.num_users))
    angle = rng.uniform(0.0, 2.0 * np.pi, size=cfg.num_users)
    offsets = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    return np.asarray(cfg.cell_center) + offsets


def _complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) entries."""
    re = rng.standard_normal(size=shape)
    im = rng.standard_normal(size=shape)
    return (re + 1j * im) / np.sqrt(2.0)


def generate_channels(cfg: ScenarioConfig, rng: np.random.Generator) -> ChannelSet:
    """Draw one Rayleigh-faded realization scaled by log-distance path gains.

    Draw order is users, direct links, then module blocks in order, so the
    realization for S modules is a prefix of the one for S + 1 modules.
    """
    K, M, N = cfg.num_users, cfg.num_antennas, cfg.elements_per_module
    exps = cfg.path_loss_exponents
    bs = np.asarray(cfg.bs_position)
    irs = np.asarray(cfg.irs_position)

    users = drop_users(cfg, rng)

    direct_gain = np.array([
        path_gain(np.linalg.norm(u - bs), exps.bs_user, cfg.reference_loss_db) for u in users
    ])
    Hd = np.sqrt(direct_gain)[:, None] * _complex_gaussian(rng, (K, M))

    bs_irs_gain = path_gain(np.linalg.norm(irs - bs), exps.bs_irs, cfg.reference_loss_db)
    irs_user_gain = np.array([
        path_gain(np.linalg.norm(u - irs), exps.irs_user, cfg.reference_loss_db) for u in users
    ])

    H_blocks, G_blocks = [], []
    for _ in range(cfg.num_modules):
        H_blocks.append(np.sqrt(bs_irs_gain) * _complex_gaussian(rng, (N, M)))
        G_blocks.append(np.sqrt(irs_user_gain)[:, None] * _complex_gaussian(rng, (K, N)))

    H = np.vstack(H_blocks) if H_blocks else np.zeros((0, M), dtype=complex)
    G = np.hstack(G_blocks) if G_blocks else np.zeros((K, 0), dtype=complex)
    return ChannelSet(H=H, G=G, Hd=Hd, elements_per_module=N, user_positions=users)


# =========================================================
# Composite-channel algebra
# =========================================================

def _check_phi(ch: ChannelSet, phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=complex).ravel()
    if phi.size != ch.total_elements:
        raise DimensionMismatchError(
            f"reflection vector has {phi.size} entries, channel set has {ch.total_elements}"
        )
    return phi


def _check_w(ch: ChannelSet, W: np.ndarray) -> np.ndarray:
    W = np.asarray(W, dtype=complex)
    if W.shape != (ch.num_antennas, ch.num_users):
        raise DimensionMismatchError(
            f"W must be ({ch.num_antennas}, {ch.num_users}), got {W.shape}"
        )
    return W


def combined_channels(ch: ChannelSet, phi: np.ndarray) -> np.ndarray:
    """Rows h_k with h_k^H = h_{d,k}^H + g_k^H Phi H, i.e. h_k = h_{d,k} + H^H (g_k * phi)."""
    phi = _check_phi(ch, phi)
    return ch.Hd + (ch.G * phi) @ ch.H.conj()


def combined_channel(ch: ChannelSet, phi: np.ndarray, k: int) -> np.ndarray:
    return combined_channels(ch, phi)[k]


def effective_gains(ch: ChannelSet, W: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """E[k, j] = h_k^H w_j."""
    W = _check_w(ch, W)
    return combined_channels(ch, phi).conj() @ W


def sinr_all(ch: ChannelSet, W: np.ndarray, phi: np.ndarray, noise_power: float) -> np.ndarray:
    gains = np.abs(effective_gains(ch, W, phi)) ** 2
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    return signal / (interference + noise_power)


def sinr(ch: ChannelSet, W: np.ndarray, phi: np.ndarray, noise_power: float, k: int) -> float:
    return float(sinr_all(ch, W, phi, noise_power)[k])


def user_rates(ch: ChannelSet, W: np.ndarray, phi: np.ndarray, noise_power: float) -> np.ndarray:
    """Per-user rates log2(1 + gamma_k), bits/s/Hz."""
    return np.log2(1.0 + sinr_all(ch, W, phi, noise_power))


def sum_rate(ch: ChannelSet, W: np.ndarray, phi: np.ndarray, noise_power: float) -> float:
    return float(user_rates(ch, W, phi, noise_power).sum())


def block_norms(phi: np.ndarray, elements_per_module: int) -> np.ndarray:
    phi = np.asarray(phi).ravel()
    return np.linalg.norm(phi.reshape(-1, elements_per_module), axis=1)


def l12_norm(phi: np.ndarray, elements_per_module: int) -> float:
    """Sum of module-block Euclidean norms of the stacked vector."""
    return float(block_norms(phi, elements_per_module).sum())


def l12_norm_matrix(Phi: np.ndarray, elements_per_module: int) -> float:
    """||Phi||_{1,2} from the diagonal blocks Phi_s of the reflection matrix."""
    n = elements_per_module
    S = Phi.shape[0] // n
    return float(sum(np.linalg.norm(Phi[s * n:(s + 1) * n, s * n:(s + 1) * n]) for s in range(S)))


def is_feasible(W: np.ndarray, phi: np.ndarray, cfg: ScenarioConfig) -> bool:
    """Power budget and |phi_i| <= 1, each with solver.tol_feas slack."""
    tol = cfg.solver.tol_feas
    power = float(np.sum(np.abs(W) ** 2))
    return power <= cfg.max_power * (1.0 + tol) and bool(np.all(np.abs(np.ravel(phi)) <= 1.0 + tol))


def triggered_modules(phi: np.ndarray, elements_per_module: int, tol_zero: float) -> FrozenSet[int]:
    """Modules whose block norm exceeds tol_zero relative to the largest block."""
    norms = block_norms(phi, elements_per_module)
    if norms.size == 0 or norms.max() <= 0.0:
        return frozenset()
    cut = tol_zero * norms.max()
    return frozenset(int(s) for s in np.flatnonzero(norms > cut))


@dataclass(frozen=True, eq=False)
class Utilities:
    bs_utility: float
    irs_utility: float
    triggered: FrozenSet[int]
    rates: np.ndarray

    @property
    def sum_rate(self) -> float:
        return float(self.rates.sum())


def utilities(ch: ChannelSet, W: np.ndarray, phi: np.ndarray, price: float,
              cfg: ScenarioConfig) -> Utilities:
    """U = sum rate - r*alpha*||phi||_{1,2},  V = r*alpha*||phi||_{1,2}."""
    if price < 0:
        raise ValueError(f"price must be non-negative, got {price}")
    rates = user_rates(ch, W, phi, cfg.noise_power)
    revenue = price * cfg.balance_alpha * l12_norm(phi, ch.elements_per_module)
    return Utilities(
        bs_utility=float(rates.sum()) - revenue,
        irs_utility=revenue,
        triggered=triggered_modules(phi, ch.elements_per_module, cfg.solver.tol_zero),
        rates=rates,
    )
