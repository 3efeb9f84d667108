"""
Monte-Carlo sweeps over transmit power or module count.

Trial t at every sweep value draws its channels from
trial_rng(seed, t, CHANNEL_STREAM), so all schemes at a sweep value see the
same realization (paired comparison) and neighbouring sweep values reuse the
same underlying draws. Aggregation runs in a fixed (value, scheme, trial)
order, which keeps the table bit-identical for any worker count.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats
from tqdm import tqdm

from ..exceptions import GameError, SweepAbortedError
from .game import Scheme, run_scheme
from .scenario import ScenarioConfig, dbm_to_watts, generate_channels, trial_rng

logger = logging.getLogger(__name__)

CHANNEL_STREAM = 0
PRICING_STREAM = 1
MAX_FAILURE_RATE = 0.05


class SweepVariable(str, Enum):
    P_MAX_DBM = "p_max_dbm"
    NUM_MODULES = "num_modules"


class SweepSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: SweepVariable = SweepVariable.P_MAX_DBM
    values: List[float] = Field(default_factory=lambda: [-5.0, -2.5, 0.0, 2.5, 5.0], min_length=1)
    trials: int = Field(200, ge=1)
    schemes: List[Scheme] = Field(default_factory=lambda: list(Scheme))
    seed: Optional[int] = Field(None, ge=0, lt=2**64, description="master seed; defaults to scenario.rng_seed")
    scenario: ScenarioConfig = ScenarioConfig()

    @model_validator(mode="after")
    def _integral_modules(self) -> "SweepSpec":
        if self.name is SweepVariable.NUM_MODULES:
            for v in self.values:
                if v < 0 or v != int(v):
                    raise ValueError(f"num_modules values must be non-negative integers, got {v}")
        return self

    @property
    def master_seed(self) -> int:
        return self.scenario.rng_seed if self.seed is None else self.seed

    def scenario_at(self, value: float) -> ScenarioConfig:
        if self.name is SweepVariable.P_MAX_DBM:
            update = {"max_power": dbm_to_watts(value)}
        else:
            update = {"num_modules": int(value)}
        return ScenarioConfig.model_validate({**self.scenario.model_dump(), **update})


@dataclass(frozen=True)
class TrialRecord:
    sweep_value: float
    scheme: Scheme
    trial: int
    bs_utility: float = float("nan")
    irs_utility: float = float("nan")
    sum_rate: float = float("nan")
    triggered: float = float("nan")
    failed: bool = False


@dataclass(frozen=True)
class SweepRow:
    sweep_name: str
    sweep_value: float
    scheme: str
    trials: int
    mean_U: float
    ci95_U: float
    mean_V: float
    ci95_V: float
    mean_sum_rate: float
    ci95_sum_rate: float
    mean_triggered: float
    failure_count: int


@dataclass(frozen=True)
class PairedRow:
    sweep_name: str
    sweep_value: float
    scheme: str
    baseline: str
    pairs: int
    mean_diff_U: float
    ci95_diff_U: float
    mean_diff_V: float
    ci95_diff_V: float


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    rows: List[SweepRow]
    paired: List[PairedRow]
    records: List[TrialRecord]


def mean_ci95(samples: Sequence[float]) -> Tuple[float, float]:
    """Sample mean and half-width of the t-based 95% confidence interval."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    mean = float(np.mean(x))
    if x.size < 2:
        return mean, 0.0
    half = stats.t.ppf(0.975, x.size - 1) * np.std(x, ddof=1) / np.sqrt(x.size)
    return mean, float(half)


def run_trial(spec: SweepSpec, value: float, trial: int) -> List[TrialRecord]:
    """Every scheme of the spec on one channel draw."""
    cfg = spec.scenario_at(value)
    ch = generate_channels(cfg, trial_rng(spec.master_seed, trial, CHANNEL_STREAM))
    records = []
    for scheme in spec.schemes:
        pricing_rng = trial_rng(spec.master_seed, trial, PRICING_STREAM)
        try:
            outcome = run_scheme(scheme, ch, cfg, pricing_rng)
        except (GameError, np.linalg.LinAlgError) as exc:
            logger.warning("[SWEEP] %s=%s %s trial %d failed: %s", spec.name.value, value, scheme.value, trial, exc)
            records.append(TrialRecord(value, scheme, trial, failed=True))
            continue
        records.append(TrialRecord(
            sweep_value=value,
            scheme=scheme,
            trial=trial,
            bs_utility=outcome.bs_utility,
            irs_utility=outcome.irs_utility,
            sum_rate=outcome.sum_rate,
            triggered=float(outcome.triggered),
        ))
    return records


def _run_job(job: Tuple[SweepSpec, float, int]) -> List[TrialRecord]:
    return run_trial(*job)


def _collect(spec: SweepSpec, threads: int, progress: bool) -> List[TrialRecord]:
    jobs = [(spec, value, trial) for value in spec.values for trial in range(spec.trials)]
    bar = tqdm(total=len(jobs), desc=f"sweep {spec.name.value}", unit="trial", disable=not progress)
    records: List[TrialRecord] = []
    try:
        if threads <= 1:
            for batch in map(_run_job, jobs):
                records.extend(batch)
                bar.update()
        else:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                chunk = max(1, len(jobs) // (threads * 8))
                for batch in pool.map(_run_job, jobs, chunksize=chunk):
                    records.extend(batch)
                    bar.update()
    finally:
        bar.close()
    return records


def aggregate(spec: SweepSpec, records: List[TrialRecord]) -> List[SweepRow]:
    rows = []
    for value in spec.values:
        for scheme in spec.schemes:
            group = sorted(
                (r for r in records if r.sweep_value == value and r.scheme is scheme),
                key=lambda r: r.trial,
            )
            ok = [r for r in group if not r.failed]
            failures = len(group) - len(ok)
            if group and failures / len(group) > MAX_FAILURE_RATE:
                raise SweepAbortedError(
                    f"{failures}/{len(group)} trials failed at {spec.name.value}={value} for {scheme.value}"
                )
            mean_u, ci_u = mean_ci95([r.bs_utility for r in ok])
            mean_v, ci_v = mean_ci95([r.irs_utility for r in ok])
            mean_rate, ci_rate = mean_ci95([r.sum_rate for r in ok])
            mean_trig, _ = mean_ci95([r.triggered for r in ok])
            rows.append(SweepRow(
                sweep_name=spec.name.value,
                sweep_value=float(value),
                scheme=scheme.value,
                trials=len(ok),
                mean_U=mean_u, ci95_U=ci_u,
                mean_V=mean_v, ci95_V=ci_v,
                mean_sum_rate=mean_rate, ci95_sum_rate=ci_rate,
                mean_triggered=mean_trig,
                failure_count=failures,
            ))
    return rows


def paired_differences(spec: SweepSpec, records: List[TrialRecord]) -> List[PairedRow]:
    """Stackelberg minus each baseline, over trials where both completed."""
    if Scheme.STACKELBERG not in spec.schemes:
        return []
    baselines = [s for s in spec.schemes if s is not Scheme.STACKELBERG]
    rows = []
    for value in spec.values:
        at_value = {(r.scheme, r.trial): r for r in records if r.sweep_value == value and not r.failed}
        for baseline in baselines:
            trials = sorted(
                t for (s, t) in at_value
                if s is Scheme.STACKELBERG and (baseline, t) in at_value
            )
            du = [at_value[(Scheme.STACKELBERG, t)].bs_utility - at_value[(baseline, t)].bs_utility for t in trials]
            dv = [at_value[(Scheme.STACKELBERG, t)].irs_utility - at_value[(baseline, t)].irs_utility for t in trials]
            mean_du, ci_du = mean_ci95(du)
            mean_dv, ci_dv = mean_ci95(dv)
            rows.append(PairedRow(
                sweep_name=spec.name.value,
                sweep_value=float(value),
                scheme=Scheme.STACKELBERG.value,
                baseline=baseline.value,
                pairs=len(trials),
                mean_diff_U=mean_du, ci95_diff_U=ci_du,
                mean_diff_V=mean_dv, ci95_diff_V=ci_dv,
            ))
    return rows


def run_sweep(spec: SweepSpec, threads: int = 1, progress: bool = True) -> SweepResult:
    logger.info(
        "[SWEEP] %s over %s, %d trials, schemes %s, seed %d, %d worker(s)",
        spec.name.value, spec.values, spec.trials, [s.value for s in spec.schemes], spec.master_seed, threads,
    )
    records = _collect(spec, threads, progress) if spec.schemes else []
    rows = aggregate(spec, records)
    paired = paired_differences(spec, records)
    failures = sum(r.failed for r in records)
    if failures:
        logger.warning("[SWEEP] %d trial(s) failed and were excluded", failures)
    logger.info("[SWEEP] done: %d rows", len(rows))
    return SweepResult(spec=spec, rows=rows, paired=paired, records=records)

