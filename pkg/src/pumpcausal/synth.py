"""Ground-truth synthetic data for desk-scale recovery tests.

Two generators: (1) hazard inspection data simulated by inverting the
transition model itself (per-interval Bernoulli draws with the model's own
hazard), and (2) linear SEM scenarios with uniform non-Gaussian noise for
causal-discovery recovery, including a two-group scenario with a strong
planted feature-to-target effect in one group and near-zero effects in the
other.

All draws come from PCG64 streams derived from the config seed (see
``rng``), so generated datasets are bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import rng as rng_mod
from .data import (
    CovariateSeries,
    Dataset,
    InspectionRecord,
    TransitionBuild,
    build_transitions,
)
from .errors import ConfigError
from .features import FEATURE_NAMES, FeatureMatrix
from .grouping import Group

DEFAULT_LOG_LAMBDA0 = -4.5  # gives informative per-interval transition rates


@dataclass(frozen=True)
class SynthConfig:
    n_pumps: int = 30
    n_states: int = 8
    sigma_u: float = 1.0
    log_lambda0: tuple[float, ...] | None = None  # None -> flat default per state
    beta: tuple[float, ...] = ()
    study_days: int = 650
    interval_min: int = 7
    interval_max: int = 173  # uniform integer intervals, median 90 days
    ar_coeff: float = 0.8
    ar_noise_sd: float = 0.5
    planted_effects: Mapping[str, float] = field(default_factory=dict)
    scenario_features: tuple[str, ...] = (
        "std",
        "min",
        "recent_change_rate",
        "trend_slope_90d",
        "rolling_std_30d_mean",
    )
    scenario_rows: int = 2000
    scenario_noise_scale: float = 0.5
    null_noise_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_pumps < 1:
            raise ConfigError("n_pumps must be >= 1")
        if self.sigma_u < 0:
            raise ConfigError("sigma_u must be >= 0")
        if not 1 <= self.interval_min <= self.interval_max:
            raise ConfigError("need 1 <= interval_min <= interval_max")
        if self.study_days <= self.interval_max:
            raise ConfigError("study_days must exceed the maximum interval")
        if self.log_lambda0 is not None and len(self.log_lambda0) != self.n_states:
            raise ConfigError("log_lambda0 must have one entry per state")
        if not 0 <= abs(self.ar_coeff) < 1:
            raise ConfigError("ar_coeff must satisfy |ar_coeff| < 1")
        unknown = [n for n in self.scenario_features if n not in FEATURE_NAMES]
        if unknown:
            raise ConfigError(f"unknown scenario features: {unknown}")
        bad = [n for n in self.planted_effects if n not in self.scenario_features]
        if bad:
            raise ConfigError(f"planted effects reference absent features: {bad}")

    def baseline_log_hazards(self) -> np.ndarray:
        if self.log_lambda0 is not None:
            return np.asarray(self.log_lambda0, dtype=float)
        return np.full(self.n_states, DEFAULT_LOG_LAMBDA0)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    u_true: np.ndarray
    log_lambda0: np.ndarray
    beta: np.ndarray
    sigma_u: float
    planted_effects: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "u_true": [float(v) for v in self.u_true],
            "log_lambda0": [float(v) for v in self.log_lambda0],
            "beta": [float(v) for v in self.beta],
            "sigma_u": float(self.sigma_u),
            "planted_effects": {k: float(v) for k, v in self.planted_effects.items()},
        }
        return json.dumps(payload, indent=2) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


@dataclass(frozen=True, eq=False)
class HazardSynthesis:
    """Generated inspection data plus the truth that produced it."""

    dataset: Dataset
    records: tuple[InspectionRecord, ...]
    covariates: tuple[CovariateSeries, ...]
    pump_ids: tuple[str, ...]
    truth: GroundTruth
    build: TransitionBuild


def _ar1_series(rng: np.random.Generator, days: int, coeff: float, sd: float) -> np.ndarray:
    values = np.empty(days)
    stationary_sd = sd / math.sqrt(1.0 - coeff * coeff) if coeff else sd
    values[0] = rng.normal(0.0, stationary_sd)
    noise = rng.normal(0.0, sd, size=days - 1)
    for t in range(1, days):
        values[t] = coeff * values[t - 1] + noise[t - 1]
    return values


def generate_hazard_data(config: SynthConfig) -> HazardSynthesis:
    """Simulate inspections by drawing each interval's transition from the
    model's own Bernoulli(1 - exp(-lambda*dt)) probability.

    Every pump gets one daily measurement series for feature extraction;
    when len(beta) = p > 0 the first p series also drive the hazard through
    their interval means.
    """
    rng = rng_mod.stream(config.seed, rng_mod.KEY_SYNTH)
    n_series = max(len(config.beta), 1)
    beta = np.asarray(config.beta, dtype=float)
    log_lambda0 = config.baseline_log_hazards()
    u_true = rng.normal(0.0, config.sigma_u, size=config.n_pumps) if config.sigma_u else np.zeros(config.n_pumps)

    records: list[InspectionRecord] = []
    covariates: list[CovariateSeries] = []
    hazard_covariates: list[CovariateSeries] = []
    pump_ids = tuple(f"P{i:03d}" for i in range(config.n_pumps))
    for i, pump_id in enumerate(pump_ids):
        series = [
            _ar1_series(rng, config.study_days, config.ar_coeff, config.ar_noise_sd)
            for _ in range(n_series)
        ]
        pump_series = [CovariateSeries(pump_id, 0, values) for values in series]
        covariates.extend(pump_series)
        hazard_covariates.extend(pump_series[: len(beta)])
        day = 0
        state = 1
        records.append(InspectionRecord(pump_id, 0, 1))
        while True:
            step = int(rng.integers(config.interval_min, config.interval_max + 1))
            next_day = day + step
            if next_day > config.study_days - 1:
                break
            if state < config.n_states:
                eta = log_lambda0[state - 1] + u_true[i]
                if len(beta):
                    means = [s[day:next_day].mean() for s in series[: len(beta)]]
                    eta += float(beta @ np.asarray(means))
                prob = -math.expm1(-math.exp(eta) * step)
                if rng.random() < prob:
                    state += 1
            records.append(InspectionRecord(pump_id, next_day, state))
            day = next_day

    build = build_transitions(records, hazard_covariates, config.n_states)
    truth = GroundTruth(
        u_true=u_true,
        log_lambda0=log_lambda0,
        beta=beta,
        sigma_u=config.sigma_u,
    )
    return HazardSynthesis(
        dataset=build.dataset,
        records=tuple(records),
        covariates=tuple(covariates),
        pump_ids=pump_ids,
        truth=truth,
        build=build,
    )


@dataclass(frozen=True, eq=False)
class SemSample:
    """Rows from a fully-connected lower-triangular linear SEM.

    ``effects[i, j]`` is the direct effect of variable i on variable j;
    nonzero exactly when i < j.
    """

    x: np.ndarray
    effects: np.ndarray


def generate_sem_data(
    n_vars: int,
    n_rows: int,
    seed: int,
    weight_low: float = 0.5,
    weight_high: float = 1.5,
    noise_scale: float = 1.0,
) -> SemSample:
    """Random dense acyclic SEM with uniform noise and signed weights."""
    rng = rng_mod.stream(seed, rng_mod.KEY_SCENARIO)
    effects = np.zeros((n_vars, n_vars))
    for j in range(1, n_vars):
        magnitudes = rng.uniform(weight_low, weight_high, size=j)
        signs = np.where(rng.random(j) < 0.5, -1.0, 1.0)
        effects[:j, j] = magnitudes * signs
    x = np.empty((n_rows, n_vars))
    for j in range(n_vars):
        noise = rng.uniform(-noise_scale, noise_scale, size=n_rows)
        x[:, j] = x[:, :j] @ effects[:j, j] + noise
    return SemSample(x=x, effects=effects)


@dataclass(frozen=True, eq=False)
class LingamScenario:
    features: FeatureMatrix
    target: np.ndarray
    truth: GroundTruth


def generate_lingam_scenario(
    config: SynthConfig,
    planted: Mapping[str, float] | None = None,
    noise_scale: float | None = None,
    stream_key: int = 0,
) -> LingamScenario:
    """Feature-matrix-shaped SEM sample with a planted feature -> target map.

    Features are independent uniform noise columns; the target is the
    planted linear combination plus uniform noise, keeping every error term
    non-Gaussian.
    """
    planted = dict(config.planted_effects if planted is None else planted)
    bad = [n for n in planted if n not in config.scenario_features]
    if bad:
        raise ConfigError(f"planted effects reference absent features: {bad}")
    scale = config.scenario_noise_scale if noise_scale is None else noise_scale
    rng = rng_mod.stream(config.seed, rng_mod.KEY_SCENARIO, stream_key)
    n, names = config.scenario_rows, config.scenario_features
    values = rng.uniform(-1.0, 1.0, size=(n, len(names)))
    coef = np.array([planted.get(name, 0.0) for name in names])
    target = values @ coef + rng.uniform(-1.0, 1.0, size=n) * scale
    features = FeatureMatrix(
        pump_ids=tuple(f"S{i:04d}" for i in range(n)),
        feature_names=tuple(names),
        values=values,
    )
    truth = GroundTruth(
        u_true=target,
        log_lambda0=np.empty(0),
        beta=np.empty(0),
        sigma_u=0.0,
        planted_effects={k: float(v) for k, v in planted.items()},
    )
    return LingamScenario(features=features, target=target, truth=truth)


@dataclass(frozen=True, eq=False)
class TwoGroupScenario:
    """Strong planted effects in the negative group, near-null positive group."""

    scenarios: dict[Group, LingamScenario]
    planted_gap_ratio: float


def generate_two_group_scenario(
    config: SynthConfig,
    strong_effects: Mapping[str, float] | None = None,
) -> TwoGroupScenario:
    strong = dict(strong_effects or {"std": 1.5})
    negative = generate_lingam_scenario(
        config, planted=strong, noise_scale=config.scenario_noise_scale, stream_key=0
    )
    positive = generate_lingam_scenario(
        config, planted={}, noise_scale=config.null_noise_scale, stream_key=1
    )
    strong_max = max(abs(v) for v in strong.values())
    null_max = 0.0
    ratio = strong_max / null_max if null_max else math.inf
    return TwoGroupScenario(
        scenarios={Group.NEGATIVE: negative, Group.POSITIVE: positive},
        planted_gap_ratio=ratio,
    )
