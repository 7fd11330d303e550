"""Synthetic raters for desk-scale verification of the inference pipeline.

Static users draw every rating from a fixed per-arm distribution, which is
exactly the null hypothesis of the time-invariance test; satiating and
sensitizing users carry a leaky-integrator exposure state so repeated pulls
of an arm shift its mean down (or up), giving the pipeline a true effect to
detect. Rewards are drawn from a discretized Gaussian over the 1..9 scale,
renormalized after truncation; sigma=0 degenerates to the rounded mean.

Cohorts run headlessly through the real session machinery (registration,
rating loop, survey) so simulated datasets exercise the same code paths as
live ones.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import sessions, stats
from .catalog import Catalog, make_synthetic_catalog
from .config import ExperimentConfig
from .datasets import TrajectoryDataset, session_to_trajectory
from .errors import ConfigError
from .seeding import NS_DATASET, NS_USER, spawn_rng

STATIC = "static"
SATIATION = "satiation"
SENSITIZATION = "sensitization"

MODEL_KINDS = (STATIC, SATIATION, SENSITIZATION)

LIKERT_LEVELS = np.arange(1, 10, dtype=float)


@dataclass(frozen=True)
class UserModel:
    kind: str
    base_means: tuple[float, ...]
    sigma: float = 1.0
    gamma: float = 0.0
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown user model kind {self.kind!r}")
        if any(not (1.0 <= b <= 9.0) for b in self.base_means):
            raise ConfigError("base means must lie in [1, 9]")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if not (0.0 <= self.rho < 1.0):
            raise ConfigError("rho must lie in [0, 1)")
        if self.kind == STATIC and self.gamma != 0.0:
            raise ConfigError("static users must have gamma = 0")
        if self.kind != STATIC and self.gamma == 0.0:
            raise ConfigError(f"{self.kind} users need gamma > 0")

    @property
    def K(self) -> int:
        return len(self.base_means)


def model_to_dict(model: UserModel) -> dict:
    return dataclasses.asdict(model) | {"base_means": list(model.base_means)}


def model_from_dict(doc: dict) -> UserModel:
    return UserModel(
        kind=doc["kind"],
        base_means=tuple(float(b) for b in doc["base_means"]),
        sigma=float(doc.get("sigma", 1.0)),
        gamma=float(doc.get("gamma", 0.0)),
        rho=float(doc.get("rho", 0.0)),
    )


def load_model(path: str | Path) -> UserModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def _likert_weights(mu: float, sigma: float) -> np.ndarray:
    w = np.exp(-0.5 * ((LIKERT_LEVELS - mu) / sigma) ** 2)
    return w / w.sum()


def likert_mean(mu: float, sigma: float) -> float:
    """Exact expected reward of the discretized Gaussian centered at mu."""
    if sigma == 0.0:
        return float(min(9, max(1, round(mu))))
    return float((_likert_weights(mu, sigma) * LIKERT_LEVELS).sum())


def arm_mean_now(model: UserModel, arm: int, exposure: np.ndarray) -> float:
    """Current mean for the arm given the pre-pull exposure state, clamped to [1, 9]."""
    base = model.base_means[arm - 1]
    if model.kind == SATIATION:
        mu = base - model.gamma * exposure[arm - 1]
    elif model.kind == SENSITIZATION:
        mu = base + model.gamma * exposure[arm - 1]
    else:
        mu = base
    return float(min(9.0, max(1.0, mu)))


def draw_reward(
    model: UserModel,
    arm: int,
    exposure: np.ndarray,
    rng: np.random.Generator,
) -> tuple[int, np.ndarray]:
    """One rating for the pulled arm, plus the decayed-and-bumped exposure state."""
    mu = arm_mean_now(model, arm, exposure)
    if model.sigma == 0.0:
        reward = int(min(9, max(1, round(mu))))
    else:
        reward = int(rng.choice(9, p=_likert_weights(mu, model.sigma))) + 1
    new_exposure = model.rho * exposure
    new_exposure[arm - 1] += 1.0
    return reward, new_exposure


def true_arm_means(model: UserModel) -> np.ndarray:
    """Expected reward per arm for a static model (exposure never matters)."""
    if model.kind != STATIC:
        raise ConfigError("closed-form means are only defined for static users")
    return np.array([likert_mean(b, model.sigma) for b in model.base_means])


@dataclass
class CohortSpec:
    """How many simulated users run under each policy label."""

    counts: dict[str, int]
    heavy_fraction: float = 0.425

    def total(self) -> int:
        return sum(self.counts.values())


def _default_config(T: int, K: int, seed: int) -> ExperimentConfig:
    return ExperimentConfig(K=K, T=T, min_dwell_seconds=0.0, rng_seed=seed)


def simulate_session(
    config: ExperimentConfig,
    catalog: Catalog,
    policy: str,
    model: UserModel,
    rng_seed: int,
    participant_id: str,
    heavy: bool,
    user_rng: np.random.Generator,
) -> sessions.Session:
    """Run one full session: always-correct attention answers, dwell satisfied,
    truthful survey answers, hindsight satisfied iff the mean rating reached 5."""
    background = sessions.BackgroundProfile(reading_frequency="daily" if heavy else "weekly")
    session = sessions.create_session(
        config, catalog, participant_id, f"code-{participant_id}", background, policy, rng_seed
    )
    initial_arm = int(user_rng.integers(1, config.K + 1)) if policy == "self_selected" else None
    sessions.begin_rating(session, config, initial_arm=initial_arm, now=0.0)
    exposure = np.zeros(config.K)
    spacing = max(config.min_dwell_seconds, 1.0)
    for t in range(1, config.T + 1):
        pending = sessions.next_item(session, config, catalog)
        reward, exposure = draw_reward(model, pending.arm, exposure, user_rng)
        chosen = int(user_rng.integers(1, config.K + 1)) if policy == "self_selected" else None
        sessions.submit_rating(
            session,
            config,
            catalog,
            reward=reward,
            attention_answer=pending.item.attention_key,
            dwell_seconds=config.min_dwell_seconds,
            chosen_next_arm=chosen,
            step=t,
            now=t * spacing,
        )
    questions = sessions.survey_questions(session, config, catalog)
    shown = {r.item_id: r.reward for r in session.records}
    sessions.grade_survey(
        session,
        config,
        catalog,
        reading_answers=[q.item_id in shown for q in questions.reading_items],
        rating_answers=[shown[q.item_id] >= config.rating_memory_threshold for q in questions.rating_items],
        hindsight_satisfied=(np.mean([r.reward for r in session.records]) >= 5.0),
        prefers_autonomy=(policy == "self_selected"),
    )
    return session


def simulate_cohort(
    model: UserModel,
    cohort: CohortSpec,
    T: int = 50,
    seed: int = 0,
    config: Optional[ExperimentConfig] = None,
    catalog: Optional[Catalog] = None,
) -> TrajectoryDataset:
    """Simulate a full cohort and return the analysis-ready dataset."""
    K = model.K
    if config is None:
        config = _default_config(T, K, seed)
    if config.K != K:
        raise ConfigError(f"model has {K} arms, config expects {config.K}")
    if catalog is None:
        catalog = make_synthetic_catalog(K, per_arm=config.T)
    dataset = TrajectoryDataset(K=K, T=config.T, arm_labels=catalog.arm_labels)
    index = 0
    for policy, count in cohort.counts.items():
        for _ in range(count):
            user_rng = spawn_rng(seed, NS_USER, index)
            heavy = bool(user_rng.random() < cohort.heavy_fraction)
            session = simulate_session(
                config,
                catalog,
                policy,
                model,
                rng_seed=int(user_rng.integers(0, 2**62)),
                participant_id=f"sim{index:05d}",
                heavy=heavy,
                user_rng=user_rng,
            )
            dataset.participants.append(session_to_trajectory(session, config))
            index += 1
    return dataset


@dataclass
class StudyResult:
    """Rejection frequencies over simulated datasets."""

    n_datasets: int
    alpha: float
    familywise_rate: dict[str, float]
    per_arm_rate: dict[str, list[float]]
    mean_tau: list[float] = field(default_factory=list)


def _one_rejection_run(args) -> tuple[dict[str, bool], dict[str, list[bool]], list[float]]:
    model, cohort, T, seed, alpha, n_perm, stratify = args
    dataset = simulate_cohort(model, cohort, T=T, seed=seed)
    strata = stats.stratified_report(
        dataset,
        alpha=alpha,
        n_perm=n_perm,
        seed=seed,
        include_bootstrap=False,
        stratify=stratify,
    )
    fw: dict[str, bool] = {}
    per_arm: dict[str, list[bool]] = {}
    taus: list[float] = []
    for s in strata:
        if s.insufficient:
            continue
        fw[s.name] = s.any_rejected()
        per_arm[s.name] = [a.rejected for a in s.arms]
        if s.name == "overall":
            taus = [a.tau for a in s.arms]
    return fw, per_arm, taus


def _run_many(task_args: list, n_jobs: int):
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(_one_rejection_run, task_args))
    return [_one_rejection_run(a) for a in task_args]


def calibration_study(
    model: UserModel,
    n_datasets: int,
    alpha: float = 0.1,
    seed: int = 0,
    *,
    cohort: Optional[CohortSpec] = None,
    T: int = 50,
    n_perm: int = stats.DEFAULT_N_PERM,
    stratify: bool = True,
    n_jobs: int = 1,
) -> StudyResult:
    """Rejection frequencies of the Holm-corrected per-arm tests over
    freshly simulated datasets. Under a static model this measures the
    family-wise error rate."""
    if n_datasets < 1:
        raise ValueError("n_datasets must be >= 1")
    cohort = cohort or CohortSpec(counts={"cycle": 40, "repeat": 38})
    args = [
        (model, cohort, T, int(spawn_rng(seed, NS_DATASET, d).integers(0, 2**62)), alpha, n_perm, stratify)
        for d in range(n_datasets)
    ]
    results = _run_many(args, n_jobs)
    names = [name for name in ("overall", "heavy", "light") if any(name in fw for fw, _, _ in results)]
    fw_rate = {
        name: float(np.mean([fw[name] for fw, _, _ in results if name in fw])) for name in names
    }
    arm_rate = {}
    for name in names:
        rows = np.array([pa[name] for _, pa, _ in results if name in pa], dtype=float)
        arm_rate[name] = [float(x) for x in rows.mean(axis=0)]
    taus = np.array([t for _, _, t in results if t])
    return StudyResult(
        n_datasets=n_datasets,
        alpha=alpha,
        familywise_rate=fw_rate,
        per_arm_rate=arm_rate,
        mean_tau=[float(x) for x in taus.mean(axis=0)] if taus.size else [],
    )


def power_study(
    model: UserModel,
    gammas: Sequence[float],
    n_datasets: int,
    alpha: float = 0.1,
    seed: int = 0,
    **kwargs,
) -> list[tuple[float, StudyResult]]:
    """Rejection frequencies across an effect-size grid; gamma=0 falls back
    to the static null so the curve starts at the calibration rate."""
    curve = []
    for gamma in gammas:
        if gamma == 0.0:
            m = UserModel(kind=STATIC, base_means=model.base_means, sigma=model.sigma)
        else:
            m = dataclasses.replace(model, gamma=float(gamma))
        curve.append((float(gamma), calibration_study(m, n_datasets, alpha, seed, **kwargs)))
    return curve


def _one_coverage_run(args) -> list[bool]:
    model_a, model_b, T, seed, n_boot, level, truth = args
    cohort_a = CohortSpec(counts={"cycle": 40})
    cohort_b = CohortSpec(counts={"repeat": 38})
    ds_a = simulate_cohort(model_a, cohort_a, T=T, seed=seed)
    ds_b = simulate_cohort(model_b, cohort_b, T=T, seed=seed + 1)
    group_a = ds_a.group("cycle")
    group_b = ds_b.group("repeat")
    dataset = TrajectoryDataset(K=model_a.K, T=T, participants=list(group_a) + list(group_b))
    covered = []
    for k in range(1, dataset.K + 1):
        lo, hi = stats.bootstrap_ci(
            group_a, group_b, k, n_boot=n_boot, level=level, rng=np.random.default_rng([seed, 7, k])
        )
        covered.append(bool(lo <= truth[k - 1] <= hi))
    return covered


def coverage_study(
    model_a: UserModel,
    model_b: UserModel,
    n_datasets: int,
    n_boot: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    *,
    T: int = 50,
    n_jobs: int = 1,
) -> dict:
    """Fraction of (dataset, arm) pairs whose bootstrap CI covers the true
    mean difference between two known static populations."""
    if model_a.kind != STATIC or model_b.kind != STATIC:
        raise ConfigError("coverage requires static populations with known means")
    truth = true_arm_means(model_a) - true_arm_means(model_b)
    args = [
        (model_a, model_b, T, int(spawn_rng(seed, NS_DATASET, d).integers(0, 2**62)), n_boot, level, truth)
        for d in range(n_datasets)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_one_coverage_run, args))
    else:
        rows = [_one_coverage_run(a) for a in args]
    matrix = np.array(rows, dtype=float)
    return {
        "n_datasets": n_datasets,
        "level": level,
        "true_tau": [float(x) for x in truth],
        "coverage": float(matrix.mean()),
        "per_arm_coverage": [float(x) for x in matrix.mean(axis=0)],
    }
