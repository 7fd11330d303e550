"""Inference pipeline for detecting time-varying per-arm reward distributions.

The core statistic for arm k is the difference between the two groups'
participant-averaged per-arm mean rewards (group A minus group B; positive
means A's participants rated the arm higher). Significance comes from a
two-sided two-sample permutation test that relabels participants while
preserving group sizes; confidence intervals come from a bootstrap that
resamples rewards within each (group, time-step) cell at the level of
individual arm pulls. Family-wise error across the K per-arm tests is
controlled with Holm's step-down procedure.

Determinism contract: all randomness flows from an explicit generator or
seed, and per-test generators are derived from (seed, namespace) so results
do not depend on evaluation order.
"""

from __future__ import annotations

import itertools
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .datasets import ParticipantTrajectory, TrajectoryDataset
from .errors import DegenerateGroupsError, EmptyCellError, UnbalancedPullsError

DEFAULT_N_PERM = 10_000
DEFAULT_N_BOOT = 5_000
DEFAULT_ALPHA = 0.1
DEFAULT_CI_LEVEL = 0.95

Group = Sequence[ParticipantTrajectory]


def _as_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _arm_mean_per_participant(group: Group, k: int, m: int) -> np.ndarray:
    values = np.empty(len(group), dtype=float)
    for i, p in enumerate(group):
        rewards = p.arm_rewards(k)
        if len(rewards) != m:
            raise UnbalancedPullsError(
                f"participant {p.id} pulled arm {k} {len(rewards)} times, expected {m}"
            )
        values[i] = sum(rewards) / m
    return values


def _infer_m(group_a: Group, group_b: Group, k: int) -> int:
    for p in itertools.chain(group_a, group_b):
        return len(p.arm_rewards(k))
    raise DegenerateGroupsError("both groups are empty")


def group_arm_mean(group: Group, k: int, m: int) -> float:
    """Mean over participants of each participant's m-pull mean for arm k."""
    if not group:
        raise DegenerateGroupsError("group is empty")
    return float(_arm_mean_per_participant(group, k, m).mean())


def tau(group_a: Group, group_b: Group, k: int, m: int) -> float:
    """group_arm_mean(A) - group_arm_mean(B) for arm k."""
    return group_arm_mean(group_a, k, m) - group_arm_mean(group_b, k, m)


def _tau_from_values(values: np.ndarray, n_a: int) -> float:
    return float(values[:n_a].mean() - values[n_a:].mean())


def permutation_test(
    group_a: Group,
    group_b: Group,
    k: int,
    n_perm: int = DEFAULT_N_PERM,
    rng: np.random.Generator | int | None = None,
    m: Optional[int] = None,
) -> float:
    """Two-sided permutation p-value for the arm-k mean difference.

    Participants are relabeled uniformly at random, preserving group sizes.
    When n_perm covers every distinct split, all splits are enumerated once
    and the p-value is the exact fraction with |tau| at least as large as
    observed; otherwise the Monte Carlo p-value uses add-one smoothing,
    (1 + #{|tau_perm| >= |tau_obs|}) / (n_perm + 1).
    """
    if not group_a or not group_b:
        raise DegenerateGroupsError("both groups need at least one participant")
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    if m is None:
        m = _infer_m(group_a, group_b, k)
    values = np.concatenate(
        [_arm_mean_per_participant(group_a, k, m), _arm_mean_per_participant(group_b, k, m)]
    )
    return _permutation_pvalue(values, len(group_a), n_perm, rng)


def _permutation_pvalue(
    values: np.ndarray,
    n_a: int,
    n_perm: int,
    rng: np.random.Generator | int | None,
) -> float:
    n = len(values)
    observed = abs(_tau_from_values(values, n_a))
    total = math.comb(n, n_a)
    if n_perm >= total:
        count = 0
        for idx_a in itertools.combinations(range(n), n_a):
            mask = np.zeros(n, dtype=bool)
            mask[list(idx_a)] = True
            stat = abs(float(values[mask].mean() - values[~mask].mean()))
            if stat >= observed:
                count += 1
        return count / total
    gen = _as_rng(rng)
    n_b = n - n_a
    order = np.argsort(gen.random((n_perm, n)), axis=1)
    sums_a = values[order[:, :n_a]].sum(axis=1)
    stats = np.abs(sums_a / n_a - (values.sum() - sums_a) / n_b)
    count = int((stats >= observed).sum())
    return (1 + count) / (n_perm + 1)


def _pull_cells(group: Group, k: int) -> list[np.ndarray]:
    """Rewards per time step at which arm k was pulled, one array per step."""
    cells: dict[int, list[int]] = {}
    for p in group:
        for t, r in p.rewards_at(k):
            cells.setdefault(t, []).append(r)
    if not cells:
        raise EmptyCellError(f"no pulls of arm {k} in the group")
    return [np.asarray(cells[t], dtype=float) for t in sorted(cells)]


def _bootstrap_group_means(
    cells: list[np.ndarray], n_boot: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-replicate group mean: average over cells of the resampled cell mean."""
    acc = np.zeros(n_boot)
    for cell in cells:
        if cell.size == 0:
            raise EmptyCellError("empty pull cell")
        draws = rng.integers(0, cell.size, size=(n_boot, cell.size))
        acc += cell[draws].mean(axis=1)
    return acc / len(cells)


def bootstrap_ci(
    group_a: Group,
    group_b: Group,
    k: int,
    n_boot: int = DEFAULT_N_BOOT,
    level: float = DEFAULT_CI_LEVEL,
    rng: np.random.Generator | int | None = None,
    m: Optional[int] = None,
) -> tuple[float, float]:
    """Percentile bootstrap CI for tau_k, resampling at the level of arm pulls.

    Each replicate redraws, for every (group, time-step) cell in which arm k
    was pulled, that cell's rewards with replacement, then recomputes the
    group mean difference.
    """
    if not group_a or not group_b:
        raise DegenerateGroupsError("both groups need at least one participant")
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie in (0, 1)")
    if m is not None:
        # Balance check only; the cell decomposition below covers both groups.
        _arm_mean_per_participant(group_a, k, m)
        _arm_mean_per_participant(group_b, k, m)
    gen = _as_rng(rng)
    taus = _bootstrap_group_means(_pull_cells(group_a, k), n_boot, gen) - _bootstrap_group_means(
        _pull_cells(group_b, k), n_boot, gen
    )
    lo, hi = (1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0
    return float(np.quantile(taus, lo)), float(np.quantile(taus, hi))


@dataclass(frozen=True)
class HolmDecision:
    p_value: float
    corrected_alpha: float
    rejected: bool


def holm_correct(p_values: Sequence[float], alpha: float) -> list[HolmDecision]:
    """Holm step-down correction.

    Compare the i-th smallest p-value against alpha/(m+1-i); the first
    failure stops all later rejections. Decisions are returned in the
    original hypothesis order.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    decisions: list[Optional[HolmDecision]] = [None] * m
    rejecting = True
    for rank, idx in enumerate(order):
        threshold = alpha / (m - rank)
        rejecting = rejecting and (p_values[idx] < threshold)
        decisions[idx] = HolmDecision(
            p_value=float(p_values[idx]), corrected_alpha=threshold, rejected=rejecting
        )
    return decisions


@dataclass
class ArmTestReport:
    arm: int
    label: str
    tau: float
    ci_low: Optional[float]
    ci_high: Optional[float]
    p_value: float
    corrected_alpha: float
    rejected: bool


@dataclass
class StratumReport:
    name: str
    n_group_a: int
    n_group_b: int
    insufficient: bool
    arms: list[ArmTestReport] = field(default_factory=list)

    def any_rejected(self) -> bool:
        return any(a.rejected for a in self.arms)


def _test_arms(
    group_a: Group,
    group_b: Group,
    dataset: TrajectoryDataset,
    alpha: float,
    n_perm: int,
    n_boot: int,
    level: float,
    seed: int,
    include_bootstrap: bool,
) -> list[ArmTestReport]:
    m = dataset.m
    taus: list[float] = []
    p_values: list[float] = []
    cis: list[tuple[Optional[float], Optional[float]]] = []
    for k in range(1, dataset.K + 1):
        mk = m if m is not None else _infer_m(group_a, group_b, k)
        taus.append(tau(group_a, group_b, k, mk))
        p_values.append(
            permutation_test(group_a, group_b, k, n_perm, rng=np.random.default_rng([seed, 1, k]), m=mk)
        )
        if include_bootstrap:
            cis.append(
                bootstrap_ci(group_a, group_b, k, n_boot, level, rng=np.random.default_rng([seed, 2, k]), m=mk)
            )
        else:
            cis.append((None, None))
    decisions = holm_correct(p_values, alpha)
    return [
        ArmTestReport(
            arm=k,
            label=dataset.arm_label(k),
            tau=taus[k - 1],
            ci_low=cis[k - 1][0],
            ci_high=cis[k - 1][1],
            p_value=decisions[k - 1].p_value,
            corrected_alpha=decisions[k - 1].corrected_alpha,
            rejected=decisions[k - 1].rejected,
        )
        for k in range(1, dataset.K + 1)
    ]


def stratified_report(
    dataset: TrajectoryDataset,
    heavy: Callable[[ParticipantTrajectory], bool] | None = None,
    *,
    group_a: str = "cycle",
    group_b: str = "repeat",
    alpha: float = DEFAULT_ALPHA,
    n_perm: int = DEFAULT_N_PERM,
    n_boot: int = DEFAULT_N_BOOT,
    level: float = DEFAULT_CI_LEVEL,
    seed: int = 0,
    include_bootstrap: bool = True,
    stratify: bool = True,
) -> list[StratumReport]:
    """Per-arm test reports for Overall plus (optionally) Heavy/Light strata.

    A stratum with fewer than 2 participants in either group is reported as
    insufficient rather than silently dropped.
    """
    if heavy is None:
        heavy = lambda p: bool(p.heavy)
    a_all = dataset.group(group_a)
    b_all = dataset.group(group_b)
    strata: list[tuple[str, Group, Group]] = [("overall", a_all, b_all)]
    if stratify:
        strata.append(("heavy", [p for p in a_all if heavy(p)], [p for p in b_all if heavy(p)]))
        strata.append(("light", [p for p in a_all if not heavy(p)], [p for p in b_all if not heavy(p)]))
    reports = []
    for i, (name, ga, gb) in enumerate(strata):
        if len(ga) < 2 or len(gb) < 2:
            reports.append(
                StratumReport(name=name, n_group_a=len(ga), n_group_b=len(gb), insufficient=True)
            )
            continue
        arms = _test_arms(ga, gb, dataset, alpha, n_perm, n_boot, level, seed * 10 + i, include_bootstrap)
        reports.append(
            StratumReport(name=name, n_group_a=len(ga), n_group_b=len(gb), insufficient=False, arms=arms)
        )
    return reports


def cumulative_reward(trajectory: ParticipantTrajectory) -> int:
    return trajectory.cumulative_reward()


def hindsight_rate(group: Group) -> float:
    """Fraction of participants satisfied in hindsight with their sequence."""
    if not group:
        raise DegenerateGroupsError("group is empty")
    flags = [p.survey.hindsight_satisfied for p in group if p.survey is not None]
    if not flags:
        raise DegenerateGroupsError("no survey results in the group")
    return sum(flags) / len(flags)


def autonomy_rate(group: Group) -> float:
    """Fraction of participants who would rather pick items themselves."""
    if not group:
        raise DegenerateGroupsError("group is empty")
    flags = [p.survey.prefers_autonomy for p in group if p.survey is not None]
    if not flags:
        raise DegenerateGroupsError("no survey results in the group")
    return sum(flags) / len(flags)


def memory_rates(group: Group, n_reading: int = 3, n_rating: int = 3) -> tuple[float, float]:
    """Average per-participant correctness fractions (reading, rating)."""
    if not group:
        raise DegenerateGroupsError("group is empty")
    surveys = [p.survey for p in group if p.survey is not None]
    if not surveys:
        raise DegenerateGroupsError("no survey results in the group")
    reading = sum(s.reading_memory_correct / n_reading for s in surveys) / len(surveys)
    rating = sum(s.rating_memory_correct / n_rating for s in surveys) / len(surveys)
    return reading, rating


@dataclass
class ProportionDiffResult:
    delta: float
    ci_low: float
    ci_high: float
    p_value: float


def proportion_diff_test(
    group_values: Iterable[float] | Iterable[bool],
    baseline_values: Iterable[float] | Iterable[bool],
    n_perm: int = DEFAULT_N_PERM,
    rng: np.random.Generator | int | None = None,
    *,
    n_boot: int = DEFAULT_N_BOOT,
    level: float = DEFAULT_CI_LEVEL,
) -> ProportionDiffResult:
    """Rate difference between a group and a baseline, with permutation p and
    participant-resampling bootstrap CI.

    Values may be booleans (rates) or per-participant fractions; the test
    statistic is mean(group) - mean(baseline).
    """
    g = np.asarray(list(group_values), dtype=float)
    b = np.asarray(list(baseline_values), dtype=float)
    if g.size == 0 or b.size == 0:
        raise DegenerateGroupsError("both groups need at least one participant")
    gen = _as_rng(rng)
    delta = float(g.mean() - b.mean())
    p = _permutation_pvalue(np.concatenate([g, b]), g.size, n_perm, gen)
    boot_g = g[gen.integers(0, g.size, size=(n_boot, g.size))].mean(axis=1)
    boot_b = b[gen.integers(0, b.size, size=(n_boot, b.size))].mean(axis=1)
    deltas = boot_g - boot_b
    lo, hi = (1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0
    return ProportionDiffResult(
        delta=delta,
        ci_low=float(np.quantile(deltas, lo)),
        ci_high=float(np.quantile(deltas, hi)),
        p_value=p,
    )


def reward_series(group: Group, K: int) -> dict:
    """Per-time-step and per-(arm, pull-index) mean/std series for plotting."""
    by_t: dict[int, list[int]] = {}
    by_arm_j: dict[int, dict[int, list[int]]] = {k: {} for k in range(1, K + 1)}
    for p in group:
        counts = {k: 0 for k in range(1, K + 1)}
        for t, arm, reward in p.pulls:
            by_t.setdefault(t, []).append(reward)
            counts[arm] += 1
            by_arm_j[arm].setdefault(counts[arm], []).append(reward)
    per_step = [
        {"t": t, "mean": float(np.mean(v)), "std": float(np.std(v)), "n": len(v)}
        for t, v in sorted(by_t.items())
    ]
    per_arm_pull = {
        k: [
            {"j": j, "mean": float(np.mean(v)), "std": float(np.std(v)), "n": len(v)}
            for j, v in sorted(cells.items())
        ]
        for k, cells in by_arm_j.items()
        if cells
    }
    return {"per_step": per_step, "per_arm_pull": per_arm_pull}


def analyze_dataset(
    dataset: TrajectoryDataset,
    *,
    alpha: float = DEFAULT_ALPHA,
    n_perm: int = DEFAULT_N_PERM,
    n_boot: int = DEFAULT_N_BOOT,
    level: float = DEFAULT_CI_LEVEL,
    seed: int = 0,
    stratify: bool = True,
    include_bootstrap: bool = True,
    group_a: str = "cycle",
    group_b: str = "repeat",
    baseline_policy: str = "self_selected",
) -> dict:
    """Full report: per-arm time-invariance tests, enjoyment and attentiveness
    summaries, and rate-difference tests against the baseline policy."""
    dataset.validate()
    can_stratify = stratify and all(p.heavy is not None for p in dataset.participants)
    report: dict = {
        "schema_version": 1,
        "alpha": alpha,
        "n_perm": n_perm,
        "n_boot": n_boot,
        "seed": seed,
        "dataset": {
            "K": dataset.K,
            "T": dataset.T,
            "m": dataset.m,
            "n_participants": len(dataset.participants),
            "policies": {label: len(dataset.group(label)) for label in dataset.policies()},
        },
    }
    if dataset.group(group_a) and dataset.group(group_b):
        strata = stratified_report(
            dataset,
            group_a=group_a,
            group_b=group_b,
            alpha=alpha,
            n_perm=n_perm,
            n_boot=n_boot,
            level=level,
            seed=seed,
            include_bootstrap=include_bootstrap,
            stratify=can_stratify,
        )
        report["time_invariance"] = {
            "groups": [group_a, group_b],
            "strata": {
                s.name: {
                    "n_" + group_a: s.n_group_a,
                    "n_" + group_b: s.n_group_b,
                    "insufficient": s.insufficient,
                    "arms": [
                        {
                            "arm": a.arm,
                            "label": a.label,
                            "tau": a.tau,
                            "ci": None if a.ci_low is None else [a.ci_low, a.ci_high],
                            "p_value": a.p_value,
                            "corrected_alpha": a.corrected_alpha,
                            "rejected": a.rejected,
                        }
                        for a in s.arms
                    ],
                }
                for s in strata
            },
        }
        report["reward_series"] = {
            group: reward_series(dataset.group(group), dataset.K)
            for group in (group_a, group_b)
            if dataset.group(group)
        }

    enjoyment: dict = {}
    attentiveness: dict = {}
    for label in dataset.policies():
        group = dataset.group(label)
        cum = [p.cumulative_reward() for p in group]
        entry: dict = {
            "n": len(group),
            "cumulative_reward_mean": float(np.mean(cum)),
            "cumulative_reward_range95": [
                float(np.quantile(cum, 0.025)),
                float(np.quantile(cum, 0.975)),
            ],
        }
        with_survey = [p for p in group if p.survey is not None]
        if with_survey:
            entry["hindsight_rate"] = hindsight_rate(with_survey)
            entry["autonomy_rate"] = autonomy_rate(with_survey)
            reading, rating = memory_rates(with_survey)
            attentiveness[label] = {"reading_rate": reading, "rating_rate": rating}
        enjoyment[label] = entry
    report["enjoyment"] = enjoyment
    report["attentiveness"] = attentiveness

    baseline = [p for p in dataset.group(baseline_policy) if p.survey is not None]
    if len(baseline) >= 2:
        vs: dict = {"hindsight": {}, "rating_memory": {}}
        for label in dataset.policies():
            if label == baseline_policy:
                continue
            group = [p for p in dataset.group(label) if p.survey is not None]
            if len(group) < 2:
                continue
            label_key = zlib.crc32(label.encode())
            hs = proportion_diff_test(
                [p.survey.hindsight_satisfied for p in group],
                [p.survey.hindsight_satisfied for p in baseline],
                n_perm,
                rng=np.random.default_rng([seed, 3, label_key]),
                n_boot=n_boot,
                level=level,
            )
            rm = proportion_diff_test(
                [p.survey.rating_memory_correct / 3 for p in group],
                [p.survey.rating_memory_correct / 3 for p in baseline],
                n_perm,
                rng=np.random.default_rng([seed, 4, label_key]),
                n_boot=n_boot,
                level=level,
            )
            for key, res in (("hindsight", hs), ("rating_memory", rm)):
                vs[key][label] = {
                    "delta": res.delta,
                    "ci": [res.ci_low, res.ci_high],
                    "p_value": res.p_value,
                }
        report["vs_" + baseline_policy] = vs
    return report


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)


def render_text_report(report: dict) -> str:
    """Aligned plain-text tables for the analysis report."""
    out: list[str] = []
    ds = report["dataset"]
    out.append(
        f"dataset: {ds['n_participants']} participants, K={ds['K']}, T={ds['T']}, "
        f"policies: " + ", ".join(f"{k}={v}" for k, v in ds["policies"].items())
    )
    ti = report.get("time_invariance")
    if ti:
        ga, gb = ti["groups"]
        out.append("")
        out.append(f"Per-arm mean-reward difference ({ga} minus {gb}), alpha={report['alpha']}")
        for name, stratum in ti["strata"].items():
            out.append("")
            out.append(
                f"[{name}] n_{ga}={stratum['n_' + ga]}, n_{gb}={stratum['n_' + gb]}"
                + ("  INSUFFICIENT" if stratum["insufficient"] else "")
            )
            if stratum["insufficient"]:
                continue
            rows = []
            for a in stratum["arms"]:
                ci = "-" if a["ci"] is None else f"[{a['ci'][0]:.3f}, {a['ci'][1]:.3f}]"
                rows.append(
                    [
                        a["label"],
                        f"{a['tau']:.3f}",
                        ci,
                        f"{a['p_value']:.4g}",
                        f"{a['corrected_alpha']:.4g}",
                        "*" if a["rejected"] else "",
                    ]
                )
            out.append(_format_table(["arm", "tau", "95% CI", "p", "alpha_k", "sig"], rows))
    if report.get("enjoyment"):
        out.append("")
        out.append("Enjoyment")
        rows = []
        for label, e in report["enjoyment"].items():
            rows.append(
                [
                    label,
                    str(e["n"]),
                    f"{e['cumulative_reward_mean']:.2f}",
                    f"[{e['cumulative_reward_range95'][0]:.0f}, {e['cumulative_reward_range95'][1]:.0f}]",
                    f"{e['hindsight_rate'] * 100:.2f}%" if "hindsight_rate" in e else "-",
                    f"{e['autonomy_rate'] * 100:.2f}%" if "autonomy_rate" in e else "-",
                ]
            )
        out.append(_format_table(["policy", "n", "cum reward", "range95", "hindsight", "autonomy"], rows))
    if report.get("attentiveness"):
        out.append("")
        out.append("Attentiveness")
        rows = [
            [label, f"{a['reading_rate'] * 100:.2f}%", f"{a['rating_rate'] * 100:.2f}%"]
            for label, a in report["attentiveness"].items()
        ]
        out.append(_format_table(["policy", "reading memory", "rating memory"], rows))
    for key in report:
        if key.startswith("vs_"):
            baseline = key[3:]
            for metric, title in (("hindsight", "Hindsight satisfaction"), ("rating_memory", "Rating memory")):
                if not report[key].get(metric):
                    continue
                out.append("")
                out.append(f"{title} vs {baseline}")
                rows = [
                    [
                        label,
                        f"{r['delta'] * 100:.2f}%",
                        f"[{r['ci'][0] * 100:.2f}%, {r['ci'][1] * 100:.2f}%]",
                        f"{r['p_value']:.4g}",
                    ]
                    for label, r in report[key][metric].items()
                ]
                out.append(_format_table(["policy", "delta", "95% CI", "p"], rows))
    return "\n".join(out) + "\n"
