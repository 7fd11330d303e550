"""Trajectory dataset interchange: the bridge between collection and analysis.

A dataset is a list of completed per-participant trajectories grouped by
assigned policy. The JSON form is full fidelity (heavy/light flag, survey
result, attention grade); the CSV form is the flat pull-record table with
columns participant_id, policy, t, arm, within_arm_index, item_id, reward,
dwell_s, attention_correct.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import ExperimentConfig
from .errors import ConfigError
from .sessions import Session, SurveyResult, attention_pass, is_heavy_reader

CSV_COLUMNS = (
    "participant_id",
    "policy",
    "t",
    "arm",
    "within_arm_index",
    "item_id",
    "reward",
    "dwell_s",
    "attention_correct",
)

SCHEMA_VERSION = 1


@dataclass
class ParticipantTrajectory:
    id: str
    policy: str
    pulls: list[tuple[int, int, int]]  # (t, arm, reward)
    heavy: Optional[bool] = None
    survey: Optional[SurveyResult] = None
    attention_rate: Optional[float] = None
    attention_passed: Optional[bool] = None

    def arm_rewards(self, k: int) -> list[int]:
        return [r for (_, a, r) in self.pulls if a == k]

    def rewards_at(self, k: int) -> list[tuple[int, int]]:
        """(t, reward) pairs for pulls of arm k, in time order."""
        return [(t, r) for (t, a, r) in self.pulls if a == k]

    def cumulative_reward(self) -> int:
        return sum(r for (_, _, r) in self.pulls)


@dataclass
class TrajectoryDataset:
    K: int
    T: int
    participants: list[ParticipantTrajectory] = field(default_factory=list)
    arm_labels: Optional[list[str]] = None

    @property
    def m(self) -> Optional[int]:
        return self.T // self.K if self.T % self.K == 0 else None

    def group(self, policy: str) -> list[ParticipantTrajectory]:
        return [p for p in self.participants if p.policy == policy]

    def policies(self) -> list[str]:
        seen: list[str] = []
        for p in self.participants:
            if p.policy not in seen:
                seen.append(p.policy)
        return seen

    def arm_label(self, k: int) -> str:
        if self.arm_labels and 1 <= k <= len(self.arm_labels):
            return self.arm_labels[k - 1]
        return f"arm{k}"

    def validate(self) -> None:
        for p in self.participants:
            times = [t for (t, _, _) in p.pulls]
            if times != list(range(1, len(times) + 1)):
                raise ConfigError(f"participant {p.id}: pull times must be 1..n without gaps")
            if any(t > self.T for t in times):
                raise ConfigError(f"participant {p.id}: pull time beyond T={self.T}")
            if any(a < 1 or a > self.K for (_, a, _) in p.pulls):
                raise ConfigError(f"participant {p.id}: arm outside [1, {self.K}]")
            if any(r < 1 or r > 9 for (_, _, r) in p.pulls):
                raise ConfigError(f"participant {p.id}: reward outside [1, 9]")


def session_to_trajectory(session: Session, config: ExperimentConfig) -> ParticipantTrajectory:
    rate, passed = attention_pass(session, config)
    return ParticipantTrajectory(
        id=session.participant_id,
        policy=session.policy,
        pulls=[(r.t, r.arm, r.reward) for r in session.records],
        heavy=is_heavy_reader(session.background),
        survey=session.survey_result,
        attention_rate=rate,
        attention_passed=passed,
    )


def dataset_to_dict(dataset: TrajectoryDataset) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "K": dataset.K,
        "T": dataset.T,
        "m": dataset.m,
        "arm_labels": dataset.arm_labels,
        "participants": [
            {
                "id": p.id,
                "policy": p.policy,
                "heavy": p.heavy,
                "pulls": [list(pull) for pull in p.pulls],
                "survey": None if p.survey is None else dataclasses.asdict(p.survey),
                "attention_rate": p.attention_rate,
                "attention_passed": p.attention_passed,
            }
            for p in dataset.participants
        ],
    }


def dataset_from_dict(doc: dict) -> TrajectoryDataset:
    participants = [
        ParticipantTrajectory(
            id=p["id"],
            policy=p["policy"],
            pulls=[tuple(pull) for pull in p["pulls"]],
            heavy=p.get("heavy"),
            survey=None if p.get("survey") is None else SurveyResult(**p["survey"]),
            attention_rate=p.get("attention_rate"),
            attention_passed=p.get("attention_passed"),
        )
        for p in doc["participants"]
    ]
    dataset = TrajectoryDataset(
        K=doc["K"],
        T=doc["T"],
        participants=participants,
        arm_labels=doc.get("arm_labels"),
    )
    dataset.validate()
    return dataset


def dataset_to_csv(dataset: TrajectoryDataset, sessions: Optional[list[Session]] = None) -> str:
    """Flat pull-record CSV. Dwell and item ids are only known from sessions;
    when building from a bare dataset those columns are left blank/synthetic."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    if sessions is not None:
        for s in sessions:
            for r in s.records:
                writer.writerow(
                    [
                        s.participant_id,
                        s.policy,
                        r.t,
                        r.arm,
                        r.within_arm_index,
                        r.item_id,
                        r.reward,
                        f"{r.dwell_seconds:.3f}",
                        int(r.attention_correct),
                    ]
                )
        return buf.getvalue()
    for p in dataset.participants:
        counts = {k: 0 for k in range(1, dataset.K + 1)}
        for t, arm, reward in p.pulls:
            counts[arm] += 1
            writer.writerow([p.id, p.policy, t, arm, counts[arm], "", reward, "", ""])
    return buf.getvalue()


def dataset_from_csv(text: str, K: Optional[int] = None, T: Optional[int] = None) -> TrajectoryDataset:
    """Rebuild trajectories from the flat CSV. Heavy/light flags and survey
    results are not part of the CSV schema, so they come back as None."""
    reader = csv.DictReader(io.StringIO(text))
    missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ConfigError(f"CSV missing columns: {sorted(missing)}")
    by_id: dict[str, ParticipantTrajectory] = {}
    order: list[str] = []
    max_arm = 0
    max_t = 0
    for row in reader:
        pid = row["participant_id"]
        if pid not in by_id:
            by_id[pid] = ParticipantTrajectory(id=pid, policy=row["policy"], pulls=[])
            order.append(pid)
        t, arm, reward = int(row["t"]), int(row["arm"]), int(row["reward"])
        by_id[pid].pulls.append((t, arm, reward))
        max_arm = max(max_arm, arm)
        max_t = max(max_t, t)
    for p in by_id.values():
        p.pulls.sort(key=lambda pull: pull[0])
    dataset = TrajectoryDataset(
        K=K if K is not None else max_arm,
        T=T if T is not None else max_t,
        participants=[by_id[pid] for pid in order],
    )
    dataset.validate()
    return dataset


def load_dataset(path: str | Path) -> TrajectoryDataset:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        return dataset_from_csv(text)
    return dataset_from_dict(json.loads(text))


def save_dataset(dataset: TrajectoryDataset, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text(dataset_to_csv(dataset))
    else:
        path.write_text(json.dumps(dataset_to_dict(dataset)))
