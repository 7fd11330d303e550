import json

import pytest

from banditlab.datasets import (
    ParticipantTrajectory,
    TrajectoryDataset,
    dataset_from_csv,
    dataset_from_dict,
    dataset_to_csv,
    dataset_to_dict,
    load_dataset,
    save_dataset,
)
from banditlab.errors import ConfigError
from banditlab.sessions import SurveyResult


def sample_dataset():
    return TrajectoryDataset(
        K=2,
        T=4,
        arm_labels=["family", "gag"],
        participants=[
            ParticipantTrajectory(
                id="p0",
                policy="cycle",
                pulls=[(1, 1, 5), (2, 2, 6), (3, 1, 7), (4, 2, 8)],
                heavy=True,
                survey=SurveyResult(3, 2, True, False),
                attention_rate=1.0,
                attention_passed=True,
            ),
            ParticipantTrajectory(
                id="p1",
                policy="repeat",
                pulls=[(1, 2, 3), (2, 2, 4), (3, 1, 5), (4, 1, 6)],
                heavy=False,
            ),
        ],
    )


def test_json_round_trip(tmp_path):
    ds = sample_dataset()
    path = tmp_path / "ds.json"
    save_dataset(ds, path)
    restored = load_dataset(path)
    assert dataset_to_dict(restored) == dataset_to_dict(ds)
    assert restored.m == 2


def test_csv_round_trip_drops_survey_fields(tmp_path):
    ds = sample_dataset()
    path = tmp_path / "ds.csv"
    save_dataset(ds, path)
    restored = load_dataset(path)
    assert [(p.id, p.policy, p.pulls) for p in restored.participants] == [
        (p.id, p.policy, p.pulls) for p in ds.participants
    ]
    assert all(p.heavy is None and p.survey is None for p in restored.participants)


def test_csv_missing_columns_rejected():
    with pytest.raises(ConfigError):
        dataset_from_csv("participant_id,policy\np0,cycle\n")


def test_validation_rejects_gapped_times():
    doc = dataset_to_dict(sample_dataset())
    doc["participants"][0]["pulls"] = [[1, 1, 5], [3, 1, 5]]
    with pytest.raises(ConfigError):
        dataset_from_dict(doc)


def test_validation_rejects_out_of_range_rewards():
    doc = dataset_to_dict(sample_dataset())
    doc["participants"][0]["pulls"][0] = [1, 1, 12]
    with pytest.raises(ConfigError):
        dataset_from_dict(doc)


def test_group_and_labels():
    ds = sample_dataset()
    assert [p.id for p in ds.group("cycle")] == ["p0"]
    assert ds.arm_label(1) == "family"
    assert ds.arm_label(2) == "gag"
    assert ds.policies() == ["cycle", "repeat"]
