import csv
import io
import itertools
import json
import os

import pytest
from fastapi.testclient import TestClient

from banditlab.catalog import make_synthetic_catalog
from banditlab.config import DEFAULT_ASSIGNMENT_WEIGHTS, ExperimentConfig
from banditlab.service import OPERATOR_TOKEN_ENV, create_app

OPERATOR_TOKEN = "test-operator-token"


@pytest.fixture(autouse=True)
def _operator_token(monkeypatch):
    monkeypatch.setenv(OPERATOR_TOKEN_ENV, OPERATOR_TOKEN)


def make_config(**overrides):
    defaults = dict(K=3, T=6, min_dwell_seconds=0.0, rng_seed=11)
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


def forced_policy_config(policy, **overrides):
    weights = {k: 0.0 for k in DEFAULT_ASSIGNMENT_WEIGHTS}
    weights[policy] = 1.0
    return make_config(assignment_weights=weights, **overrides)


class Platform:
    """App plus the knobs tests need: restartable storage and a fake clock."""

    def __init__(self, tmp_path, config=None):
        self.config = config or make_config()
        self.catalog = make_synthetic_catalog(self.config.K, per_arm=self.config.T)
        self.data_dir = str(tmp_path)
        self.now = 0.0
        self.client = self._new_client()

    def _new_client(self):
        app = create_app(self.config, self.catalog, self.data_dir, clock=lambda: self.now)
        return TestClient(app, raise_server_exceptions=False)

    def restart(self):
        self.client.app.state.store.close()
        self.client = self._new_client()

    def register(self, code="code-1", gate_answer=None, frequency="weekly"):
        return self.client.post(
            "/register",
            json={
                "completion_code": code,
                "gate_answer": self.config.gate_answer if gate_answer is None else gate_answer,
                "background": {"reading_frequency": frequency},
            },
        )

    def participant(self, code="code-1", initial_arm=None, **kwargs):
        body = self.register(code=code, **kwargs).json()
        pid, token = body["participant_id"], body["session_token"]
        headers = {"X-Session-Token": token}
        start = self.client.post(
            f"/session/{pid}/start", json={"initial_arm": initial_arm}, headers=headers
        )
        assert start.status_code == 200, start.text
        return pid, headers

    def rate_step(self, pid, headers, reward=5, correct=True, chosen_next_arm=None, dwell=None):
        nxt = self.client.get(f"/session/{pid}/next", headers=headers)
        assert nxt.status_code == 200, nxt.text
        body = nxt.json()
        item_id = body["item"]["item_id"]
        key = next(
            it.attention_key for it in self.catalog.all_items() if it.item_id == item_id
        )
        self.now += max(self.config.min_dwell_seconds, 1.0)
        return self.client.post(
            f"/session/{pid}/rate",
            json={
                "step": body["step"],
                "reward": reward,
                "attention_answer": key if correct else key + 1,
                "dwell_seconds": self.config.min_dwell_seconds if dwell is None else dwell,
                "chosen_next_arm": chosen_next_arm,
            },
            headers=headers,
        )

    def finish_rating(self, pid, headers, reward=5, correct_steps=None, chooser=None):
        for t in range(1, self.config.T + 1):
            correct = True if correct_steps is None else (t <= correct_steps)
            chosen = chooser(t) if chooser else None
            resp = self.rate_step(pid, headers, reward=reward, correct=correct, chosen_next_arm=chosen)
            assert resp.status_code == 200, resp.text

    def submit_survey(self, pid, headers):
        q = self.client.get(f"/session/{pid}/survey", headers=headers)
        assert q.status_code == 200, q.text
        body = q.json()
        return self.client.post(
            f"/session/{pid}/survey",
            json={
                "reading_answers": [True] * len(body["reading_items"]),
                "rating_answers": [True] * len(body["rating_items"]),
                "hindsight_satisfied": True,
                "prefers_autonomy": False,
            },
            headers=headers,
        )

    def export(self, filter="passed", fmt="json", token=OPERATOR_TOKEN):
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        return self.client.get(f"/export?filter={filter}&fmt={fmt}", headers=headers)


# ---------------------------------------------------------------- registration


def test_register_happy_path(tmp_path):
    platform = Platform(tmp_path)
    resp = platform.register()
    assert resp.status_code == 200
    body = resp.json()
    assert body["participant_id"]
    assert body["session_token"]
    assert isinstance(body["policy_hidden"], bool)


def test_register_rejects_reused_code(tmp_path):
    platform = Platform(tmp_path)
    assert platform.register(code="dup").status_code == 200
    resp = platform.register(code="dup")
    assert resp.status_code == 409
    assert resp.json()["error"] == "DUPLICATE_CODE"


def test_register_rejects_failed_gate(tmp_path):
    platform = Platform(tmp_path)
    resp = platform.register(gate_answer=999)
    assert resp.status_code == 400
    assert resp.json()["error"] == "GATE_FAILED"


def test_register_never_reveals_policy(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("ucb"))
    body = platform.register().json()
    assert body["policy_hidden"] is True
    assert "policy" not in body
    assert "ucb" not in json.dumps(body)


# ---------------------------------------------------------------- next / rate


def test_next_serves_first_cycle_item(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("cycle"))
    pid, headers = platform.participant()
    resp = platform.client.get(f"/session/{pid}/next", headers=headers)
    body = resp.json()
    assert body["step"] == 1
    assert body["item"]["item_id"] == platform.catalog.item(1, 1).item_id


def test_next_is_idempotent(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("ts"))
    pid, headers = platform.participant()
    first = platform.client.get(f"/session/{pid}/next", headers=headers).json()
    second = platform.client.get(f"/session/{pid}/next", headers=headers).json()
    assert first == second


def test_next_after_last_step_directs_to_survey(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("cycle"))
    pid, headers = platform.participant()
    platform.finish_rating(pid, headers)
    resp = platform.client.get(f"/session/{pid}/next", headers=headers)
    assert resp.status_code == 409
    assert resp.json()["error"] == "WRONG_PHASE"
    assert "survey" in resp.json()["detail"].lower()


def test_next_payload_never_leaks_secrets(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("ucb"))
    pid, headers = platform.participant()
    body = platform.client.get(f"/session/{pid}/next", headers=headers).json()
    text = json.dumps(body)
    assert "attention_key" not in text
    assert "ucb" not in text
    assert "policy" not in body
    # only the current item is present
    assert isinstance(body["item"], dict)
    assert "items" not in text


def test_rate_accepts_and_advances(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("cycle"))
    pid, headers = platform.participant()
    resp = platform.rate_step(pid, headers)
    body = resp.json()
    assert body["accepted"] is True
    assert body["next_step"] == 2


def test_rate_double_click_replay(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("cycle"))
    pid, headers = platform.participant()
    nxt = platform.client.get(f"/session/{pid}/next", headers=headers).json()
    key = next(
        it.attention_key
        for it in platform.catalog.all_items()
        if it.item_id == nxt["item"]["item_id"]
    )
    payload = {
        "step": nxt["step"],
        "reward": 7,
        "attention_answer": key,
        "dwell_seconds": 0.0,
        "chosen_next_arm": None,
    }
    platform.now += 1
    first = platform.client.post(f"/session/{pid}/rate", json=payload, headers=headers)
    platform.now += 1
    second = platform.client.post(f"/session/{pid}/rate", json=payload, headers=headers)
    assert first.json()["accepted"] is True
    assert second.status_code == 200
    assert second.json()["accepted"] is False
    export = platform_export_all(platform)
    assert len(export["participants"]) == 0  # not complete yet, nothing exported


def platform_export_all(platform):
    return platform.export(filter="all").json()


def test_rate_short_dwell_rejected(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("cycle", min_dwell_seconds=10.0))
    pid, headers = platform.participant()
    resp = platform.rate_step(pid, headers, dwell=3.0)
    assert resp.status_code == 400
    assert resp.json()["error"] == "DWELL_TOO_SHORT"


def test_self_selected_flow_requires_genre(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("self_selected"))
    body = platform.register().json()
    assert body["policy_hidden"] is False
    assert body["requires_genre_choice"] is True
    pid, token = body["participant_id"], body["session_token"]
    headers = {"X-Session-Token": token}
    # start without a genre fails
    resp = platform.client.post(f"/session/{pid}/start", json={}, headers=headers)
    assert resp.status_code == 400
    assert resp.json()["error"] == "MISSING_GENRE_CHOICE"
    resp = platform.client.post(f"/session/{pid}/start", json={"initial_arm": 2}, headers=headers)
    assert resp.status_code == 200
    nxt = platform.client.get(f"/session/{pid}/next", headers=headers).json()
    assert nxt["requires_genre_choice"] is True
    assert nxt["genres"]
    # rating without a choice fails
    resp = platform.rate_step(pid, headers)
    assert resp.status_code == 400
    assert resp.json()["error"] == "MISSING_GENRE_CHOICE"
    resp = platform.rate_step(pid, headers, chosen_next_arm=1)
    assert resp.json()["accepted"] is True


def test_bad_token_rejected(tmp_path):
    platform = Platform(tmp_path)
    pid, headers = platform.participant()
    resp = platform.client.get(f"/session/{pid}/next", headers={"X-Session-Token": "wrong"})
    assert resp.status_code == 401
    resp = platform.client.get(f"/session/{pid}/next")
    assert resp.status_code == 401


def test_unknown_session_404(tmp_path):
    platform = Platform(tmp_path)
    resp = platform.client.get("/session/nope/next", headers={"X-Session-Token": "x"})
    assert resp.status_code == 404


# ---------------------------------------------------------------- survey + durability


def test_survey_round_trip_and_completion_code(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("cycle"))
    pid, headers = platform.participant(code="mycode")
    platform.finish_rating(pid, headers)
    resp = platform.submit_survey(pid, headers)
    assert resp.status_code == 200
    assert resp.json()["phase"] == "COMPLETE"
    assert resp.json()["completion_code"] == "mycode"
    # a second submission lands in COMPLETE phase and is refused
    resp = platform.submit_survey(pid, headers)
    assert resp.status_code == 409
    assert resp.json()["error"] == "WRONG_PHASE"


def test_survey_persists_across_restart(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("cycle"))
    pid, headers = platform.participant()
    platform.finish_rating(pid, headers)
    platform.submit_survey(pid, headers)
    platform.restart()
    state = platform.client.get(f"/session/{pid}", headers=headers).json()
    assert state["phase"] == "COMPLETE"
    export = platform.export(filter="all").json()
    assert len(export["participants"]) == 1
    assert export["participants"][0]["survey"]["hindsight_satisfied"] is True


def test_resume_after_restart_serves_same_pending_item(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("ts"))
    pid, headers = platform.participant()
    for _ in range(3):
        platform.rate_step(pid, headers)
    before = platform.client.get(f"/session/{pid}/next", headers=headers).json()
    platform.restart()
    after = platform.client.get(f"/session/{pid}/next", headers=headers).json()
    assert before == after


def test_crash_between_every_request_loses_nothing(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("cycle"))
    pid, headers = platform.participant()
    for t in range(1, platform.config.T + 1):
        platform.restart()
        resp = platform.rate_step(pid, headers, reward=(t % 9) + 1)
        assert resp.json()["accepted"] is True
    platform.restart()
    platform.submit_survey(pid, headers)
    export = platform.export(filter="all").json()
    pulls = export["participants"][0]["pulls"]
    assert len(pulls) == platform.config.T
    assert [p[0] for p in pulls] == list(range(1, platform.config.T + 1))


# ---------------------------------------------------------------- export


def complete_participant(platform, code, correct_steps=None):
    pid, headers = platform.participant(code=code)
    platform.finish_rating(pid, headers, correct_steps=correct_steps)
    platform.submit_survey(pid, headers)
    return pid


def test_export_requires_operator_token(tmp_path):
    platform = Platform(tmp_path)
    assert platform.export(token=None).status_code == 401
    assert platform.export(token="wrong").status_code == 401
    assert platform.export().status_code == 200


def test_export_attention_filter(tmp_path):
    # T=6, threshold 0.70: 4/6 = 0.667 fails, 5/6 = 0.833 passes.
    platform = Platform(tmp_path, config=forced_policy_config("cycle"))
    good = complete_participant(platform, "good", correct_steps=5)
    bad = complete_participant(platform, "bad", correct_steps=4)
    passed = platform.export(filter="passed").json()
    everyone = platform.export(filter="all").json()
    assert {p["id"] for p in passed["participants"]} == {good}
    assert {p["id"] for p in everyone["participants"]} == {good, bad}
    flags = {p["id"]: p["attention_passed"] for p in everyone["participants"]}
    assert flags[good] is True
    assert flags[bad] is False


def test_export_empty_dataset_valid(tmp_path):
    platform = Platform(tmp_path)
    body = platform.export().json()
    assert body["participants"] == []
    assert body["K"] == platform.config.K
    csv_resp = platform.export(fmt="csv")
    header = csv_resp.text.splitlines()[0]
    assert header == "participant_id,policy,t,arm,within_arm_index,item_id,reward,dwell_s,attention_correct"


def test_export_csv_rows(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("repeat"))
    complete_participant(platform, "c1")
    text = platform.export(fmt="csv").text
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == platform.config.T
    assert rows[0]["arm"] == "2"  # repeat starts on arm 2
    assert rows[0]["within_arm_index"] == "1"
    assert rows[0]["item_id"]


def test_incomplete_sessions_not_exported(tmp_path):
    platform = Platform(tmp_path, config=forced_policy_config("cycle"))
    pid, headers = platform.participant()
    platform.rate_step(pid, headers)
    body = platform.export(filter="all").json()
    assert body["participants"] == []
