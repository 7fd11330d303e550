"""Participant session state machine.

Phases move strictly REGISTERED -> RATING -> SURVEY -> COMPLETE. Every
accepted rating appends exactly one PullRecord; duplicate submissions for
an already-rated step are acknowledged without any state change. Item
selection for a pending step is a pure function of the persisted session,
so a reload after a crash or refresh serves the same item again.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import policies
from .catalog import Catalog, CatalogItem
from .config import ASSIGNABLE_POLICIES, ExperimentConfig
from .errors import (
    CatalogExhaustedError,
    ConfigError,
    DwellTooShortError,
    InvalidStepError,
    MissingGenreChoiceError,
    RatingOutOfRangeError,
    UnexpectedGenreChoiceError,
    WrongPhaseError,
)
from .seeding import NS_STEP, NS_SURVEY, spawn_rng

PHASE_REGISTERED = "REGISTERED"
PHASE_RATING = "RATING"
PHASE_SURVEY = "SURVEY"
PHASE_COMPLETE = "COMPLETE"

HEAVY_READING_FREQUENCY = "daily"


@dataclass
class BackgroundProfile:
    reading_frequency: str = ""
    age_band: str = ""
    familiar_genre: str = ""
    liked_genre: str = ""


def is_heavy_reader(background: BackgroundProfile) -> bool:
    return background.reading_frequency.strip().lower() == HEAVY_READING_FREQUENCY


@dataclass
class PullRecord:
    t: int
    arm: int
    within_arm_index: int
    item_id: str
    reward: int
    dwell_seconds: float
    attention_answer: int
    attention_correct: bool
    submitted_at: Optional[float] = None


@dataclass
class SurveyResult:
    reading_memory_correct: int
    rating_memory_correct: int
    hindsight_satisfied: bool
    prefers_autonomy: bool


@dataclass
class Session:
    participant_id: str
    completion_code: str
    policy: str
    policy_state: policies.PolicyState
    background: BackgroundProfile
    rng_seed: int
    phase: str = PHASE_REGISTERED
    records: list[PullRecord] = field(default_factory=list)
    next_self_arm: Optional[int] = None
    rating_started_at: Optional[float] = None
    survey_result: Optional[SurveyResult] = None
    survey_answers: Optional[dict] = None


@dataclass
class PendingItem:
    step: int
    arm: int
    within_arm_index: int
    item: CatalogItem


@dataclass
class SurveyQuestions:
    reading_items: list[CatalogItem]
    rating_items: list[CatalogItem]


def assign_policy(config: ExperimentConfig, rng: np.random.Generator) -> str:
    """Sample an assignable policy label with the configured weights."""
    labels = [p for p in ASSIGNABLE_POLICIES if config.assignment_weights.get(p, 0.0) > 0.0]
    weights = np.array([config.assignment_weights[p] for p in labels], dtype=float)
    return labels[int(rng.choice(len(labels), p=weights / weights.sum()))]


def _policy_state_for(config: ExperimentConfig, policy: str, rng_seed: int) -> policies.PolicyState:
    if policy == "self_selected":
        kind, seq = policies.SELF_SELECTED, None
    elif policy in ("cycle", "repeat"):
        kind, seq = policies.FIXED_SEQUENCE, config.sequence_for(policy)
    elif policy in ("ucb", "ts", "etc", "eps_greedy"):
        kind, seq = policy, None
    else:
        raise ConfigError(f"unknown policy label {policy!r}")
    return policies.make_policy_state(
        kind,
        config.K,
        config.T,
        rng_seed,
        likert_max=config.likert_max,
        epsilon=config.epsilon,
        etc_constant=config.etc_constant,
        fixed_seq=seq,
    )


def _required_arm_capacity(config: ExperimentConfig, policy: str) -> int:
    if policy in ("cycle", "repeat"):
        seq = config.sequence_for(policy)
        return max(seq.count(a) for a in set(seq))
    # Adaptive and self-selected sessions can put every pull on one arm.
    return config.T


def create_session(
    config: ExperimentConfig,
    catalog: Catalog,
    participant_id: str,
    completion_code: str,
    background: BackgroundProfile,
    policy: str,
    rng_seed: int,
) -> Session:
    if catalog.K != config.K:
        raise ConfigError(f"catalog has {catalog.K} arms, config expects {config.K}")
    capacity = _required_arm_capacity(config, policy)
    if catalog.min_arm_length < capacity:
        raise ConfigError(
            f"catalog arms need at least {capacity} items for policy {policy!r}, "
            f"shortest arm has {catalog.min_arm_length}"
        )
    state = _policy_state_for(config, policy, rng_seed)
    return Session(
        participant_id=participant_id,
        completion_code=completion_code,
        policy=policy,
        policy_state=state,
        background=background,
        rng_seed=int(rng_seed),
    )


def begin_rating(
    session: Session,
    config: ExperimentConfig,
    initial_arm: Optional[int] = None,
    now: Optional[float] = None,
) -> Session:
    """Move REGISTERED -> RATING; self-selected sessions choose their first genre here."""
    if session.phase != PHASE_REGISTERED:
        raise WrongPhaseError(f"cannot start rating from phase {session.phase}")
    if session.policy == "self_selected":
        if initial_arm is None:
            raise MissingGenreChoiceError("self-selected sessions must choose the first genre")
        if not (1 <= initial_arm <= config.K):
            raise MissingGenreChoiceError(f"genre {initial_arm} outside [1, {config.K}]")
        session.next_self_arm = int(initial_arm)
    elif initial_arm is not None:
        raise UnexpectedGenreChoiceError("only self-selected sessions choose genres")
    session.phase = PHASE_RATING
    session.rating_started_at = now
    return session


def current_step(session: Session) -> int:
    return len(session.records) + 1


def session_history(session: Session) -> policies.PullHistory:
    return policies.PullHistory.from_triples(
        [(r.t, r.arm, r.reward) for r in session.records],
        likert_max=session.policy_state.likert_max,
    )


def _pending_arm(session: Session, config: ExperimentConfig) -> int:
    t = current_step(session)
    if session.policy == "self_selected":
        if session.next_self_arm is None:
            raise MissingGenreChoiceError("no genre choice recorded for the pending step")
        return session.next_self_arm
    state = session.policy_state
    if state.kind == policies.FIXED_SEQUENCE:
        # Positional lookup; skip materializing the history.
        if not (1 <= t <= state.T):
            raise WrongPhaseError(f"t={t} outside [1, {state.T}]")
        return state.fixed_seq[t - 1]
    rng = None
    if state.kind in (policies.TS, policies.EPS_GREEDY):
        rng = spawn_rng(session.rng_seed, NS_STEP, t)
    return policies.get_arm(state, session_history(session), t, rng)


def next_item(session: Session, config: ExperimentConfig, catalog: Catalog) -> PendingItem:
    """The item for the pending step; stable across repeated calls until a rating lands."""
    if session.phase != PHASE_RATING:
        raise WrongPhaseError(f"no items to serve in phase {session.phase}")
    t = current_step(session)
    if t > config.T:
        raise WrongPhaseError("rating already complete")
    arm = _pending_arm(session, config)
    j = session.policy_state.pull_counts[arm - 1] + 1
    if j > catalog.arm_length(arm):
        raise CatalogExhaustedError(f"arm {arm} has no item #{j}")
    return PendingItem(step=t, arm=arm, within_arm_index=j, item=catalog.item(arm, j))


def _last_event_at(session: Session) -> Optional[float]:
    if session.records and session.records[-1].submitted_at is not None:
        return session.records[-1].submitted_at
    return session.rating_started_at


def submit_rating(
    session: Session,
    config: ExperimentConfig,
    catalog: Catalog,
    reward: int,
    attention_answer: int,
    dwell_seconds: float,
    chosen_next_arm: Optional[int] = None,
    *,
    step: Optional[int] = None,
    now: Optional[float] = None,
) -> tuple[Session, bool]:
    """Validate and record one rating.

    Returns (session, accepted). A replay of an already-rated step is
    acknowledged with accepted=False and no state change. The reported
    dwell is checked against the threshold, and when a server clock is
    supplied the gap since the last accepted event is checked as well.
    """
    if step is not None:
        if step < 1:
            raise InvalidStepError(f"step {step} out of range")
        if step <= len(session.records):
            return session, False
    if session.phase != PHASE_RATING:
        raise WrongPhaseError(f"cannot rate in phase {session.phase}")
    t = current_step(session)
    if step is not None and step != t:
        raise InvalidStepError(f"step {step} is ahead of the pending step {t}")

    if type(reward) is not int or not (1 <= reward <= config.likert_max):
        raise RatingOutOfRangeError(f"rating must be an integer in [1, {config.likert_max}], got {reward!r}")
    if dwell_seconds < config.min_dwell_seconds:
        raise DwellTooShortError(
            f"reported dwell {dwell_seconds:.1f}s below the {config.min_dwell_seconds:.0f}s minimum"
        )
    if now is not None:
        last = _last_event_at(session)
        if last is not None and (now - last) < config.min_dwell_seconds:
            raise DwellTooShortError(
                f"only {now - last:.1f}s elapsed since the previous submission"
            )
    if session.policy == "self_selected":
        if chosen_next_arm is None:
            raise MissingGenreChoiceError("self-selected sessions must choose the next genre")
        if not (1 <= chosen_next_arm <= config.K):
            raise MissingGenreChoiceError(f"genre {chosen_next_arm} outside [1, {config.K}]")
    elif chosen_next_arm is not None:
        raise UnexpectedGenreChoiceError("only self-selected sessions choose genres")

    pending = next_item(session, config, catalog)
    correct = int(attention_answer) == pending.item.attention_key
    session.records.append(
        PullRecord(
            t=t,
            arm=pending.arm,
            within_arm_index=pending.within_arm_index,
            item_id=pending.item.item_id,
            reward=reward,
            dwell_seconds=float(dwell_seconds),
            attention_answer=int(attention_answer),
            attention_correct=correct,
            submitted_at=now,
        )
    )
    session.policy_state = policies.update_arm(session.policy_state, t, pending.arm, reward)
    if session.policy == "self_selected":
        session.next_self_arm = int(chosen_next_arm)
    if t == config.T:
        session.phase = PHASE_SURVEY
    return session, True


def attention_pass(session: Session, config: ExperimentConfig) -> tuple[float, bool]:
    """Fraction of correct attention answers and whether it clears the (inclusive) bar."""
    if session.phase not in (PHASE_SURVEY, PHASE_COMPLETE):
        raise WrongPhaseError(f"attention grade unavailable in phase {session.phase}")
    rate = sum(1 for r in session.records if r.attention_correct) / config.T
    return rate, rate >= config.attention_pass_threshold


def survey_questions(session: Session, config: ExperimentConfig, catalog: Catalog) -> SurveyQuestions:
    """Deterministically sample the post-study memory items from the session seed.

    Reading-memory items come from the whole catalog (shown or not) so a
    "no" answer is informative; rating-memory items come from the shown
    items only.
    """
    if session.phase not in (PHASE_SURVEY, PHASE_COMPLETE):
        raise WrongPhaseError(f"survey unavailable in phase {session.phase}")
    rng = spawn_rng(session.rng_seed, NS_SURVEY)
    pool = catalog.all_items()
    n_reading = min(config.reading_memory_questions, len(pool))
    reading_idx = rng.choice(len(pool), size=n_reading, replace=False)
    shown_ids = [r.item_id for r in session.records]
    n_rating = min(config.rating_memory_questions, len(set(shown_ids)))
    rating_idx = rng.choice(len(shown_ids), size=n_rating, replace=False)
    return SurveyQuestions(
        reading_items=[pool[i] for i in reading_idx],
        rating_items=[catalog.find(shown_ids[i]) for i in rating_idx],
    )


def grade_survey(
    session: Session,
    config: ExperimentConfig,
    catalog: Catalog,
    reading_answers: list[bool],
    rating_answers: list[bool],
    hindsight_satisfied: bool,
    prefers_autonomy: bool,
    *,
    reading_item_ids: Optional[list[str]] = None,
    rating_item_ids: Optional[list[str]] = None,
) -> SurveyResult:
    """Grade the post-study survey and close the session.

    Reading answers are graded against actual presence in the trajectory;
    rating answers against whether the recorded reward reached the memory
    threshold (inclusive). Rating items must come from the trajectory.
    """
    if session.phase != PHASE_SURVEY:
        raise WrongPhaseError(f"cannot grade survey in phase {session.phase}")
    if reading_item_ids is None or rating_item_ids is None:
        questions = survey_questions(session, config, catalog)
        if reading_item_ids is None:
            reading_item_ids = [it.item_id for it in questions.reading_items]
        if rating_item_ids is None:
            rating_item_ids = [it.item_id for it in questions.rating_items]
    if len(reading_answers) != len(reading_item_ids):
        raise ConfigError("one reading answer required per reading item")
    if len(rating_answers) != len(rating_item_ids):
        raise ConfigError("one rating answer required per rating item")

    rewards_by_item = {r.item_id: r.reward for r in session.records}
    missing = [i for i in rating_item_ids if i not in rewards_by_item]
    if missing:
        raise ConfigError(f"rating-memory items must come from the trajectory, got {missing}")

    reading_correct = sum(
        1
        for item_id, answer in zip(reading_item_ids, reading_answers)
        if bool(answer) == (item_id in rewards_by_item)
    )
    rating_correct = sum(
        1
        for item_id, answer in zip(rating_item_ids, rating_answers)
        if bool(answer) == (rewards_by_item[item_id] >= config.rating_memory_threshold)
    )
    result = SurveyResult(
        reading_memory_correct=reading_correct,
        rating_memory_correct=rating_correct,
        hindsight_satisfied=bool(hindsight_satisfied),
        prefers_autonomy=bool(prefers_autonomy),
    )
    session.survey_result = result
    session.survey_answers = {
        "reading_item_ids": list(reading_item_ids),
        "reading_answers": [bool(a) for a in reading_answers],
        "rating_item_ids": list(rating_item_ids),
        "rating_answers": [bool(a) for a in rating_answers],
        "hindsight_satisfied": bool(hindsight_satisfied),
        "prefers_autonomy": bool(prefers_autonomy),
    }
    session.phase = PHASE_COMPLETE
    return result


def rebuild_policy_state(session: Session, config: ExperimentConfig) -> policies.PolicyState:
    """Re-fold the recorded pulls into a fresh state (replay check helper)."""
    state = _policy_state_for(config, session.policy, session.rng_seed)
    for r in session.records:
        state = policies.update_arm(state, r.t, r.arm, r.reward)
    return state


def session_to_dict(session: Session) -> dict:
    return {
        "schema_version": 1,
        "participant_id": session.participant_id,
        "completion_code": session.completion_code,
        "policy": session.policy,
        "phase": session.phase,
        "rng_seed": session.rng_seed,
        "background": dataclasses.asdict(session.background),
        "policy_state": policies.state_to_dict(session.policy_state),
        "records": [dataclasses.asdict(r) for r in session.records],
        "next_self_arm": session.next_self_arm,
        "rating_started_at": session.rating_started_at,
        "survey_result": None if session.survey_result is None else dataclasses.asdict(session.survey_result),
        "survey_answers": session.survey_answers,
    }


def session_from_dict(doc: dict) -> Session:
    return Session(
        participant_id=doc["participant_id"],
        completion_code=doc["completion_code"],
        policy=doc["policy"],
        policy_state=policies.state_from_dict(doc["policy_state"]),
        background=BackgroundProfile(**doc["background"]),
        rng_seed=doc["rng_seed"],
        phase=doc["phase"],
        records=[PullRecord(**r) for r in doc["records"]],
        next_self_arm=doc.get("next_self_arm"),
        rating_started_at=doc.get("rating_started_at"),
        survey_result=None if doc.get("survey_result") is None else SurveyResult(**doc["survey_result"]),
        survey_answers=doc.get("survey_answers"),
    )
