"""HTTP front door: registration, rating loop, survey, resume, export.

Participant endpoints authenticate with the opaque session token issued at
registration; the export endpoint requires the operator bearer token from
the BANDITLAB_OPERATOR_TOKEN environment variable. Requests for the same
participant are serialized through a per-session lock, and every accepted
mutation is persisted before the response goes out.

Participant-facing payloads never include the assigned policy, future
items, or attention-check keys.
"""

from __future__ import annotations

import os
import secrets
import threading
import time
from typing import Optional

from fastapi import Depends, FastAPI, Header, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import sessions
from .catalog import Catalog
from .config import ExperimentConfig
from .datasets import TrajectoryDataset, dataset_to_csv, dataset_to_dict, session_to_trajectory
from .errors import (
    BadTokenError,
    BanditLabError,
    DuplicateCodeError,
    GateFailedError,
    WrongPhaseError,
)
from .seeding import NS_ASSIGN, spawn_rng
from .storage import SessionStore

OPERATOR_TOKEN_ENV = "BANDITLAB_OPERATOR_TOKEN"

_STATUS_BY_CODE = {
    "WRONG_PHASE": 409,
    "INVALID_STEP": 409,
    "DUPLICATE_CODE": 409,
    "DWELL_TOO_SHORT": 400,
    "RATING_OUT_OF_RANGE": 400,
    "MISSING_GENRE_CHOICE": 400,
    "UNEXPECTED_GENRE_CHOICE": 400,
    "GATE_FAILED": 400,
    "INVALID_CONFIG": 400,
    "INVALID_CATALOG": 400,
    "CATALOG_EXHAUSTED": 500,
    "UNKNOWN_SESSION": 404,
    "BAD_TOKEN": 401,
}


class BackgroundPayload(BaseModel):
    reading_frequency: str = ""
    age_band: str = ""
    familiar_genre: str = ""
    liked_genre: str = ""


class RegisterRequest(BaseModel):
    completion_code: str = Field(min_length=1)
    gate_answer: int
    background: BackgroundPayload = BackgroundPayload()


class StartRequest(BaseModel):
    initial_arm: Optional[int] = None


class RateRequest(BaseModel):
    step: int
    reward: int
    attention_answer: int
    dwell_seconds: float
    chosen_next_arm: Optional[int] = None


class SurveyRequest(BaseModel):
    reading_answers: list[bool]
    rating_answers: list[bool]
    hindsight_satisfied: bool
    prefers_autonomy: bool


class _Locks:
    def __init__(self):
        self._guard = threading.Lock()
        self._locks: dict[str, threading.Lock] = {}

    def for_participant(self, participant_id: str) -> threading.Lock:
        with self._guard:
            if participant_id not in self._locks:
                self._locks[participant_id] = threading.Lock()
            return self._locks[participant_id]


def _item_payload(pending: sessions.PendingItem, catalog: Catalog) -> dict:
    item = pending.item
    return {
        "item_id": item.item_id,
        "title": item.title,
        "content_url": item.content_url,
        "attention_question": item.attention_question,
        "genre_label": catalog.arm_labels[pending.arm - 1],
    }


def create_app(
    config: ExperimentConfig,
    catalog: Catalog,
    data_dir: str,
    static_dir: Optional[str] = None,
    clock=time.time,
) -> FastAPI:
    store = SessionStore(os.path.join(data_dir, "study.sqlite3"))
    locks = _Locks()
    app = FastAPI(title="banditlab")
    app.state.store = store

    genres = [{"arm": k + 1, "label": catalog.arm_labels[k]} for k in range(catalog.K)]

    @app.exception_handler(BanditLabError)
    async def _handle_domain_error(request: Request, exc: BanditLabError):
        return JSONResponse(
            status_code=_STATUS_BY_CODE.get(exc.code, 400),
            content={"error": exc.code, "detail": str(exc)},
        )

    def _load_authorized(participant_id: str, token: Optional[str]) -> sessions.Session:
        session, expected = store.load(participant_id)
        if not token or not secrets.compare_digest(token, expected):
            raise BadTokenError("missing or invalid session token")
        return session

    def _session_token(x_session_token: Optional[str] = Header(default=None)) -> Optional[str]:
        return x_session_token

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.post("/register")
    def register(body: RegisterRequest):
        if body.gate_answer != config.gate_answer:
            raise GateFailedError("background gate answer is incorrect")
        if store.code_in_use(body.completion_code):
            raise DuplicateCodeError(f"completion code {body.completion_code!r} already used")
        index = store.next_registration_index()
        assign_rng = spawn_rng(config.rng_seed, NS_ASSIGN, index)
        policy = sessions.assign_policy(config, assign_rng)
        session = sessions.create_session(
            config,
            catalog,
            participant_id=f"p{index:06d}",
            completion_code=body.completion_code,
            background=sessions.BackgroundProfile(**body.background.model_dump()),
            policy=policy,
            rng_seed=int(assign_rng.integers(0, 2**62)),
        )
        token = secrets.token_hex(16)
        store.create(session, token)
        return {
            "participant_id": session.participant_id,
            "session_token": token,
            # Only self-selected participants learn anything about their
            # assignment, and only because they must choose genres.
            "policy_hidden": session.policy != "self_selected",
            "requires_genre_choice": session.policy == "self_selected",
            "total_steps": config.T,
        }

    @app.get("/session/{participant_id}")
    def session_state(participant_id: str, token: Optional[str] = Depends(_session_token)):
        session = _load_authorized(participant_id, token)
        return {
            "participant_id": session.participant_id,
            "phase": session.phase,
            "step": min(sessions.current_step(session), config.T),
            "total_steps": config.T,
            "requires_genre_choice": session.policy == "self_selected",
            "genres": genres if session.policy == "self_selected" else None,
            "min_dwell_seconds": config.min_dwell_seconds,
        }

    @app.post("/session/{participant_id}/start")
    def start(participant_id: str, body: StartRequest, token: Optional[str] = Depends(_session_token)):
        lock = locks.for_participant(participant_id)
        with lock:
            session = _load_authorized(participant_id, token)
            if session.phase != sessions.PHASE_REGISTERED:
                return {"phase": session.phase, "started": False}
            sessions.begin_rating(session, config, initial_arm=body.initial_arm, now=clock())
            store.save(session)
            return {"phase": session.phase, "started": True}

    @app.get("/session/{participant_id}/next")
    def next_step(participant_id: str, token: Optional[str] = Depends(_session_token)):
        session = _load_authorized(participant_id, token)
        if session.phase == sessions.PHASE_SURVEY:
            raise WrongPhaseError("rating complete; proceed to the survey")
        pending = sessions.next_item(session, config, catalog)
        return {
            "step": pending.step,
            "total_steps": config.T,
            "item": _item_payload(pending, catalog),
            "requires_genre_choice": session.policy == "self_selected",
            "genres": genres if session.policy == "self_selected" else None,
            "min_dwell_seconds": config.min_dwell_seconds,
        }

    @app.post("/session/{participant_id}/rate")
    def rate(participant_id: str, body: RateRequest, token: Optional[str] = Depends(_session_token)):
        lock = locks.for_participant(participant_id)
        with lock:
            session = _load_authorized(participant_id, token)
            session, accepted = sessions.submit_rating(
                session,
                config,
                catalog,
                reward=body.reward,
                attention_answer=body.attention_answer,
                dwell_seconds=body.dwell_seconds,
                chosen_next_arm=body.chosen_next_arm,
                step=body.step,
                now=clock(),
            )
            if accepted:
                store.save(session)
            return {
                "accepted": accepted,
                "phase": session.phase,
                "next_step": min(sessions.current_step(session), config.T),
                "rating_complete": session.phase != sessions.PHASE_RATING,
            }

    @app.get("/session/{participant_id}/survey")
    def survey_get(participant_id: str, token: Optional[str] = Depends(_session_token)):
        session = _load_authorized(participant_id, token)
        questions = sessions.survey_questions(session, config, catalog)
        def items(items_list):
            return [
                {"item_id": it.item_id, "title": it.title, "content_url": it.content_url}
                for it in items_list
            ]
        return {
            "reading_items": items(questions.reading_items),
            "rating_items": items(questions.rating_items),
            "rating_memory_threshold": config.rating_memory_threshold,
        }

    @app.post("/session/{participant_id}/survey")
    def survey_post(participant_id: str, body: SurveyRequest, token: Optional[str] = Depends(_session_token)):
        lock = locks.for_participant(participant_id)
        with lock:
            session = _load_authorized(participant_id, token)
            sessions.grade_survey(
                session,
                config,
                catalog,
                reading_answers=body.reading_answers,
                rating_answers=body.rating_answers,
                hindsight_satisfied=body.hindsight_satisfied,
                prefers_autonomy=body.prefers_autonomy,
            )
            store.save(session)
            return {
                "phase": session.phase,
                "completion_code": session.completion_code,
            }

    def _require_operator(authorization: Optional[str]) -> None:
        expected = os.environ.get(OPERATOR_TOKEN_ENV)
        provided = None
        if authorization and authorization.lower().startswith("bearer "):
            provided = authorization[7:]
        if not expected or not provided or not secrets.compare_digest(provided, expected):
            raise BadTokenError("operator token required")

    @app.get("/export")
    def export(
        filter: str = "passed",
        fmt: str = "json",
        authorization: Optional[str] = Header(default=None),
    ):
        _require_operator(authorization)
        if filter not in ("passed", "all"):
            raise BanditLabError(f"unknown filter {filter!r}")
        complete = [s for s in store.all_sessions() if s.phase == sessions.PHASE_COMPLETE]
        if filter == "passed":
            complete = [s for s in complete if sessions.attention_pass(s, config)[1]]
        dataset = TrajectoryDataset(
            K=config.K,
            T=config.T,
            participants=[session_to_trajectory(s, config) for s in complete],
            arm_labels=catalog.arm_labels,
        )
        if fmt == "csv":
            return PlainTextResponse(dataset_to_csv(dataset, sessions=complete), media_type="text/csv")
        doc = dataset_to_dict(dataset)
        doc["filter"] = filter
        return doc

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="static")

    return app
