"""Durable session store backed by an embedded SQLite database.

Every accepted mutation is committed before the caller returns a response,
so a crash between any two requests loses nothing. Sessions are keyed by
participant_id; completion-code uniqueness is enforced by the schema.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from pathlib import Path
from typing import Optional

from .errors import DuplicateCodeError, UnknownSessionError
from .sessions import Session, session_from_dict, session_to_dict

_SCHEMA = """
CREATE TABLE IF NOT EXISTS sessions (
    participant_id TEXT PRIMARY KEY,
    completion_code TEXT UNIQUE NOT NULL,
    token TEXT NOT NULL,
    doc TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
"""


class SessionStore:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(str(self.path), check_same_thread=False)
        with self._lock:
            self._conn.executescript(_SCHEMA)
            self._conn.commit()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def next_registration_index(self) -> int:
        """Monotone counter used for participant ids and assignment draws."""
        with self._lock:
            row = self._conn.execute("SELECT value FROM meta WHERE key = 'registrations'").fetchone()
            current = int(row[0]) if row else 0
            self._conn.execute(
                "INSERT INTO meta (key, value) VALUES ('registrations', ?) "
                "ON CONFLICT(key) DO UPDATE SET value = excluded.value",
                (str(current + 1),),
            )
            self._conn.commit()
            return current

    def create(self, session: Session, token: str) -> None:
        doc = json.dumps(session_to_dict(session))
        with self._lock:
            try:
                self._conn.execute(
                    "INSERT INTO sessions (participant_id, completion_code, token, doc) VALUES (?, ?, ?, ?)",
                    (session.participant_id, session.completion_code, token, doc),
                )
                self._conn.commit()
            except sqlite3.IntegrityError as exc:
                self._conn.rollback()
                raise DuplicateCodeError(
                    f"completion code {session.completion_code!r} already used"
                ) from exc

    def code_in_use(self, completion_code: str) -> bool:
        with self._lock:
            row = self._conn.execute(
                "SELECT 1 FROM sessions WHERE completion_code = ?", (completion_code,)
            ).fetchone()
        return row is not None

    def load(self, participant_id: str) -> tuple[Session, str]:
        with self._lock:
            row = self._conn.execute(
                "SELECT doc, token FROM sessions WHERE participant_id = ?", (participant_id,)
            ).fetchone()
        if row is None:
            raise UnknownSessionError(f"no session for participant {participant_id!r}")
        return session_from_dict(json.loads(row[0])), row[1]

    def save(self, session: Session) -> None:
        doc = json.dumps(session_to_dict(session))
        with self._lock:
            cur = self._conn.execute(
                "UPDATE sessions SET doc = ? WHERE participant_id = ?",
                (doc, session.participant_id),
            )
            if cur.rowcount != 1:
                self._conn.rollback()
                raise UnknownSessionError(f"no session for participant {session.participant_id!r}")
            self._conn.commit()

    def all_sessions(self) -> list[Session]:
        """Consistent snapshot of every stored session."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT doc FROM sessions ORDER BY participant_id"
            ).fetchall()
        return [session_from_dict(json.loads(r[0])) for r in rows]
