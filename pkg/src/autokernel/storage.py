"""Durable relational storage for users, chat sessions, turns, feedback,
trajectories, and streamed events (the permanent half of the store split;
session-scratch data stays in process memory)."""

from __future__ import annotations

import json
import sqlite3
import threading
import time
import uuid

from .errors import StorageUnavailable

_SCHEMA = """
CREATE TABLE IF NOT EXISTS users (
    token TEXT PRIMARY KEY,
    user_id TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (
    session_id TEXT PRIMARY KEY,
    user_id TEXT NOT NULL,
    created_at REAL NOT NULL,
    namespace_ref TEXT
);
CREATE TABLE IF NOT EXISTS turns (
    session_id TEXT NOT NULL,
    idx INTEGER NOT NULL,
    role TEXT NOT NULL,
    content TEXT NOT NULL,
    task_ref TEXT,
    PRIMARY KEY (session_id, idx)
);
CREATE TABLE IF NOT EXISTS feedback (
    feedback_id TEXT PRIMARY KEY,
    user_id TEXT NOT NULL,
    session_id TEXT NOT NULL,
    turn_index INTEGER NOT NULL,
    original_messages TEXT NOT NULL,
    edited_response TEXT,
    suggestion TEXT,
    created_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS trajectories (
    task_id TEXT PRIMARY KEY,
    session_id TEXT NOT NULL,
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS events (
    task_id TEXT NOT NULL,
    seq INTEGER NOT NULL,
    type TEXT NOT NULL,
    data TEXT NOT NULL,
    PRIMARY KEY (task_id, seq)
);
"""


class Storage:
    def __init__(self, path: str = ":memory:"):
        self.path = path
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._conn.executescript(_SCHEMA)
        self._conn.commit()
        self._lock = threading.Lock()

    def close(self):
        self._conn.close()

    def _execute(self, sql: str, params=()):
        with self._lock:
            try:
                cur = self._conn.execute(sql, params)
                self._conn.commit()
                return cur
            except sqlite3.Error as exc:
                raise StorageUnavailable(str(exc)) from exc

    # -- users

    def put_user(self, token: str, user_id: str):
        self._execute("INSERT OR REPLACE INTO users VALUES (?, ?)", (token, user_id))

    def user_for_token(self, token: str) -> str | None:
        row = self._execute("SELECT user_id FROM users WHERE token = ?", (token,)).fetchone()
        return row[0] if row else None

    # -- sessions & turns

    def create_session(self, user_id: str, namespace_ref: str) -> str:
        session_id = uuid.uuid4().hex
        self._execute(
            "INSERT INTO sessions VALUES (?, ?, ?, ?)",
            (session_id, user_id, time.time(), namespace_ref),
        )
        return session_id

    def session(self, session_id: str) -> dict | None:
        row = self._execute(
            "SELECT session_id, user_id, created_at, namespace_ref FROM sessions "
            "WHERE session_id = ?", (session_id,)
        ).fetchone()
        if row is None:
            return None
        return {"session_id": row[0], "user_id": row[1], "created_at": row[2],
                "namespace_ref": row[3]}

    def sessions_for_user(self, user_id: str) -> list[dict]:
        rows = self._execute(
            "SELECT session_id, created_at FROM sessions WHERE user_id = ? "
            "ORDER BY created_at", (user_id,)
        ).fetchall()
        return [
            {"session_id": sid, "created_at": created, "turns": self.turns(sid)}
            for sid, created in rows
        ]

    def append_turn(self, session_id: str, role: str, content: str,
                    task_ref: str | None = None) -> int:
        with self._lock:
            row = self._conn.execute(
                "SELECT COALESCE(MAX(idx), -1) + 1 FROM turns WHERE session_id = ?",
                (session_id,),
            ).fetchone()
            idx = row[0]
            self._conn.execute(
                "INSERT INTO turns VALUES (?, ?, ?, ?, ?)",
                (session_id, idx, role, content, task_ref),
            )
            self._conn.commit()
            return idx

    def turns(self, session_id: str) -> list[dict]:
        rows = self._execute(
            "SELECT idx, role, content, task_ref FROM turns WHERE session_id = ? "
            "ORDER BY idx", (session_id,)
        ).fetchall()
        return [
            {"index": idx, "role": role, "content": content, "task_ref": task_ref}
            for idx, role, content, task_ref in rows
        ]

    # -- feedback

    def put_feedback(self, user_id: str, session_id: str, turn_index: int,
                     original_messages: list, edited_response: str | None,
                     suggestion: str | None) -> str:
        feedback_id = uuid.uuid4().hex
        self._execute(
            "INSERT INTO feedback VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
            (feedback_id, user_id, session_id, turn_index,
             json.dumps(original_messages), edited_response, suggestion, time.time()),
        )
        return feedback_id

    def feedback(self, feedback_id: str) -> dict | None:
        row = self._execute(
            "SELECT feedback_id, user_id, session_id, turn_index, original_messages, "
            "edited_response, suggestion, created_at FROM feedback WHERE feedback_id = ?",
            (feedback_id,),
        ).fetchone()
        if row is None:
            return None
        return {
            "feedback_id": row[0], "user_id": row[1], "session_id": row[2],
            "turn_index": row[3], "original_messages": json.loads(row[4]),
            "edited_response": row[5], "suggestion": row[6], "created_at": row[7],
        }

    def feedback_for_user(self, user_id: str) -> list[dict]:
        rows = self._execute(
            "SELECT feedback_id FROM feedback WHERE user_id = ? ORDER BY created_at",
            (user_id,),
        ).fetchall()
        return [self.feedback(fid) for (fid,) in rows]

    # -- trajectories & events

    def put_trajectory(self, task_id: str, session_id: str, body: dict):
        self._execute(
            "INSERT OR REPLACE INTO trajectories VALUES (?, ?, ?)",
            (task_id, session_id, json.dumps(body)),
        )

    def trajectory(self, task_id: str) -> dict | None:
        row = self._execute(
            "SELECT session_id, body FROM trajectories WHERE task_id = ?", (task_id,)
        ).fetchone()
        if row is None:
            return None
        return {"session_id": row[0], "body": json.loads(row[1])}

    def put_events(self, task_id: str, events: list[dict]):
        with self._lock:
            for seq, event in enumerate(events):
                self._conn.execute(
                    "INSERT OR REPLACE INTO events VALUES (?, ?, ?, ?)",
                    (task_id, seq, event["type"], json.dumps(event["data"])),
                )
            self._conn.commit()

    def events(self, task_id: str) -> list[dict]:
        rows = self._execute(
            "SELECT seq, type, data FROM events WHERE task_id = ? ORDER BY seq",
            (task_id,),
        ).fetchall()
        return [{"seq": s, "type": t, "data": json.loads(d)} for s, t, d in rows]
