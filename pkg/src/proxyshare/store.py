"""Durable embedded store for client records and finalized sessions (SQLite).

Sessions are append-only; the ``meta`` table carries a schema version and
opening a store written by a newer schema fails loudly rather than guessing.
"""

from __future__ import annotations

import sqlite3
import threading
from typing import Any, Optional

SCHEMA_VERSION = 1

_SCHEMA = """
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS clients (
    ip TEXT PRIMARY KEY,
    identifier TEXT NOT NULL,
    first_seen REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (
    session_id TEXT PRIMARY KEY,
    client_ip TEXT NOT NULL,
    protocol TEXT NOT NULL,
    target_host TEXT,
    target_port INTEGER,
    verdict TEXT NOT NULL,
    detail TEXT NOT NULL DEFAULT '',
    started_at REAL NOT NULL,
    ended_at REAL,
    bytes_up INTEGER NOT NULL DEFAULT 0,
    bytes_down INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX IF NOT EXISTS sessions_by_client ON sessions (client_ip);
"""


class StoreError(RuntimeError):
    pass


class SessionStore:
    """Thread-safe wrapper over one SQLite file.  Writes commit immediately so
    a finalized session survives a hard kill."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        try:
            self._conn = sqlite3.connect(path, check_same_thread=False)
        except sqlite3.Error as exc:
            raise StoreError(f"cannot open store at {path!r}: {exc}") from exc
        self._conn.row_factory = sqlite3.Row
        with self._lock:
            self._conn.executescript(_SCHEMA)
            row = self._conn.execute(
                "SELECT value FROM meta WHERE key = 'schema_version'").fetchone()
            if row is None:
                self._conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('schema_version', ?)",
                    (str(SCHEMA_VERSION),))
                self._conn.commit()
            elif int(row["value"]) > SCHEMA_VERSION:
                self._conn.close()
                raise StoreError(
                    f"store {path!r} has schema version {row['value']}, "
                    f"newer than supported version {SCHEMA_VERSION}")

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def save_client(self, ip: str, identifier: str, first_seen: float) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO clients (ip, identifier, first_seen) VALUES (?, ?, ?)",
                (ip, identifier, first_seen))
            self._conn.commit()

    def save_session(self, record: dict[str, Any]) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO sessions "
                "(session_id, client_ip, protocol, target_host, target_port, verdict,"
                " detail, started_at, ended_at, bytes_up, bytes_down) "
                "VALUES (:session_id, :client_ip, :protocol, :target_host, :target_port,"
                " :verdict, :detail, :started_at, :ended_at, :bytes_up, :bytes_down)",
                record)
            self._conn.commit()

    def load_sessions(self, client_ip: Optional[str] = None) -> list[dict[str, Any]]:
        query = "SELECT * FROM sessions"
        args: tuple = ()
        if client_ip is not None:
            query += " WHERE client_ip = ?"
            args = (client_ip,)
        with self._lock:
            rows = self._conn.execute(query + " ORDER BY started_at", args).fetchall()
        return [dict(row) for row in rows]

    def load_clients(self) -> list[dict[str, Any]]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM clients ORDER BY first_seen").fetchall()
        return [dict(row) for row in rows]

    def client_totals(self) -> list[dict[str, Any]]:
        """Aggregate per-client stats straight from the store (for one-shot CLI use)."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT c.ip AS ip, c.identifier AS identifier, "
                "COALESCE(SUM(s.bytes_up), 0) AS bytes_up, "
                "COALESCE(SUM(s.bytes_down), 0) AS bytes_down, "
                "COUNT(s.session_id) AS session_count "
                "FROM clients c LEFT JOIN sessions s ON s.client_ip = c.ip "
                "GROUP BY c.ip ORDER BY c.first_seen").fetchall()
        return [dict(row) for row in rows]
