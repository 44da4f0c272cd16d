import sqlite3

import pytest

from proxyshare.store import SCHEMA_VERSION, SessionStore, StoreError


def record(session_id="s1", client_ip="192.168.43.10", bytes_up=10, bytes_down=20):
    return {"session_id": session_id, "client_ip": client_ip,
            "protocol": "socks5", "target_host": "example.com",
            "target_port": 443, "verdict": "allow", "detail": "",
            "started_at": 100.0, "ended_at": 101.0,
            "bytes_up": bytes_up, "bytes_down": bytes_down}


def test_round_trip(tmp_path):
    store = SessionStore(str(tmp_path / "gw.db"))
    store.save_client("192.168.43.10", "Client-1", 99.0)
    store.save_session(record())
    rows = store.load_sessions()
    assert len(rows) == 1
    assert rows[0]["bytes_up"] == 10
    clients = store.load_clients()
    assert clients[0]["identifier"] == "Client-1"
    store.close()


def test_save_session_upsert(tmp_path):
    store = SessionStore(str(tmp_path / "gw.db"))
    store.save_session(record(bytes_down=5))
    store.save_session(record(bytes_down=500))
    rows = store.load_sessions()
    assert len(rows) == 1
    assert rows[0]["bytes_down"] == 500
    store.close()


def test_reopen_preserves_data(tmp_path):
    path = str(tmp_path / "gw.db")
    store = SessionStore(path)
    store.save_session(record())
    store.close()
    reopened = SessionStore(path)
    assert len(reopened.load_sessions()) == 1
    reopened.close()


def test_newer_schema_version_fails_loudly(tmp_path):
    path = str(tmp_path / "gw.db")
    store = SessionStore(path)
    store.close()
    conn = sqlite3.connect(path)
    conn.execute("UPDATE meta SET value = ? WHERE key = 'schema_version'",
                 (str(SCHEMA_VERSION + 1),))
    conn.commit()
    conn.close()
    with pytest.raises(StoreError, match="newer"):
        SessionStore(path)


def test_unwritable_path_raises_store_error(tmp_path):
    with pytest.raises(StoreError):
        SessionStore(str(tmp_path / "missing_dir" / "gw.db"))


def test_client_totals_aggregates(tmp_path):
    store = SessionStore(str(tmp_path / "gw.db"))
    store.save_client("192.168.43.10", "Client-1", 1.0)
    store.save_client("192.168.43.11", "Client-2", 2.0)
    store.save_session(record(session_id="a", bytes_up=1, bytes_down=2))
    store.save_session(record(session_id="b", bytes_up=10, bytes_down=20))
    totals = store.client_totals()
    assert totals[0]["ip"] == "192.168.43.10"
    assert totals[0]["bytes_up"] == 11
    assert totals[0]["bytes_down"] == 22
    assert totals[0]["session_count"] == 2
    assert totals[1]["session_count"] == 0
    store.close()
