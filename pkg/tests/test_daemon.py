import json
import socket
import threading

import pytest

from proxyshare import cli
from proxyshare.config import GatewayConfig
from proxyshare.daemon import (EXIT_CONFIG, EXIT_OK, EXIT_STARTUP, Gateway,
                               StartupError)
from proxyshare.store import SessionStore

from netutil import recv_exact, wait_until


def free_port():
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    return port


def make_config(tmp_path, **overrides):
    ports = {"http_port": free_port(), "socks_port": free_port(),
             "control_port": free_port()}
    defaults = dict(listen_address="127.0.0.1",
                    store_path=str(tmp_path / "gw.db"),
                    probe_interval=0.2, perf_sample_interval=0.2)
    defaults.update(ports)
    defaults.update(overrides)
    return GatewayConfig(**defaults)


@pytest.fixture
def gateway(tmp_path):
    config = make_config(tmp_path)
    gw = Gateway(config, prober=lambda ip: False)
    yield gw, config
    gw.stop()


def test_clean_start_and_stop(gateway):
    gw, config = gateway
    gw.start()
    # All three listeners answer on their ports.
    for port in (config.http_port, config.socks_port, config.control_port):
        with socket.create_connection(("127.0.0.1", port), timeout=5):
            pass
    gw.stop()
    # Ports are released after stop.
    for port in (config.http_port, config.socks_port, config.control_port):
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind(("127.0.0.1", port))
        probe.close()


def test_run_returns_zero_on_shutdown(gateway):
    gw, config = gateway
    result = {}

    def runner():
        result["code"] = gw.run()

    thread = threading.Thread(target=runner)
    thread.start()
    assert wait_until(lambda: gw._started, timeout=10)
    gw.request_shutdown()
    thread.join(timeout=15)
    assert result["code"] == EXIT_OK


def test_bind_conflict_names_port(tmp_path):
    config = make_config(tmp_path)
    blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    blocker.bind(("127.0.0.1", config.socks_port))
    blocker.listen(1)
    try:
        gw = Gateway(config, prober=lambda ip: False)
        with pytest.raises(StartupError) as err:
            gw.start()
        assert str(config.socks_port) in str(err.value)
    finally:
        blocker.close()


def test_end_to_end_session_reaches_store(tmp_path):
    config = make_config(tmp_path)
    gw = Gateway(config, prober=lambda ip: False)
    gw.start()
    origin = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    origin.bind(("127.0.0.1", 0))
    origin.listen(1)
    origin_port = origin.getsockname()[1]

    def serve_once():
        conn, _ = origin.accept()
        data = conn.recv(100)
        conn.sendall(b"ok:" + data)
        conn.close()

    server_thread = threading.Thread(target=serve_once, daemon=True)
    server_thread.start()
    try:
        with socket.create_connection(("127.0.0.1", config.http_port),
                                      timeout=5) as conn:
            conn.sendall(f"CONNECT 127.0.0.1:{origin_port} HTTP/1.1\r\n\r\n"
                         .encode())
            reply = recv_exact(conn, 39)
            assert reply == b"HTTP/1.1 200 Connection Established\r\n\r\n"
            conn.sendall(b"hello")
            assert recv_exact(conn, 8) == b"ok:hello"
    finally:
        gw.stop()
        origin.close()
    store = SessionStore(config.store_path)
    rows = store.load_sessions()
    store.close()
    assert len(rows) == 1
    assert rows[0]["bytes_up"] == 5
    assert rows[0]["bytes_down"] == 8
    assert rows[0]["client_ip"] == "127.0.0.1"


# -- CLI -------------------------------------------------------------------

def test_cli_check_config_ok(tmp_path, capsys):
    path = tmp_path / "gw.conf"
    path.write_text("http_port = 18080\nsocks_port = 11080\n")
    assert cli.main(["check-config", "--config", str(path)]) == EXIT_OK
    assert "config OK" in capsys.readouterr().out


def test_cli_check_config_bad(tmp_path, capsys):
    path = tmp_path / "gw.conf"
    path.write_text("http_port = 8080\nsocks_port = 8080\n")
    assert cli.main(["check-config", "--config", str(path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_cli_detect_vpn_prints_json(capsys):
    assert cli.main(["detect-vpn"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert set(payload) == {"active", "interface_name", "detected_at"}


def test_cli_version(capsys):
    assert cli.main(["version"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("gateway ")


def test_cli_stats_json(tmp_path, capsys):
    store_path = str(tmp_path / "gw.db")
    store = SessionStore(store_path)
    store.save_client("192.168.43.10", "Client-1", 1.0)
    store.save_session({"session_id": "s1", "client_ip": "192.168.43.10",
                        "protocol": "socks5", "target_host": "example.com",
                        "target_port": 443, "verdict": "allow", "detail": "",
                        "started_at": 1.0, "ended_at": 2.0,
                        "bytes_up": 11, "bytes_down": 22})
    store.close()
    assert cli.main(["stats", "--store", store_path, "--json"]) == EXIT_OK
    rows = json.loads(capsys.readouterr().out)
    assert rows == [{"ip": "192.168.43.10", "identifier": "Client-1",
                     "bytes_up": 11, "bytes_down": 22, "session_count": 1}]


def test_cli_stats_missing_store(tmp_path, capsys):
    missing = str(tmp_path / "nodir" / "gw.db")
    assert cli.main(["stats", "--store", missing]) == EXIT_STARTUP


def test_cli_provision_qr_text(capsys):
    assert cli.main(["provision", "--qr-text"]) == EXIT_OK
    out = capsys.readouterr().out.strip()
    assert out.startswith("proxyshare://v1?")
    assert "http=8080" in out
    assert "socks=1080" in out
