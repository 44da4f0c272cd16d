import http.client
import json
import socket
import threading
from types import SimpleNamespace

import pytest

from proxyshare.config import GatewayConfig
from proxyshare.control import ControlServer
from proxyshare.events import EventBus
from proxyshare.manager import TrafficManager
from proxyshare.meter import DOWN, UP, TrafficMeter
from proxyshare.model import ALLOWED, SOCKS5, TargetAddress
from proxyshare.perf import PerfSampler
from proxyshare.provisioning import ProvisioningInfo

TARGET = TargetAddress("example.com", 443)


@pytest.fixture
def api():
    config = GatewayConfig()
    bus = EventBus()
    meter = TrafficMeter(config.subnet, events=bus)
    manager = TrafficManager(config.quota, config.filters, meter, events=bus)
    sampler = PerfSampler(meter, interval=5.0, events=bus)
    provisioning = ProvisioningInfo(
        host="127.0.0.1", http_port=config.http_port,
        socks_port=config.socks_port, control_port=config.control_port,
        subnet=str(config.subnet))
    server = ControlServer(config, meter, manager, sampler, bus, provisioning,
                           host="127.0.0.1", port=0)
    server.start()
    port = server._httpd.server_address[1]
    yield SimpleNamespace(port=port, bus=bus, meter=meter, manager=manager,
                          sampler=sampler, server=server)
    server.stop()


def request(port, method, path, body=None, headers=None):
    conn = http.client.HTTPConnection("127.0.0.1", port, timeout=5)
    payload = json.dumps(body).encode() if body is not None else None
    conn.request(method, path, body=payload, headers=headers or {})
    resp = conn.getresponse()
    data = resp.read()
    content_type = resp.getheader("Content-Type", "")
    conn.close()
    return resp.status, content_type, data


def get_json(port, path):
    status, content_type, data = request(port, "GET", path)
    assert content_type.startswith("application/json"), (status, content_type)
    return status, json.loads(data)


def test_status_snapshot(api):
    status, body = get_json(api.port, "/api/status")
    assert status == 200
    assert set(body) >= {"vpn", "uptime_seconds", "quota_policy", "filters",
                         "provisioning"}
    assert body["filters"]["blocked_domains"] == []
    assert "video_streaming" in body["filters"]["presets"]
    assert body["quota_policy"]["mode"] == "off"
    assert body["provisioning"]["qr_payload"].startswith("proxyshare://v1?")
    assert body["provisioning"]["auth_required"] is False


def test_clients_snapshot_fields(api):
    session = api.meter.open_session("192.168.43.10", SOCKS5, TARGET, ALLOWED)
    api.meter.record_transfer(session, UP, 11)
    api.meter.record_transfer(session, DOWN, 22)
    status, body = get_json(api.port, "/api/clients")
    assert status == 200
    assert len(body) == 1
    row = body[0]
    assert row["ip"] == "192.168.43.10"
    assert row["identifier"] == "Client-1"
    assert row["online"] is True
    assert row["bytes_up"] == 11
    assert row["bytes_down"] == 22
    assert row["session_count"] == 1
    assert row["live_sessions"] == 1
    assert row["blocked_until"] is None


def test_sessions_endpoint_filters_by_client(api):
    s1 = api.meter.open_session("192.168.43.10", SOCKS5, TARGET, ALLOWED)
    api.meter.finalize_session(s1)
    api.meter.open_session("192.168.43.11", SOCKS5, TARGET, ALLOWED)
    status, body = get_json(api.port, "/api/sessions?client=192.168.43.10")
    assert status == 200
    assert len(body) == 1
    assert body[0]["client_ip"] == "192.168.43.10"
    assert body[0]["verdict"] == "allow"
    status, body = get_json(api.port, "/api/sessions")
    assert len(body) == 2


def test_perf_endpoint_with_window(api):
    api.sampler.sample()
    status, body = get_json(api.port, "/api/perf?window=3600")
    assert status == 200
    assert len(body) == 1
    assert set(body[0]) >= {"timestamp", "cpu_fraction", "throughput_up",
                            "throughput_down", "active_connections"}


def test_put_quota_updates_policy(api):
    status, body = get_json(api.port, "/api/clients")  # no-op warmup
    status, _, data = request(api.port, "PUT", "/api/quota",
                              body={"mode": "dynamic",
                                    "total_quota_bytes": 300_000_000})
    assert status == 200
    assert api.manager.policy.mode == "dynamic"
    assert api.manager.policy.total_quota_bytes == 300_000_000


def test_put_quota_invalid_mode_400(api):
    status, _, data = request(api.port, "PUT", "/api/quota",
                              body={"mode": "sideways"})
    assert status == 400
    assert b"sideways" in data


def test_put_filters_and_validation(api):
    status, _, data = request(api.port, "PUT", "/api/filters",
                              body={"blocked_domains": ["youtube.com"],
                                    "blocked_ports": [25],
                                    "enabled_presets": ["video_streaming"]})
    assert status == 200
    rules = api.manager.filters
    assert "youtube.com" in rules.blocked_domains
    assert 25 in rules.blocked_ports
    decision = api.manager.check_admission("192.168.43.10",
                                           TargetAddress("m.youtube.com", 443))
    assert decision.verdict == "deny_filter_domain"

    status, _, data = request(api.port, "PUT", "/api/filters",
                              body={"blocked_domains": [".Bad.Example."]})
    assert status == 400
    assert b".Bad.Example." in data

    status, _, data = request(api.port, "PUT", "/api/filters",
                              body={"enabled_presets": ["no_such_preset"]})
    assert status == 400


def test_disconnect_endpoint(api):
    api.meter.open_session("192.168.43.10", SOCKS5, TARGET, ALLOWED)
    status, _, data = request(api.port, "POST",
                              "/api/clients/192.168.43.10/disconnect")
    assert status == 200
    assert json.loads(data)["terminated_sessions"] == 1
    status, _, _ = request(api.port, "POST",
                           "/api/clients/192.168.43.99/disconnect")
    assert status == 404


def test_pac_and_help_endpoints(api):
    status, content_type, data = request(api.port, "GET", "/proxy.pac")
    assert status == 200
    assert content_type == "application/x-ns-proxy-autoconfig"
    assert b"FindProxyForURL" in data
    status, content_type, data = request(api.port, "GET", "/help")
    assert status == 200
    assert content_type.startswith("text/html")
    assert b"SOCKS5" in data


def test_dashboard_static_assets_served(tmp_path):
    assets = tmp_path / "dist"
    assets.mkdir()
    (assets / "index.html").write_text("<html><body>dash</body></html>")
    (assets / "app.js").write_text("export {};")
    config = GatewayConfig(dashboard_dir=str(assets))
    bus = EventBus()
    meter = TrafficMeter(config.subnet, events=bus)
    manager = TrafficManager(config.quota, config.filters, meter, events=bus)
    sampler = PerfSampler(meter, interval=5.0, events=bus)
    provisioning = ProvisioningInfo("127.0.0.1", 8080, 1080, 8088,
                                    str(config.subnet))
    server = ControlServer(config, meter, manager, sampler, bus, provisioning,
                           host="127.0.0.1", port=0)
    server.start()
    try:
        port = server._httpd.server_address[1]
        status, content_type, data = request(port, "GET", "/")
        assert status == 200
        assert b"dash" in data
        status, _, data = request(port, "GET", "/app.js")
        assert status == 200
        # Path traversal out of the asset dir must 404.
        status, _, _ = request(port, "GET", "/../secret")
        assert status == 404
    finally:
        server.stop()


def test_unknown_api_endpoint_404(api):
    status, _, _ = request(api.port, "GET", "/api/nope")
    assert status == 404


def test_bad_json_body_400(api):
    conn = http.client.HTTPConnection("127.0.0.1", api.port, timeout=5)
    conn.request("PUT", "/api/quota", body=b"{not json",
                 headers={"Content-Length": "9"})
    resp = conn.getresponse()
    assert resp.status == 400
    conn.close()


def sse_frames(port, path, count, timeout=5.0):
    """Read ``count`` SSE event frames; returns [(id, type, data_dict)]."""
    sock = socket.create_connection(("127.0.0.1", port), timeout=timeout)
    sock.sendall(f"GET {path} HTTP/1.1\r\nHost: x\r\n\r\n".encode())
    buf = b""
    frames = []
    while len(frames) < count:
        chunk = sock.recv(65536)
        if not chunk:
            break
        buf += chunk
        while b"\n\n" in buf:
            frame, _, buf = buf.partition(b"\n\n")
            if b"data:" not in frame or b"id:" not in frame:
                continue  # headers or keep-alive
            fields = {}
            for line in frame.split(b"\n"):
                if b":" in line and not line.startswith(b":"):
                    key, _, value = line.partition(b":")
                    fields[key.strip().decode()] = value.strip().decode()
            frames.append((int(fields["id"]), fields.get("event"),
                           json.loads(fields["data"])))
    sock.close()
    return frames


def test_sse_replay_then_live_no_gaps_no_dups(api):
    for i in range(5):
        api.bus.publish("perf_sample", {"i": i})

    def publish_late():
        for i in range(5, 10):
            api.bus.publish("perf_sample", {"i": i})

    timer = threading.Timer(0.3, publish_late)
    timer.start()
    try:
        frames = sse_frames(api.port, "/api/events?since=0", count=10)
    finally:
        timer.cancel()
    seqs = [f[0] for f in frames]
    assert seqs == list(range(1, 11))
    assert [f[2]["i"] for f in frames] == list(range(10))
    assert all(f[1] == "perf_sample" for f in frames)


def test_sse_last_event_id_header(api):
    for i in range(6):
        api.bus.publish("block", {"i": i})
    sock = socket.create_connection(("127.0.0.1", api.port), timeout=5)
    sock.sendall(b"GET /api/events HTTP/1.1\r\nHost: x\r\n"
                 b"Last-Event-ID: 4\r\n\r\n")
    buf = b""
    while buf.count(b"id:") < 2:
        buf += sock.recv(65536)
    sock.close()
    assert b"id: 5" in buf
    assert b"id: 6" in buf
    assert b"id: 4\n" not in buf


def test_sse_gap_returns_409():
    config = GatewayConfig()
    bus = EventBus(buffer_size=5)
    meter = TrafficMeter(config.subnet, events=bus)
    manager = TrafficManager(config.quota, config.filters, meter, events=bus)
    sampler = PerfSampler(meter, interval=5.0, events=bus)
    provisioning = ProvisioningInfo("127.0.0.1", 8080, 1080, 8088,
                                    str(config.subnet))
    server = ControlServer(config, meter, manager, sampler, bus, provisioning,
                           host="127.0.0.1", port=0)
    server.start()
    try:
        for i in range(50):
            bus.publish("perf_sample", {"i": i})
        status, _, data = request(server._httpd.server_address[1], "GET",
                                  "/api/events?since=1")
        assert status == 409
        assert b"no longer buffered" in data
    finally:
        server.stop()


def test_concurrent_filter_swaps_with_admission_checks(api):
    """PUT /api/filters racing admission checks must never crash or produce a
    verdict inconsistent with both rule sets."""
    stop = threading.Event()
    errors = []

    def swapper():
        i = 0
        while not stop.is_set():
            domains = ["example.com"] if i % 2 == 0 else []
            status, _, _ = request(api.port, "PUT", "/api/filters",
                                   body={"blocked_domains": domains})
            if status != 200:
                errors.append(status)
            i += 1

    def checker():
        while not stop.is_set():
            decision = api.manager.check_admission("192.168.43.10", TARGET)
            if decision.verdict not in ("allow", "deny_filter_domain"):
                errors.append(decision.verdict)

    threads = [threading.Thread(target=swapper),
               threading.Thread(target=checker),
               threading.Thread(target=checker)]
    for t in threads:
        t.start()
    stop_timer = threading.Timer(1.0, stop.set)
    stop_timer.start()
    for t in threads:
        t.join(timeout=10)
    assert errors == []
