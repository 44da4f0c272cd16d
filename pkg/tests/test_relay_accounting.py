"""Byte-accounting ground truth across the three proxy modes.

The oracle is the test itself: it writes a known number of payload bytes and
the origin replies with a known number, so session counters must match
exactly.  Handshake bytes (CONNECT head, 200 reply, SOCKS negotiation) must
never be counted; forwarded HTTP counts the full rewritten message bytes."""

import struct

from proxyshare.proxy.httpproxy import HttpProxyListener
from proxyshare.proxy.socks5 import Socks5Listener

from netutil import (HttpOrigin, SinkOrigin, Stack, recv_all, recv_exact,
                     wait_until)

UP_PAYLOAD = b"u" * 357
DOWN_PAYLOAD = b"d" * 1024


def finalized(stack):
    return stack.meter.finalized_sessions()


def test_connect_counts_payload_only():
    origin = SinkOrigin(expect=len(UP_PAYLOAD), response=DOWN_PAYLOAD)
    stack = Stack(HttpProxyListener, origin=origin)
    try:
        with stack.connect() as conn:
            conn.sendall(b"CONNECT example.com:443 HTTP/1.1\r\n"
                         b"Host: example.com:443\r\n\r\n")
            recv_exact(conn, len(b"HTTP/1.1 200 Connection Established\r\n\r\n"))
            conn.sendall(UP_PAYLOAD)
            assert recv_exact(conn, len(DOWN_PAYLOAD)) == DOWN_PAYLOAD
        assert wait_until(lambda: len(finalized(stack)) == 1)
        session = finalized(stack)[0]
        assert session.totals() == (357, 1024)
        assert stack.meter.global_totals() == (357, 1024)
    finally:
        stack.close()
        origin.close()


def test_socks5_counts_payload_only():
    origin = SinkOrigin(expect=len(UP_PAYLOAD), response=DOWN_PAYLOAD)
    stack = Stack(Socks5Listener, origin=origin)
    try:
        with stack.connect() as conn:
            conn.sendall(b"\x05\x01\x00")
            recv_exact(conn, 2)
            conn.sendall(b"\x05\x01\x00\x03\x0bexample.com"
                         + struct.pack("!H", 443))
            recv_exact(conn, 10)
            conn.sendall(UP_PAYLOAD)
            assert recv_exact(conn, len(DOWN_PAYLOAD)) == DOWN_PAYLOAD
        assert wait_until(lambda: len(finalized(stack)) == 1)
        assert finalized(stack)[0].totals() == (357, 1024)
    finally:
        stack.close()
        origin.close()


def test_connect_pipelined_bytes_after_head_are_counted():
    origin = SinkOrigin(expect=len(UP_PAYLOAD), response=DOWN_PAYLOAD)
    stack = Stack(HttpProxyListener, origin=origin)
    try:
        with stack.connect() as conn:
            # Payload sent in the same segment as the CONNECT head.
            conn.sendall(b"CONNECT example.com:443 HTTP/1.1\r\n\r\n" + UP_PAYLOAD)
            recv_exact(conn, len(b"HTTP/1.1 200 Connection Established\r\n\r\n"))
            assert recv_exact(conn, len(DOWN_PAYLOAD)) == DOWN_PAYLOAD
        assert wait_until(lambda: len(finalized(stack)) == 1)
        assert finalized(stack)[0].totals() == (357, 1024)
    finally:
        stack.close()
        origin.close()


def test_http_forward_counts_wire_bytes():
    response = b"HTTP/1.1 200 OK\r\nContent-Length: 4\r\n\r\nbody"
    origin = HttpOrigin(response)
    stack = Stack(HttpProxyListener, origin=origin)
    try:
        with stack.connect() as conn:
            conn.sendall(b"POST http://upstream.example/submit HTTP/1.1\r\n"
                         b"Content-Length: 5\r\n\r\nhello")
            recv_all(conn)
        assert wait_until(lambda: len(finalized(stack)) == 1)
        assert wait_until(lambda: len(origin.received) == 1)
        session = finalized(stack)[0]
        # Upload: exactly the rewritten head + body the origin received.
        assert session.totals() == (len(origin.received[0]), len(response))
    finally:
        stack.close()
        origin.close()


def test_zero_byte_tunnel_session():
    origin = SinkOrigin(expect=0, response=b"")
    stack = Stack(HttpProxyListener, origin=origin)
    try:
        with stack.connect() as conn:
            conn.sendall(b"CONNECT example.com:443 HTTP/1.1\r\n\r\n")
            recv_exact(conn, len(b"HTTP/1.1 200 Connection Established\r\n\r\n"))
        assert wait_until(lambda: len(finalized(stack)) == 1)
        assert finalized(stack)[0].totals() == (0, 0)
    finally:
        stack.close()
        origin.close()


def test_mid_session_disconnect_preserves_counted_bytes(tmp_path):
    from proxyshare.meter import DOWN, TrafficMeter
    from proxyshare.model import ALLOWED, SOCKS5, TargetAddress
    from proxyshare.store import SessionStore
    import ipaddress

    store = SessionStore(str(tmp_path / "gw.db"))
    meter = TrafficMeter(ipaddress.IPv4Network("192.168.43.0/24"), store=store)
    meter.start()
    session = meter.open_session("192.168.43.10", SOCKS5,
                                 TargetAddress("example.com", 443), ALLOWED)
    meter.record_transfer(session, DOWN, 100)
    # Disconnect mid-session: the 100 counted bytes must survive.
    session.force_close()
    meter.finalize_session(session)
    assert meter.flush(timeout=5)
    rows = store.load_sessions()
    assert len(rows) == 1
    assert rows[0]["bytes_down"] == 100
    meter.stop()
    store.close()
