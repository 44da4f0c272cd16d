import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from proxyshare.config import AuthCredentials
from proxyshare.provisioning import (ProvisioningInfo, generate_pac,
                                     generate_qr_payload, help_page,
                                     parse_qr_payload)

INFO = ProvisioningInfo(host="192.168.43.1", http_port=8080, socks_port=1080,
                        control_port=8088, subnet="192.168.43.0/24")


def pac_eval(pac_text, host, host_in_subnet=False):
    """Tiny evaluator for the fixed PAC template: mirrors the three DIRECT
    conditions and otherwise returns the proxy directive line."""
    proxy_line = re.search(r'return ("PROXY [^"]+");', pac_text).group(1)
    gateway = re.search(r'host === "([^"]+)"', pac_text).group(1)
    if "." not in host:
        return "DIRECT"  # isPlainHostName
    if host_in_subnet:
        return "DIRECT"  # isInNet
    if host == gateway:
        return "DIRECT"
    return proxy_line.strip('"')


def test_pac_is_deterministic():
    assert generate_pac(INFO) == generate_pac(INFO)


def test_pac_routes():
    pac = generate_pac(INFO)
    assert 'isInNet(host, "192.168.43.0", "255.255.255.0")' in pac
    assert pac_eval(pac, "printer") == "DIRECT"
    assert pac_eval(pac, "192.168.43.55", host_in_subnet=True) == "DIRECT"
    assert pac_eval(pac, "192.168.43.1") == "DIRECT"
    assert pac_eval(pac, "example.com") \
        == "PROXY 192.168.43.1:8080; SOCKS5 192.168.43.1:1080"


def test_qr_payload_shape():
    payload = generate_qr_payload(INFO)
    assert payload.startswith("proxyshare://v1?")
    assert "host=192.168.43.1" in payload
    assert "http=8080" in payload
    assert "socks=1080" in payload
    assert "user=" not in payload


def test_qr_payload_includes_credentials():
    info = ProvisioningInfo(host="10.0.0.1", http_port=3128, socks_port=1080,
                            control_port=8088, subnet="10.0.0.0/24",
                            credentials=AuthCredentials("al ice", "s&cret"))
    payload = generate_qr_payload(info)
    assert "user=al%20ice" in payload
    assert "pass=s%26cret" in payload
    parsed = parse_qr_payload(payload, subnet="10.0.0.0/24")
    assert parsed.credentials == AuthCredentials("al ice", "s&cret")


def test_qr_rejects_foreign_uri():
    with pytest.raises(ValueError):
        parse_qr_payload("https://example.com/?host=x")
    with pytest.raises(ValueError):
        parse_qr_payload("proxyshare://v2?host=x&http=1&socks=2&help=h")


printable = st.text(
    alphabet=st.characters(min_codepoint=33, max_codepoint=126),
    min_size=1, max_size=20)


@given(user=printable, password=printable,
       http_port=st.integers(min_value=1, max_value=65535),
       socks_port=st.integers(min_value=1, max_value=65535))
def test_qr_round_trip(user, password, http_port, socks_port):
    info = ProvisioningInfo(host="192.168.43.1", http_port=http_port,
                            socks_port=socks_port, control_port=8088,
                            subnet="192.168.43.0/24",
                            credentials=AuthCredentials(user, password))
    parsed = parse_qr_payload(generate_qr_payload(info),
                              subnet="192.168.43.0/24")
    assert parsed == info


def test_help_page_contains_connection_details():
    page = help_page(INFO)
    assert "192.168.43.1" in page
    assert "8080" in page
    assert "1080" in page
    assert "proxyshare://v1?" in page
    assert "username and password" not in page
    with_auth = help_page(ProvisioningInfo(
        host="192.168.43.1", http_port=8080, socks_port=1080,
        control_port=8088, subnet="192.168.43.0/24",
        credentials=AuthCredentials("u", "p")))
    assert "username and password" in with_auth


def test_urls():
    assert INFO.help_url == "http://192.168.43.1:8088/help"
    assert INFO.pac_url == "http://192.168.43.1:8088/proxy.pac"
