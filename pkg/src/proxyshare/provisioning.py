"""Client onboarding artifacts: PAC document, QR payload URI, help page.

All three are pure functions of ProvisioningInfo: identical inputs produce
byte-identical outputs, and none of the endpoints serving them ever require
proxy credentials (clients must be able to bootstrap before configuring).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional
from urllib.parse import parse_qs, quote, unquote, urlsplit

from .config import AuthCredentials

PAC_MEDIA_TYPE = "application/x-ns-proxy-autoconfig"
QR_SCHEME = "proxyshare"
QR_VERSION = "v1"


@dataclass(frozen=True)
class ProvisioningInfo:
    host: str            # LAN-facing address clients can reach
    http_port: int
    socks_port: int
    control_port: int
    subnet: str          # CIDR, stays DIRECT in the PAC
    credentials: Optional[AuthCredentials] = None

    @property
    def help_url(self) -> str:
        return f"http://{self.host}:{self.control_port}/help"

    @property
    def pac_url(self) -> str:
        return f"http://{self.host}:{self.control_port}/proxy.pac"


def generate_pac(info: ProvisioningInfo) -> str:
    """PAC text: DIRECT for plain hostnames and the local subnet, the gateway
    (HTTP proxy first, SOCKS5 fallback) for everything else."""
    network, _, prefix = info.subnet.partition("/")
    mask = _prefix_to_mask(int(prefix) if prefix else 24)
    return f"""function FindProxyForURL(url, host) {{
    // Plain hostnames and the local subnet stay direct so clients can reach
    // the gateway's own help page and local peers.
    if (isPlainHostName(host))
        return "DIRECT";
    if (isInNet(host, "{network}", "{mask}"))
        return "DIRECT";
    if (host === "{info.host}")
        return "DIRECT";
    return "PROXY {info.host}:{info.http_port}; SOCKS5 {info.host}:{info.socks_port}";
}}
"""


def _prefix_to_mask(prefix: int) -> str:
    value = (0xFFFFFFFF << (32 - prefix)) & 0xFFFFFFFF if prefix else 0
    return ".".join(str((value >> shift) & 0xFF) for shift in (24, 16, 8, 0))


def generate_qr_payload(info: ProvisioningInfo) -> str:
    """URI encoding proxy address, ports, optional credentials and help link.
    Rendering the string as a QR image is the dashboard's job."""
    enc = lambda s: quote(str(s), safe="")
    params = [f"host={enc(info.host)}",
              f"http={info.http_port}",
              f"socks={info.socks_port}"]
    if info.credentials is not None:
        params.append(f"user={enc(info.credentials.username)}")
        params.append(f"pass={enc(info.credentials.password)}")
    params.append(f"help={enc(info.help_url)}")
    return f"{QR_SCHEME}://{QR_VERSION}?" + "&".join(params)


def parse_qr_payload(uri: str, subnet: str = "",
                     control_port: Optional[int] = None) -> ProvisioningInfo:
    """Inverse of generate_qr_payload (round-trip checked in tests)."""
    split = urlsplit(uri)
    if split.scheme != QR_SCHEME or split.netloc != QR_VERSION:
        raise ValueError(f"not a {QR_SCHEME}://{QR_VERSION} URI: {uri!r}")
    params = parse_qs(split.query, keep_blank_values=True)

    def one(key: str) -> str:
        values = params.get(key, [])
        if len(values) != 1:
            raise ValueError(f"QR payload missing parameter {key!r}")
        return values[0]

    credentials = None
    if "user" in params or "pass" in params:
        credentials = AuthCredentials(one("user"), one("pass"))
    help_url = one("help")
    if control_port is None:
        control_port = urlsplit(help_url).port or 80
    return ProvisioningInfo(
        host=one("host"), http_port=int(one("http")),
        socks_port=int(one("socks")), control_port=control_port,
        subnet=subnet, credentials=credentials)


def help_page(info: ProvisioningInfo) -> str:
    """Static HTML with per-platform manual proxy setup steps."""
    auth_note = ""
    if info.credentials is not None:
        auth_note = ("<p>This gateway requires a username and password; "
                     "ask the host for credentials.</p>")
    qr_payload = generate_qr_payload(info)
    return f"""<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<meta name="viewport" content="width=device-width, initial-scale=1">
<title>Gateway setup</title>
<style>
body {{ font-family: system-ui, sans-serif; max-width: 42rem; margin: 2rem auto; padding: 0 1rem; }}
code {{ background: #f0f0f0; padding: 0.1rem 0.3rem; border-radius: 3px; }}
h2 {{ margin-top: 1.6rem; }}
</style>
</head>
<body>
<h1>Connect through this gateway</h1>
<p>Proxy address: <code>{info.host}</code> &mdash;
HTTP port <code>{info.http_port}</code>, SOCKS5 port <code>{info.socks_port}</code>.</p>
{auth_note}
<h2>Automatic (PAC)</h2>
<p>Point your device's automatic proxy configuration at
<a href="{info.pac_url}"><code>{info.pac_url}</code></a>.</p>
<h2>Android</h2>
<ol>
<li>Open Settings &rarr; Network &amp; internet &rarr; Wi-Fi and long-press the network.</li>
<li>Choose Modify network &rarr; Advanced options &rarr; Proxy &rarr; Manual.</li>
<li>Hostname <code>{info.host}</code>, port <code>{info.http_port}</code>.</li>
</ol>
<h2>iOS</h2>
<ol>
<li>Settings &rarr; Wi-Fi &rarr; tap the network's info button.</li>
<li>Configure Proxy &rarr; Manual; server <code>{info.host}</code>, port <code>{info.http_port}</code>.</li>
</ol>
<h2>Windows / macOS / Linux</h2>
<p>Set the system HTTP/HTTPS proxy to <code>{info.host}:{info.http_port}</code>
or the SOCKS5 proxy to <code>{info.host}:{info.socks_port}</code>.</p>
<h2>QR payload</h2>
<p>Scanning the host's QR code yields:</p>
<p><code>{qr_payload}</code></p>
</body>
</html>
"""
