from .upstream import UpstreamError, make_dialer, open_upstream
from .relay import relay
from .httpproxy import HttpProxyListener
from .socks5 import Socks5Listener

__all__ = ["UpstreamError", "make_dialer", "open_upstream", "relay",
           "HttpProxyListener", "Socks5Listener"]
