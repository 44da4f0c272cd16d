"""Process supervisor: wires the meter, manager, listeners, discovery, perf
sampler and control API together, and handles startup/shutdown.

The daemon holds only immutable config after startup; all shared state lives
in the meter/manager.  Shutdown drains gracefully (bounded) and finalizes
every open session so counted bytes reach the store.
"""

from __future__ import annotations

import ipaddress
import logging
import signal
import threading
from typing import Optional

from .config import GatewayConfig
from .control import ControlServer
from .discovery import ClientDiscovery
from .events import EventBus
from .manager import TrafficManager
from .meter import TrafficMeter
from .perf import PerfSampler
from .provisioning import ProvisioningInfo
from .proxy.httpproxy import HttpProxyListener
from .proxy.socks5 import Socks5Listener
from .proxy.upstream import make_dialer
from .store import SessionStore, StoreError
from .vpn import detect_vpn

log = logging.getLogger(__name__)

DRAIN_TIMEOUT = 5.0

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STARTUP = 3


class StartupError(RuntimeError):
    pass


def lan_facing_address(config: GatewayConfig) -> str:
    """Address clients should use to reach the gateway."""
    if config.listen_address not in ("0.0.0.0", "::"):
        return config.listen_address
    try:
        from .vpn import system_interfaces
        for iface in system_interfaces():
            for addr in iface.addresses:
                try:
                    ip = ipaddress.ip_address(addr)
                except ValueError:
                    continue
                if ip.version == 4 and ip in config.subnet:
                    return addr
        for iface in system_interfaces():
            for addr in iface.addresses:
                try:
                    ip = ipaddress.ip_address(addr)
                except ValueError:
                    continue
                if ip.version == 4 and not ip.is_loopback:
                    return addr
    except Exception:
        pass
    return "127.0.0.1"


class Gateway:
    def __init__(self, config: GatewayConfig, prober=None):
        self.config = config
        self.prober = prober
        self.events = EventBus()
        self.store: Optional[SessionStore] = None
        self.meter: Optional[TrafficMeter] = None
        self.manager: Optional[TrafficManager] = None
        self.discovery: Optional[ClientDiscovery] = None
        self.sampler: Optional[PerfSampler] = None
        self.control: Optional[ControlServer] = None
        self.http_listener: Optional[HttpProxyListener] = None
        self.socks_listener: Optional[Socks5Listener] = None
        self._shutdown = threading.Event()
        self._started = False

    def start(self) -> None:
        """Bring everything up; raises StartupError on bind/store failure."""
        config = self.config

        vpn = detect_vpn(config.egress)
        if not vpn.active and config.egress.mode == "auto_detect":
            log.warning("no VPN tunnel detected; serving as a plain sharing "
                        "proxy with system-default egress")

        try:
            self.store = SessionStore(config.store_path)
        except StoreError as exc:
            raise StartupError(f"store open failed at {config.store_path!r}: {exc}") from exc

        self.meter = TrafficMeter(config.subnet, self.store, self.events)
        self.manager = TrafficManager(
            config.quota, config.filters, self.meter, self.events,
            anomaly_multiplier=config.anomaly_multiplier)
        self.meter.start()

        dialer = make_dialer(config.egress, config.upstream_connect_timeout)
        self.http_listener = HttpProxyListener(
            config.listen_address, config.http_port, self.meter, self.manager,
            dialer, config.auth, config.session_idle_timeout)
        self.socks_listener = Socks5Listener(
            config.listen_address, config.socks_port, self.meter, self.manager,
            dialer, config.auth, config.session_idle_timeout)

        discovery_kwargs = {}
        if self.prober is not None:
            discovery_kwargs["prober"] = self.prober
        self.discovery = ClientDiscovery(
            self.meter, config.subnet, config.probe_interval, **discovery_kwargs)
        self.discovery.on_membership_change = self.manager.refresh_membership

        self.sampler = PerfSampler(self.meter, config.perf_sample_interval,
                                   self.events)

        info = ProvisioningInfo(
            host=lan_facing_address(config),
            http_port=config.http_port,
            socks_port=config.socks_port,
            control_port=config.control_port,
            subnet=str(config.subnet),
            credentials=config.auth)
        self.control = ControlServer(config, self.meter, self.manager,
                                     self.sampler, self.events, info)

        started = []
        try:
            for name, component, port in (
                    ("http", self.http_listener, config.http_port),
                    ("socks", self.socks_listener, config.socks_port),
                    ("control", self.control, config.control_port)):
                try:
                    component.start()
                except OSError as exc:
                    raise StartupError(
                        f"cannot bind {name} listener on port {port}: {exc}") from exc
                started.append(component)
        except StartupError:
            for component in started:
                component.stop()
            self.store.close()
            raise

        self.discovery.start()
        self.sampler.start()
        self._started = True
        log.info("gateway up: http=%s:%d socks=%s:%d control=%s:%d",
                 config.listen_address, config.http_port,
                 config.listen_address, config.socks_port,
                 config.listen_address, config.control_port)

    def stop(self) -> None:
        if not self._started:
            return
        self._started = False
        # Stop intake first, then drain/finalize sessions, then flush.
        for component in (self.http_listener, self.socks_listener,
                          self.discovery, self.sampler, self.control):
            if component is not None:
                try:
                    component.stop()
                except Exception:
                    log.exception("error stopping %r", component)
        if self.meter is not None:
            self.meter.stop(flush_timeout=DRAIN_TIMEOUT)
        if self.store is not None:
            self.store.close()
        log.info("gateway stopped")

    def request_shutdown(self, *_args) -> None:
        self._shutdown.set()

    def run(self) -> int:
        """Start, block until a shutdown signal, then drain and exit."""
        try:
            self.start()
        except StartupError as exc:
            log.error("%s", exc)
            return EXIT_STARTUP
        try:
            signal.signal(signal.SIGINT, self.request_shutdown)
            signal.signal(signal.SIGTERM, self.request_shutdown)
        except ValueError:
            pass  # not the main thread; request_shutdown() still works
        self._shutdown.wait()
        self.stop()
        return EXIT_OK
