import ipaddress

from proxyshare.discovery import ClientDiscovery
from proxyshare.meter import DOWN, TrafficMeter
from proxyshare.model import ALLOWED, SOCKS5, TargetAddress


def make(subnet_cidr, clock, responders):
    subnet = ipaddress.IPv4Network(subnet_cidr)
    meter = TrafficMeter(subnet, clock=clock)
    discovery = ClientDiscovery(meter, subnet, interval=10.0,
                                prober=lambda ip: ip in responders,
                                clock=clock)
    return meter, discovery


def test_responders_found_in_one_sweep(clock):
    responders = {"192.168.43.3", "192.168.43.7", "192.168.43.200"}
    meter, discovery = make("192.168.43.0/24", clock, responders)
    online = discovery.discover_clients()
    assert {r.ip for r in online} == responders
    assert all(r.discovery_source == "probe" for r in online)


def test_empty_subnet_yields_no_clients(clock):
    meter, discovery = make("192.168.43.0/24", clock, set())
    assert discovery.discover_clients() == []


def test_silent_client_goes_offline_after_two_intervals(clock):
    responders = {"192.168.43.5"}
    meter, discovery = make("192.168.43.0/24", clock, responders)
    discovery.discover_clients()
    responders.clear()
    clock.advance(10)
    discovery.discover_clients()
    assert meter.lookup("192.168.43.5").online  # only one interval missed
    clock.advance(11)
    discovery.discover_clients()
    assert not meter.lookup("192.168.43.5").online


def test_session_activity_keeps_client_online(clock):
    meter, discovery = make("192.168.43.0/24", clock, set())
    session = meter.open_session("192.168.43.8", SOCKS5,
                                 TargetAddress("example.com", 443), ALLOWED)
    for _ in range(5):
        clock.advance(10)
        meter.record_transfer(session, DOWN, 100)
        discovery.discover_clients()
    assert meter.lookup("192.168.43.8").online
    # Once the session goes quiet the usual timeout applies.
    clock.advance(21)
    discovery.discover_clients()
    assert not meter.lookup("192.168.43.8").online


def test_membership_change_callback_fires_on_change_only(clock):
    responders = {"192.168.43.5"}
    meter, discovery = make("192.168.43.0/24", clock, responders)
    calls = []
    discovery.on_membership_change = lambda: calls.append(1)
    discovery.discover_clients()
    assert len(calls) == 1
    discovery.discover_clients()  # same membership, no callback
    assert len(calls) == 1
    responders.clear()
    clock.advance(21)
    discovery.discover_clients()
    assert len(calls) == 2


def test_prober_exceptions_are_contained(clock):
    subnet = ipaddress.IPv4Network("192.168.43.0/30")
    meter = TrafficMeter(subnet, clock=clock)

    def flaky(ip):
        raise RuntimeError("probe backend down")

    discovery = ClientDiscovery(meter, subnet, interval=10.0,
                                prober=flaky, clock=clock)
    assert discovery.discover_clients() == []
