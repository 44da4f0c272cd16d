import threading

import pytest

from proxyshare.events import EventBus, EventGapError


def test_seq_strictly_increases():
    bus = EventBus()
    seqs = [bus.publish("block", {"i": i}).seq for i in range(5)]
    assert seqs == [1, 2, 3, 4, 5]


def test_unknown_type_rejected():
    bus = EventBus()
    with pytest.raises(ValueError):
        bus.publish("bogus", {})


def test_subscriber_receives_live_events():
    bus = EventBus()
    sub = bus.subscribe()
    bus.publish("block", {"client_ip": "1.2.3.4"})
    event = sub.next(timeout=1)
    assert event.type == "block"
    assert event.payload["client_ip"] == "1.2.3.4"


def test_replay_since_has_no_gaps_or_duplicates():
    bus = EventBus()
    for i in range(10):
        bus.publish("perf_sample", {"i": i})
    sub = bus.subscribe(since=4)
    bus.publish("perf_sample", {"i": 10})
    got = [sub.next(timeout=1) for _ in range(7)]
    assert [e.seq for e in got] == [5, 6, 7, 8, 9, 10, 11]
    assert [e.payload["i"] for e in got] == [4, 5, 6, 7, 8, 9, 10]


def test_replay_beyond_buffer_fails_loudly():
    bus = EventBus(buffer_size=5)
    for i in range(20):
        bus.publish("perf_sample", {"i": i})
    with pytest.raises(EventGapError):
        bus.subscribe(since=2)


def test_two_subscribers_see_identical_sequences():
    bus = EventBus()
    sub_a = bus.subscribe()
    sub_b = bus.subscribe()
    for i in range(6):
        bus.publish("anomaly", {"i": i})
    got_a = [sub_a.next(timeout=1).seq for _ in range(6)]
    got_b = [sub_b.next(timeout=1).seq for _ in range(6)]
    assert got_a == got_b == [1, 2, 3, 4, 5, 6]


def test_lagging_subscriber_overflows_without_blocking_producer():
    bus = EventBus()
    sub = bus.subscribe()
    # Never consumed: overflow once the bounded queue fills.
    for i in range(500):
        bus.publish("perf_sample", {"i": i})
    drained = 0
    while True:
        event = sub.next(timeout=0.05)
        if event is None:
            break
        drained += 1
    assert sub.overflowed
    assert sub.closed
    assert drained <= 256


def test_concurrent_publishers_keep_seq_unique():
    bus = EventBus()

    def publish_many():
        for _ in range(200):
            bus.publish("session_opened", {})

    threads = [threading.Thread(target=publish_many) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert bus.last_seq == 800
