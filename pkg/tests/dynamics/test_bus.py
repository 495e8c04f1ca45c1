import pytest

from exodyad.dynamics.bus import BusConfig, MessageBus
from exodyad.utils.stats import SimStats

DT = 0.003


def test_latency_in_ticks():
    bus = MessageBus(BusConfig(latency=0.009), DT)
    assert bus.latency_ticks == 3
    bus.prime('therapist', 0, 'initial')
    for tick in range(6):
        bus.publish('therapist', tick, f"m{tick}")
    assert bus.receive('therapist', 2) == (0, 'initial')
    assert bus.receive('therapist', 3) == (0, 'm0')
    assert bus.receive('therapist', 5) == (2, 'm2')


def test_zero_latency_delivers_same_tick():
    bus = MessageBus(BusConfig(), DT)
    bus.publish('patient', 7, 'now')
    assert bus.receive('patient', 7) == (7, 'now')


def test_newest_message_wins():
    bus = MessageBus(BusConfig(), DT)
    bus.publish('patient', 5, 'new')
    assert bus.receive('patient', 5) == (5, 'new')
    bus.publish('patient', 3, 'old')
    assert bus.receive('patient', 6) == (5, 'new')


def test_drops_hold_last_message():
    stats = SimStats()
    bus = MessageBus(BusConfig(drop_probability=0.5, seed=3), DT, stats)
    bus.prime('therapist', 0, 'initial')
    for tick in range(1000):
        bus.publish('therapist', tick, tick)
        sent, payload = bus.receive('therapist', tick)
        assert sent <= tick
        assert payload == 'initial' or payload == sent
    assert stats.messages_sent == 1000
    assert 400 < stats.messages_dropped < 600
    assert stats.get_stats()['Drop Rate'] == pytest.approx(stats.messages_dropped / 1000)


def test_same_seed_same_drops():
    first, second = SimStats(), SimStats()
    for stats in (first, second):
        bus = MessageBus(BusConfig(drop_probability=0.2, jitter_sd=0.001, seed=11), DT, stats)
        for tick in range(200):
            bus.publish('patient', tick, tick)
    assert first.messages_dropped == second.messages_dropped


def test_receive_without_message():
    with pytest.raises(LookupError):
        MessageBus(BusConfig(), DT).receive('patient', 0)


@pytest.mark.parametrize('kwargs', [dict(latency=-0.01), dict(drop_probability=1.0),
                                    dict(latency=0.05, jitter_sd=0.02)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        BusConfig(**kwargs)
