import heapq
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import structlog

from exodyad.utils.config import BaseConfig
from exodyad.utils.stats import SimStats


@dataclass(frozen=True)
class BusConfig(BaseConfig):
    """Delay model of the link carrying each exoskeleton's state to its partner."""

    latency: float = 0.0
    jitter_sd: float = 0.0
    drop_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.latency < 0 or self.jitter_sd < 0:
            raise ValueError("latency and jitter_sd must be non-negative")
        if not 0 <= self.drop_probability < 1:
            raise ValueError(f"drop_probability must lie in [0, 1), got {self.drop_probability}")
        if self.latency + 4 * self.jitter_sd >= 0.1:
            raise ValueError(f"latency + 4 jitter_sd must stay below 0.1 s, got "
                             f"{self.latency + 4 * self.jitter_sd}")


class MessageBus:
    """
    Tick-based delay queue. A message published at tick n is delivered at tick
    n + latency ticks (+ jitter) unless dropped; a receiver always sees the newest
    delivered message and keeps it until a newer one arrives.

    Attributes:
        config (BusConfig): Delay model
        dt (float): Tick length in seconds
        latency_ticks (int): Nominal delay in ticks
    """

    logger = structlog.get_logger(__name__)

    def __init__(self, config: BusConfig, dt: float, stats: Optional[SimStats] = None):
        self.config = config
        self.dt = dt
        self.latency_ticks = int(round(config.latency / dt))
        self.stats = stats if stats is not None else SimStats()
        self._rng = np.random.default_rng(config.seed)
        self._queues: Dict[str, List[Tuple[int, int, int, Any]]] = {}
        self._latest: Dict[str, Tuple[int, Any]] = {}
        self._sequence = 0

    def prime(self, channel: str, tick: int, payload: Any):
        """Sets the message a receiver sees before anything has been delivered."""
        self._latest[channel] = (tick, payload)

    def publish(self, channel: str, tick: int, payload: Any):
        dropped = self.config.drop_probability > 0 and self._rng.random() < self.config.drop_probability
        self.stats.add_message(dropped)
        if dropped:
            return
        delay = self.latency_ticks
        if self.config.jitter_sd > 0:
            delay += int(round(self._rng.normal(0.0, self.config.jitter_sd) / self.dt))
        delay = max(delay, 0)
        self._sequence += 1
        heapq.heappush(self._queues.setdefault(channel, []), (tick + delay, tick, self._sequence, payload))

    def receive(self, channel: str, tick: int) -> Tuple[int, Any]:
        """(sent tick, payload) of the newest message delivered by `tick`."""
        queue = self._queues.get(channel, [])
        while queue and queue[0][0] <= tick:
            _, sent, _, payload = heapq.heappop(queue)
            if channel not in self._latest or sent >= self._latest[channel][0]:
                self._latest[channel] = (sent, payload)
        if channel not in self._latest:
            raise LookupError(f"no message on channel '{channel}' by tick {tick}")
        return self._latest[channel]
