import time
from collections import Counter
from dataclasses import dataclass, field


@dataclass
class SimStats:
    """
    SimStats is a dataclass that provides run statistics for a simulation, such as
    ticks simulated, constraint activity of the torque allocation and message bus traffic.

    Attributes:
        total_ticks (int): Number of simulated ticks.
        torque_saturations (int): Allocations where the torque limit was binding.
        brake_activations (int): Allocations where the one-step angle brake was binding.
        accel_limited (int): Allocations clipped by the acceleration or velocity limits.
        safe_stops (int): Allocations that fell back to the safe-stop command.
        stale_holds (int): Controller ticks that held the last command on a stale state.
        messages_sent (int): Bus messages published.
        messages_dropped (int): Bus messages lost to the drop model.
        start_time (float): Wall-clock start of the run.
        constraint_count (Counter): Active-constraint counts keyed by constraint name.
    """

    total_ticks: int = 0

    torque_saturations: int = 0
    brake_activations: int = 0
    accel_limited: int = 0
    safe_stops: int = 0
    stale_holds: int = 0

    messages_sent: int = 0
    messages_dropped: int = 0

    start_time: float = field(default_factory=time.time)

    constraint_count: Counter = field(default_factory=Counter)

    def add_allocation(self, constraint_active: dict, safe_stop: bool):
        """Record the outcome of one torque allocation."""
        active = [name for name, flag in constraint_active.items() if flag]
        self.constraint_count.update(active)
        if constraint_active.get('torque'):
            self.torque_saturations += 1
        if constraint_active.get('angle'):
            self.brake_activations += 1
        if constraint_active.get('accel') or constraint_active.get('velocity'):
            self.accel_limited += 1
        if safe_stop:
            self.safe_stops += 1

    def add_message(self, dropped: bool):
        self.messages_sent += 1
        if dropped:
            self.messages_dropped += 1

    @property
    def total_time(self):
        """Calculate and return the total time elapsed since the run started."""
        return time.time() - self.start_time

    @property
    def drop_rate(self):
        return self.messages_dropped / self.messages_sent if self.messages_sent else 0.0

    def get_stats(self):
        """Return a dictionary containing all the stats."""
        return {'Total Ticks': self.total_ticks,
                'Torque Saturations': self.torque_saturations,
                'Brake Activations': self.brake_activations,
                'Acceleration Limited': self.accel_limited,
                'Safe Stops': self.safe_stops,
                'Stale Holds': self.stale_holds,
                'Messages Sent': self.messages_sent,
                'Messages Dropped': self.messages_dropped,
                'Drop Rate': self.drop_rate,
                'Constraint Counts': dict(self.constraint_count),
                }
