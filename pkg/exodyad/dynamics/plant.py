"""Fixed-step simulation of the coupled therapist and patient exoskeletons."""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.signal import find_peaks
from tqdm import tqdm

from exodyad.dynamics.agents import (GaitProfile, PatientModel, TherapistPolicy, gait_reference,
                                     gait_reference_velocity, human_torque, leg_phase)
from exodyad.dynamics.bus import BusConfig, MessageBus
from exodyad.dynamics.controller import AdmittanceParams, InteractionTorqueController, measured_interaction_torque
from exodyad.dynamics.coupling import (DyadCouplingConfig, StiffnessSchedule, gains_for_block, ramp_gains,
                                       render_for_user, spring_energy, damper_power)
from exodyad.dynamics.model import (DyadState, ExoskeletonModel, LegGeometry, JointState, forward_dynamics,
                                    mass_matrix, coriolis_vector, gravity_torque, mechanical_energy)
from exodyad.utils.config import AnalysisConfig, BaseConfig
from exodyad.utils.exception import DivergenceError, NoStridesError, ERROR_STRATEGIES
from exodyad.utils.helper import FLOAT_FORMAT
from exodyad.utils.stats import SimStats
from exodyad.utils.types import ALL_JOINTS, JointId, LEG_JOINTS, PathType, Side, User

logger = structlog.get_logger(__name__)

DEFAULT_DT = 1.0 / 333.0
VELOCITY_BOUND = 100.0

JOINT_QUANTITIES = (('angle', 'rad'), ('velocity', 'rad_s'), ('desired_torque', 'Nm'),
                    ('measured_torque', 'Nm'), ('human_torque', 'Nm'), ('motor_torque', 'Nm'))
LEGS = tuple((user, side) for user in User for side in Side)


def joint_column(joint: JointId, quantity: str) -> str:
    unit = dict(JOINT_QUANTITIES)[quantity]
    return f"{joint.label}_{quantity}_{unit}"


def leg_column(user: User, side: Side, quantity: str) -> str:
    return f"{user.value}_{side.value}_{quantity}"


SIMLOG_COLUMNS = (('time_s', 'tick', 'block')
                  + tuple(joint_column(joint, quantity) for joint in ALL_JOINTS for quantity, _ in JOINT_QUANTITIES)
                  + tuple(leg_column(user, side, quantity) for user, side in LEGS
                          for quantity in ('phase', 'heel_strike'))
                  + tuple(f"{user.value}_partner_time_s" for user in User)
                  + tuple(f"{user.value}_stale" for user in User))


@dataclass(frozen=True)
class SimConfig(BaseConfig):
    coupling: DyadCouplingConfig
    dt: float = DEFAULT_DT
    duration: float = 60.0
    seed: int = 1
    schedule: Optional[StiffnessSchedule] = None
    block_duration: Optional[float] = None
    gain_ramp_time: float = 0.5
    bus: BusConfig = field(default_factory=BusConfig)
    models: Mapping[User, ExoskeletonModel] = field(
        default_factory=lambda: {user: ExoskeletonModel() for user in User})
    patient: PatientModel = field(default_factory=PatientModel)
    therapist: TherapistPolicy = field(default_factory=TherapistPolicy)
    admittance: AdmittanceParams = field(default_factory=AdmittanceParams)
    measurement_noise_sd: float = 0.0
    patient_id: str = 'SIM'
    condition: str = 'TEPI'
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    display_progress_bar: bool = False
    error_strategy: str = 'log'

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.duration >= self.dt:
            raise ValueError(f"duration must cover at least one tick, got {self.duration}")
        if abs(self.duration / self.dt - self.n_ticks) > 1.0:
            raise ValueError("duration must be a whole number of ticks")
        if self.block_duration is not None and not self.block_duration > 0:
            raise ValueError(f"block_duration must be positive, got {self.block_duration}")
        if self.gain_ramp_time < 0 or self.measurement_noise_sd < 0:
            raise ValueError("gain_ramp_time and measurement_noise_sd must be non-negative")
        if self.error_strategy not in ERROR_STRATEGIES:
            raise ValueError(f"error_strategy must be one of {ERROR_STRATEGIES}")
        patient_model = self.models[User.PATIENT]
        for key, passive in self.patient.joints.items():
            limits = patient_model.limits[key]
            if not limits.angle_min <= passive.rom_limit <= limits.angle_max:
                raise ValueError(f"patient {key.label} rom_limit {passive.rom_limit} outside joint limits "
                                 f"[{limits.angle_min}, {limits.angle_max}]")

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def n_blocks(self) -> int:
        return len(self.schedule) if self.schedule is not None else 1

    @property
    def effective_block_duration(self) -> float:
        if self.block_duration is not None:
            return self.block_duration
        return self.n_ticks * self.dt / self.n_blocks

    def block_at(self, time: float) -> int:
        return min(int(time // self.effective_block_duration) + 1, self.n_blocks)

    def block_coupling(self, block: int) -> DyadCouplingConfig:
        if self.schedule is None:
            return self.coupling
        return gains_for_block(self.schedule, block, self.coupling)


def coupling_at(config: SimConfig, time: float) -> Tuple[int, DyadCouplingConfig]:
    """Block index and effective coupling at `time`, ramping linearly after each block change."""
    block = config.block_at(time)
    target = config.block_coupling(block)
    if block == 1:
        return block, target
    elapsed = time - (block - 1) * config.effective_block_duration
    return block, ramp_gains(config.block_coupling(block - 1), target, elapsed, config.gain_ramp_time)


def true_interaction_torque(human_torque_applied) -> np.ndarray:
    """Torque the exoskeleton transmits to the limb: the reaction of the wearer's joint torque."""
    return -np.asarray(human_torque_applied, dtype=float)


class LegPlant:
    """One lumped human-plus-exoskeleton leg integrated with semi-implicit Euler.

    Locked joints keep zero velocity; the remaining joints move under the reduced dynamics.
    """

    def __init__(self, geom: LegGeometry, q, qd=(0.0, 0.0), gravity: float = 9.81,
                 locked: Tuple[bool, bool] = (False, False)):
        self.geom = geom
        self.gravity = gravity
        self.q = np.array(q, dtype=float)
        self.qd = np.array(qd, dtype=float)
        self.locked = np.array(locked, dtype=bool)
        self.qd[self.locked] = 0.0
        self.last_accel = np.zeros(2)

    def acceleration(self, tau) -> np.ndarray:
        if not self.locked.any():
            return forward_dynamics(self.geom, self.q, self.qd, tau, self.gravity)
        free = ~self.locked
        M = mass_matrix(self.geom, self.q)
        bias = coriolis_vector(self.geom, self.q, self.qd) + gravity_torque(self.geom, self.q, self.gravity)
        accel = np.zeros(2)
        if free.any():
            accel[free] = np.linalg.solve(M[np.ix_(free, free)], (np.asarray(tau) - bias)[free])
        return accel

    def advance(self, tau, dt: float):
        """Velocity first, then position."""
        self.last_accel = self.acceleration(tau)
        self.qd = self.qd + self.last_accel * dt
        self.q = self.q + self.qd * dt

    def energy(self) -> float:
        return sum(mechanical_energy(self.geom, self.q, self.qd, self.gravity))


@dataclass
class SimLog:
    """Per-tick simulation records with a fixed column schema."""

    columns: Tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.shape[1] != len(self.columns):
            raise ValueError(f"log has {self.data.shape[1]} columns but {len(self.columns)} names")
        self._index = {name: index for index, name in enumerate(self.columns)}

    def __len__(self):
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self._index[name]]

    def joint(self, joint: JointId, quantity: str) -> np.ndarray:
        return self.column(joint_column(joint, quantity))

    def leg(self, user: User, side: Side, quantity: str = 'angle') -> np.ndarray:
        """(n, 2) array of a leg quantity ordered (hip, knee)."""
        return np.column_stack([self.joint(JointId(user, side, joint), quantity) for joint in LEG_JOINTS])

    @property
    def time(self) -> np.ndarray:
        return self.column('time_s')

    def heel_strikes(self, user: User, side: Side) -> np.ndarray:
        return np.flatnonzero(self.column(leg_column(user, side, 'heel_strike')) > 0.5)

    def to_csv(self, path: PathType):
        np.savetxt(path, self.data, fmt=FLOAT_FORMAT, delimiter=',', header=','.join(self.columns), comments='')

    @classmethod
    def from_csv(cls, path: PathType) -> 'SimLog':
        with open(path) as f:
            header = f.readline().strip().split(',')
        data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
        return cls(tuple(header), data)


class Simulation:
    """
    Dyad simulation driven one control tick at a time.

    Attributes:
        config (SimConfig): Resolved configuration
        stats (SimStats): Run counters
        tick (int): Index of the next tick to simulate
    """

    logger = structlog.get_logger(__name__)

    def __init__(self, config: SimConfig):
        self.config = config
        self.dt = config.dt
        self.stats = SimStats()
        self.rng = np.random.default_rng(config.seed)
        self.bus = MessageBus(config.bus, config.dt, self.stats)
        latency = self.bus.latency_ticks * config.dt
        self.controllers = {user: InteractionTorqueController(user, config.models[user], config.admittance,
                                                              config.dt, self.stats, config.error_strategy, latency)
                            for user in User}
        self.agents = {User.THERAPIST: config.therapist, User.PATIENT: config.patient}
        self.tick = 0
        self.plants: Dict[Tuple[User, Side], LegPlant] = {}
        for user, side in LEGS:
            angle, velocity = self.reference(user, side, 0.0)
            model = config.models[user]
            self.plants[(user, side)] = LegPlant(model.leg(side), angle, velocity, model.gravity)
        self._phase = {leg: self.phase(*leg, 0.0) for leg in LEGS}
        self._rows: List[List[float]] = []
        initial = self.state()
        for user in User:
            self.bus.prime(user.value, 0, self._snapshot(user))
            self.controllers[user].reset(initial)

    @property
    def profile(self) -> GaitProfile:
        return self.config.therapist.profile

    def user_time(self, user: User, time: float) -> float:
        return time - self.config.patient.intent_delay if user is User.PATIENT else time

    def phase(self, user: User, side: Side, time: float) -> float:
        return float(leg_phase(self.profile, self.user_time(user, time), user, side))

    def reference(self, user: User, side: Side, time: float) -> Tuple[np.ndarray, np.ndarray]:
        phase = self.phase(user, side, time)
        return gait_reference(self.profile, phase), gait_reference_velocity(self.profile, phase)

    def state(self) -> DyadState:
        legs = {leg: (plant.q, plant.qd) for leg, plant in self.plants.items()}
        return DyadState.from_legs(self.tick * self.dt, legs)

    def _snapshot(self, user: User):
        return {side: (self.plants[(user, side)].q.copy(), self.plants[(user, side)].qd.copy()) for side in Side}

    def _view(self, user: User, time: float, partner_legs, partner_time: float) -> DyadState:
        legs = {(user, side): (self.plants[(user, side)].q, self.plants[(user, side)].qd) for side in Side}
        legs.update({(user.partner, side): partner_legs[side] for side in Side})
        return DyadState.from_legs(time, legs, partner_time)

    def step(self) -> DyadState:
        """Advances the dyad by one tick and appends the tick's record to the log."""
        n = self.tick
        time = n * self.dt
        block, coupling = coupling_at(self.config, time)

        for user in User:
            self.bus.publish(user.value, n, self._snapshot(user))
        views = {}
        partner_time = {}
        for user in User:
            sent, partner_legs = self.bus.receive(user.partner.value, n)
            partner_time[user] = sent * self.dt
            views[user] = self._view(user, time, partner_legs, partner_time[user])

        desired: Dict[JointId, float] = {}
        for user in User:
            desired.update(render_for_user(views[user], coupling, user))

        human: Dict[Tuple[User, Side], np.ndarray] = {}
        measured: Dict[JointId, float] = {}
        for user, side in LEGS:
            plant = self.plants[(user, side)]
            human[(user, side)] = human_torque(self.agents[user], self.reference(user, side, time),
                                               plant.q, plant.qd, side)
            truth = true_interaction_torque(human[(user, side)])
            noisy = measured_interaction_torque(truth, self.config.measurement_noise_sd, self.rng)
            for index, joint in enumerate(LEG_JOINTS):
                measured[JointId(user, side, joint)] = float(noisy[index])

        motor: Dict[JointId, float] = {}
        for user in User:
            motor.update(self.controllers[user].step(views[user], desired, measured, time))

        phases = {leg: self.phase(*leg, time) for leg in LEGS}
        row = [time, float(n), float(block)]
        for joint in ALL_JOINTS:
            plant = self.plants[(joint.user, joint.side)]
            index = LEG_JOINTS.index(joint.joint)
            row += [plant.q[index], plant.qd[index], desired[joint], measured[joint],
                    human[(joint.user, joint.side)][index], motor[joint]]
        for leg in LEGS:
            heel_strike = n > 0 and phases[leg] < self._phase[leg]
            row += [phases[leg], 1.0 if heel_strike else 0.0]
        row += [partner_time[user] for user in User]
        row += [1.0 if self.controllers[user].stale else 0.0 for user in User]
        self._rows.append(row)
        self._phase = phases

        for user, side in LEGS:
            tau_motor = np.array([motor[JointId(user, side, joint)] for joint in LEG_JOINTS])
            plant = self.plants[(user, side)]
            plant.advance(human[(user, side)] + tau_motor, self.dt)
            if not (np.all(np.isfinite(plant.q)) and np.all(np.isfinite(plant.qd))
                    and np.all(np.abs(plant.q) <= math.pi) and np.all(np.abs(plant.qd) <= VELOCITY_BOUND)):
                self.logger.error("simulation_diverged", tick=n, user=user.value, side=side.value,
                                  angle=plant.q.tolist(), velocity=plant.qd.tolist())
                raise DivergenceError(f"{user.value} {side.value} leg diverged", tick=n)

        self.tick += 1
        self.stats.total_ticks += 1
        return self.state()

    def run(self) -> SimLog:
        """Runs the remaining ticks of the configured duration."""
        ticks = range(self.tick, self.config.n_ticks)
        if self.config.display_progress_bar:
            ticks = tqdm(ticks, desc='simulate', unit='tick')
        for _ in ticks:
            self.step()
        self.logger.info("simulation_finished", ticks=self.tick, **{key.lower().replace(' ', '_'): value
                                                                     for key, value in self.stats.get_stats().items()})
        return self.log()

    def log(self) -> SimLog:
        return SimLog(SIMLOG_COLUMNS, np.array(self._rows, dtype=float).reshape(-1, len(SIMLOG_COLUMNS)))


def run_simulation(config: SimConfig) -> Tuple[SimLog, SimStats]:
    simulation = Simulation(config)
    return simulation.run(), simulation.stats


@dataclass(frozen=True)
class EnergyAudit:
    """Energy bookkeeping of a run, in joules."""

    mechanical_change: float
    human_work: float
    motor_work: float
    injected_work: float
    spring_change: float
    medium_work: float
    damper_work: float

    @property
    def residual(self) -> float:
        return self.mechanical_change - self.human_work - self.motor_work

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / self.injected_work if self.injected_work > 0 else 0.0

    @property
    def medium_residual(self) -> float:
        """Spring energy change plus medium work minus damper work; zero for an ideal medium."""
        return self.spring_change + self.medium_work - self.damper_work


def energy_audit(log: SimLog, config: SimConfig) -> EnergyAudit:
    """Balances mechanical energy against the work of human and motor torques.

    Work over a tick uses the mean of the tick's start and end velocities, which matches
    the semi-implicit integration to second order.
    """
    if len(log) < 2:
        raise ValueError("energy audit needs at least two ticks")
    dt = config.dt
    mechanical = human_work = motor_work = injected = 0.0
    for user, side in LEGS:
        model = config.models[user]
        geom = model.leg(side)
        q = log.leg(user, side, 'angle')
        qd = log.leg(user, side, 'velocity')
        start = sum(mechanical_energy(geom, q[0], qd[0], model.gravity))
        end = sum(mechanical_energy(geom, q[-1], qd[-1], model.gravity))
        mechanical += end - start
        mean_velocity = 0.5 * (qd[:-1] + qd[1:])
        human_power = np.sum(log.leg(user, side, 'human_torque')[:-1] * mean_velocity, axis=1)
        motor_power = np.sum(log.leg(user, side, 'motor_torque')[:-1] * mean_velocity, axis=1)
        human_work += float(np.sum(human_power) * dt)
        motor_work += float(np.sum(motor_power) * dt)
        injected += float((np.sum(np.abs(human_power)) + np.sum(np.abs(motor_power))) * dt)

    states = [_logged_state(log, n) for n in range(len(log))]
    couplings = [coupling_at(config, state.time)[1] for state in states]
    spring = [spring_energy(state, coupling) for state, coupling in zip(states, couplings)]
    medium_work = 0.0
    damper_work = 0.0
    for n in range(len(log) - 1):
        for joint in ALL_JOINTS:
            medium_work += log.joint(joint, 'desired_torque')[n] * (states[n + 1][joint].angle - states[n][joint].angle)
        damper_work += damper_power(states[n], couplings[n]) * dt
    return EnergyAudit(mechanical_change=mechanical, human_work=human_work, motor_work=motor_work,
                       injected_work=injected, spring_change=spring[-1] - spring[0],
                       medium_work=medium_work, damper_work=damper_work)


def _logged_state(log: SimLog, n: int) -> DyadState:
    return DyadState(float(log.time[n]), {joint: JointState(float(log.joint(joint, 'angle')[n]),
                                                            float(log.joint(joint, 'velocity')[n]))
                                          for joint in ALL_JOINTS})


def phase_heel_strikes(phase) -> np.ndarray:
    """Ticks where the gait phase wraps through zero."""
    phase = np.asarray(phase, dtype=float)
    return np.flatnonzero(np.diff(phase) < 0) + 1


def trajectory_heel_strikes(forward_position, sample_rate_hz: float, nominal_cycle_s: float,
                            prominence: float = 0.02, min_spacing_fraction: float = 0.5) -> np.ndarray:
    """Heel strikes as local maxima of the forward ankle position.

    Args:
        forward_position: Ankle x in the treadmill frame, meters
        sample_rate_hz (float): Sampling rate
        nominal_cycle_s (float): Expected stride duration
        prominence (float): Minimum peak prominence, meters
        min_spacing_fraction (float): Minimum spacing between events as a fraction of the cycle

    Returns:
        (np.ndarray): Sample indices of the detected events
    """
    distance = max(int(min_spacing_fraction * nominal_cycle_s * sample_rate_hz), 1)
    peaks, _ = find_peaks(np.asarray(forward_position, dtype=float), prominence=prominence, distance=distance)
    return peaks


def detect_heel_strike(forward_position=None, phase=None, sample_rate_hz: Optional[float] = None,
                       nominal_cycle_s: Optional[float] = None, **kwargs) -> np.ndarray:
    """Phase wraps when a phase source is given, otherwise the trajectory detector."""
    if phase is not None:
        return phase_heel_strikes(phase)
    if forward_position is None or sample_rate_hz is None or nominal_cycle_s is None:
        raise ValueError("trajectory detection needs the forward position, sample rate and nominal cycle")
    return trajectory_heel_strikes(forward_position, sample_rate_hz, nominal_cycle_s, **kwargs)


def strides_from_events(events: Sequence[int]) -> List[Tuple[int, int]]:
    """Consecutive event pairs; fewer than two events form no stride."""
    events = [int(event) for event in events]
    if len(events) < 2:
        raise NoStridesError(f"found {len(events)} heel strike(s); at least 2 are needed for a stride")
    return list(zip(events[:-1], events[1:]))
