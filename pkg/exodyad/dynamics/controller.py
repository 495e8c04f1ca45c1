"""Closed-loop interaction torque control of one exoskeleton.

Per leg and tick: the torque error between desired and measured interaction torque
drives a diagonal virtual admittance that outputs desired accelerations; a
constrained allocation turns them into achievable accelerations; the motor command is
the inverse dynamics of the achieved accelerations plus the reaction of the measured
interaction torque.
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.optimize import minimize

from exodyad.dynamics.model import (DyadState, ExoskeletonModel, JointLimits, LegGeometry, coriolis_vector,
                                    gravity_torque, mass_matrix)
from exodyad.utils.config import BaseConfig
from exodyad.utils.exception import InfeasibleAllocationError
from exodyad.utils.stats import SimStats
from exodyad.utils.types import JointId, LEG_JOINTS, Side, User

STALE_PERIODS = 3
TORQUE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class AdmittanceParams(BaseConfig):
    """Virtual inertia and damping per joint type, ordered (hip, knee)."""

    virtual_inertia_Mv: Tuple[float, float] = (0.5, 0.5)
    virtual_damping_Bv: Tuple[float, float] = (2.0, 2.0)
    safe_stop_damping: float = 5.0

    def __post_init__(self):
        if len(self.virtual_inertia_Mv) != 2 or len(self.virtual_damping_Bv) != 2:
            raise ValueError("admittance parameters need one value per joint (hip, knee)")
        if not all(value > 0 for value in self.virtual_inertia_Mv):
            raise ValueError(f"virtual inertia must be positive, got {self.virtual_inertia_Mv}")
        if not all(value >= 0 for value in self.virtual_damping_Bv):
            raise ValueError(f"virtual damping must be non-negative, got {self.virtual_damping_Bv}")
        if self.safe_stop_damping < 0:
            raise ValueError("safe_stop_damping must be non-negative")


@dataclass
class ControllerState:
    admittance_velocity: Dict[Side, np.ndarray] = field(
        default_factory=lambda: {side: np.zeros(2) for side in Side})
    last_commanded_torque: Dict[Side, np.ndarray] = field(
        default_factory=lambda: {side: np.zeros(2) for side in Side})


@dataclass(frozen=True)
class TorqueAllocationResult:
    commanded_torque: np.ndarray
    achieved_accel: np.ndarray
    constraint_active: Mapping[str, bool]
    safe_stop: bool = False


def measured_interaction_torque(plant_truth, noise_sd: float = 0.0,
                                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Ground-truth interaction torque plus optional zero-mean Gaussian noise."""
    truth = np.asarray(plant_truth, dtype=float)
    if noise_sd <= 0:
        return truth.copy()
    if rng is None:
        raise ValueError("a random generator is required when noise_sd > 0")
    return truth + rng.normal(0.0, noise_sd, size=truth.shape)


def admittance_update(torque_error, params: AdmittanceParams, velocity, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """One step of the virtual admittance Mv qdd + Bv v = torque_error.

    Args:
        torque_error: Desired minus measured interaction torque, (hip, knee)
        params (AdmittanceParams): Virtual inertia and damping
        velocity: Admittance integrator state, (hip, knee)
        dt (float): Control period in seconds

    Returns:
        (Tuple): Desired accelerations and the updated admittance velocity
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    velocity = np.asarray(velocity, dtype=float)
    qdd_des = (np.asarray(torque_error, dtype=float) - np.asarray(params.virtual_damping_Bv) * velocity) \
        / np.asarray(params.virtual_inertia_Mv)
    return qdd_des, velocity + qdd_des * dt


def safe_stop_command(geom: LegGeometry, q, qd, limits: Sequence[JointLimits], damping: float,
                      gravity: float, bias=None) -> np.ndarray:
    """Gravity compensation plus pure joint damping, clipped to the torque limits."""
    torque_max = np.array([limit.torque_max for limit in limits])
    tau = gravity_torque(geom, q, gravity) - damping * np.asarray(qd, dtype=float)
    if bias is not None:
        tau = tau + bias
    return np.clip(tau, -torque_max, torque_max)


def _acceleration_box(q, qd, limits: Sequence[JointLimits], dt: float):
    """Per-joint acceleration bounds from the acceleration limit, the one-step velocity
    lookahead and the one-step angle lookahead (semi-implicit Euler prediction)."""
    lower = {}
    upper = {}
    lower['accel'] = np.array([-limit.accel_max for limit in limits])
    upper['accel'] = -lower['accel']
    velocity_max = np.array([limit.velocity_max for limit in limits])
    lower['velocity'] = (-velocity_max - qd) / dt
    upper['velocity'] = (velocity_max - qd) / dt
    drift = q + dt * qd
    lower['angle'] = (np.array([limit.angle_min for limit in limits]) - drift) / dt ** 2
    upper['angle'] = (np.array([limit.angle_max for limit in limits]) - drift) / dt ** 2
    return lower, upper


def allocate_torques(geom: LegGeometry, q, qd, qdd_des, limits: Sequence[JointLimits], dt: float,
                     gravity: float = 9.81, bias=None, safe_stop_damping: float = 5.0,
                     error_strategy: str = 'log') -> TorqueAllocationResult:
    """Closest achievable accelerations to `qdd_des` under the leg's constraints.

    The box constraints (acceleration, velocity and angle lookahead) are applied by
    projection; when the resulting motor torque still exceeds the torque limit the
    least-squares problem is solved with the torque bounds as linear constraints.
    `bias` is extra torque the motor supplies on top of the inverse dynamics, and the
    torque limit applies to the total. When the angle box conflicts with the other
    boxes the angle box wins. An infeasible torque problem falls back to a damped safe
    stop, or raises InfeasibleAllocationError under the 'raise' strategy.

    Args:
        geom (LegGeometry): Leg parameters
        q, qd, qdd_des: Angles, velocities and desired accelerations, (hip, knee)
        limits: JointLimits for (hip, knee)
        dt (float): Control period used by the lookahead
        gravity (float): Gravitational acceleration
        bias: Extra motor torque, (hip, knee)
        safe_stop_damping (float): Damping of the fallback command
        error_strategy (str): 'raise' turns the safe-stop fallback into an error

    Returns:
        (TorqueAllocationResult): Total motor torque, achieved accelerations and constraint flags
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    qdd_des = np.asarray(qdd_des, dtype=float)
    bias = np.zeros(2) if bias is None else np.asarray(bias, dtype=float)
    torque_max = np.array([limit.torque_max for limit in limits])

    bounds_lower, bounds_upper = _acceleration_box(q, qd, limits, dt)
    lower = np.maximum.reduce([bounds_lower[name] for name in ('accel', 'velocity', 'angle')])
    upper = np.minimum.reduce([bounds_upper[name] for name in ('accel', 'velocity', 'angle')])
    conflict = lower > upper
    lower = np.where(conflict, bounds_lower['angle'], lower)
    upper = np.where(conflict, bounds_upper['angle'], upper)

    achieved = np.clip(qdd_des, lower, upper)
    active = {name: bool(np.any((qdd_des < bounds_lower[name]) | (qdd_des > bounds_upper[name])))
              for name in ('accel', 'velocity', 'angle')}
    active['accel'] = active['accel'] or bool(np.any(conflict))

    M = mass_matrix(geom, q)
    h = coriolis_vector(geom, q, qd) + gravity_torque(geom, q, gravity) + bias
    tau = M @ achieved + h
    active['torque'] = False
    if np.all(np.abs(tau) <= torque_max + TORQUE_TOLERANCE):
        return TorqueAllocationResult(np.clip(tau, -torque_max, torque_max), achieved, active)

    active['torque'] = True
    solution = minimize(lambda x: float((x - qdd_des) @ (x - qdd_des)), achieved,
                        jac=lambda x: 2.0 * (x - qdd_des),
                        bounds=list(zip(lower, upper)),
                        constraints=[{'type': 'ineq', 'fun': lambda x: torque_max - (M @ x + h), 'jac': lambda x: -M},
                                     {'type': 'ineq', 'fun': lambda x: torque_max + (M @ x + h), 'jac': lambda x: M}],
                        method='SLSQP', options={'ftol': 1e-12, 'maxiter': 200})
    if solution.success:
        x = np.clip(solution.x, lower, upper)
        tau = M @ x + h
        if np.all(np.abs(tau) <= torque_max * (1 + 1e-6) + 1e-6):
            tau = np.clip(tau, -torque_max, torque_max)
            return TorqueAllocationResult(tau, np.linalg.solve(M, tau - h), active)

    if error_strategy == 'raise':
        raise InfeasibleAllocationError(f"no accelerations within the torque limits {torque_max.tolist()} "
                                        f"at q={q.tolist()}, qd={qd.tolist()}")
    tau = safe_stop_command(geom, q, qd, limits, safe_stop_damping, gravity, bias)
    return TorqueAllocationResult(tau, np.linalg.solve(M, tau - h), active, safe_stop=True)


class InteractionTorqueController:
    """
    Interaction torque controller of one user's exoskeleton. Each instance owns its state
    and is driven once per control period by the simulation loop.

    Attributes:
        user (User): Whose exoskeleton this controller drives
        model (ExoskeletonModel): Dynamic model used for compensation
        params (AdmittanceParams): Virtual admittance parameters
        dt (float): Control period
        stats (SimStats): Counters shared with the simulation
        error_strategy (str): Passed to the torque allocation
        expected_latency (float): Nominal partner-state delay that does not count toward staleness
        state (ControllerState): Admittance integrator and last command
        stale (bool): Whether the last step held the previous command on a stale state
    """

    logger = structlog.get_logger(__name__)

    def __init__(self, user: User, model: ExoskeletonModel, params: AdmittanceParams, dt: float,
                 stats: Optional[SimStats] = None, error_strategy: str = 'log', expected_latency: float = 0.0):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if expected_latency < 0:
            raise ValueError(f"expected_latency must be non-negative, got {expected_latency}")
        self.user = user
        self.model = model
        self.params = params
        self.dt = dt
        self.stats = stats if stats is not None else SimStats()
        self.error_strategy = error_strategy
        self.expected_latency = expected_latency
        self.state = ControllerState()
        self.stale = False

    def reset(self, state: DyadState):
        """Starts the admittance integrators at the current joint velocities."""
        for side in Side:
            _, qd = state.leg(self.user, side)
            self.state.admittance_velocity[side] = qd.copy()
            self.state.last_commanded_torque[side] = np.zeros(2)
        self.stale = False

    def step(self, state: DyadState, desired: Mapping[JointId, float], measured: Mapping[JointId, float],
             now: float) -> Dict[JointId, float]:
        """One control period: returns the motor torque per joint of this user.

        Args:
            state (DyadState): Snapshot whose own-user entries are used; its oldest entries decide staleness
            desired: Desired interaction torque per joint (at least this user's joints)
            measured: Measured interaction torque per joint of this user
            now (float): Current time, used for the staleness check
        """
        age = now - state.oldest_time - self.expected_latency
        if age > STALE_PERIODS * self.dt + 1e-12:
            if not self.stale:
                self.logger.warning("stale_state_hold", user=self.user.value, now=now, state_time=state.oldest_time)
            self.stale = True
            self.stats.stale_holds += 1
            return self._as_joint_map(self.state.last_commanded_torque)
        self.stale = False

        for side in Side:
            q, qd = state.leg(self.user, side)
            joints = [JointId(self.user, side, joint) for joint in LEG_JOINTS]
            tau_desired = np.array([desired[joint] for joint in joints])
            tau_measured = np.array([measured[joint] for joint in joints])
            velocity = self.state.admittance_velocity[side]
            qdd_des, _ = admittance_update(tau_desired - tau_measured, self.params, velocity, self.dt)
            result = allocate_torques(self.model.leg(side), q, qd, qdd_des, self.model.leg_limits(side), self.dt,
                                      gravity=self.model.gravity, bias=tau_measured,
                                      safe_stop_damping=self.params.safe_stop_damping,
                                      error_strategy=self.error_strategy)
            self.stats.add_allocation(result.constraint_active, result.safe_stop)
            if result.safe_stop:
                self.logger.warning("safe_stop", user=self.user.value, side=side.value, time=now)
            # integrate what was achieved so the admittance does not wind up against a limit
            self.state.admittance_velocity[side] = velocity + result.achieved_accel * self.dt
            self.state.last_commanded_torque[side] = result.commanded_torque
        return self._as_joint_map(self.state.last_commanded_torque)

    def _as_joint_map(self, torques: Mapping[Side, np.ndarray]) -> Dict[JointId, float]:
        return {JointId(self.user, side, joint): float(torques[side][index])
                for side in Side for index, joint in enumerate(LEG_JOINTS)}
