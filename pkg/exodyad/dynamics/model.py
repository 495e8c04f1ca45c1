"""Planar two-link leg model shared by both exoskeletons.

Conventions: the hip angle is measured from the downward vertical and is positive
forward; the knee angle is flexion-positive, so the shank's absolute angle is
``hip - knee``. Joint torques are conjugate to these angles. The trunk is fixed to
the treadmill frame and each segment lumps the human limb with its exoskeleton link.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from exodyad.utils.config import BaseConfig
from exodyad.utils.exception import StructuralError
from exodyad.utils.types import ALL_JOINTS, Joint, JointId, JointKey, JOINT_KEYS, Side, User

DEFAULT_GRAVITY = 9.81


@dataclass(frozen=True)
class LegGeometry(BaseConfig):
    """Segment parameters of one leg. The defaults are lumped human-plus-device estimates,
    not measured values of any particular exoskeleton."""

    thigh_length: float = 0.44
    shank_length: float = 0.43
    thigh_mass: float = 10.0
    shank_mass: float = 5.0
    thigh_com_ratio: float = 0.43
    shank_com_ratio: float = 0.42
    thigh_inertia: float = 0.16
    shank_inertia: float = 0.09

    def __post_init__(self):
        for name in ('thigh_length', 'shank_length', 'thigh_mass', 'shank_mass', 'thigh_inertia', 'shank_inertia'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value}")
        for name in ('thigh_com_ratio', 'shank_com_ratio'):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")

    @property
    def thigh_com(self) -> float:
        return self.thigh_com_ratio * self.thigh_length

    @property
    def shank_com(self) -> float:
        return self.shank_com_ratio * self.shank_length


@dataclass(frozen=True)
class JointLimits(BaseConfig):
    angle_min: float
    angle_max: float
    velocity_max: float = 6.0
    torque_max: float = 100.0
    accel_max: float = 300.0

    def __post_init__(self):
        if not self.angle_min < self.angle_max:
            raise ValueError(f"angle_min ({self.angle_min}) must be below angle_max ({self.angle_max})")
        for name in ('velocity_max', 'torque_max', 'accel_max'):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


DEFAULT_LIMITS = {
    Joint.HIP: JointLimits(angle_min=-0.5, angle_max=2.0),
    Joint.KNEE: JointLimits(angle_min=-0.05, angle_max=2.0, velocity_max=8.0),
}


def default_limits() -> Dict[JointKey, JointLimits]:
    return {key: DEFAULT_LIMITS[key.joint] for key in JOINT_KEYS}


@dataclass(frozen=True)
class ExoskeletonModel(BaseConfig):
    left: LegGeometry = field(default_factory=LegGeometry)
    right: LegGeometry = field(default_factory=LegGeometry)
    limits: Mapping[JointKey, JointLimits] = field(default_factory=default_limits)
    gravity: float = DEFAULT_GRAVITY

    def __post_init__(self):
        missing = [key.label for key in JOINT_KEYS if key not in self.limits]
        if missing:
            raise StructuralError(f"joint limits missing for: {', '.join(missing)}")
        if not self.gravity > 0:
            raise ValueError(f"gravity must be positive, got {self.gravity}")

    def leg(self, side: Side) -> LegGeometry:
        return self.left if side is Side.LEFT else self.right

    def leg_limits(self, side: Side) -> Tuple[JointLimits, JointLimits]:
        return self.limits[JointKey(side, Joint.HIP)], self.limits[JointKey(side, Joint.KNEE)]


def default_model() -> ExoskeletonModel:
    return ExoskeletonModel()


@dataclass(frozen=True)
class JointState:
    angle: float
    velocity: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.angle) and math.isfinite(self.velocity)):
            raise ValueError(f"joint state must be finite, got ({self.angle}, {self.velocity})")
        if abs(self.angle) > math.pi:
            raise ValueError(f"joint angle must satisfy |angle| <= pi, got {self.angle}")


@dataclass(frozen=True)
class DyadState:
    """Joint states of both exoskeletons at one instant.

    ``partner_time`` is set on a controller's view when the partner's entries come from an
    older bus message, and holds that message's send time.
    """

    time: float
    states: Mapping[JointId, JointState]
    partner_time: Optional[float] = None

    def __post_init__(self):
        missing = [joint.label for joint in ALL_JOINTS if joint not in self.states]
        if missing:
            raise StructuralError(f"dyad state missing joints: {', '.join(missing)}")

    @property
    def oldest_time(self) -> float:
        """Time of the oldest entries in the snapshot."""
        if self.partner_time is None:
            return self.time
        return min(self.time, self.partner_time)

    def __getitem__(self, joint: JointId) -> JointState:
        return self.states[joint]

    def leg(self, user: User, side: Side) -> Tuple[np.ndarray, np.ndarray]:
        """(angles, velocities) of one leg ordered (hip, knee)."""
        hip = self.states[JointId(user, side, Joint.HIP)]
        knee = self.states[JointId(user, side, Joint.KNEE)]
        return np.array([hip.angle, knee.angle]), np.array([hip.velocity, knee.velocity])

    @classmethod
    def from_legs(cls, time: float, legs: Mapping[Tuple[User, Side], Tuple[np.ndarray, np.ndarray]],
                  partner_time: Optional[float] = None) -> 'DyadState':
        states = {}
        for (user, side), (q, qd) in legs.items():
            states[JointId(user, side, Joint.HIP)] = JointState(float(q[0]), float(qd[0]))
            states[JointId(user, side, Joint.KNEE)] = JointState(float(q[1]), float(qd[1]))
        return cls(time, states, partner_time)


def _check_finite(*values):
    if not all(np.all(np.isfinite(value)) for value in values):
        raise ValueError("leg state must be finite")


def knee_position(hip_angle, geom: LegGeometry) -> np.ndarray:
    """Knee joint position (x forward, y up) relative to the hip, in meters."""
    hip_angle = np.asarray(hip_angle, dtype=float)
    return np.stack([geom.thigh_length * np.sin(hip_angle), -geom.thigh_length * np.cos(hip_angle)], axis=-1)


def ankle_position(hip_angle, knee_angle, geom: LegGeometry) -> np.ndarray:
    """Ankle position (x forward, y up) relative to the hip joint, in meters.

    Accepts scalars or equal-shaped arrays; the result has a trailing axis of size 2.
    """
    hip_angle = np.asarray(hip_angle, dtype=float)
    knee_angle = np.asarray(knee_angle, dtype=float)
    _check_finite(hip_angle, knee_angle)
    shank_angle = hip_angle - knee_angle
    x = geom.thigh_length * np.sin(hip_angle) + geom.shank_length * np.sin(shank_angle)
    y = -geom.thigh_length * np.cos(hip_angle) - geom.shank_length * np.cos(shank_angle)
    return np.stack([x, y], axis=-1)


def ankle_trajectory(hip_angles, knee_angles, geom: LegGeometry) -> np.ndarray:
    """Vectorized forward kinematics, shape (n, 2)."""
    return ankle_position(np.atleast_1d(hip_angles), np.atleast_1d(knee_angles), geom)


def mass_matrix(geom: LegGeometry, q) -> np.ndarray:
    a = geom.thigh_inertia + geom.thigh_mass * geom.thigh_com ** 2 + geom.shank_mass * geom.thigh_length ** 2
    b = geom.shank_inertia + geom.shank_mass * geom.shank_com ** 2
    c = geom.shank_mass * geom.thigh_length * geom.shank_com * math.cos(q[1])
    return np.array([[a + b + 2.0 * c, -(b + c)],
                     [-(b + c), b]])


def coriolis_vector(geom: LegGeometry, q, qd) -> np.ndarray:
    """C(q, qd) qd."""
    s = geom.shank_mass * geom.thigh_length * geom.shank_com * math.sin(q[1])
    return np.array([s * (qd[1] ** 2 - 2.0 * qd[0] * qd[1]), s * qd[0] ** 2])


def gravity_torque(geom: LegGeometry, q, gravity: float = DEFAULT_GRAVITY) -> np.ndarray:
    shank = geom.shank_mass * geom.shank_com * math.sin(q[0] - q[1])
    hip = gravity * (geom.thigh_mass * geom.thigh_com * math.sin(q[0])
                     + geom.shank_mass * geom.thigh_length * math.sin(q[0]) + shank)
    return np.array([hip, -gravity * shank])


def inverse_dynamics(geom: LegGeometry, q, qd, qdd, gravity: float = DEFAULT_GRAVITY) -> np.ndarray:
    """Joint torques (hip, knee) realizing the given motion: M(q) qdd + C(q, qd) qd + g(q)."""
    _check_finite(q, qd, qdd)
    return mass_matrix(geom, q) @ np.asarray(qdd, dtype=float) + coriolis_vector(geom, q, qd) \
        + gravity_torque(geom, q, gravity)


def forward_dynamics(geom: LegGeometry, q, qd, tau, gravity: float = DEFAULT_GRAVITY) -> np.ndarray:
    """Joint accelerations produced by the net applied torque."""
    bias = coriolis_vector(geom, q, qd) + gravity_torque(geom, q, gravity)
    return np.linalg.solve(mass_matrix(geom, q), np.asarray(tau, dtype=float) - bias)


def mechanical_energy(geom: LegGeometry, q, qd, gravity: float = DEFAULT_GRAVITY) -> Tuple[float, float]:
    """(kinetic, potential) energy; potential is zero at hip height."""
    qd = np.asarray(qd, dtype=float)
    kinetic = 0.5 * float(qd @ mass_matrix(geom, q) @ qd)
    potential = -gravity * (geom.thigh_mass * geom.thigh_com * math.cos(q[0])
                            + geom.shank_mass * (geom.thigh_length * math.cos(q[0])
                                                 + geom.shank_com * math.cos(q[0] - q[1])))
    return kinetic, potential


def nominal_inertia(geom: LegGeometry) -> Dict[Joint, float]:
    """Diagonal of the mass matrix with the leg straight."""
    matrix = mass_matrix(geom, (0.0, 0.0))
    return {Joint.HIP: float(matrix[0, 0]), Joint.KNEE: float(matrix[1, 1])}


def leg_gravity_scale(geom: LegGeometry, gravity: float = DEFAULT_GRAVITY) -> float:
    """Hip torque needed to hold the straight leg horizontal."""
    return float(gravity_torque(geom, (math.pi / 2, 0.0), gravity)[0])
