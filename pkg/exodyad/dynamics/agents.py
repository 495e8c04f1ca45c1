"""Scripted human agents wearing the exoskeletons.

The therapist tracks a periodic gait reference with a strength-limited PD policy. The
patient tracks the same reference delayed by its intent delay, with voluntary torque
scaled by weakness on the paretic side and passive joint stiffness and damping.
"""
import math
from dataclasses import dataclass, field
from typing import Mapping, Tuple, Union

import numpy as np

from exodyad.utils.config import BaseConfig
from exodyad.utils.types import Joint, JointKey, JOINT_KEYS, LEG_JOINTS, Side, User

TWO_PI = 2.0 * math.pi

Harmonics = Tuple[Tuple[float, float], ...]


@dataclass(frozen=True)
class JointSeries:
    """angle(phase) = mean + sum_k amplitude_k cos(2 pi k phase - phase_k)."""

    mean: float
    harmonics: Harmonics = ()

    def __post_init__(self):
        if any(amplitude < 0 for amplitude, _ in self.harmonics):
            raise ValueError("harmonic amplitudes must be non-negative")

    def angle(self, phase):
        phase = np.asarray(phase, dtype=float)
        value = np.full(phase.shape, self.mean)
        for order, (amplitude, offset) in enumerate(self.harmonics, start=1):
            value = value + amplitude * np.cos(TWO_PI * order * phase - offset)
        return value

    def slope(self, phase):
        """d angle / d phase."""
        phase = np.asarray(phase, dtype=float)
        value = np.zeros(phase.shape)
        for order, (amplitude, offset) in enumerate(self.harmonics, start=1):
            value = value - TWO_PI * order * amplitude * np.sin(TWO_PI * order * phase - offset)
        return value


# Level treadmill walking at low speed, fitted so that the forward ankle excursion
# peaks at phase 0 (heel strike). Hip spans -10 to 25 deg, knee about 1 to 60 deg. Values in radians.
DEFAULT_HIP_SERIES = JointSeries(mean=0.1308996938995747, harmonics=((0.30543261909900765, 0.0),))
DEFAULT_KNEE_SERIES = JointSeries(mean=0.3839724354387525,
                                  harmonics=((0.39269908169872414, -1.8849555921538759),
                                             (0.267825, 2.370047)))


@dataclass(frozen=True)
class GaitProfile(BaseConfig):
    cadence: float = 0.25
    series: Mapping[Joint, JointSeries] = field(
        default_factory=lambda: {Joint.HIP: DEFAULT_HIP_SERIES, Joint.KNEE: DEFAULT_KNEE_SERIES})

    def __post_init__(self):
        if not self.cadence > 0:
            raise ValueError(f"cadence must be positive, got {self.cadence}")
        missing = [joint.value for joint in LEG_JOINTS if joint not in self.series]
        if missing:
            raise ValueError(f"gait profile missing joints: {', '.join(missing)}")

    @property
    def period(self) -> float:
        return 1.0 / self.cadence


def gait_reference(profile: GaitProfile, phase) -> np.ndarray:
    """Reference angles (hip, knee) at gait phase in [0, 1)."""
    return np.array([profile.series[joint].angle(phase) for joint in LEG_JOINTS])


def gait_reference_velocity(profile: GaitProfile, phase) -> np.ndarray:
    """Reference angular velocities (hip, knee) in rad/s."""
    return np.array([profile.series[joint].slope(phase) * profile.cadence for joint in LEG_JOINTS])


@dataclass(frozen=True)
class TherapistPolicy(BaseConfig):
    profile: GaitProfile = field(default_factory=GaitProfile)
    tracking_kp: float = 150.0
    tracking_kd: float = 15.0
    strength_limit: float = 60.0

    def __post_init__(self):
        if self.tracking_kp < 0 or self.tracking_kd < 0:
            raise ValueError("therapist tracking gains must be non-negative")
        if not self.strength_limit > 0:
            raise ValueError(f"strength_limit must be positive, got {self.strength_limit}")

    def torque(self, reference: Tuple[np.ndarray, np.ndarray], q, qd) -> np.ndarray:
        angle_ref, velocity_ref = reference
        tau = self.tracking_kp * (angle_ref - q) + self.tracking_kd * (velocity_ref - qd)
        return np.clip(tau, -self.strength_limit, self.strength_limit)


@dataclass(frozen=True)
class PassiveJoint(BaseConfig):
    passive_stiffness: float = 2.0
    passive_damping: float = 0.5
    rest_angle: float = 0.0
    rom_limit: float = 1.6

    def __post_init__(self):
        if self.passive_stiffness < 0 or self.passive_damping < 0:
            raise ValueError("passive stiffness and damping must be non-negative")


DEFAULT_PASSIVE = {
    (True, Joint.HIP): PassiveJoint(passive_stiffness=5.0, passive_damping=1.0, rest_angle=0.0, rom_limit=0.8),
    (True, Joint.KNEE): PassiveJoint(passive_stiffness=10.0, passive_damping=8.0, rest_angle=0.08726646259971647,
                                     rom_limit=1.2),
    (False, Joint.HIP): PassiveJoint(passive_stiffness=2.0, passive_damping=0.5, rest_angle=0.0, rom_limit=0.9),
    (False, Joint.KNEE): PassiveJoint(passive_stiffness=2.0, passive_damping=0.5, rest_angle=0.08726646259971647,
                                      rom_limit=1.4),
}


def default_passive(paretic_side: Side) -> Mapping[JointKey, PassiveJoint]:
    return {key: DEFAULT_PASSIVE[(key.side is paretic_side, key.joint)] for key in JOINT_KEYS}


@dataclass(frozen=True)
class PatientModel(BaseConfig):
    """Impaired walker. `weakness` scales voluntary torque of the paretic leg; the other
    leg keeps full voluntary strength."""

    weakness: float = 0.5
    paretic_side: Side = Side.RIGHT
    intent_delay: float = 0.1
    voluntary_kp: float = 100.0
    voluntary_kd: float = 10.0
    rom_stiffness: float = 500.0
    joints: Mapping[JointKey, PassiveJoint] = None

    def __post_init__(self):
        if not 0 <= self.weakness <= 1:
            raise ValueError(f"weakness must lie in [0, 1], got {self.weakness}")
        if self.intent_delay < 0:
            raise ValueError(f"intent_delay must be non-negative, got {self.intent_delay}")
        if self.voluntary_kp < 0 or self.voluntary_kd < 0 or self.rom_stiffness < 0:
            raise ValueError("patient gains must be non-negative")
        if self.joints is None:
            object.__setattr__(self, 'joints', default_passive(self.paretic_side))
        missing = [key.label for key in JOINT_KEYS if key not in self.joints]
        if missing:
            raise ValueError(f"patient joint parameters missing for: {', '.join(missing)}")

    def strength(self, side: Side) -> float:
        return self.weakness if side is self.paretic_side else 1.0

    def torque(self, reference: Tuple[np.ndarray, np.ndarray], q, qd, side: Side) -> np.ndarray:
        """Voluntary PD toward the (already delayed) reference plus passive joint torques."""
        angle_ref, velocity_ref = reference
        q = np.asarray(q, dtype=float)
        qd = np.asarray(qd, dtype=float)
        tau = self.strength(side) * (self.voluntary_kp * (angle_ref - q) + self.voluntary_kd * (velocity_ref - qd))
        for index, joint in enumerate(LEG_JOINTS):
            passive = self.joints[JointKey(side, joint)]
            tau[index] -= passive.passive_stiffness * (q[index] - passive.rest_angle) \
                + passive.passive_damping * qd[index]
            if q[index] > passive.rom_limit:
                tau[index] -= self.rom_stiffness * (q[index] - passive.rom_limit)
        return tau


Agent = Union[TherapistPolicy, PatientModel]


def human_torque(agent: Agent, reference: Tuple[np.ndarray, np.ndarray], q, qd, side: Side) -> np.ndarray:
    """Joint torques (hip, knee) the wearer applies to one leg."""
    if isinstance(agent, TherapistPolicy):
        return agent.torque(reference, np.asarray(q, dtype=float), np.asarray(qd, dtype=float))
    return agent.torque(reference, q, qd, side)


# Phase offset of each leg within the stride; mirrored legs share the same offset.
LEG_PHASE_OFFSET = {
    (User.THERAPIST, Side.LEFT): 0.0,
    (User.THERAPIST, Side.RIGHT): 0.5,
    (User.PATIENT, Side.RIGHT): 0.0,
    (User.PATIENT, Side.LEFT): 0.5,
}


def leg_phase(profile: GaitProfile, time, user: User, side: Side):
    """Gait phase in [0, 1) of a leg at `time` seconds of that user's own clock."""
    return np.mod(profile.cadence * np.asarray(time, dtype=float) + LEG_PHASE_OFFSET[(user, side)], 1.0)
