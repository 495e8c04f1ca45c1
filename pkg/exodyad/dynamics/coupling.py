"""Virtual interaction medium between the therapist's and the patient's exoskeletons.

Each leg of one user is coupled to the opposite leg of the other user through a
spring-damper rendered as desired interaction torques.
"""
import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Tuple

import structlog

from exodyad.dynamics.model import DyadState
from exodyad.utils.config import BaseConfig
from exodyad.utils.exception import StructuralError
from exodyad.utils.types import ALL_JOINTS, Joint, JointId, JointKey, JOINT_KEYS, PathType, Side, User

logger = structlog.get_logger(__name__)

DEFAULT_STIFFNESS_CEILING = 100.0
DEFAULT_ZETA = 0.25
DEFAULT_RAMP_TIME = 0.5


@dataclass(frozen=True)
class CouplingGains(BaseConfig):
    stiffness_K: float = 0.0
    damping_B: float = 0.0

    def __post_init__(self):
        for name in ('stiffness_K', 'damping_B'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {value}")


def mirror_map(user: User, side: Side) -> Tuple[User, Side]:
    """The partner user and side a leg is coupled to."""
    return user.partner, side.opposite


def mirror_joint(joint: JointId) -> JointId:
    partner, side = mirror_map(joint.user, joint.side)
    return JointId(partner, side, joint.joint)


def damping_for(K: float, zeta: float, I_nom: float) -> float:
    """Damping keeping a constant damping ratio: B = 2 zeta sqrt(K I_nom)."""
    if K < 0:
        raise ValueError(f"stiffness must be non-negative, got {K}")
    if zeta <= 0 or I_nom <= 0:
        raise ValueError(f"zeta and I_nom must be positive, got zeta={zeta}, I_nom={I_nom}")
    return 2.0 * zeta * math.sqrt(K * I_nom)


@dataclass(frozen=True)
class DyadCouplingConfig(BaseConfig):
    therapist_gains: Mapping[JointKey, CouplingGains]
    patient_gains: Mapping[JointKey, CouplingGains]
    nominal_inertia: Mapping[Joint, float]
    damping_ratio_zeta: float = DEFAULT_ZETA
    stiffness_ceiling: float = DEFAULT_STIFFNESS_CEILING

    def __post_init__(self):
        if not 0 < self.damping_ratio_zeta <= 2:
            raise ValueError(f"damping_ratio_zeta must lie in (0, 2], got {self.damping_ratio_zeta}")
        for joint in (Joint.HIP, Joint.KNEE):
            if not self.nominal_inertia.get(joint, 0) > 0:
                raise ValueError(f"nominal inertia for {joint.value} must be positive")
        for user, gains in ((User.THERAPIST, self.therapist_gains), (User.PATIENT, self.patient_gains)):
            missing = [key.label for key in JOINT_KEYS if key not in gains]
            if missing:
                raise StructuralError(f"{user.value} coupling gains missing for: {', '.join(missing)}")
            for key, gain in gains.items():
                if gain.stiffness_K > self.stiffness_ceiling:
                    raise ValueError(f"{user.value} {key.label} stiffness {gain.stiffness_K} exceeds "
                                     f"the safety ceiling {self.stiffness_ceiling}")

    def gains(self, user: User) -> Mapping[JointKey, CouplingGains]:
        return self.therapist_gains if user is User.THERAPIST else self.patient_gains

    @classmethod
    def uniform(cls, K_t: float, K_p: float, nominal_inertia: Mapping[Joint, float],
                damping_ratio_zeta: float = DEFAULT_ZETA,
                stiffness_ceiling: float = DEFAULT_STIFFNESS_CEILING) -> 'DyadCouplingConfig':
        """Same stiffness at hip and knee per user, damping from the constant-ratio rule."""
        return cls(therapist_gains=uniform_gains(K_t, damping_ratio_zeta, nominal_inertia),
                   patient_gains=uniform_gains(K_p, damping_ratio_zeta, nominal_inertia),
                   nominal_inertia=dict(nominal_inertia),
                   damping_ratio_zeta=damping_ratio_zeta,
                   stiffness_ceiling=stiffness_ceiling)


def uniform_gains(K: float, zeta: float, nominal_inertia: Mapping[Joint, float]) -> Dict[JointKey, CouplingGains]:
    return {key: CouplingGains(K, damping_for(K, zeta, nominal_inertia[key.joint])) for key in JOINT_KEYS}


def transparent_config(nominal_inertia: Mapping[Joint, float], **kwargs) -> DyadCouplingConfig:
    """Zero stiffness and damping for both users."""
    return DyadCouplingConfig.uniform(0.0, 0.0, nominal_inertia, **kwargs)


@dataclass(frozen=True)
class InteractionTorqueCommand:
    desired_torque: Mapping[JointId, float]

    def __post_init__(self):
        if not all(math.isfinite(value) for value in self.desired_torque.values()):
            raise ValueError("desired interaction torques must be finite")

    def __getitem__(self, joint: JointId) -> float:
        return self.desired_torque[joint]


def render_for_user(state: DyadState, config: DyadCouplingConfig, user: User) -> Dict[JointId, float]:
    """Desired interaction torques of one user's joints from that user's view of the dyad."""
    gains = config.gains(user)
    torques = {}
    for key in JOINT_KEYS:
        joint = JointId(user, key.side, key.joint)
        try:
            own = state.states[joint]
            partner = state.states[mirror_joint(joint)]
        except KeyError as e:
            raise StructuralError(f"dyad state missing joint {e.args[0]}") from None
        gain = gains[key]
        torques[joint] = gain.stiffness_K * (partner.angle - own.angle) \
            + gain.damping_B * (partner.velocity - own.velocity)
    return torques


def render_interaction_torques(state: DyadState, config: DyadCouplingConfig) -> InteractionTorqueCommand:
    torques = render_for_user(state, config, User.THERAPIST)
    torques.update(render_for_user(state, config, User.PATIENT))
    return InteractionTorqueCommand(torques)


@dataclass(frozen=True)
class ScheduleBlock:
    block: int
    K_p: float
    K_t: float


@dataclass(frozen=True)
class StiffnessSchedule(BaseConfig):
    blocks: Tuple[ScheduleBlock, ...]
    patient_id: Optional[str] = None
    ceiling: float = DEFAULT_STIFFNESS_CEILING

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("a stiffness schedule needs at least one block")
        for expected, block in enumerate(self.blocks, start=1):
            if block.block != expected:
                raise ValueError(f"schedule block indices must be consecutive from 1, found {block.block} "
                                 f"at position {expected}")
            for name in ('K_p', 'K_t'):
                value = getattr(block, name)
                if not 0 <= value <= self.ceiling:
                    raise ValueError(f"block {block.block} {name}={value} outside [0, {self.ceiling}]")

    def __len__(self):
        return len(self.blocks)

    def block(self, index: int) -> ScheduleBlock:
        if not 1 <= index <= len(self.blocks):
            raise KeyError(f"block {index} not in schedule with {len(self.blocks)} blocks")
        return self.blocks[index - 1]


def schedule_from_rows(rows: Iterable[Mapping[str, str]], patient_id: Optional[str] = None,
                       source: str = '<rows>') -> StiffnessSchedule:
    """Builds a schedule from CSV-like rows with columns patient_id, block, K_p, K_t."""
    blocks = []
    for number, row in enumerate(rows, start=2):
        if patient_id is not None and row.get('patient_id', '').strip() != patient_id:
            continue
        try:
            blocks.append(ScheduleBlock(int(row['block']), float(row['K_p']), float(row['K_t'])))
        except (KeyError, TypeError, ValueError) as e:
            raise StructuralError(f"{source}: row {number}: malformed schedule row ({e})") from None
    if not blocks:
        raise StructuralError(f"{source}: no schedule rows for patient '{patient_id}'")
    blocks.sort(key=lambda item: item.block)
    try:
        return StiffnessSchedule(tuple(blocks), patient_id=patient_id)
    except ValueError as e:
        raise StructuralError(f"{source}: {e}") from None


def load_schedule(path: PathType, patient_id: Optional[str] = None) -> StiffnessSchedule:
    path = Path(path)
    with open(path, newline='') as f:
        return schedule_from_rows(csv.DictReader(f), patient_id, source=str(path))


def gains_for_block(schedule: StiffnessSchedule, block: int, config: DyadCouplingConfig) -> DyadCouplingConfig:
    """Replaces both users' stiffness with the block's values and recomputes damping."""
    entry = schedule.block(block)
    return replace(config,
                   therapist_gains=uniform_gains(entry.K_t, config.damping_ratio_zeta, config.nominal_inertia),
                   patient_gains=uniform_gains(entry.K_p, config.damping_ratio_zeta, config.nominal_inertia))


def _blend(previous: Mapping[JointKey, CouplingGains], target: Mapping[JointKey, CouplingGains],
           fraction: float) -> Dict[JointKey, CouplingGains]:
    return {key: CouplingGains(previous[key].stiffness_K + fraction * (target[key].stiffness_K
                                                                        - previous[key].stiffness_K),
                               previous[key].damping_B + fraction * (target[key].damping_B
                                                                     - previous[key].damping_B))
            for key in JOINT_KEYS}


def ramp_gains(previous: DyadCouplingConfig, target: DyadCouplingConfig, elapsed: float,
               ramp_time: float = DEFAULT_RAMP_TIME) -> DyadCouplingConfig:
    """Linear transition from `previous` to `target` gains, `elapsed` seconds after the change."""
    if ramp_time <= 0 or elapsed >= ramp_time:
        return target
    fraction = max(elapsed, 0.0) / ramp_time
    return replace(target,
                   therapist_gains=_blend(previous.therapist_gains, target.therapist_gains, fraction),
                   patient_gains=_blend(previous.patient_gains, target.patient_gains, fraction))


def _pairs():
    """Each mirrored (therapist joint, patient joint) pair once."""
    return [(joint, mirror_joint(joint)) for joint in ALL_JOINTS if joint.user is User.THERAPIST]


def medium_power(state: DyadState, command: InteractionTorqueCommand) -> float:
    """Power delivered by the medium to both users, sum of tau* x joint velocity."""
    return sum(command[joint] * state[joint].velocity for joint in ALL_JOINTS)


def spring_energy(state: DyadState, config: DyadCouplingConfig) -> float:
    """Energy stored in the virtual springs, using the mean of the two users' stiffness per pair."""
    energy = 0.0
    for therapist, patient in _pairs():
        K = 0.5 * (config.therapist_gains[therapist.key].stiffness_K + config.patient_gains[patient.key].stiffness_K)
        energy += 0.5 * K * (state[therapist].angle - state[patient].angle) ** 2
    return energy


def damper_power(state: DyadState, config: DyadCouplingConfig) -> float:
    """Power exchanged through the virtual dampers; never positive."""
    power = 0.0
    for therapist, patient in _pairs():
        B = 0.5 * (config.therapist_gains[therapist.key].damping_B + config.patient_gains[patient.key].damping_B)
        power -= B * (state[therapist].velocity - state[patient].velocity) ** 2
    return power
