from enum import Enum
from pathlib import Path
from typing import NamedTuple, Optional, Union

PathType = Optional[Union[str, Path]]


class User(Enum):
    """The two members of the dyad."""

    THERAPIST = 'therapist'
    PATIENT = 'patient'

    @property
    def partner(self) -> 'User':
        return User.PATIENT if self is User.THERAPIST else User.THERAPIST


class Side(Enum):
    LEFT = 'left'
    RIGHT = 'right'

    @property
    def opposite(self) -> 'Side':
        return Side.RIGHT if self is Side.LEFT else Side.LEFT


class Joint(Enum):
    HIP = 'hip'
    KNEE = 'knee'


class JointKey(NamedTuple):
    """A joint of one exoskeleton, without the user."""

    side: Side
    joint: Joint

    @property
    def label(self) -> str:
        return f"{self.side.value}_{self.joint.value}"


class JointId(NamedTuple):
    """A joint of the dyad: user, side and joint."""

    user: User
    side: Side
    joint: Joint

    @property
    def key(self) -> JointKey:
        return JointKey(self.side, self.joint)

    @property
    def label(self) -> str:
        return f"{self.user.value}_{self.side.value}_{self.joint.value}"


LEG_JOINTS = (Joint.HIP, Joint.KNEE)
JOINT_KEYS = tuple(JointKey(side, joint) for side in Side for joint in LEG_JOINTS)
ALL_JOINTS = tuple(JointId(user, side, joint) for user in User for side in Side for joint in LEG_JOINTS)


def parse_enum(enum_type, value: str):
    """Looks up an enum member by its (case-insensitive) value."""
    try:
        return enum_type(value.strip().lower())
    except ValueError:
        choices = ', '.join(member.value for member in enum_type)
        raise ValueError(f"'{value}' is not one of: {choices}") from None
