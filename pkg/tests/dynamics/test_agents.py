from pathlib import Path

import numpy as np
import pytest

from exodyad.dynamics.agents import (GaitProfile, PassiveJoint, PatientModel, TherapistPolicy, gait_reference,
                                     gait_reference_velocity, human_torque, leg_phase)
from exodyad.dynamics.loader import load_sim_config
from exodyad.utils.types import JOINT_KEYS, LEG_JOINTS, Side, User

CONFIGS = Path(__file__).resolve().parents[2] / 'configs'

PROFILE = GaitProfile()
PHASES = np.arange(1000) / 1000


def no_passive():
    return {key: PassiveJoint(passive_stiffness=0.0, passive_damping=0.0, rom_limit=3.0) for key in JOINT_KEYS}


def test_reference_shape():
    reference = gait_reference(PROFILE, PHASES)
    assert reference.shape == (2, PHASES.size)
    hip, knee = reference
    assert hip.max() - hip.min() == pytest.approx(2 * 0.30543261909900765)
    assert knee.mean() == pytest.approx(0.3839724354387525)
    assert PROFILE.period == 4.0


def test_reference_spans_walking_range():
    hip, knee = np.degrees(gait_reference(PROFILE, PHASES))
    assert hip.min() == pytest.approx(-10.0, abs=0.01)
    assert hip.max() == pytest.approx(25.0, abs=0.01)
    assert 0.0 < knee.min() < 3.0
    assert 57.0 < knee.max() < 62.0
    assert np.argmax(hip) == 0


def test_shipped_gait_tables_match_defaults():
    profile = load_sim_config(CONFIGS / 'default.ini').therapist.profile
    for joint in LEG_JOINTS:
        assert profile.series[joint] == PROFILE.series[joint]


def test_reference_velocity_matches_finite_difference():
    h = 1e-6
    for phase in (0.0, 0.13, 0.5, 0.87):
        numeric = (gait_reference(PROFILE, phase + h) - gait_reference(PROFILE, phase - h)) / (2 * h) * PROFILE.cadence
        np.testing.assert_allclose(gait_reference_velocity(PROFILE, phase), numeric, atol=1e-6)


def test_profile_validation():
    with pytest.raises(ValueError):
        GaitProfile(cadence=0.0)
    with pytest.raises(ValueError):
        GaitProfile(series={})


def test_therapist_torque_is_strength_limited():
    policy = TherapistPolicy()
    reference = (np.array([0.1, 0.3]), np.zeros(2))
    np.testing.assert_allclose(policy.torque(reference, np.array([0.1, 0.3]), np.zeros(2)), [0.0, 0.0])
    np.testing.assert_allclose(policy.torque(reference, np.array([0.0, 0.3]), np.zeros(2)), [15.0, 0.0])
    np.testing.assert_allclose(policy.torque(reference, np.array([-1.0, 1.5]), np.zeros(2)), [60.0, -60.0])


def test_patient_weakness_scales_paretic_leg():
    patient = PatientModel(weakness=0.25, paretic_side=Side.LEFT, joints=no_passive())
    reference = (np.array([0.2, 0.4]), np.zeros(2))
    q = np.zeros(2)
    paretic = patient.torque(reference, q, np.zeros(2), Side.LEFT)
    healthy = patient.torque(reference, q, np.zeros(2), Side.RIGHT)
    np.testing.assert_allclose(healthy, [20.0, 40.0])
    np.testing.assert_allclose(paretic, 0.25 * healthy)
    assert patient.strength(Side.LEFT) == 0.25
    assert patient.strength(Side.RIGHT) == 1.0


def test_patient_passive_and_range_of_motion_torques():
    joints = no_passive()
    for key in joints:
        joints[key] = PassiveJoint(passive_stiffness=10.0, passive_damping=2.0, rest_angle=0.1, rom_limit=1.0)
    patient = PatientModel(weakness=0.0, joints=joints)
    reference = (np.zeros(2), np.zeros(2))
    tau = patient.torque(reference, np.array([0.5, 1.2]), np.array([1.0, -1.0]), Side.RIGHT)
    np.testing.assert_allclose(tau, [-10.0 * 0.4 - 2.0, -10.0 * 1.1 + 2.0 - 500.0 * 0.2])


def test_patient_defaults_and_validation():
    patient = PatientModel(paretic_side=Side.LEFT)
    assert set(patient.joints) == set(JOINT_KEYS)
    with pytest.raises(ValueError):
        PatientModel(weakness=1.5)
    with pytest.raises(ValueError):
        PatientModel(intent_delay=-0.1)
    with pytest.raises(ValueError):
        PatientModel(joints={})


def test_human_torque_dispatch():
    reference = (np.array([0.2, 0.4]), np.zeros(2))
    therapist = TherapistPolicy()
    patient = PatientModel(joints=no_passive())
    q, qd = np.zeros(2), np.zeros(2)
    np.testing.assert_allclose(human_torque(therapist, reference, q, qd, Side.LEFT), therapist.torque(reference, q, qd))
    np.testing.assert_allclose(human_torque(patient, reference, q, qd, Side.RIGHT),
                               patient.torque(reference, q, qd, Side.RIGHT))


@pytest.mark.parametrize('time', [0.0, 4.0, 12.0])
def test_leg_phase_offsets(time):
    assert leg_phase(PROFILE, time, User.THERAPIST, Side.LEFT) == pytest.approx(0.0)
    assert leg_phase(PROFILE, time, User.THERAPIST, Side.RIGHT) == pytest.approx(0.5)
    assert leg_phase(PROFILE, time, User.PATIENT, Side.RIGHT) == pytest.approx(0.0)
    assert leg_phase(PROFILE, time, User.PATIENT, Side.LEFT) == pytest.approx(0.5)


def test_leg_phase_advances_with_cadence():
    assert leg_phase(PROFILE, 1.0, User.THERAPIST, Side.LEFT) == pytest.approx(0.25)
    assert leg_phase(PROFILE, 3.0, User.THERAPIST, Side.RIGHT) == pytest.approx(0.25)
