import time

import numpy as np
import pytest

from exodyad.dynamics.controller import (AdmittanceParams, InteractionTorqueController, admittance_update,
                                         allocate_torques, measured_interaction_torque, safe_stop_command)
from exodyad.dynamics.coupling import DyadCouplingConfig, render_interaction_torques
from exodyad.dynamics.model import (DyadState, JointLimits, LegGeometry, coriolis_vector, default_model,
                                    gravity_torque, inverse_dynamics, mass_matrix, nominal_inertia)
from exodyad.dynamics.plant import DEFAULT_DT, LegPlant
from exodyad.utils.exception import InfeasibleAllocationError
from exodyad.utils.stats import SimStats
from exodyad.utils.types import ALL_JOINTS, Joint, JointId, Side, User

GEOM = LegGeometry()
MODEL = default_model()
LIMITS = MODEL.leg_limits(Side.LEFT)
DT = DEFAULT_DT


def resting_legs(time=0.0, overrides=None):
    legs = {(user, side): (np.zeros(2), np.zeros(2)) for user in User for side in Side}
    legs.update(overrides or {})
    return DyadState.from_legs(time, legs)


def test_admittance_update():
    params = AdmittanceParams()
    qdd, velocity = admittance_update([0.0, 0.0], params, [0.0, 0.0], DT)
    np.testing.assert_array_equal(qdd, [0.0, 0.0])
    qdd, velocity = admittance_update([1.0, -2.0], params, [0.0, 0.5], DT)
    np.testing.assert_allclose(qdd, [2.0, (-2.0 - 2.0 * 0.5) / 0.5])
    np.testing.assert_allclose(velocity, [0.0, 0.5] + qdd * DT)
    with pytest.raises(ValueError):
        admittance_update([0.0, 0.0], params, [0.0, 0.0], 0.0)


def test_admittance_params_validation():
    with pytest.raises(ValueError):
        AdmittanceParams(virtual_inertia_Mv=(0.0, 0.5))
    with pytest.raises(ValueError):
        AdmittanceParams(virtual_damping_Bv=(2.0,))


def test_measurement_noise():
    truth = np.array([1.0, -2.0])
    np.testing.assert_array_equal(measured_interaction_torque(truth), truth)
    first = measured_interaction_torque(truth, 0.5, np.random.default_rng(4))
    second = measured_interaction_torque(truth, 0.5, np.random.default_rng(4))
    np.testing.assert_array_equal(first, second)
    assert not np.array_equal(first, truth)
    with pytest.raises(ValueError):
        measured_interaction_torque(truth, 0.5)


def test_unconstrained_allocation_is_inverse_dynamics():
    q, qd, qdd = np.array([0.3, 0.6]), np.array([0.5, -1.0]), np.array([4.0, -6.0])
    bias = np.array([1.5, -0.5])
    result = allocate_torques(GEOM, q, qd, qdd, LIMITS, DT, bias=bias)
    np.testing.assert_allclose(result.achieved_accel, qdd)
    np.testing.assert_allclose(result.commanded_torque, inverse_dynamics(GEOM, q, qd, qdd) + bias)
    assert not any(result.constraint_active.values())
    assert not result.safe_stop


def test_torque_limit_is_respected():
    q, qd = np.array([0.2, 0.4]), np.zeros(2)
    result = allocate_torques(GEOM, q, qd, np.array([250.0, -250.0]), LIMITS, DT)
    assert result.constraint_active['torque']
    assert not result.safe_stop
    assert np.all(np.abs(result.commanded_torque) <= 100.0 + 1e-6)
    assert np.max(np.abs(result.commanded_torque)) == pytest.approx(100.0, abs=1e-3)
    # the achieved accelerations are the ones the commanded torque produces
    h = coriolis_vector(GEOM, q, qd) + gravity_torque(GEOM, q)
    np.testing.assert_allclose(mass_matrix(GEOM, q) @ result.achieved_accel + h, result.commanded_torque,
                               atol=1e-9)


def test_angle_brake_keeps_next_angle_inside_limits():
    q, qd = np.array([0.2, 1.99]), np.array([0.0, 3.6])
    result = allocate_torques(GEOM, q, qd, np.zeros(2), LIMITS, DT)
    assert result.constraint_active['angle']
    assert not result.constraint_active['torque']
    next_velocity = qd + DT * result.achieved_accel
    next_angle = q + DT * next_velocity
    assert next_angle[1] <= 2.0 + 1e-9


def test_velocity_limit_flag():
    q, qd = np.array([0.2, 0.5]), np.array([5.99, 0.0])
    result = allocate_torques(GEOM, q, qd, np.array([100.0, 0.0]), LIMITS, DT)
    assert result.constraint_active['velocity']
    assert qd[0] + DT * result.achieved_accel[0] <= 6.0 + 1e-9


def test_infeasible_allocation_falls_back_to_safe_stop():
    weak = [JointLimits(angle_min=-0.5, angle_max=2.0, torque_max=1.0, accel_max=1.0)] * 2
    q, qd = np.array([1.5, 0.0]), np.zeros(2)
    result = allocate_torques(GEOM, q, qd, np.zeros(2), weak, DT)
    assert result.safe_stop
    assert result.constraint_active['torque']
    with pytest.raises(InfeasibleAllocationError):
        allocate_torques(GEOM, q, qd, np.zeros(2), weak, DT, error_strategy='raise')


def test_safe_stop_command():
    q, qd = np.array([0.4, 0.2]), np.array([1.0, -1.0])
    tau = safe_stop_command(GEOM, q, qd, LIMITS, 5.0, 9.81)
    np.testing.assert_allclose(tau, gravity_torque(GEOM, q) - 5.0 * qd)
    clipped = safe_stop_command(GEOM, q, np.array([100.0, 0.0]), LIMITS, 5.0, 9.81)
    assert clipped[0] == -100.0


def test_stale_state_holds_last_command():
    stats = SimStats()
    controller = InteractionTorqueController(User.PATIENT, MODEL, AdmittanceParams(), DT, stats)
    state = resting_legs()
    controller.reset(state)
    zeros = {joint: 0.0 for joint in ALL_JOINTS}
    first = controller.step(state, zeros, zeros, 0.0)
    assert set(first) == {joint for joint in ALL_JOINTS if joint.user is User.PATIENT}
    assert not controller.stale
    held = controller.step(state, {joint: 10.0 for joint in ALL_JOINTS}, zeros, 4 * DT)
    assert controller.stale
    assert held == first
    assert stats.stale_holds == 1


def test_old_partner_message_holds_last_command():
    legs = {(user, side): (np.zeros(2), np.zeros(2)) for user in User for side in Side}
    zeros = {joint: 0.0 for joint in ALL_JOINTS}
    stats = SimStats()
    controller = InteractionTorqueController(User.PATIENT, MODEL, AdmittanceParams(), DT, stats)
    controller.reset(resting_legs())
    first = controller.step(resting_legs(), zeros, zeros, 0.0)
    old_partner = DyadState.from_legs(5 * DT, legs, partner_time=DT)
    assert old_partner.oldest_time == DT
    assert controller.step(old_partner, {joint: 10.0 for joint in ALL_JOINTS}, zeros, 5 * DT) == first
    assert controller.stale
    assert stats.stale_holds == 1

    delayed = InteractionTorqueController(User.PATIENT, MODEL, AdmittanceParams(), DT, expected_latency=2 * DT)
    delayed.reset(resting_legs())
    delayed.step(old_partner, zeros, zeros, 5 * DT)
    assert not delayed.stale
    delayed.step(DyadState.from_legs(6 * DT, legs, partner_time=0.0), zeros, zeros, 6 * DT)
    assert delayed.stale
    with pytest.raises(ValueError):
        InteractionTorqueController(User.PATIENT, MODEL, AdmittanceParams(), DT, expected_latency=-DT)


def test_interaction_torque_step_response():
    # wearer holds a posture with a PD; the controller renders a 5 N*m knee interaction torque
    kp, kd = 100.0, 8.0
    q0 = np.array([0.2, 0.4])
    plant = LegPlant(GEOM, q0, gravity=MODEL.gravity)
    controller = InteractionTorqueController(User.PATIENT, MODEL, AdmittanceParams(), DT)
    controller.reset(resting_legs(0.0, {(User.PATIENT, Side.LEFT): (plant.q, plant.qd)}))
    desired = {joint: 0.0 for joint in ALL_JOINTS}
    desired[JointId(User.PATIENT, Side.LEFT, Joint.KNEE)] = 5.0
    history = []
    for n in range(int(round(1.0 / DT))):
        now = n * DT
        human = kp * (q0 - plant.q) - kd * plant.qd
        measured = {joint: 0.0 for joint in ALL_JOINTS}
        measured[JointId(User.PATIENT, Side.LEFT, Joint.HIP)] = -human[0]
        measured[JointId(User.PATIENT, Side.LEFT, Joint.KNEE)] = -human[1]
        state = resting_legs(now, {(User.PATIENT, Side.LEFT): (plant.q, plant.qd)})
        motor = controller.step(state, desired, measured, now)
        tau_motor = np.array([motor[JointId(User.PATIENT, Side.LEFT, joint)] for joint in (Joint.HIP, Joint.KNEE)])
        plant.advance(human + tau_motor, DT)
        history.append((now, -human[0], -human[1]))
    history = np.array(history)
    settled = history[history[:, 0] >= 0.5]
    assert np.all(np.abs(settled[:, 2] - 5.0) < 0.25)
    assert np.all(np.abs(settled[:, 1]) < 0.25)
    assert history[-1, 2] == pytest.approx(5.0, rel=0.01)


@pytest.mark.slow
def test_control_period_budget():
    coupling = DyadCouplingConfig.uniform(49.0, 49.0, nominal_inertia(GEOM))
    controllers = [InteractionTorqueController(user, MODEL, AdmittanceParams(), DT) for user in User]
    measured = {joint: 0.0 for joint in ALL_JOINTS}
    rng = np.random.default_rng(3)
    ticks = 10_000
    elapsed = 0.0
    for n in range(ticks):
        now = n * DT
        state = resting_legs(now, {(user, side): (rng.uniform(0.2, 0.6, 2), rng.uniform(-0.5, 0.5, 2))
                                   for user in User for side in Side})
        if n == 0:
            for controller in controllers:
                controller.reset(state)
        start = time.perf_counter()
        desired = render_interaction_torques(state, coupling)
        for controller in controllers:
            controller.step(state, desired, measured, now)
        elapsed += time.perf_counter() - start
    assert elapsed / ticks < 3e-3
