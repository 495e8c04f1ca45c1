from pathlib import Path

import pytest

from exodyad.dynamics.loader import dump_config, load_sim_config, sim_config_from_file, sim_config_hash
from exodyad.dynamics.model import LegGeometry, nominal_inertia
from exodyad.utils.config import ConfigFile
from exodyad.utils.exception import ConfigError
from exodyad.utils.types import Joint, JointKey, Side, User

CONFIGS = Path(__file__).resolve().parents[2] / 'configs'


def test_defaults():
    sim = load_sim_config()
    assert sim.dt == pytest.approx(1 / 333)
    assert sim.duration == 60.0
    assert sim.schedule is None
    gains = sim.coupling.gains(User.PATIENT)[JointKey(Side.LEFT, Joint.HIP)]
    assert gains.stiffness_K == 49.0
    inertia = nominal_inertia(LegGeometry())
    assert sim.coupling.nominal_inertia[Joint.HIP] == pytest.approx(inertia[Joint.HIP])
    assert gains.damping_B == pytest.approx(2 * 0.25 * (49.0 * inertia[Joint.HIP]) ** 0.5)


def test_overrides_and_seed():
    sim = load_sim_config(None, ['coupling.K_p=25', 'coupling.patient.left.knee.K=10', 'patient.weakness=0.3'],
                          seed=9)
    assert sim.seed == 9
    assert sim.patient.weakness == 0.3
    assert sim.coupling.gains(User.PATIENT)[JointKey(Side.RIGHT, Joint.HIP)].stiffness_K == 25.0
    assert sim.coupling.gains(User.PATIENT)[JointKey(Side.LEFT, Joint.KNEE)].stiffness_K == 10.0
    assert sim.coupling.gains(User.THERAPIST)[JointKey(Side.LEFT, Joint.KNEE)].stiffness_K == 49.0


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError, match='unknown key'):
        load_sim_config(None, ['coupling.K_x=3'])
    with pytest.raises(ConfigError, match='unknown key'):
        sim_config_from_file(ConfigFile('[simulaton]\nduration = 4\n', source='typo.ini'))


@pytest.mark.parametrize('override, location', [('coupling.K_p=150', 'coupling'),
                                                ('patient.weakness=2', 'patient'),
                                                ('bus.latency=0.2', 'bus'),
                                                ('simulation.duration=abc', 'simulation')])
def test_invalid_values_name_their_location(override, location):
    with pytest.raises(ConfigError, match=rf'\[{location}\]'):
        load_sim_config(None, [override])


def test_inline_schedule():
    sim = load_sim_config(None, ['schedule.block_1=49, 49', 'schedule.block_2=36, 25',
                                 'simulation.duration=30'])
    assert sim.n_blocks == 2
    assert sim.effective_block_duration == pytest.approx(15.0)
    assert sim.block_at(16.0) == 2
    second = sim.block_coupling(2)
    assert second.gains(User.PATIENT)[JointKey(Side.LEFT, Joint.HIP)].stiffness_K == 36.0
    assert second.gains(User.THERAPIST)[JointKey(Side.LEFT, Joint.HIP)].stiffness_K == 25.0


def test_malformed_schedule_entry():
    with pytest.raises(ConfigError, match='block_1'):
        load_sim_config(None, ['schedule.block_1=49'])


@pytest.mark.parametrize('name', ['default.ini', 'tepi_demo.ini', 'low_assist_demo.ini'])
def test_shipped_configs_load_and_reload(name, tmp_path):
    sim = load_sim_config(CONFIGS / name)
    text = dump_config(sim)
    (tmp_path / 'resolved.ini').write_text(text)
    reloaded = load_sim_config(tmp_path / 'resolved.ini')
    assert reloaded == sim
    assert dump_config(reloaded) == text
    assert sim_config_hash(reloaded) == sim_config_hash(sim)


def test_tepi_demo_follows_schedule_table():
    sim = load_sim_config(CONFIGS / 'tepi_demo.ini')
    assert sim.patient_id == 'U8'
    assert sim.n_blocks == 3
    assert sim.block_duration == 20.0
    assert sim.patient.paretic_side is Side.LEFT
    assert sim.bus.latency == 0.003
    assert sim.patient.joints[JointKey(Side.LEFT, Joint.HIP)].passive_stiffness == 45.0
    assert sim.patient.joints[JointKey(Side.LEFT, Joint.HIP)].passive_damping == 1.0
    assert sim.patient.joints[JointKey(Side.LEFT, Joint.KNEE)].passive_stiffness == 75.0


def test_low_assist_demo_stiffens_paretic_leg():
    sim = load_sim_config(CONFIGS / 'low_assist_demo.ini')
    assert sim.coupling.gains(User.PATIENT)[JointKey(Side.RIGHT, Joint.KNEE)].stiffness_K == 0.0
    assert sim.patient.joints[JointKey(Side.RIGHT, Joint.HIP)].passive_stiffness == 20.0
    assert sim.patient.joints[JointKey(Side.RIGHT, Joint.KNEE)].passive_stiffness == 40.0
    assert sim.condition == 'LOW_ASSIST'


def test_hash_changes_with_parameters():
    assert sim_config_hash(load_sim_config()) != sim_config_hash(load_sim_config(None, ['coupling.K_p=48']))
