from dataclasses import FrozenInstanceError, replace

import pytest

from exodyad.dynamics.bus import BusConfig
from exodyad.utils.config import AnalysisConfig, ConfigFile, analysis_config_from_file, config_hash, dump_sections
from exodyad.utils.exception import ConfigError

TEXT = """\
[simulation]
duration = 12.5   # seconds
seed = 3
display_progress_bar = yes

[coupling.patient.left.knee]
K = 40
"""


def test_typed_lookups():
    config = ConfigFile(TEXT, source='run.ini')
    assert config.get_float('simulation', 'duration') == 12.5
    assert config.get_int('simulation', 'seed') == 3
    assert config.get_bool('simulation', 'display_progress_bar') is True
    assert config.get_float('simulation', 'dt', 0.01) == 0.01
    assert config.get_float('coupling.patient.left.knee', 'K') == 40.0


def test_errors_name_file_and_line():
    config = ConfigFile(TEXT, source='run.ini')
    with pytest.raises(ConfigError, match=r'run.ini:2 \[simulation\] duration'):
        config.get_float('simulation', 'duration', maximum=10.0)
    with pytest.raises(ConfigError, match=r'run.ini:3'):
        config.get_choice('simulation', 'seed', ('a', 'b'))


def test_overrides_and_unused_keys():
    config = ConfigFile(TEXT, source='run.ini')
    config.apply_overrides(['coupling.K_p=0', 'coupling.patient.left.knee.K=12'])
    assert config.get_float('coupling', 'K_p') == 0.0
    assert config.get_float('coupling.patient.left.knee', 'K') == 12.0
    config.get_float('simulation', 'duration')
    config.get_int('simulation', 'seed')
    config.get_bool('simulation', 'display_progress_bar')
    config.check_unused()

    config.apply_overrides(['simulation.duraton=5'])
    with pytest.raises(ConfigError, match="override 'simulation.duraton=5'.*unknown key"):
        config.check_unused()
    with pytest.raises(ConfigError, match='section.key=value'):
        config.apply_overrides(['seed'])


def test_malformed_text():
    with pytest.raises(ConfigError, match='broken.ini'):
        ConfigFile('key = value without section\n', source='broken.ini')


def test_analysis_config():
    config = analysis_config_from_file(ConfigFile('[analysis]\narea_mode = shoelace\nstride_samples = 50\n'),
                                       lag_mode='abs', pooled_area=None)
    assert config.area_mode == 'shoelace'
    assert config.stride_samples == 50
    assert config.lag_mode == 'abs'
    assert config.pooled_area is False
    with pytest.raises(ConfigError):
        AnalysisConfig(area_mode='polygon')
    with pytest.raises(ConfigError):
        AnalysisConfig(trim_seconds=-1.0)


def test_config_classes_are_frozen_dataclasses():
    config = AnalysisConfig()
    assert config.to_dict()['area_mode'] == 'hull'
    with pytest.raises(FrozenInstanceError):
        config.area_mode = 'shoelace'
    assert replace(config, lag_mode='abs').lag_mode == 'abs'
    assert BusConfig(latency=0.003).to_dict() == {'latency': 0.003, 'jitter_sd': 0.0, 'drop_probability': 0.0,
                                                  'seed': 0}


def test_dump_and_hash():
    text = dump_sections({'coupling': {'K_p': 49.0, 'enabled': True}, 'patient': {'paretic_side': 'right'}})
    assert '[coupling]\nK_p = 49.0\nenabled = true\n' in text
    reread = ConfigFile(text)
    assert reread.get_float('coupling', 'K_p') == 49.0
    assert config_hash(text) == config_hash(text.replace('\n', '\r\n'))
    assert len(config_hash(text)) == 64
