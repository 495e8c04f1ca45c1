"""Reads and writes simulation configurations as INI text."""
from contextlib import contextmanager
from dataclasses import fields
from typing import Dict, Optional, Sequence

from exodyad.dynamics.agents import GaitProfile, JointSeries, PassiveJoint, PatientModel, TherapistPolicy, \
    default_passive
from exodyad.dynamics.bus import BusConfig
from exodyad.dynamics.controller import AdmittanceParams
from exodyad.dynamics.coupling import (CouplingGains, DyadCouplingConfig, ScheduleBlock, StiffnessSchedule,
                                       damping_for, load_schedule)
from exodyad.dynamics.model import DEFAULT_LIMITS, ExoskeletonModel, JointLimits, LegGeometry, nominal_inertia
from exodyad.dynamics.plant import DEFAULT_DT, SimConfig
from exodyad.utils.config import ConfigFile, analysis_config_from_file, config_hash, dump_sections
from exodyad.utils.exception import StructuralError
from exodyad.utils.types import JOINT_KEYS, LEG_JOINTS, PathType, Side, User, parse_enum

KNOWN_SECTIONS = ('simulation', 'coupling', 'controller', 'bus', 'model', 'gait', 'therapist', 'patient',
                  'schedule', 'analysis')


@contextmanager
def _section(config: ConfigFile, section: str):
    """Turns value errors raised while building a section's objects into located ConfigErrors."""
    try:
        yield
    except (ValueError, StructuralError) as e:
        raise config.error(section, '', str(e)) from None


def _read_dataclass(config: ConfigFile, section: str, cls, defaults):
    values = {}
    for item in fields(cls):
        default = getattr(defaults, item.name)
        values[item.name] = config.get_float(section, item.name, default)
    with _section(config, section):
        return cls(**values)


def _read_models(config: ConfigFile) -> Dict[User, ExoskeletonModel]:
    gravity = config.get_float('model', 'gravity', 9.81, minimum=0.0, strict_minimum=True)
    limits = {}
    for key in JOINT_KEYS:
        section = f"limits.{key.side.value}.{key.joint.value}"
        limits[key] = _read_dataclass(config, section, JointLimits, DEFAULT_LIMITS[key.joint])
    models = {}
    for user in User:
        legs = {side: _read_dataclass(config, f"model.{user.value}.{side.value}", LegGeometry, LegGeometry())
                for side in Side}
        with _section(config, 'model'):
            models[user] = ExoskeletonModel(left=legs[Side.LEFT], right=legs[Side.RIGHT], limits=limits,
                                            gravity=gravity)
    return models


def _read_series(config: ConfigFile, section: str, default: JointSeries) -> JointSeries:
    if not config.has_section(section):
        return default
    mean = config.get_float(section, 'mean', default.mean)
    harmonics = []
    order = 1
    while config.has(section, f"amplitude_{order}") or config.has(section, f"phase_{order}"):
        amplitude = config.get_float(section, f"amplitude_{order}", 0.0, minimum=0.0)
        offset = config.get_float(section, f"phase_{order}", 0.0)
        harmonics.append((amplitude, offset))
        order += 1
    if not harmonics:
        harmonics = list(default.harmonics)
    with _section(config, section):
        return JointSeries(mean, tuple(harmonics))


def _read_profile(config: ConfigFile) -> GaitProfile:
    defaults = GaitProfile()
    cadence = config.get_float('gait', 'cadence', defaults.cadence, minimum=0.0, strict_minimum=True)
    series = {joint: _read_series(config, f"gait.{joint.value}", defaults.series[joint]) for joint in LEG_JOINTS}
    with _section(config, 'gait'):
        return GaitProfile(cadence=cadence, series=series)


def _read_patient(config: ConfigFile) -> PatientModel:
    defaults = PatientModel()
    paretic = config.get_choice('patient', 'paretic_side', [side.value for side in Side],
                                defaults.paretic_side.value)
    paretic_side = parse_enum(Side, paretic)
    passive_defaults = default_passive(paretic_side)
    joints = {}
    for key in JOINT_KEYS:
        section = f"patient.{key.side.value}.{key.joint.value}"
        joints[key] = _read_dataclass(config, section, PassiveJoint, passive_defaults[key])
    with _section(config, 'patient'):
        return PatientModel(
            weakness=config.get_float('patient', 'weakness', defaults.weakness, minimum=0.0, maximum=1.0),
            paretic_side=paretic_side,
            intent_delay=config.get_float('patient', 'intent_delay', defaults.intent_delay, minimum=0.0),
            voluntary_kp=config.get_float('patient', 'voluntary_kp', defaults.voluntary_kp, minimum=0.0),
            voluntary_kd=config.get_float('patient', 'voluntary_kd', defaults.voluntary_kd, minimum=0.0),
            rom_stiffness=config.get_float('patient', 'rom_stiffness', defaults.rom_stiffness, minimum=0.0),
            joints=joints)


def _read_coupling(config: ConfigFile, models: Dict[User, ExoskeletonModel]) -> DyadCouplingConfig:
    inertia_defaults = nominal_inertia(models[User.PATIENT].leg(Side.LEFT))
    inertia = {joint: config.get_float('coupling', f"nominal_inertia_{joint.value}", inertia_defaults[joint],
                                       minimum=0.0, strict_minimum=True) for joint in LEG_JOINTS}
    zeta = config.get_float('coupling', 'damping_ratio_zeta', 0.25, minimum=0.0, strict_minimum=True, maximum=2.0)
    ceiling = config.get_float('coupling', 'stiffness_ceiling', 100.0, minimum=0.0)
    base = {User.THERAPIST: config.get_float('coupling', 'K_t', 49.0, minimum=0.0, maximum=ceiling),
            User.PATIENT: config.get_float('coupling', 'K_p', 49.0, minimum=0.0, maximum=ceiling)}
    gains = {}
    for user in User:
        gains[user] = {}
        for key in JOINT_KEYS:
            section = f"coupling.{user.value}.{key.side.value}.{key.joint.value}"
            K = config.get_float(section, 'K', base[user], minimum=0.0, maximum=ceiling)
            B = config.get_float(section, 'B', None, minimum=0.0)
            if B is None:
                B = damping_for(K, zeta, inertia[key.joint])
            gains[user][key] = CouplingGains(K, B)
    with _section(config, 'coupling'):
        return DyadCouplingConfig(therapist_gains=gains[User.THERAPIST], patient_gains=gains[User.PATIENT],
                                  nominal_inertia=inertia, damping_ratio_zeta=zeta, stiffness_ceiling=ceiling)


def _read_schedule(config: ConfigFile, ceiling: float) -> Optional[StiffnessSchedule]:
    path = config.get_path('coupling', 'schedule')
    patient_id = config.get_str('coupling', 'schedule_patient')
    if path is not None:
        try:
            return load_schedule(path, patient_id)
        except OSError as e:
            raise config.error('coupling', 'schedule', f"cannot read schedule: {e}") from None
        except StructuralError as e:
            raise config.error('coupling', 'schedule', str(e)) from None
    if not config.has_section('schedule'):
        return None
    patient_id = config.get_str('schedule', 'patient_id', patient_id)
    blocks = []
    index = 1
    while config.has('schedule', f"block_{index}"):
        raw = config.get_str('schedule', f"block_{index}")
        try:
            K_p, K_t = (float(value) for value in raw.split(','))
        except ValueError:
            raise config.error('schedule', f"block_{index}", f"expected 'K_p, K_t', got '{raw}'") from None
        blocks.append(ScheduleBlock(index, K_p, K_t))
        index += 1
    with _section(config, 'schedule'):
        return StiffnessSchedule(tuple(blocks), patient_id=patient_id, ceiling=ceiling)


def sim_config_from_file(config: ConfigFile) -> SimConfig:
    """Builds a validated SimConfig from parsed INI text; unknown keys are rejected."""
    models = _read_models(config)
    coupling = _read_coupling(config, models)
    schedule = _read_schedule(config, coupling.stiffness_ceiling)
    therapist_defaults = TherapistPolicy()
    with _section(config, 'therapist'):
        therapist = TherapistPolicy(
            profile=_read_profile(config),
            tracking_kp=config.get_float('therapist', 'tracking_kp', therapist_defaults.tracking_kp, minimum=0.0),
            tracking_kd=config.get_float('therapist', 'tracking_kd', therapist_defaults.tracking_kd, minimum=0.0),
            strength_limit=config.get_float('therapist', 'strength_limit', therapist_defaults.strength_limit,
                                            minimum=0.0, strict_minimum=True))
    patient = _read_patient(config)
    admittance_defaults = AdmittanceParams()
    with _section(config, 'controller'):
        admittance = AdmittanceParams(
            virtual_inertia_Mv=tuple(config.get_float('controller', f"Mv_{joint.value}",
                                                      admittance_defaults.virtual_inertia_Mv[index],
                                                      minimum=0.0, strict_minimum=True)
                                     for index, joint in enumerate(LEG_JOINTS)),
            virtual_damping_Bv=tuple(config.get_float('controller', f"Bv_{joint.value}",
                                                      admittance_defaults.virtual_damping_Bv[index], minimum=0.0)
                                     for index, joint in enumerate(LEG_JOINTS)),
            safe_stop_damping=config.get_float('controller', 'safe_stop_damping',
                                               admittance_defaults.safe_stop_damping, minimum=0.0))
    noise = config.get_float('controller', 'measurement_noise_sd', 0.0, minimum=0.0)
    with _section(config, 'bus'):
        bus = BusConfig(latency=config.get_float('bus', 'latency', 0.0, minimum=0.0),
                        jitter_sd=config.get_float('bus', 'jitter_sd', 0.0, minimum=0.0),
                        drop_probability=config.get_float('bus', 'drop_probability', 0.0, minimum=0.0),
                        seed=config.get_int('bus', 'seed', 0))
    analysis = analysis_config_from_file(config)
    section = 'simulation'
    with _section(config, section):
        sim = SimConfig(
            coupling=coupling,
            dt=config.get_float(section, 'dt', DEFAULT_DT, minimum=0.0, strict_minimum=True),
            duration=config.get_float(section, 'duration', 60.0, minimum=0.0, strict_minimum=True),
            seed=config.get_int(section, 'seed', 1),
            schedule=schedule,
            block_duration=config.get_float(section, 'block_duration', None, minimum=0.0, strict_minimum=True),
            gain_ramp_time=config.get_float(section, 'gain_ramp_time', 0.5, minimum=0.0),
            bus=bus,
            models=models,
            patient=patient,
            therapist=therapist,
            admittance=admittance,
            measurement_noise_sd=noise,
            patient_id=config.get_str(section, 'patient_id', 'SIM'),
            condition=config.get_str(section, 'condition', 'TEPI'),
            analysis=analysis,
            display_progress_bar=config.get_bool(section, 'display_progress_bar', False),
            error_strategy=config.get_choice(section, 'error_strategy', ('raise', 'log', 'ignore'), 'log'))
    config.check_unused(KNOWN_SECTIONS)
    return sim


def load_sim_config(path: Optional[PathType] = None, overrides: Optional[Sequence[str]] = None,
                    seed: Optional[int] = None) -> SimConfig:
    """Loads a configuration file (or the built-in defaults) and applies dotted overrides.

    Args:
        path (PathType): INI file; None uses the defaults only
        overrides: `section.key=value` strings applied before validation
        seed (int): Replaces `simulation.seed` when given

    Returns:
        (SimConfig): Validated configuration
    """
    config = ConfigFile.from_path(path) if path is not None else ConfigFile('', source='<defaults>')
    overrides = list(overrides or ())
    if seed is not None:
        overrides.append(f"simulation.seed={seed}")
    config.apply_overrides(overrides)
    return sim_config_from_file(config)


def sim_config_sections(sim: SimConfig) -> Dict[str, Dict[str, object]]:
    """Every effective parameter of `sim`, grouped as INI sections."""
    sections: Dict[str, Dict[str, object]] = {
        'simulation': {'dt': sim.dt, 'duration': sim.duration, 'seed': sim.seed,
                       'gain_ramp_time': sim.gain_ramp_time, 'patient_id': sim.patient_id,
                       'condition': sim.condition, 'display_progress_bar': sim.display_progress_bar,
                       'error_strategy': sim.error_strategy},
    }
    if sim.block_duration is not None:
        sections['simulation']['block_duration'] = sim.block_duration
    coupling = sim.coupling
    sections['coupling'] = {
        'K_t': coupling.therapist_gains[JOINT_KEYS[0]].stiffness_K,
        'K_p': coupling.patient_gains[JOINT_KEYS[0]].stiffness_K,
        'damping_ratio_zeta': coupling.damping_ratio_zeta,
        'stiffness_ceiling': coupling.stiffness_ceiling,
        **{f"nominal_inertia_{joint.value}": coupling.nominal_inertia[joint] for joint in LEG_JOINTS},
    }
    for user in User:
        for key, gain in coupling.gains(user).items():
            sections[f"coupling.{user.value}.{key.side.value}.{key.joint.value}"] = {'K': gain.stiffness_K,
                                                                                   'B': gain.damping_B}
    if sim.schedule is not None:
        sections['schedule'] = {}
        if sim.schedule.patient_id is not None:
            sections['schedule']['patient_id'] = sim.schedule.patient_id
        for block in sim.schedule.blocks:
            sections['schedule'][f"block_{block.block}"] = f"{block.K_p!r}, {block.K_t!r}"
    sections['controller'] = {
        **{f"Mv_{joint.value}": sim.admittance.virtual_inertia_Mv[index] for index, joint in enumerate(LEG_JOINTS)},
        **{f"Bv_{joint.value}": sim.admittance.virtual_damping_Bv[index] for index, joint in enumerate(LEG_JOINTS)},
        'safe_stop_damping': sim.admittance.safe_stop_damping,
        'measurement_noise_sd': sim.measurement_noise_sd,
    }
    sections['bus'] = sim.bus.to_dict()
    sections['model'] = {'gravity': sim.models[User.PATIENT].gravity}
    for user in User:
        for side in Side:
            sections[f"model.{user.value}.{side.value}"] = sim.models[user].leg(side).to_dict()
    for key in JOINT_KEYS:
        sections[f"limits.{key.side.value}.{key.joint.value}"] = sim.models[User.PATIENT].limits[key].to_dict()
    profile = sim.therapist.profile
    sections['gait'] = {'cadence': profile.cadence}
    for joint in LEG_JOINTS:
        series = profile.series[joint]
        values = {'mean': series.mean}
        for order, (amplitude, offset) in enumerate(series.harmonics, start=1):
            values[f"amplitude_{order}"] = amplitude
            values[f"phase_{order}"] = offset
        sections[f"gait.{joint.value}"] = values
    sections['therapist'] = {'tracking_kp': sim.therapist.tracking_kp, 'tracking_kd': sim.therapist.tracking_kd,
                             'strength_limit': sim.therapist.strength_limit}
    patient = sim.patient
    sections['patient'] = {'weakness': patient.weakness, 'paretic_side': patient.paretic_side.value,
                           'intent_delay': patient.intent_delay, 'voluntary_kp': patient.voluntary_kp,
                           'voluntary_kd': patient.voluntary_kd, 'rom_stiffness': patient.rom_stiffness}
    for key in JOINT_KEYS:
        sections[f"patient.{key.side.value}.{key.joint.value}"] = patient.joints[key].to_dict()
    analysis = sim.analysis
    sections['analysis'] = {'stride_samples': analysis.stride_samples, 'trim_seconds': analysis.trim_seconds,
                            'area_mode': analysis.area_mode, 'pooled_area': analysis.pooled_area,
                            'lag_mode': analysis.lag_mode,
                            'heel_strike_prominence': analysis.heel_strike_prominence,
                            'min_spacing_fraction': analysis.min_spacing_fraction,
                            'force_threshold': analysis.force_threshold,
                            'nominal_cycle_s': analysis.nominal_cycle_s}
    return sections


def dump_config(sim: SimConfig) -> str:
    """Resolved configuration as INI text; loading it reproduces `sim`."""
    return dump_sections(sim_config_sections(sim))


def sim_config_hash(sim: SimConfig) -> str:
    return config_hash(dump_config(sim))
