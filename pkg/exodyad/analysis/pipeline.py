"""Turns simulation logs and recorded datasets into metric reports."""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
import structlog
from tqdm import tqdm

from exodyad.analysis.dataset import BlockRecording, DatasetLayout
from exodyad.analysis.metrics import (EffortMetrics, SpatialGaitMetrics, borg_rpe, dyad_deviation, hr_percent_max,
                                      step_height, step_length, workspace_area)
from exodyad.analysis.report import MetricRecord, MetricsReport, block_label
from exodyad.analysis.signals import (TimeSeries, emg_envelope, heel_strikes_from_force, normalize_to_baseline,
                                      resample, stride_matrix, time_normalize, trim_edges)
from exodyad.dynamics.coupling import mirror_map
from exodyad.dynamics.model import ExoskeletonModel, ankle_trajectory, default_model
from exodyad.dynamics.plant import SimConfig, SimLog, strides_from_events, trajectory_heel_strikes
from exodyad.utils.config import AnalysisConfig
from exodyad.utils.exception import NoStridesError, StructuralError, raise_exception
from exodyad.utils.types import LEG_JOINTS, JointId, Side, User

logger = structlog.get_logger(__name__)

Leg = Tuple[User, Side]
StrideSink = Callable[[str, np.ndarray], None]
Baseline = Mapping[Tuple[str, Side, str], float]


def limb_label(user: User, side: Side, paretic_side: Side) -> str:
    if user is User.THERAPIST:
        return 'therapist'
    return 'paretic' if side is paretic_side else 'non_paretic'


@dataclass(frozen=True)
class RecordContext:
    patient: str
    condition: str
    block: int
    paretic_side: Side

    @property
    def prefix(self) -> str:
        return f"{self.patient}_{self.condition}_{block_label(self.block)}"

    def record(self, user: User, side: Side, element: str, metric: str, value: float,
               stride: Optional[int] = None) -> MetricRecord:
        return MetricRecord(patient=self.patient, condition=self.condition, block=block_label(self.block),
                            user=user.value, side=side.value, limb=limb_label(user, side, self.paretic_side),
                            element=element, metric=metric, value=float(value), stride=stride)


@dataclass
class BlockKinematics:
    """Joint angles (n, 2) in radians and heel-strike sample indices per leg, one block."""

    sample_rate_hz: float
    angles: Dict[Leg, np.ndarray]
    events: Dict[Leg, np.ndarray]
    models: Mapping[User, ExoskeletonModel] = field(default_factory=lambda: {user: default_model() for user in User})


def _leg_strides(kinematics: BlockKinematics, leg: Leg, config: AnalysisConfig) -> List[Tuple[int, int]]:
    try:
        return strides_from_events(kinematics.events.get(leg, ()))
    except NoStridesError as e:
        raise_exception(str(e), config.error_strategy, 'warning', logger, user=leg[0].value, side=leg[1].value)
        return []


def spatial_records(kinematics: BlockKinematics, context: RecordContext, config: AnalysisConfig,
                    stride_sink: Optional[StrideSink] = None) -> List[MetricRecord]:
    """Workspace area, step length and step height of every leg with at least one stride."""
    records = []
    ankles = {(user, side): ankle_trajectory(angles[:, 0], angles[:, 1], kinematics.models[user].leg(side))
              for (user, side), angles in kinematics.angles.items()}
    for (user, side), ankle in ankles.items():
        strides = _leg_strides(kinematics, (user, side), config)
        if not strides:
            continue
        area = workspace_area([ankle[start:end + 1] for start, end in strides], config.area_mode,
                              config.pooled_area, config.error_strategy)
        other = ankles.get((user, side.opposite))
        lengths, heights = (), ()
        if other is not None:
            lengths = tuple(step_length(ankle[start], other[start]) for start, _ in strides)
            heights = tuple(step_height(ankle[start:end + 1, 1], other[start:end + 1, 1]) for start, end in strides)
        spatial = SpatialGaitMetrics(area, lengths, heights)
        records.append(context.record(user, side, 'ankle', 'workspace_area', spatial.workspace_area))
        for index, (length, height) in enumerate(zip(spatial.step_length, spatial.step_height)):
            records.append(context.record(user, side, 'ankle', 'step_length', length, index))
            records.append(context.record(user, side, 'ankle', 'step_height', height, index))
        if stride_sink is not None:
            for column, joint in enumerate(LEG_JOINTS):
                label = f"{user.value}_{side.value}_{joint.value}_angle_deg"
                series = TimeSeries(kinematics.sample_rate_hz, np.degrees(kinematics.angles[(user, side)][:, column]),
                                    label)
                stride_sink(f"{context.prefix}_{label}", stride_matrix(series, strides, config.stride_samples))
    return records


def deviation_records(kinematics: BlockKinematics, context: RecordContext,
                      config: AnalysisConfig) -> List[MetricRecord]:
    """Per-stride deviation of each patient joint from its mirrored therapist joint.

    Strides are segmented on the therapist leg, which serves as the reference series.
    """
    records = []
    for side in Side:
        follower = kinematics.angles.get((User.PATIENT, side))
        reference_leg = mirror_map(User.PATIENT, side)
        reference = kinematics.angles.get(reference_leg)
        if follower is None or reference is None:
            continue
        strides = _leg_strides(kinematics, reference_leg, config)
        for column, joint in enumerate(LEG_JOINTS):
            reference_series = TimeSeries(kinematics.sample_rate_hz, reference[:, column])
            follower_series = TimeSeries(kinematics.sample_rate_hz, follower[:, column])
            for index, bounds in enumerate(strides):
                deviation = dyad_deviation(time_normalize(reference_series, bounds, config.stride_samples),
                                           time_normalize(follower_series, bounds, config.stride_samples))
                records += [context.record(User.PATIENT, side, joint.value, 'spatial_rmse',
                                           deviation.spatial_rmse, index),
                            context.record(User.PATIENT, side, joint.value, 'temporal_lag_signed',
                                           deviation.temporal_lag, index),
                            context.record(User.PATIENT, side, joint.value, 'temporal_lag_abs',
                                           deviation.absolute_lag, index)]
    return records


def _window(indices: np.ndarray, trim: int) -> Tuple[int, int]:
    start, end = int(indices[0]) + trim, int(indices[-1]) - trim
    if end <= start:
        raise StructuralError(f"trimming {trim} samples from each end leaves no data in the block")
    return start, end


def analyze_simlog(log: SimLog, sim_config: SimConfig, config: Optional[AnalysisConfig] = None,
                   stride_sink: Optional[StrideSink] = None) -> MetricsReport:
    """Metrics of every block of a simulation log.

    Heel strikes come from the logged gait phase. Events closer than `trim_seconds`
    to a block boundary are discarded so that gain ramps and start-up transients do
    not enter the strides.

    Args:
        log (SimLog): Per-tick records
        sim_config (SimConfig): Configuration that produced the log
        config (AnalysisConfig): Analysis options; defaults to `sim_config.analysis`
        stride_sink: Receives time-normalized stride matrices when given

    Returns:
        (MetricsReport): Per-stride, per-block and cross-block records
    """
    config = config or sim_config.analysis
    sample_rate = 1.0 / sim_config.dt
    trim = int(round(config.trim_seconds * sample_rate))
    blocks = log.column('block').astype(int)
    report = MetricsReport()
    for block in tqdm(np.unique(blocks), desc='Blocks', disable=not config.display_progress_bar):
        start, end = _window(np.flatnonzero(blocks == block), trim)
        window = slice(start, end + 1)
        context = RecordContext(sim_config.patient_id, sim_config.condition, int(block),
                                sim_config.patient.paretic_side)
        angles = {(user, side): log.leg(user, side, 'angle')[window] for user in User for side in Side}
        events = {}
        for user in User:
            for side in Side:
                strikes = log.heel_strikes(user, side)
                events[(user, side)] = strikes[(strikes >= start) & (strikes <= end)] - start
        kinematics = BlockKinematics(sample_rate, angles, events, sim_config.models)
        report.extend(spatial_records(kinematics, context, config, stride_sink))
        report.extend(deviation_records(kinematics, context, config))
        for user in User:
            for side in Side:
                measured = log.leg(user, side, 'measured_torque')[window]
                velocity = log.leg(user, side, 'velocity')[window]
                human = log.leg(user, side, 'human_torque')[window]
                for column, joint in enumerate(LEG_JOINTS):
                    rms = float(np.sqrt(np.mean(measured[:, column] ** 2)))
                    report.extend([context.record(user, side, joint.value, 'interaction_torque_rms', rms)])
                power = float(np.mean(np.sum(human * velocity, axis=1)))
                report.extend([context.record(user, side, 'leg', 'human_power_mean', power)])
        logger.info("block_analyzed", patient=sim_config.patient_id, block=int(block), window=(start, end))
    return report.with_aggregates()


def _heel_strikes(recording: BlockRecording, side: Side, ankle_x: np.ndarray, sample_rate_hz: float,
                  config: AnalysisConfig) -> np.ndarray:
    """Patient heel strikes from the force channel, or the ankle trajectory when allowed."""
    force = recording.heel_force(side)
    if force is not None:
        events = heel_strikes_from_force(force, config.force_threshold)
        return np.round(events * sample_rate_hz / force.sample_rate_hz).astype(int)
    if not config.detect_from_trajectory:
        raise StructuralError(f"{recording.path}: no {side.value}_heel_force channel; "
                              f"pass --detect-from-trajectory to detect heel strikes from the ankle trajectory")
    return trajectory_heel_strikes(ankle_x, sample_rate_hz, config.nominal_cycle_s,
                                   config.heel_strike_prominence, config.min_spacing_fraction)


def _recording_kinematics(recording: BlockRecording, config: AnalysisConfig,
                          models: Mapping[User, ExoskeletonModel]) -> Optional[BlockKinematics]:
    channels = recording.joint_angles()
    if not channels:
        return None
    sample_rate = next(iter(channels.values())).sample_rate_hz
    channels = {joint: series if series.sample_rate_hz == sample_rate else resample(series, sample_rate)
                for joint, series in channels.items()}
    length = min(len(series) for series in channels.values())
    start, end = _window(np.arange(length), int(round(config.trim_seconds * sample_rate)))
    angles, events = {}, {}
    for user in User:
        for side in Side:
            joints = [JointId(user, side, joint) for joint in LEG_JOINTS]
            if not all(joint in channels for joint in joints):
                continue
            leg = np.column_stack([channels[joint].samples[:length] for joint in joints])
            ankle_x = ankle_trajectory(leg[:, 0], leg[:, 1], models[user].leg(side))[:, 0]
            # force plates only record the patient's feet
            if user is User.PATIENT:
                strikes = _heel_strikes(recording, side, ankle_x, sample_rate, config)
            else:
                strikes = trajectory_heel_strikes(ankle_x, sample_rate, config.nominal_cycle_s,
                                                  config.heel_strike_prominence, config.min_spacing_fraction)
            angles[(user, side)] = leg[start:end + 1]
            events[(user, side)] = strikes[(strikes >= start) & (strikes <= end)] - start
    return BlockKinematics(sample_rate, angles, events, models)


def envelope_mean(series: TimeSeries, config: AnalysisConfig) -> float:
    """Mean EMG envelope of a block after trimming its edges."""
    return float(np.mean(trim_edges(emg_envelope(series, config.error_strategy), config.trim_seconds).samples))


def emg_baseline(layout: DatasetLayout, config: Optional[AnalysisConfig] = None) -> Dict[Tuple[str, Side, str], float]:
    """Free-walking reference: per patient, side and muscle, the mean of the block mean envelopes."""
    config = config or AnalysisConfig()
    values: Dict[Tuple[str, Side, str], List[float]] = {}
    for recording in layout.recordings():
        for (side, muscle), series in recording.emg().items():
            values.setdefault((recording.patient_id, side, muscle), []).append(envelope_mean(series, config))
    return {key: float(np.mean(block_means)) for key, block_means in values.items()}


def effort_records(recording: BlockRecording, layout: DatasetLayout, context: RecordContext,
                   config: AnalysisConfig, baseline: Optional[Baseline] = None,
                   stride_sink: Optional[StrideSink] = None) -> List[MetricRecord]:
    """Heart rate, Borg rating and muscle activation of one block."""
    records = []
    info = layout.patients[recording.patient_id]
    heart_rate = recording.heart_rate()
    rating = layout.ratings(recording.patient_id, recording.condition).get(recording.block)
    effort = EffortMetrics(
        hr_percent_max=None if heart_rate is None else hr_percent_max(
            trim_edges(heart_rate, config.trim_seconds).samples, info.age),
        rpe_borg=None if rating is None else borg_rpe(rating))
    if effort.hr_percent_max is not None:
        records.append(context.record(User.PATIENT, info.paretic_side, 'heart', 'hr_percent_max',
                                      effort.hr_percent_max))
    if effort.rpe_borg is not None:
        records.append(context.record(User.PATIENT, info.paretic_side, 'whole_body', 'rpe_borg', effort.rpe_borg))
    for (side, muscle), series in recording.emg().items():
        mean = envelope_mean(series, config)
        if baseline is None:
            records.append(context.record(User.PATIENT, side, muscle, 'emg_envelope_mean', mean))
            continue
        key = (recording.patient_id, side, muscle)
        if key not in baseline:
            raise StructuralError(f"baseline has no {side.value} {muscle} recording for patient "
                                  f"'{recording.patient_id}'")
        records.append(context.record(User.PATIENT, side, muscle, 'activation_percent',
                                      normalize_to_baseline(mean, baseline[key])))
        if stride_sink is not None:
            force = recording.heel_force(side)
            if force is not None:
                envelope = emg_envelope(series, config.error_strategy)
                events = heel_strikes_from_force(force, config.force_threshold)
                events = np.round(events * envelope.sample_rate_hz / force.sample_rate_hz).astype(int)
                events = events[events < len(envelope)]
                if len(events) >= 2:
                    stride_sink(f"{context.prefix}_emg_{side.value}_{muscle}",
                                stride_matrix(envelope, strides_from_events(events), config.stride_samples))
    return records


def analyze_dataset(layout: DatasetLayout, config: Optional[AnalysisConfig] = None,
                    baseline: Optional[Baseline] = None,
                    models: Optional[Mapping[User, ExoskeletonModel]] = None,
                    stride_sink: Optional[StrideSink] = None) -> MetricsReport:
    """Metrics of every block recording of a dataset.

    Args:
        layout (DatasetLayout): Indexed dataset
        config (AnalysisConfig): Analysis options
        baseline: Free-walking envelope means from `emg_baseline`; without it EMG is
            reported as raw envelope means
        models: Exoskeleton geometry used for ankle kinematics
        stride_sink: Receives time-normalized stride matrices when given

    Returns:
        (MetricsReport): Per-stride, per-block and cross-block records
    """
    config = config or AnalysisConfig()
    models = models or {user: default_model() for user in User}
    report = MetricsReport()
    for recording in tqdm(layout.recordings(), desc='Blocks', disable=not config.display_progress_bar):
        info = layout.patients[recording.patient_id]
        context = RecordContext(recording.patient_id, recording.condition, recording.block, info.paretic_side)
        kinematics = _recording_kinematics(recording, config, models)
        if kinematics is not None:
            report.extend(spatial_records(kinematics, context, config, stride_sink))
            report.extend(deviation_records(kinematics, context, config))
        report.extend(effort_records(recording, layout, context, config, baseline, stride_sink))
        logger.info("block_analyzed", patient=recording.patient_id, condition=recording.condition,
                    block=recording.block)
    return report.with_aggregates()
