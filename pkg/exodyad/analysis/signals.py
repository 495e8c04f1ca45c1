"""Offline processing of EMG and kinematic channels."""
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import signal

from exodyad.utils.exception import UndefinedBaselineError, raise_exception
from exodyad.utils.helper import FLOAT_FORMAT
from exodyad.utils.types import PathType

logger = structlog.get_logger(__name__)

EMG_BANDPASS_HZ = (20.0, 500.0)
EMG_NOTCH_HZ = (59.0, 61.0)
EMG_LOWPASS_HZ = 5.0
BANDPASS_CLIP_FRACTION = 0.45
SAMPLE_RATE_HEADER = '# sample_rate_hz='


@dataclass(frozen=True)
class TimeSeries:
    sample_rate_hz: float
    samples: np.ndarray
    channel_label: str = ''
    stages: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'samples', np.asarray(self.samples, dtype=float))
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError(f"channel '{self.channel_label}' contains non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def with_samples(self, samples, stage: Optional[str] = None) -> 'TimeSeries':
        stages = self.stages + (stage,) if stage else self.stages
        return replace(self, samples=samples, stages=stages)


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth filter. `order` is the order of the designed filter; band filters
    split it between the two band edges."""

    kind: str
    order: int
    corner_frequencies_hz: Tuple[float, ...]
    zero_phase: bool = True

    def __post_init__(self):
        if self.kind not in ('bandpass', 'notch', 'lowpass'):
            raise ValueError(f"filter kind must be bandpass, notch or lowpass, got '{self.kind}'")
        if self.order < 2 or self.order % 2:
            raise ValueError(f"filter order must be an even integer >= 2, got {self.order}")
        expected = 1 if self.kind == 'lowpass' else 2
        if len(self.corner_frequencies_hz) != expected:
            raise ValueError(f"{self.kind} filter needs {expected} corner frequencies")
        if expected == 2 and not 0 < self.corner_frequencies_hz[0] < self.corner_frequencies_hz[1]:
            raise ValueError(f"band corners must be increasing and positive, got {self.corner_frequencies_hz}")


def design_filter(spec: FilterSpec, sample_rate_hz: float) -> np.ndarray:
    """Second-order sections of the Butterworth filter described by `spec`."""
    nyquist = sample_rate_hz / 2.0
    if any(corner >= nyquist or corner <= 0 for corner in spec.corner_frequencies_hz):
        raise ValueError(f"corner frequencies {spec.corner_frequencies_hz} must lie in (0, {nyquist}) Hz")
    if spec.kind == 'lowpass':
        return signal.butter(spec.order, spec.corner_frequencies_hz[0], btype='lowpass', fs=sample_rate_hz,
                             output='sos')
    btype = 'bandpass' if spec.kind == 'bandpass' else 'bandstop'
    return signal.butter(spec.order // 2, spec.corner_frequencies_hz, btype=btype, fs=sample_rate_hz,
                         output='sos')


def apply_filter(series: TimeSeries, spec: FilterSpec, stage: Optional[str] = None) -> TimeSeries:
    sos = design_filter(spec, series.sample_rate_hz)
    if spec.zero_phase:
        filtered = signal.sosfiltfilt(sos, series.samples)
    else:
        filtered = signal.sosfilt(sos, series.samples)
    return series.with_samples(filtered, stage or spec.kind)


def emg_filter_specs(sample_rate_hz: float, error_strategy: str = 'log') -> Tuple[FilterSpec, FilterSpec, FilterSpec]:
    """Bandpass 20-500 Hz (sixth order), 59-61 Hz band-stop (fourth order), 5 Hz lowpass."""
    low, high = EMG_BANDPASS_HZ
    if high >= BANDPASS_CLIP_FRACTION * sample_rate_hz:
        clipped = BANDPASS_CLIP_FRACTION * sample_rate_hz
        raise_exception("bandpass_corner_clipped", error_strategy, 'warning', logger,
                        sample_rate_hz=sample_rate_hz, requested_hz=high, clipped_hz=clipped)
        high = clipped
    return (FilterSpec('bandpass', 6, (low, high)),
            FilterSpec('notch', 4, EMG_NOTCH_HZ),
            FilterSpec('lowpass', 4, (EMG_LOWPASS_HZ,)))


def emg_envelope(raw: TimeSeries, error_strategy: str = 'log') -> TimeSeries:
    """Bandpass, notch, full-wave rectification, then lowpass.

    Lowpass ringing below zero is clipped as part of the lowpass stage.
    """
    if len(raw) == 0:
        raise ValueError(f"channel '{raw.channel_label}' is empty")
    bandpass, notch, lowpass = emg_filter_specs(raw.sample_rate_hz, error_strategy)
    series = apply_filter(raw, bandpass, 'bandpass')
    series = apply_filter(series, notch, 'notch')
    series = series.with_samples(np.abs(series.samples), 'rectify')
    series = apply_filter(series, lowpass, 'lowpass')
    return replace(series, samples=np.maximum(series.samples, 0.0))


@dataclass(frozen=True)
class StrideSeries:
    normalized_samples: np.ndarray
    source_stride_duration: float

    def __post_init__(self):
        object.__setattr__(self, 'normalized_samples', np.asarray(self.normalized_samples, dtype=float))
        if self.normalized_samples.ndim != 1 or self.normalized_samples.size < 2:
            raise ValueError("a stride needs at least two normalized samples")

    def __len__(self):
        return self.normalized_samples.size


def time_normalize(series: TimeSeries, stride_bounds: Tuple[float, float], N: int = 100) -> StrideSeries:
    """Linear interpolation onto N equally spaced points from start to end tick inclusive."""
    start, end = stride_bounds
    if N < 2:
        raise ValueError(f"N must be at least 2, got {N}")
    if not end > start:
        raise ValueError(f"stride end ({end}) must follow its start ({start})")
    if start < 0 or end > len(series) - 1:
        raise ValueError(f"stride bounds ({start}, {end}) outside series of {len(series)} samples")
    points = np.linspace(start, end, N)
    values = np.interp(points, np.arange(len(series)), series.samples)
    return StrideSeries(values, (end - start) / series.sample_rate_hz)


def stride_matrix(series: TimeSeries, strides: Sequence[Tuple[int, int]], N: int = 100) -> np.ndarray:
    """Time-normalized strides stacked as rows, shape (len(strides), N)."""
    return np.array([time_normalize(series, bounds, N).normalized_samples for bounds in strides]).reshape(-1, N)


def normalize_to_baseline(activation_mean: float, baseline_mean: float) -> float:
    """Activation as a percentage of the free-walking baseline."""
    if not baseline_mean > 0:
        raise UndefinedBaselineError(f"baseline must be positive, got {baseline_mean}")
    return 100.0 * activation_mean / baseline_mean


def resample(series: TimeSeries, target_rate_hz: float) -> TimeSeries:
    """Polyphase resampling to `target_rate_hz` (e.g. 148 Hz IMU data to the control rate)."""
    ratio = Fraction(target_rate_hz / series.sample_rate_hz).limit_denominator(1000)
    samples = signal.resample_poly(series.samples, ratio.numerator, ratio.denominator)
    return replace(series, sample_rate_hz=float(target_rate_hz), samples=samples,
                   stages=series.stages + ('resample',))


def trim_edges(series: TimeSeries, seconds: float = 1.0) -> TimeSeries:
    trim = int(round(seconds * series.sample_rate_hz))
    if 2 * trim >= len(series):
        raise ValueError(f"trimming {seconds} s from each end leaves no samples of '{series.channel_label}'")
    return series.with_samples(series.samples[trim:len(series) - trim] if trim else series.samples, 'trim')


def heel_strikes_from_force(series: TimeSeries, threshold: float = 20.0) -> np.ndarray:
    """Samples where the ground reaction force rises through `threshold`."""
    above = series.samples >= threshold
    return np.flatnonzero(~above[:-1] & above[1:]) + 1


def read_channel_csv(path: PathType, channel_label: Optional[str] = None) -> TimeSeries:
    """Reads a (time, value) channel file whose first line is `# sample_rate_hz=<rate>`."""
    path = Path(path)
    with open(path) as f:
        header = f.readline().strip()
    if not header.startswith(SAMPLE_RATE_HEADER):
        raise ValueError(f"{path}: missing '{SAMPLE_RATE_HEADER}' header")
    rate = float(header[len(SAMPLE_RATE_HEADER):])
    data = np.loadtxt(path, delimiter=',', comments='#', skiprows=2, ndmin=2)
    return TimeSeries(rate, data[:, 1], channel_label or path.stem)


def write_channel_csv(path: PathType, series: TimeSeries):
    time = np.arange(len(series)) / series.sample_rate_hz
    np.savetxt(path, np.column_stack([time, series.samples]), fmt=FLOAT_FORMAT, delimiter=',',
               header=f"{SAMPLE_RATE_HEADER[2:]}{series.sample_rate_hz!r}\ntime_s,value", comments='# ')


def write_stride_matrix(path: PathType, matrix: np.ndarray):
    N = matrix.shape[1]
    header = ','.join(f"pct_{100 * k / (N - 1):g}" for k in range(N))
    np.savetxt(path, matrix, fmt=FLOAT_FORMAT, delimiter=',', header=header, comments='')
