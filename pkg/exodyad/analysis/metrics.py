"""Outcome measures: dyad deviation, ankle workspace, step geometry, effort and statistics."""
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from scipy import stats
from scipy.spatial import ConvexHull, QhullError

from exodyad.analysis.signals import StrideSeries
from exodyad.utils.exception import StructuralError, raise_exception

logger = structlog.get_logger(__name__)

Values = Union[Sequence[float], np.ndarray]

BORG_RANGE = (6, 20)
AGE_RANGE = (10.0, 110.0)


@dataclass(frozen=True)
class WarpPath:
    pairs: np.ndarray
    cost: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'pairs', np.asarray(self.pairs, dtype=int).reshape(-1, 2))

    def __len__(self):
        return self.pairs.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.pairs[-1, 0]) + 1, int(self.pairs[-1, 1]) + 1

    def validate(self, n: Optional[int] = None, m: Optional[int] = None) -> 'WarpPath':
        """Checks boundary, monotonicity and unit-step constraints."""
        if len(self) == 0:
            raise StructuralError("warp path is empty")
        if tuple(self.pairs[0]) != (0, 0):
            raise StructuralError(f"warp path starts at {tuple(self.pairs[0])}, not (0, 0)")
        if n is not None and m is not None and tuple(self.pairs[-1]) != (n - 1, m - 1):
            raise StructuralError(f"warp path ends at {tuple(self.pairs[-1])}, not {(n - 1, m - 1)}")
        steps = np.diff(self.pairs, axis=0)
        if np.any(steps < 0) or np.any(steps > 1) or np.any(steps.sum(axis=1) == 0):
            raise StructuralError("warp path steps must advance i, j or both by exactly 1")
        return self


def _values(series: Union[StrideSeries, Values]) -> np.ndarray:
    if isinstance(series, StrideSeries):
        return series.normalized_samples
    return np.asarray(series, dtype=float)


def dtw_align(a: Union[StrideSeries, Values], b: Union[StrideSeries, Values]) -> WarpPath:
    """Dynamic time warping with absolute-difference cost.

    Rows of the accumulated-cost table are filled with a min-plus prefix scan. Backtracking
    prefers the diagonal step on ties, then the step that moves toward the diagonal.
    """
    a = _values(a)
    b = _values(b)
    if a.size == 0 or b.size == 0:
        raise ValueError("cannot align an empty stride")
    n, m = a.size, b.size
    cost = np.abs(a[:, None] - b[None, :])
    accumulated = np.empty((n, m))
    accumulated[0] = np.cumsum(cost[0])
    for i in range(1, n):
        row = cost[i]
        best = np.empty(m)
        best[0] = accumulated[i - 1, 0] + row[0]
        best[1:] = row[1:] + np.minimum(accumulated[i - 1, :-1], accumulated[i - 1, 1:])
        prefix = np.cumsum(row)
        accumulated[i] = np.minimum.accumulate(best - prefix) + prefix

    i, j = n - 1, m - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diagonal = accumulated[i - 1, j - 1]
            up = accumulated[i - 1, j]
            left = accumulated[i, j - 1]
            best = min(diagonal, up, left)
            if diagonal == best:
                i, j = i - 1, j - 1
            elif up == best and (left != best or i >= j):
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    return WarpPath(np.array(path[::-1]), float(accumulated[-1, -1]))


def spatial_deviation(a: Union[StrideSeries, Values], b: Union[StrideSeries, Values], path: WarpPath) -> float:
    """Root-mean-square joint difference along the warp path, in degrees (inputs in radians)."""
    a = _values(a)
    b = _values(b)
    differences = a[path.pairs[:, 0]] - b[path.pairs[:, 1]]
    return math.degrees(math.sqrt(float(np.mean(differences ** 2))))


def _path_offsets(path: WarpPath) -> np.ndarray:
    """j - i for every pair on the path."""
    return path.pairs[:, 1] - path.pairs[:, 0]


def temporal_deviation(path: WarpPath, N: int) -> float:
    """Signed lag in percent of the gait cycle; positive means the second series lags."""
    return 100.0 * float(np.mean(_path_offsets(path))) / N


def absolute_lag(path: WarpPath, N: int) -> float:
    return 100.0 * float(np.mean(np.abs(_path_offsets(path)))) / N


@dataclass(frozen=True)
class DyadDeviation:
    spatial_rmse: float
    temporal_lag: float
    absolute_lag: float

    def __post_init__(self):
        if self.spatial_rmse < 0 or abs(self.temporal_lag) > 50:
            raise ValueError(f"deviation out of range: {self}")


def dyad_deviation(reference: Union[StrideSeries, Values], follower: Union[StrideSeries, Values]) -> DyadDeviation:
    """Spatial and temporal deviation of `follower` from `reference` over one stride."""
    path = dtw_align(reference, follower).validate(len(_values(reference)), len(_values(follower)))
    N = len(_values(reference))
    return DyadDeviation(spatial_deviation(reference, follower, path), temporal_deviation(path, N),
                         absolute_lag(path, N))


def convex_hull_area(points, error_strategy: str = 'log') -> float:
    """Area of the convex hull of planar points in m^2; degenerate sets give 0."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if points.shape[0] >= 3:
        try:
            return float(ConvexHull(points).volume)
        except QhullError:
            pass
    raise_exception("degenerate_workspace", error_strategy, 'warning', logger, points=int(points.shape[0]))
    return 0.0


def shoelace_area(points) -> float:
    """Absolute area enclosed by a closed polygon traced in order, m^2."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    x, y = points[:, 0], points[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def mean_cycle(strides: Sequence[np.ndarray], N: int = 100) -> np.ndarray:
    """Average of strides each resampled to N points, shape (N, 2)."""
    resampled = []
    for stride in strides:
        stride = np.asarray(stride, dtype=float)
        source = np.linspace(0.0, 1.0, stride.shape[0])
        target = np.linspace(0.0, 1.0, N)
        resampled.append(np.column_stack([np.interp(target, source, stride[:, axis]) for axis in range(2)]))
    return np.mean(resampled, axis=0)


def workspace_area(strides: Sequence[np.ndarray], mode: str = 'hull', pooled: bool = False,
                   error_strategy: str = 'log') -> float:
    """Ankle workspace area of a block in cm^2.

    Args:
        strides: Ankle (x, y) points of each stride, meters
        mode (str): 'hull' averages per-stride convex hull areas; 'shoelace' takes the
            enclosed area of the mean cycle
        pooled (bool): Hull of all points of the block instead of the per-stride mean
        error_strategy (str): Handling of degenerate strides

    Returns:
        (float): Area in cm^2
    """
    if len(strides) == 0:
        raise ValueError("workspace area needs at least one stride")
    if mode == 'shoelace':
        return 1e4 * shoelace_area(mean_cycle(strides))
    if mode != 'hull':
        raise ValueError(f"mode must be 'hull' or 'shoelace', got '{mode}'")
    if pooled:
        return 1e4 * convex_hull_area(np.concatenate([np.asarray(s).reshape(-1, 2) for s in strides]),
                                      error_strategy)
    return 1e4 * float(np.mean([convex_hull_area(stride, error_strategy) for stride in strides]))


def step_length(landing_xy, stance_xy) -> float:
    """Horizontal distance between landing and stance ankles at heel strike, cm."""
    return 100.0 * abs(float(landing_xy[0]) - float(stance_xy[0]))


def step_height(swing_y, stance_y) -> float:
    """Maximum height of the swing ankle above the stance ankle over a stride, cm."""
    difference = np.asarray(swing_y, dtype=float) - np.asarray(stance_y, dtype=float)
    return 100.0 * max(float(np.max(difference)), 0.0)


@dataclass(frozen=True)
class SpatialGaitMetrics:
    workspace_area: float
    step_length: Tuple[float, ...]
    step_height: Tuple[float, ...]

    def __post_init__(self):
        if self.workspace_area < 0 or any(v < 0 for v in self.step_length + self.step_height):
            raise ValueError("spatial gait metrics must be non-negative")


def hr_percent_max(mean_hr_bpm: Union[float, Values], age_years: float) -> float:
    """Heart rate as a percentage of the age-predicted maximum, 208 - 0.7 age."""
    if not AGE_RANGE[0] <= age_years <= AGE_RANGE[1]:
        raise ValueError(f"age must lie in [{AGE_RANGE[0]:g}, {AGE_RANGE[1]:g}] years, got {age_years}")
    mean_hr = float(np.mean(mean_hr_bpm))
    if not mean_hr > 0:
        raise ValueError(f"heart rate must be positive, got {mean_hr}")
    return 100.0 * mean_hr / (208.0 - 0.7 * age_years)


def borg_rpe(value) -> int:
    """Validated rating of perceived exertion on the 6-20 scale."""
    rating = int(value)
    if rating != float(value) or not BORG_RANGE[0] <= rating <= BORG_RANGE[1]:
        raise ValueError(f"Borg rating must be an integer in [6, 20], got {value}")
    return rating


@dataclass(frozen=True)
class EffortMetrics:
    hr_percent_max: Optional[float] = None
    rpe_borg: Optional[int] = None
    activation_percent: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.rpe_borg is not None:
            borg_rpe(self.rpe_borg)
        if self.hr_percent_max is not None and not self.hr_percent_max > 0:
            raise ValueError(f"hr_percent_max must be positive, got {self.hr_percent_max}")


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: int
    p_value: float
    mean_difference: float
    n_pairs: int
    degenerate: bool = False


def paired_t_test(a: Values, b: Values, error_strategy: str = 'log') -> TTestResult:
    """Two-sided paired t-test of a against b.

    Identical samples give t = 0 and p = 1. Differences with zero variance and a nonzero
    mean give an infinite t and p = 0, flagged as degenerate.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be one-dimensional and of equal length")
    n = a.size
    if n < 2:
        raise ValueError(f"paired t-test needs at least 2 pairs, got {n}")
    difference = a - b
    mean_difference = float(np.mean(difference))
    if np.all(difference == difference[0]):
        if mean_difference == 0:
            return TTestResult(0.0, n - 1, 1.0, 0.0, n)
        raise_exception("zero_variance_difference", error_strategy, 'warning', logger,
                        mean_difference=mean_difference)
        return TTestResult(math.copysign(math.inf, mean_difference), n - 1, 0.0, mean_difference, n,
                           degenerate=True)
    result = stats.ttest_rel(a, b)
    return TTestResult(float(result.statistic), n - 1, float(result.pvalue), mean_difference, n)


def mean_and_standard_error(values: Values) -> Tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("no values to summarize")
    if values.size == 1:
        return float(values[0]), 0.0
    return float(np.mean(values)), float(stats.sem(values))


def significance_marker(p_value: float) -> str:
    if p_value < 0.001:
        return '***'
    if p_value < 0.01:
        return '**'
    if p_value < 0.05:
        return '*'
    return ''


@dataclass(frozen=True)
class BlockAggregate:
    block_values: Mapping[int, float]
    mean: float
    present: Tuple[bool, ...]


def aggregate_blocks(values: Union[Mapping[int, Optional[float]], Sequence[Optional[float]]],
                     n_blocks: Optional[int] = None) -> BlockAggregate:
    """Cross-block mean over the blocks that are present (None marks a missing block)."""
    if isinstance(values, Mapping):
        blocks = dict(values)
    else:
        blocks = {index: value for index, value in enumerate(values, start=1)}
    if not blocks:
        raise ValueError("at least one block is required")
    ordered = sorted(blocks)
    available = {index: float(blocks[index]) for index in ordered if blocks[index] is not None}
    if not available:
        raise ValueError("no block has a value")
    present = tuple(blocks.get(index) is not None for index in range(1, max(ordered + [n_blocks or 0]) + 1))
    return BlockAggregate(available, float(np.mean(list(available.values()))), present)
