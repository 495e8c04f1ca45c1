import math

import numpy as np
import pytest
from scipy import stats

from exodyad.analysis.metrics import (EffortMetrics, SpatialGaitMetrics, WarpPath, absolute_lag, aggregate_blocks,
                                      borg_rpe, convex_hull_area, dtw_align, dyad_deviation, hr_percent_max,
                                      mean_and_standard_error, mean_cycle, paired_t_test, shoelace_area,
                                      significance_marker, spatial_deviation, step_height, step_length,
                                      temporal_deviation, workspace_area)
from exodyad.analysis.signals import StrideSeries
from exodyad.utils.exception import StructuralError

N = 100
STRIDE = np.sin(2 * math.pi * np.arange(N) / N)


def ellipse(a=0.15, b=0.05, n=1000, center=(0.0, -0.8)):
    theta = np.linspace(0, 2 * math.pi, n, endpoint=False)
    return np.column_stack([center[0] + a * np.cos(theta), center[1] + b * np.sin(theta)])


def test_identical_strides_align_on_the_diagonal():
    path = dtw_align(STRIDE, STRIDE)
    np.testing.assert_array_equal(path.pairs, np.column_stack([np.arange(N), np.arange(N)]))
    assert path.cost == 0.0
    deviation = dyad_deviation(STRIDE, STRIDE)
    assert deviation.spatial_rmse == 0.0
    assert deviation.temporal_lag == 0.0
    assert deviation.absolute_lag == 0.0


@pytest.mark.parametrize('shift, expected', [(10, 9.0), (5, 4.71)])
def test_delayed_follower_lags(shift, expected):
    follower = np.roll(STRIDE, shift)
    deviation = dyad_deviation(STRIDE, follower)
    assert deviation.temporal_lag == pytest.approx(expected, abs=0.5)
    assert deviation.absolute_lag >= deviation.temporal_lag
    leading = dyad_deviation(follower, STRIDE)
    assert leading.temporal_lag < 0


def test_lag_averages_every_path_pair():
    path = WarpPath(np.array([[0, 0], [0, 1], [0, 2], [1, 2], [2, 2]])).validate(3, 3)
    assert temporal_deviation(path, 3) == pytest.approx(100.0 * 0.8 / 3)
    assert absolute_lag(path, 3) == pytest.approx(100.0 * 0.8 / 3)
    backward = WarpPath(path.pairs[:, ::-1])
    assert temporal_deviation(backward, 3) == pytest.approx(-100.0 * 0.8 / 3)
    assert absolute_lag(backward, 3) == pytest.approx(100.0 * 0.8 / 3)
    uniform = WarpPath(np.column_stack([np.arange(95), np.arange(95) + 5]))
    assert temporal_deviation(uniform, 100) == pytest.approx(5.0)


def test_uniform_offset_is_not_warped_away():
    flat = np.full(N, 0.3)
    deviation = dyad_deviation(flat, flat + math.radians(2.0))
    assert deviation.spatial_rmse == pytest.approx(2.0)


def test_warp_path_properties():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=40), rng.normal(size=55)
    path = dtw_align(StrideSeries(a, 1.0), b).validate(40, 55)
    assert path.shape == (40, 55)
    np.testing.assert_allclose(path.cost, np.sum(np.abs(a[path.pairs[:, 0]] - b[path.pairs[:, 1]])))
    assert spatial_deviation(a, b, path) >= 0
    assert abs(temporal_deviation(path, 40)) <= absolute_lag(path, 40)


def brute_force_dtw_cost(a, b):
    table = np.full((len(a) + 1, len(b) + 1), np.inf)
    table[0, 0] = 0.0
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            table[i, j] = abs(a[i - 1] - b[j - 1]) + min(table[i - 1, j - 1], table[i - 1, j], table[i, j - 1])
    return table[-1, -1]


def test_dtw_cost_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = rng.normal(size=rng.integers(1, 21))
        b = rng.normal(size=rng.integers(1, 21))
        path = dtw_align(a, b).validate(len(a), len(b))
        assert path.cost == pytest.approx(brute_force_dtw_cost(a, b), rel=1e-9, abs=1e-12)


def test_dtw_cost_is_exact_on_integer_strides():
    rng = np.random.default_rng(12)
    for _ in range(200):
        a = rng.integers(0, 6, size=rng.integers(1, 21)).astype(float)
        b = rng.integers(0, 6, size=rng.integers(1, 21)).astype(float)
        path = dtw_align(a, b).validate(len(a), len(b))
        assert path.cost == brute_force_dtw_cost(a, b)
        assert path.cost == np.sum(np.abs(a[path.pairs[:, 0]] - b[path.pairs[:, 1]]))


def test_warp_path_validation():
    with pytest.raises(StructuralError):
        WarpPath(np.array([[1, 1], [2, 2]])).validate()
    with pytest.raises(StructuralError):
        WarpPath(np.array([[0, 0], [2, 1]])).validate()
    with pytest.raises(StructuralError):
        WarpPath(np.array([[0, 0], [1, 1]])).validate(3, 3)
    with pytest.raises(ValueError):
        dtw_align([], [1.0])


def test_ellipse_workspace_area():
    points = ellipse()
    assert convex_hull_area(points) * 1e4 == pytest.approx(235.6, rel=1e-3)
    assert shoelace_area(points) * 1e4 == pytest.approx(235.6, rel=1e-3)
    assert workspace_area([points, points]) == pytest.approx(235.6, rel=1e-3)
    assert workspace_area([points], mode='shoelace') == pytest.approx(235.6, rel=2e-3)
    with pytest.raises(ValueError):
        workspace_area([points], mode='box')
    with pytest.raises(ValueError):
        workspace_area([])


def test_hull_area_grows_with_outside_points():
    rectangle = np.array([[0.0, 0.0], [0.3, 0.0], [0.3, 0.05], [0.0, 0.05]])
    assert convex_hull_area(rectangle) * 1e4 == pytest.approx(150.0)
    rng = np.random.default_rng(9)
    points = ellipse(n=50)
    area = convex_hull_area(points)
    for _ in range(20):
        points = np.vstack([points, rng.uniform([-0.4, -1.1], [0.4, -0.5])])
        grown = convex_hull_area(points)
        assert grown >= area - 1e-12
        area = grown


def test_pooled_area_covers_every_stride():
    strides = [ellipse(), ellipse(center=(0.05, -0.8))]
    assert workspace_area(strides, pooled=True) > workspace_area(strides)


def test_degenerate_workspace():
    line = np.column_stack([np.linspace(0, 1, 10), np.linspace(0, 1, 10)])
    assert convex_hull_area(line) == 0.0
    assert convex_hull_area(line[:2]) == 0.0
    with pytest.raises(RuntimeWarning):
        convex_hull_area(line, error_strategy='raise')


def test_mean_cycle_resamples_strides():
    short = ellipse(n=50)
    long = ellipse(n=200)
    cycle = mean_cycle([short, long], N=100)
    assert cycle.shape == (100, 2)


def test_step_geometry():
    assert step_length([0.30, -0.80], [-0.05, -0.82]) == pytest.approx(35.0)
    assert step_height([-0.80, -0.70, -0.78], [-0.82, -0.82, -0.82]) == pytest.approx(12.0)
    assert step_height([-0.9], [-0.8]) == 0.0


def test_heart_rate_percent_of_maximum():
    assert hr_percent_max(120.0, 60.0) == pytest.approx(100 * 120 / 166)
    assert hr_percent_max([110.0, 130.0], 60.0) == pytest.approx(100 * 120 / 166)
    for age in range(20, 91):
        assert hr_percent_max(120.0, age) == pytest.approx(12000.0 / (208.0 - 0.7 * age), rel=1e-12)
    with pytest.raises(ValueError):
        hr_percent_max(120.0, 5.0)
    with pytest.raises(ValueError):
        hr_percent_max(0.0, 60.0)


def test_borg_rating():
    assert borg_rpe(13) == 13
    assert borg_rpe('15') == 15
    for invalid in (5, 21, 13.5):
        with pytest.raises(ValueError):
            borg_rpe(invalid)


def test_metric_groups_validate_their_values():
    assert SpatialGaitMetrics(120.0, (35.0, 36.0), (10.0, 11.0)).step_length == (35.0, 36.0)
    with pytest.raises(ValueError):
        SpatialGaitMetrics(120.0, (-1.0,), (10.0,))
    assert EffortMetrics(hr_percent_max=70.0, rpe_borg=13).rpe_borg == 13
    with pytest.raises(ValueError):
        EffortMetrics(rpe_borg=25)
    with pytest.raises(ValueError):
        EffortMetrics(hr_percent_max=0.0)


def test_paired_t_test_matches_scipy():
    a = [31.0, 29.5, 35.2, 28.8, 33.1]
    b = [27.0, 28.1, 30.0, 29.5, 30.2]
    result = paired_t_test(a, b)
    expected = stats.ttest_rel(a, b)
    assert result.t_statistic == pytest.approx(expected.statistic)
    assert result.p_value == pytest.approx(expected.pvalue)
    assert result.degrees_of_freedom == 4
    assert result.mean_difference == pytest.approx(np.mean(np.subtract(a, b)))


def test_paired_t_test_matches_textbook_formula():
    rng = np.random.default_rng(8)
    for _ in range(100):
        n = int(rng.integers(2, 21))
        a = rng.normal(10.0, 2.0, n)
        b = a + rng.normal(0.5, 1.0, n)
        differences = a - b
        t = np.mean(differences) / (np.std(differences, ddof=1) / math.sqrt(n))
        result = paired_t_test(a, b)
        assert result.t_statistic == pytest.approx(t, rel=1e-6)
        assert result.degrees_of_freedom == n - 1


def test_paired_t_test_edge_cases():
    same = paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert (same.t_statistic, same.p_value) == (0.0, 1.0)
    shifted = paired_t_test([2.0, 3.0, 4.0], [1.0, 2.0, 3.0])
    assert shifted.degenerate
    assert shifted.t_statistic == math.inf
    assert shifted.p_value == 0.0
    with pytest.raises(ValueError):
        paired_t_test([1.0], [2.0])
    with pytest.raises(ValueError):
        paired_t_test([1.0, 2.0], [2.0])


def test_summary_statistics():
    mean, error = mean_and_standard_error([1.0, 2.0, 3.0])
    assert mean == 2.0
    assert error == pytest.approx(1 / math.sqrt(3))
    assert mean_and_standard_error([4.0]) == (4.0, 0.0)
    assert [significance_marker(p) for p in (0.0005, 0.005, 0.03, 0.2)] == ['***', '**', '*', '']


def test_block_aggregation():
    aggregate = aggregate_blocks({1: 2.0, 2: None, 3: 4.0})
    assert aggregate.mean == 3.0
    assert aggregate.present == (True, False, True)
    assert aggregate_blocks([1.0, 2.0], n_blocks=3).present == (True, True, False)
    with pytest.raises(ValueError):
        aggregate_blocks({1: None})
