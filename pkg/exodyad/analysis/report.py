"""Metric tables: long-format records, aggregation, summaries and plot-ready tables."""
import csv
import io
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from exodyad.analysis.metrics import aggregate_blocks, mean_and_standard_error, paired_t_test, significance_marker
from exodyad.utils.exception import StructuralError
from exodyad.utils.helper import format_float
from exodyad.utils.types import PathType

logger = structlog.get_logger(__name__)

MEAN_BLOCK = 'Tbar'
PATIENT_LIMBS = ('paretic', 'non_paretic')

METRIC_UNITS = {
    'spatial_rmse': 'deg',
    'temporal_lag_signed': 'pct_gait_cycle',
    'temporal_lag_abs': 'pct_gait_cycle',
    'workspace_area': 'cm2',
    'step_length': 'cm',
    'step_height': 'cm',
    'hr_percent_max': 'pct',
    'rpe_borg': 'borg_6_20',
    'activation_percent': 'pct_free_walking',
    'emg_envelope_mean': 'V',
    'interaction_torque_rms': 'Nm',
    'human_power_mean': 'W',
}

PLOT_PANELS = {
    'deviation': ('spatial_rmse', 'temporal_lag_signed', 'temporal_lag_abs'),
    'spatial': ('workspace_area', 'step_length', 'step_height'),
    'effort': ('hr_percent_max', 'rpe_borg', 'interaction_torque_rms', 'human_power_mean'),
    'activation': ('activation_percent', 'emg_envelope_mean'),
}

FIELDS = ('patient', 'condition', 'block', 'stride', 'user', 'side', 'limb', 'element', 'metric', 'unit', 'value')


@dataclass(frozen=True)
class MetricRecord:
    """One metric value. `stride` is None for block-level values; block `Tbar` holds
    the mean over the training blocks."""

    patient: str
    condition: str
    block: str
    user: str
    side: str
    limb: str
    element: str
    metric: str
    value: float
    stride: Optional[int] = None

    def __post_init__(self):
        if self.metric not in METRIC_UNITS:
            raise ValueError(f"unknown metric '{self.metric}'")
        if not math.isfinite(self.value):
            raise ValueError(f"metric {self.metric} has non-finite value {self.value}")

    @property
    def unit(self) -> str:
        return METRIC_UNITS[self.metric]

    @property
    def series_key(self) -> Tuple[str, ...]:
        """Identity of the measured quantity, without patient, condition, block or stride.

        Patient limbs are keyed by role, so left- and right-paretic patients share a series.
        """
        side = '' if self.user == 'patient' and self.limb in PATIENT_LIMBS else self.side
        return self.user, side, self.limb, self.element, self.metric

    def as_row(self) -> Dict[str, str]:
        return {'patient': self.patient, 'condition': self.condition, 'block': self.block,
                'stride': '' if self.stride is None else str(self.stride), 'user': self.user,
                'side': self.side, 'limb': self.limb, 'element': self.element, 'metric': self.metric,
                'unit': self.unit, 'value': format_float(self.value)}


def block_label(index: int) -> str:
    return f"T{index}"


def _block_index(label: str) -> int:
    return int(label[1:]) if label.startswith('T') and label[1:].isdigit() else 0


class MetricsReport:
    """An ordered collection of metric records."""

    def __init__(self, records: Iterable[MetricRecord] = ()):
        self.records: List[MetricRecord] = list(records)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def extend(self, records: Iterable[MetricRecord]):
        self.records.extend(records)

    @property
    def conditions(self) -> List[str]:
        return sorted({record.condition for record in self.records})

    @property
    def metrics(self) -> List[str]:
        return sorted({record.metric for record in self.records})

    def select(self, **criteria) -> List[MetricRecord]:
        return [record for record in self.records
                if all(getattr(record, key) == value for key, value in criteria.items())]

    def with_aggregates(self) -> 'MetricsReport':
        """Adds block means of per-stride values and the cross-block mean of every series."""
        records = list(self.records)
        per_stride = defaultdict(list)
        block_level = {}
        for record in records:
            key = (record.patient, record.condition, record.block) + record.series_key
            if record.stride is not None:
                per_stride[key].append(record)
            elif record.block != MEAN_BLOCK:
                block_level[key] = record
        for key, group in per_stride.items():
            if key not in block_level:
                block_level[key] = replace(group[0], stride=None,
                                           value=float(np.mean([record.value for record in group])))
                records.append(block_level[key])
        by_series = defaultdict(dict)
        for key, record in block_level.items():
            by_series[(record.patient, record.condition) + record.series_key][_block_index(record.block)] = record
        existing = {(r.patient, r.condition) + r.series_key for r in records if r.block == MEAN_BLOCK}
        for key, blocks in by_series.items():
            if key in existing:
                continue
            aggregate = aggregate_blocks({index: record.value for index, record in blocks.items()})
            template = next(iter(blocks.values()))
            records.append(replace(template, block=MEAN_BLOCK, stride=None, value=aggregate.mean))
        return MetricsReport(records)

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=FIELDS, lineterminator='\n')
        writer.writeheader()
        for record in self.records:
            writer.writerow(record.as_row())
        return buffer.getvalue()

    def to_csv(self, path: PathType):
        Path(path).write_text(self.to_csv_text())

    @classmethod
    def from_csv(cls, path: PathType) -> 'MetricsReport':
        """Reads a metrics table, naming the file and row of the first malformed entry."""
        path = Path(path)
        records = []
        with open(path, newline='') as f:
            reader = csv.DictReader(f)
            missing = [name for name in FIELDS if name not in (reader.fieldnames or [])]
            if missing:
                raise StructuralError(f"{path}: row 1: missing columns {', '.join(missing)}")
            for number, row in enumerate(reader, start=2):
                try:
                    stride = row['stride'].strip()
                    record = MetricRecord(patient=row['patient'], condition=row['condition'], block=row['block'],
                                          user=row['user'], side=row['side'], limb=row['limb'],
                                          element=row['element'], metric=row['metric'], value=float(row['value']),
                                          stride=int(stride) if stride else None)
                except (TypeError, ValueError, AttributeError) as e:
                    raise StructuralError(f"{path}: row {number}: {e}") from None
                if row['unit'] != record.unit:
                    raise StructuralError(f"{path}: row {number}: unit '{row['unit']}' does not match "
                                          f"'{record.unit}' for {record.metric}")
                records.append(record)
        logger.debug("metrics_read", path=str(path), records=len(records))
        return cls(records)


def _series_label(key: Tuple[str, ...]) -> str:
    user, side, limb, element, metric = key
    parts = [metric, user, limb or side, element]
    return ' '.join(part for part in parts if part)


def paired_comparisons(report: MetricsReport) -> List[Dict[str, object]]:
    """Paired t-tests of the cross-block means between every pair of conditions."""
    means = defaultdict(dict)
    for record in report.select(block=MEAN_BLOCK):
        means[(record.series_key, record.condition)][record.patient] = record.value
    series_keys = sorted({key for key, _ in means})
    comparisons = []
    for first, second in itertools.combinations(report.conditions, 2):
        for key in series_keys:
            a = means.get((key, first), {})
            b = means.get((key, second), {})
            patients = sorted(set(a) & set(b))
            if len(patients) < 2:
                continue
            result = paired_t_test([a[p] for p in patients], [b[p] for p in patients])
            comparisons.append({'series': key, 'conditions': (first, second), 'result': result})
    return comparisons


def render_summary(report: MetricsReport, exclude: Sequence[str] = ()) -> str:
    """Human-readable summary: mean +/- standard error of the cross-block means per
    condition, then paired t-tests when at least two conditions are present.

    Args:
        report (MetricsReport): Records including the cross-block means
        exclude: Metric names left out of the summary

    Returns:
        (str): Markdown text
    """
    if exclude:
        report = MetricsReport(record for record in report if record.metric not in exclude)
    lines = ['# Metrics summary', '']
    groups = defaultdict(list)
    for record in report.select(block=MEAN_BLOCK):
        groups[(record.series_key, record.condition)].append(record.value)
    for key in sorted({key for key, _ in groups}):
        unit = METRIC_UNITS[key[-1]]
        cells = []
        for condition in report.conditions:
            values = groups.get((key, condition))
            if values:
                mean, error = mean_and_standard_error(values)
                cells.append(f"{condition}: {mean:.2f} ± {error:.2f} (n={len(values)})")
        lines.append(f"- {_series_label(key)} [{unit}]: " + '; '.join(cells))
    lines += ['', '## Paired t-tests', '']
    if len(report.conditions) < 2:
        lines.append('Only one condition present; paired t-tests omitted.')
        return '\n'.join(lines) + '\n'
    comparisons = paired_comparisons(report)
    if not comparisons:
        lines.append('No series has at least two patients in both conditions.')
    for comparison in comparisons:
        result = comparison['result']
        first, second = comparison['conditions']
        lines.append(f"- {_series_label(comparison['series'])}, {first} vs {second}: "
                     f"t={result.t_statistic:.4f}, df={result.degrees_of_freedom}, p={result.p_value:.4f}"
                     f"{' ' + significance_marker(result.p_value) if significance_marker(result.p_value) else ''}"
                     f"{' (degenerate)' if result.degenerate else ''}")
    return '\n'.join(lines) + '\n'


def plot_tables(report: MetricsReport) -> Dict[str, str]:
    """Long-format CSV text per figure panel group, block-level values only."""
    tables = {}
    columns = ('patient', 'block', 'condition', 'metric', 'user', 'side', 'limb', 'element', 'unit', 'value')
    for panel, metrics in PLOT_PANELS.items():
        rows = [record for record in report if record.stride is None and record.metric in metrics]
        if not rows:
            continue
        rows.sort(key=lambda r: (r.metric, r.user, r.limb, r.side, r.element, r.condition, r.patient, r.block))
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(columns)
        for r in rows:
            writer.writerow((r.patient, r.block, r.condition, r.metric, r.user, r.side, r.limb, r.element, r.unit,
                             format_float(r.value)))
        tables[f"plot_{panel}.csv"] = buffer.getvalue()
    return tables


def comparisons_csv(report: MetricsReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(('metric', 'user', 'side', 'limb', 'element', 'condition_a', 'condition_b', 'n_pairs',
                     'mean_difference', 't_statistic', 'df', 'p_value', 'significance'))
    for comparison in paired_comparisons(report):
        user, side, limb, element, metric = comparison['series']
        result = comparison['result']
        writer.writerow((metric, user, side, limb, element, *comparison['conditions'], result.n_pairs,
                         format_float(result.mean_difference), format_float(result.t_statistic),
                         result.degrees_of_freedom, format_float(result.p_value),
                         significance_marker(result.p_value)))
    return buffer.getvalue()
