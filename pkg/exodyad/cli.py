"""Command line entry point: `exodyad simulate | analyze | report`."""
import argparse
import asyncio
import datetime
import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import structlog

from exodyad import __version__
from exodyad.analysis.dataset import DatasetLayout
from exodyad.analysis.pipeline import analyze_dataset, analyze_simlog, emg_baseline
from exodyad.analysis.report import MetricsReport, comparisons_csv, plot_tables, render_summary
from exodyad.analysis.signals import write_stride_matrix
from exodyad.dynamics.loader import dump_config, load_sim_config, sim_config_hash, sim_config_sections
from exodyad.dynamics.plant import SimLog, run_simulation
from exodyad.utils.config import AnalysisConfig, config_hash
from exodyad.utils.exception import ExodyadError, StructuralError
from exodyad.utils.helper import get_file_inventory, write_json, write_text

logger = structlog.get_logger(__name__)

SIMLOG_FILE = 'simlog.csv'
RESOLVED_CONFIG_FILE = 'resolved_config.ini'
MANIFEST_FILE = 'manifest.json'
METRICS_FILE = 'metrics.csv'
SUMMARY_FILE = 'summary.md'
COMPARISONS_FILE = 'comparisons.csv'
STRIDES_DIRECTORY = 'strides'


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec='seconds')


@dataclass
class RunManifest:
    """Provenance of one command run, written next to its outputs."""

    command: str
    tool_version: str = __version__
    started_at: str = field(default_factory=_now)
    finished_at: Optional[str] = None
    config_hash: Optional[str] = None
    seed: Optional[int] = None
    resolved_config: Dict[str, Dict[str, object]] = field(default_factory=dict)
    inputs: List[Dict[str, object]] = field(default_factory=list)
    outputs: List[Dict[str, object]] = field(default_factory=list)
    stats: Dict[str, object] = field(default_factory=dict)

    def finish(self, out_dir: Path, outputs: Sequence[Path]):
        self.finished_at = _now()
        self.outputs = [dict(entry, path=str(Path(entry['path']).relative_to(out_dir)))
                        for entry in get_file_inventory(outputs)]

    def to_dict(self):
        return asdict(self)


async def _write_outputs(texts: Dict[Path, str], manifest: RunManifest, out_dir: Path):
    await asyncio.gather(*(write_text(path, text) for path, text in texts.items()))
    outputs = sorted(p for p in out_dir.rglob('*') if p.is_file() and p.name != MANIFEST_FILE)
    manifest.finish(out_dir, outputs)
    await write_json(out_dir / MANIFEST_FILE, manifest.to_dict())


def cmd_simulate(args: argparse.Namespace) -> int:
    sim = load_sim_config(args.config, args.set, args.seed)
    if args.progress:
        sim = replace(sim, display_progress_bar=True)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest('simulate', config_hash=sim_config_hash(sim), seed=sim.seed,
                           resolved_config=sim_config_sections(sim))
    log, stats = run_simulation(sim)
    log.to_csv(out_dir / SIMLOG_FILE)
    manifest.stats = stats.get_stats()
    asyncio.run(_write_outputs({out_dir / RESOLVED_CONFIG_FILE: dump_config(sim)}, manifest, out_dir))
    logger.info("simulate_finished", out=str(out_dir), ticks=len(log), config_hash=manifest.config_hash)
    return 0


def _stride_sink(out_dir: Path):
    directory = out_dir / STRIDES_DIRECTORY
    directory.mkdir(parents=True, exist_ok=True)

    def sink(name: str, matrix):
        write_stride_matrix(directory / f"{name}.csv", matrix)

    return sink


def _simlog_input(path: Path) -> Optional[Path]:
    if path.is_file():
        return path
    if (path / SIMLOG_FILE).is_file():
        return path / SIMLOG_FILE
    return None


def cmd_analyze(args: argparse.Namespace) -> int:
    source = Path(args.input)
    out_dir = Path(args.out)
    simlog_path = _simlog_input(source)
    if simlog_path is None and not DatasetLayout.is_dataset(source):
        raise StructuralError(f"{source}: neither a {SIMLOG_FILE} nor a dataset directory with patients.csv")
    sim = None
    if simlog_path is not None:
        resolved = simlog_path.parent / RESOLVED_CONFIG_FILE
        if not resolved.is_file():
            raise StructuralError(f"{simlog_path}: missing {RESOLVED_CONFIG_FILE} next to the log")
        sim = load_sim_config(resolved)
    base = sim.analysis if sim is not None else AnalysisConfig()
    config = replace(base, **{key: value for key, value in dict(
        area_mode=args.area_mode, lag_mode=args.lag_mode, pooled_area=args.pooled_area,
        detect_from_trajectory=args.detect_from_trajectory, write_strides=args.write_strides,
        display_progress_bar=args.progress or None).items() if value is not None})
    out_dir.mkdir(parents=True, exist_ok=True)
    sink = _stride_sink(out_dir) if config.write_strides else None
    manifest = RunManifest('analyze', resolved_config={'analysis': config.to_dict()})
    if sim is not None:
        if args.baseline is not None:
            logger.warning("baseline_ignored", reason="simulation logs carry no EMG", baseline=str(args.baseline))
        manifest.config_hash, manifest.seed = sim_config_hash(sim), sim.seed
        manifest.inputs = get_file_inventory([simlog_path, simlog_path.parent / RESOLVED_CONFIG_FILE])
        report = analyze_simlog(SimLog.from_csv(simlog_path), sim, config, sink)
    else:
        layout = DatasetLayout(source)
        baseline = emg_baseline(DatasetLayout(args.baseline), config) if args.baseline is not None else None
        manifest.config_hash = config_hash(repr(sorted(config.to_dict().items())))
        manifest.inputs = [{'path': str(source), 'recordings': len(layout.recordings())}]
        report = analyze_dataset(layout, config, baseline, stride_sink=sink)
    excluded = ('temporal_lag_abs',) if config.lag_mode == 'signed' else ('temporal_lag_signed',)
    manifest.stats = {'Records': len(report), 'Metrics': report.metrics}
    asyncio.run(_write_outputs({out_dir / METRICS_FILE: report.to_csv_text(),
                                out_dir / SUMMARY_FILE: render_summary(report, exclude=excluded)},
                               manifest, out_dir))
    logger.info("analyze_finished", out=str(out_dir), records=len(report))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    source = Path(args.metrics)
    files = [source] if source.is_file() else sorted(source.rglob(METRICS_FILE))
    if not files:
        raise StructuralError(f"{source}: no {METRICS_FILE} found")
    report = MetricsReport()
    for path in files:
        report.extend(MetricsReport.from_csv(path))
    report = report.with_aggregates()
    if len(report) == 0:
        raise StructuralError(f"{source}: metrics files hold no records")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    texts = {out_dir / SUMMARY_FILE: render_summary(report), out_dir / COMPARISONS_FILE: comparisons_csv(report)}
    texts.update({out_dir / name: text for name, text in plot_tables(report).items()})
    manifest = RunManifest('report', inputs=get_file_inventory(files),
                           stats={'Records': len(report), 'Conditions': report.conditions})
    asyncio.run(_write_outputs(texts, manifest, out_dir))
    logger.info("report_finished", out=str(out_dir), files=len(files), conditions=report.conditions)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='exodyad',
                                     description='Simulate and analyze virtually coupled exoskeleton dyads.')
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('--log-level', default='info', choices=('debug', 'info', 'warning', 'error'))
    commands = parser.add_subparsers(dest='command', required=True)

    simulate = commands.add_parser('simulate', help='Run a dyad simulation and write its log.')
    simulate.add_argument('--config', type=Path, default=None, help='INI configuration; defaults when omitted.')
    simulate.add_argument('--out', type=Path, required=True, help='Output directory.')
    simulate.add_argument('--set', action='append', default=[], metavar='SECTION.KEY=VALUE',
                          help='Override a configuration value; repeatable.')
    simulate.add_argument('--seed', type=int, default=None)
    simulate.add_argument('--progress', action='store_true', help='Show a progress bar.')
    simulate.set_defaults(handler=cmd_simulate)

    analyze = commands.add_parser('analyze', help='Compute gait and effort metrics.')
    analyze.add_argument('--in', dest='input', type=Path, required=True,
                         help='A simulation output directory, a simlog.csv or a dataset directory.')
    analyze.add_argument('--out', type=Path, required=True)
    analyze.add_argument('--baseline', type=Path, default=None,
                         help='Free-walking dataset used to normalize muscle activation.')
    area = analyze.add_mutually_exclusive_group()
    area.add_argument('--hull', dest='area_mode', action='store_const', const='hull')
    area.add_argument('--shoelace', dest='area_mode', action='store_const', const='shoelace')
    lag = analyze.add_mutually_exclusive_group()
    lag.add_argument('--signed-lag', dest='lag_mode', action='store_const', const='signed')
    lag.add_argument('--abs-lag', dest='lag_mode', action='store_const', const='abs')
    analyze.add_argument('--pooled-area', action='store_const', const=True, default=None)
    analyze.add_argument('--detect-from-trajectory', action='store_const', const=True, default=None,
                         help='Detect heel strikes from the ankle trajectory when no force channel exists.')
    analyze.add_argument('--write-strides', action='store_const', const=True, default=None)
    analyze.add_argument('--progress', action='store_true')
    analyze.set_defaults(handler=cmd_analyze, area_mode=None, lag_mode=None)

    report = commands.add_parser('report', help='Summarize metrics tables.')
    report.add_argument('--metrics', type=Path, required=True, help='metrics.csv file or a directory of them.')
    report.add_argument('--out', type=Path, required=True)
    report.set_defaults(handler=cmd_report)
    return parser


def configure_logging(level: str):
    structlog.configure(wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, level.upper())),
                        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Runs one command and returns its exit code: 0, 2 for invalid input, 3 for divergence."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ExodyadError as e:
        logger.error("command_failed", command=args.command, error=str(e), error_type=type(e).__name__)
        print(f"exodyad {args.command}: {e}", file=sys.stderr)
        return e.exit_code
    except (ValueError, OSError) as e:
        logger.error("command_failed", command=args.command, error=str(e), error_type=type(e).__name__)
        print(f"exodyad {args.command}: {e}", file=sys.stderr)
        return 2


def run():
    sys.exit(main())


if __name__ == '__main__':
    run()
