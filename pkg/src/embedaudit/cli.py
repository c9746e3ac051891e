"""Command-line entry point.

Subcommands: `run` executes the whole pipeline; `transform`, `encode`,
`distances` and `consistency` execute the pipeline up to one stage against
the cache; `report` re-emits summaries from a finished run; `grids` prints
the magnitude grids in effect.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness, report
from .cache import content_key
from .config import ExperimentConfig, Seeds, load_config
from .errors import EmbedAuditError
from .transforms import default_grids


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedaudit",
        description="Distance-consistency diagnostics for audio embedding encoders",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, needs_config=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, required=needs_config,
                       help="experiment config (TOML)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the root seed (crop/noise/bootstrap derive from it)")
        p.add_argument("--cache-dir", type=Path, default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--skip-codec", action="store_true",
                       help="use the deterministic surrogate instead of the external codec")
        return p

    add("run", "execute the full pipeline and write reports")
    add("transform", "apply the transform grid and write excerpt WAVs")
    add("encode", "compute features and embeddings for the whole grid")
    add("distances", "compute and store all distance matrices")
    add("consistency", "compute consistency metrics and the long-format CSV")
    add("report", "re-emit summary and figure tables from a finished run")
    grids = sub.add_parser("grids", help="print the magnitude grids in effect")
    grids.add_argument("--config", type=Path, default=None)
    return parser


def _configure(args) -> ExperimentConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config.seeds = Seeds.from_root(args.seed)
    if args.cache_dir is not None:
        config.cache_dir = args.cache_dir
    if args.jobs is not None:
        config.jobs = args.jobs
    if args.skip_codec:
        config.use_surrogate_codec = True
    return config


def _run_dir(config: ExperimentConfig) -> Path:
    run_id = content_key({"config": config.snapshot(), "rev": harness.ALGORITHM_REVISION})[:12]
    return Path(config.out_dir) / f"run-{run_id}"


def _cmd_grids(args) -> int:
    grids = load_config(args.config).grids if args.config else default_grids()
    for category in sorted(grids):
        magnitudes = ", ".join(f"{m:g}" for m in grids[category].magnitudes)
        print(f"{category}: {magnitudes}")
    return 0


def _cmd_run(args) -> int:
    config = _configure(args)
    artifact = harness.run_experiment(config)
    print(f"run {artifact.run_id}: {len(artifact.records)} records -> {artifact.run_dir}")
    for group, reason in sorted(artifact.skipped_groups.items()):
        print(f"  {group}: {reason}", file=sys.stderr)
    return 0


def _cmd_stage(args, stage: str) -> int:
    config = _configure(args)
    log = harness.RunLog()
    pipeline = harness.Pipeline(config, log=log)
    run_dir = _run_dir(config)
    run_dir.mkdir(parents=True, exist_ok=True)

    excerpts, skipped = harness.ingest_corpus(config, log)
    export_dir = run_dir / "excerpts" if stage == "transform" or config.export_excerpt_wavs else None
    cells = pipeline.compute_cells(excerpts, export_dir=export_dir)
    print(f"{len(cells.features)} grid cells ready ({skipped} corpus files skipped)")
    if stage in ("transform", "encode"):
        log.write(run_dir / "run.log")
        return 0

    external = pipeline.load_external(
        excerpts, [s for s in harness.grid_specs(config) if s not in cells.skipped_specs]
    )
    matrices, active = pipeline.distance_matrices(excerpts, cells, external)
    report.write_distance_csvs(matrices, run_dir / "distances")
    print(f"{len(matrices)} distance matrices -> {run_dir / 'distances'}")
    if stage == "distances":
        log.write(run_dir / "run.log")
        return 0

    records = pipeline.consistency_records(excerpts, matrices, active)
    path = report.write_consistency_csv(records, run_dir / "consistency.csv")
    print(f"{len(records)} consistency records -> {path}")
    log.write(run_dir / "run.log")
    return 0


def _cmd_report(args) -> int:
    config = _configure(args)
    run_dir = _run_dir(config)
    consistency_path = run_dir / "consistency.csv"
    if not consistency_path.is_file():
        raise EmbedAuditError(
            f"no finished run at {run_dir} (missing {consistency_path.name}); "
            "execute `run` or `consistency` first"
        )
    records = report.read_consistency_csv(consistency_path)
    report.write_summary_json(records, config, run_dir / "summary.json")
    outputs = report.write_figure_tables(records, run_dir / "figures")
    print(f"summary and {len(outputs)} figure tables -> {run_dir}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "grids":
            return _cmd_grids(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        return _cmd_stage(args, args.command)
    except EmbedAuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
