"""Deterministic serialization of run results.

Outputs: the long-format consistency CSV (one row per record), a JSON summary
of grouped means with intervals, per-figure plot-data CSVs, and the raw
distance matrices. Byte-identical re-emission for a fixed artifact is part of
the contract, so every writer sorts its rows and formats floats via repr.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .distances import write_distance_csv
from .metrics import ConsistencyRecord, bootstrap_ci


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")

CSV_COLUMNS = (
    "encoder", "task_label", "space_measure_audio", "space_measure_latent",
    "transform", "magnitude", "metric", "value", "ci_low", "ci_high", "n",
    "n_excluded",
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _record_sort_key(r: ConsistencyRecord):
    return (r.metric, r.encoder, r.audio_measure, r.latent_measure, r.category,
            r.magnitude is not None, r.magnitude or 0.0)


def write_consistency_csv(records: list[ConsistencyRecord], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in sorted(records, key=_record_sort_key):
            writer.writerow([
                r.encoder, r.task_label, r.audio_measure, r.latent_measure,
                r.category, _fmt(r.magnitude), r.metric, _fmt(r.value),
                _fmt(r.ci_low), _fmt(r.ci_high), r.n, r.n_excluded,
            ])
    return path


def read_consistency_csv(path) -> list[ConsistencyRecord]:
    records = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(ConsistencyRecord(
                metric=row["metric"],
                value=float(row["value"]),
                ci_low=float(row["ci_low"]),
                ci_high=float(row["ci_high"]),
                encoder=row["encoder"],
                task_label=row["task_label"],
                audio_measure=row["space_measure_audio"],
                latent_measure=row["space_measure_latent"],
                category=row["transform"],
                magnitude=float(row["magnitude"]) if row["magnitude"] else None,
                n=int(row["n"]),
                n_excluded=int(row["n_excluded"]),
            ))
    return records


def _group_summary(records: list[ConsistencyRecord], seed: int) -> dict | None:
    """Pool one group's per-magnitude record values into a mean plus CI."""
    if not records:
        return None
    values = np.array([r.value for r in records])
    if values.size == 1:
        mean, lo, hi = float(values[0]), records[0].ci_low, records[0].ci_high
    else:
        boot = bootstrap_ci(values, n_boot=1000, seed=seed)
        mean, lo, hi = boot.mean, min(boot.ci_low, boot.mean), max(boot.ci_high, boot.mean)
    first = records[0]
    return {
        "encoder": first.encoder,
        "task_label": first.task_label,
        "metric": first.metric,
        "audio_measure": first.audio_measure,
        "latent_measure": first.latent_measure,
        "category": first.category,
        "value": mean,
        "ci_low": lo,
        "ci_high": hi,
        "n_magnitudes": int(values.size),
        "n": int(sum(r.n for r in records)),
        "n_excluded": int(sum(r.n_excluded for r in records)),
    }


def summary_groups(records: list[ConsistencyRecord], config) -> list[dict]:
    """One pooled group per (encoder, metric, measure pair, category).

    Within-space consistency here is the latent-space value; it does not
    depend on the audio measure but is repeated per pair so the grouping is
    uniform across metrics.
    """
    groups = []
    categories = sorted(config.grids)
    by_key: dict[tuple, list[ConsistencyRecord]] = {}
    for r in records:
        by_key.setdefault((r.metric, r.encoder, r.audio_measure, r.latent_measure,
                           r.category), []).append(r)

    for descriptor in config.encoders:
        for metric in ("CW", "CB_acc", "CB_rho"):
            for ameasure in config.audio_measures:
                for lmeasure in config.latent_measures:
                    for category in categories:
                        if metric == "CW":
                            members = by_key.get(("CW", descriptor.id, "", lmeasure, category), [])
                        else:
                            members = by_key.get(
                                (metric, descriptor.id, ameasure, lmeasure, category), [])
                        members = [m for m in members if m.magnitude is not None]
                        seed = _stable_seed("summary", metric, descriptor.id,
                                            ameasure, lmeasure, category)
                        summary = _group_summary(
                            sorted(members, key=_record_sort_key), seed)
                        if summary is not None:
                            summary["audio_measure"] = ameasure
                            summary["latent_measure"] = lmeasure
                            groups.append(summary)
    return groups


def write_summary_json(records, config, path) -> Path:
    path = Path(path)
    payload = {
        "n_records": len(records),
        "groups": summary_groups(records, config),
    }
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return path


def _write_table(path: Path, columns: tuple[str, ...], rows: list[list]) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)
    return path


def write_figure_tables(records: list[ConsistencyRecord], out_dir: Path) -> dict[str, Path]:
    """Plot-ready data tables: within-space consistency per magnitude for both
    spaces, between-space consistency per magnitude, marginal means per
    encoder, and the original-sample rank correlations."""
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=_record_sort_key)
    outputs: dict[str, Path] = {}

    rows = [
        [r.audio_measure, r.category, _fmt(r.magnitude), _fmt(r.value),
         _fmt(r.ci_low), _fmt(r.ci_high), r.n]
        for r in ordered if r.metric == "CW" and not r.encoder
    ]
    outputs["within_audio"] = _write_table(
        out_dir / "within_audio_by_magnitude.csv",
        ("measure", "transform", "magnitude", "value", "ci_low", "ci_high", "n"), rows)

    rows = [
        [r.encoder, r.task_label, r.latent_measure, r.category, _fmt(r.magnitude),
         _fmt(r.value), _fmt(r.ci_low), _fmt(r.ci_high), r.n]
        for r in ordered if r.metric == "CW" and r.encoder
    ]
    outputs["within_latent"] = _write_table(
        out_dir / "within_latent_by_magnitude.csv",
        ("encoder", "task_label", "measure", "transform", "magnitude", "value",
         "ci_low", "ci_high", "n"), rows)

    rows = [
        [r.metric, r.encoder, r.task_label, r.audio_measure, r.latent_measure,
         r.category, _fmt(r.magnitude), _fmt(r.value), _fmt(r.ci_low),
         _fmt(r.ci_high), r.n, r.n_excluded]
        for r in ordered
        if r.metric in ("CB_acc", "CB_rho") and r.category != "OG"
    ]
    outputs["between"] = _write_table(
        out_dir / "between_by_magnitude.csv",
        ("metric", "encoder", "task_label", "audio_measure", "latent_measure",
         "transform", "magnitude", "value", "ci_low", "ci_high", "n", "n_excluded"), rows)

    marginal: dict[tuple, list[ConsistencyRecord]] = {}
    for r in ordered:
        if r.metric in ("CB_acc", "CB_rho") and r.category != "OG":
            marginal.setdefault(
                (r.metric, r.encoder, r.task_label, r.audio_measure, r.latent_measure), []
            ).append(r)
    rows = []
    for key in sorted(marginal):
        members = marginal[key]
        values = np.array([m.value for m in members])
        boot = bootstrap_ci(values, n_boot=1000, seed=_stable_seed("marginal", *key))
        rows.append([
            *key, _fmt(boot.mean), _fmt(min(boot.ci_low, boot.mean)),
            _fmt(max(boot.ci_high, boot.mean)), int(values.size),
        ])
    outputs["between_marginal"] = _write_table(
        out_dir / "between_marginal_means.csv",
        ("metric", "encoder", "task_label", "audio_measure", "latent_measure",
         "value", "ci_low", "ci_high", "n_cells"), rows)

    rows = [
        [r.encoder, r.task_label, r.audio_measure, r.latent_measure, _fmt(r.value),
         _fmt(r.ci_low), _fmt(r.ci_high), r.n, r.n_excluded]
        for r in ordered if r.metric == "CB_rho" and r.category == "OG"
    ]
    outputs["original_sample"] = _write_table(
        out_dir / "original_sample_rank_correlation.csv",
        ("encoder", "task_label", "audio_measure", "latent_measure", "value",
         "ci_low", "ci_high", "n", "n_excluded"), rows)
    return outputs


def emit_report(artifact) -> dict[str, Path]:
    """Write consistency CSV, JSON summary and figure tables into the run dir."""
    run_dir = Path(artifact.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    outputs = {"consistency": write_consistency_csv(artifact.records, run_dir / "consistency.csv")}
    outputs["summary"] = write_summary_json(artifact.records, artifact.config,
                                            run_dir / "summary.json")
    outputs.update(write_figure_tables(artifact.records, run_dir / "figures"))
    return outputs


def write_distance_csvs(matrices, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for (space, owner, measure, spec), matrix in sorted(
        matrices.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], kv[0][3].label())
    ):
        stem = "_".join(p for p in (space, owner, measure, spec.filename_token()) if p)
        sidecar = {"transform": spec.category, "magnitude": spec.magnitude,
                   "encoder": owner or None}
        write_distance_csv(matrix, out_dir / f"{stem}.csv", sidecar)
