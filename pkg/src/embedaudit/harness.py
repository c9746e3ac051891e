"""End-to-end experiment pipeline.

Stages: ingest a WAV corpus into fixed-length excerpts, apply the transform
grid (loudness matched), compute MFCC sequences and per-encoder embeddings,
build transformed-by-original distance matrices for each space and measure,
evaluate the consistency metrics with bootstrap intervals, and emit reports.
Stage results are memoized in a content-addressed cache; a rerun with an
unchanged config recomputes nothing.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ALGORITHM_REVISION, report
from .audio import AudioClip, SAMPLE_RATE, crop_excerpt, load_audio, mfcc, resample, save_wav
from .cache import CacheStore, content_key, file_digest
from .config import ExperimentConfig
from .distances import DistanceMatrix, pairwise_distances
from .encoders import EncoderDescriptor, load_external_embeddings, mfcc_stats_from_frames, toy_encode
from .errors import CodecUnavailableError, ConfigError, EmbedAuditError
from .metrics import (
    ConsistencyRecord,
    agreement_values,
    delta_vector,
    spearman,
    summarize,
)
from .transforms import OG, TransformContext, TransformSpec, apply_transform

CellKey = tuple[str, TransformSpec]


@dataclass
class RunArtifact:
    run_id: str
    run_dir: Path
    config: ExperimentConfig
    records: list[ConsistencyRecord]
    outputs: dict[str, Path] = field(default_factory=dict)
    skipped_groups: dict[str, str] = field(default_factory=dict)
    ingest_skipped: int = 0
    cache_hits: int = 0
    cache_misses: int = 0


class RunLog:
    def __init__(self):
        self.lines: list[str] = []

    def note(self, message: str) -> None:
        self.lines.append(f"[{time.strftime('%H:%M:%S')}] {message}")

    def write(self, path: Path) -> None:
        path.write_text("\n".join(self.lines) + "\n")


def _derived_seed(*parts) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _array_digest(array: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(array).tobytes()).hexdigest()


def ingest_corpus(config: ExperimentConfig, log: RunLog | None = None):
    """Load, downmix, resample and crop one excerpt per corpus WAV.

    Returns (excerpts ordered by clip id, skipped-file count). Unreadable
    files are skipped and counted, not fatal; fewer than two usable clips is.
    """
    corpus = Path(config.corpus_dir)
    if not corpus.is_dir():
        raise ConfigError(f"corpus_dir is not a directory: {corpus}")
    paths = sorted(corpus.glob("*.wav")) + sorted(corpus.glob("*.WAV"))
    excerpts = []
    skipped = 0
    for path in paths:
        try:
            clip = load_audio(path)
            clip = resample(clip, SAMPLE_RATE)
            clip = crop_excerpt(
                clip,
                frames=config.excerpt_frames,
                seed=_derived_seed(config.seeds.crop, clip.id),
            )
        except EmbedAuditError as exc:
            skipped += 1
            if log:
                log.note(f"skipping {path.name}: {exc}")
            continue
        if "__" in clip.id:
            raise ConfigError(f"clip id {clip.id!r} must not contain '__'")
        excerpts.append(clip)
    excerpts.sort(key=lambda c: c.id)
    if config.test_set_size is not None:
        excerpts = excerpts[: config.test_set_size]
    if len(excerpts) < 2:
        raise ConfigError(
            f"corpus must contain >= 2 readable WAVs (found {len(excerpts)}, skipped {skipped})"
        )
    return excerpts, skipped


def grid_specs(config: ExperimentConfig) -> list[TransformSpec]:
    specs = [OG]
    for category in sorted(config.grids):
        specs.extend(config.grids[category].specs())
    return specs


def _clip_digest(clip: AudioClip) -> str:
    return hashlib.sha256(clip.samples.tobytes()).hexdigest()


def _cell_identity(config: ExperimentConfig, excerpt_digest: str, spec: TransformSpec,
                   noise_digest: str | None) -> dict:
    mp_desc = "surrogate"
    if spec.category == "MP" and config.codec is not None and not config.use_surrogate_codec:
        mp_desc = {"encode": config.codec.encode, "decode": config.codec.decode,
                   "extension": config.codec.extension}
    return {
        "rev": ALGORITHM_REVISION,
        "excerpt": excerpt_digest,
        "spec": spec.label(),
        "noise_seed": config.seeds.noise,
        "noise": noise_digest if spec.category == "EN" else None,
        "mp": mp_desc if spec.category == "MP" else None,
    }


def _encoder_identity(descriptor: EncoderDescriptor) -> dict:
    return {"id": descriptor.id, "kind": descriptor.kind, "seed": descriptor.seed}


def _cell_task(clip: AudioClip, spec: TransformSpec, context: TransformContext,
               encoders: list[EncoderDescriptor], wav_path: str | None):
    """Transform one excerpt and derive everything downstream of the waveform."""
    transformed = apply_transform(clip, spec, context)
    if wav_path:
        save_wav(wav_path, transformed)
    features = mfcc(transformed).frames
    embeddings = {}
    for descriptor in encoders:
        if descriptor.kind == "mfcc_stats":
            embeddings[descriptor.id] = mfcc_stats_from_frames(features)
        elif descriptor.kind == "toy":
            embeddings[descriptor.id] = toy_encode(transformed, seed=descriptor.seed).values
        elif descriptor.kind == "identity":
            embeddings[descriptor.id] = features
    return features, embeddings


@dataclass
class CellResults:
    features: dict[CellKey, np.ndarray]
    embeddings: dict[str, dict[CellKey, np.ndarray]]
    skipped_specs: dict[TransformSpec, str]


class Pipeline:
    def __init__(self, config: ExperimentConfig, log: RunLog | None = None):
        config.validate()
        self.config = config
        self.log = log or RunLog()
        self.cache = CacheStore(config.cache_dir)
        self._noise_clip = None
        self._noise_digest = None
        if config.noise_wav is not None:
            noise = load_audio(config.noise_wav, clip_id="noise")
            self._noise_clip = resample(noise, SAMPLE_RATE)
            self._noise_digest = _clip_digest(self._noise_clip)

    # ----- transform / feature / encode stage -----

    def _context(self) -> TransformContext:
        return TransformContext(
            seed=self.config.seeds.noise,
            noise=self._noise_clip,
            codec=self.config.codec,
            use_surrogate_codec=self.config.use_surrogate_codec,
            scratch_dir=str(self.config.scratch_dir) if self.config.scratch_dir else None,
        )

    def compute_cells(self, excerpts: list[AudioClip],
                      export_dir: Path | None = None) -> CellResults:
        config = self.config
        native = [e for e in config.encoders if e.kind != "external"]
        specs = grid_specs(config)
        digests = {clip.id: _clip_digest(clip) for clip in excerpts}
        context = self._context()
        if export_dir is not None:
            export_dir.mkdir(parents=True, exist_ok=True)

        features: dict[CellKey, np.ndarray] = {}
        embeddings: dict[str, dict[CellKey, np.ndarray]] = {e.id: {} for e in native}
        pending = []  # (clip, spec, feat_key, emb_keys, wav_path)

        for spec in specs:
            for clip in excerpts:
                cell = _cell_identity(config, digests[clip.id], spec, self._noise_digest)
                feat_key = content_key({"stage": "features", **cell})
                emb_keys = {
                    e.id: content_key({"stage": "embedding", "encoder": _encoder_identity(e), **cell})
                    for e in native
                }
                wav_path = None
                if export_dir is not None:
                    wav_path = export_dir / f"{clip.id}__{spec.filename_token()}.wav"

                cached_feat = self.cache.get(feat_key)
                cached_embs = {eid: self.cache.get(k) for eid, k in emb_keys.items()}
                cache_complete = cached_feat is not None and all(
                    v is not None for v in cached_embs.values()
                )
                if cache_complete and (wav_path is None or wav_path.exists()):
                    features[(clip.id, spec)] = cached_feat["frames"]
                    for e in native:
                        embeddings[e.id][(clip.id, spec)] = cached_embs[e.id]["values"]
                    continue
                pending.append((clip, spec, feat_key, emb_keys, wav_path))

        skipped: dict[TransformSpec, str] = {}

        def _store(clip, spec, feat_key, emb_keys, result):
            frames, embs = result
            features[(clip.id, spec)] = frames
            self.cache.put(feat_key, {"frames": frames})
            for e in native:
                embeddings[e.id][(clip.id, spec)] = embs[e.id]
                self.cache.put(emb_keys[e.id], {"values": embs[e.id]})

        if config.jobs > 1 and pending:
            with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
                futures = {
                    pool.submit(_cell_task, clip, spec, context, native,
                                str(wav_path) if wav_path else None): (clip, spec, fk, ek)
                    for clip, spec, fk, ek, wav_path in pending
                }
                for future in concurrent.futures.as_completed(futures):
                    clip, spec, feat_key, emb_keys = futures[future]
                    try:
                        _store(clip, spec, feat_key, emb_keys, future.result())
                    except EmbedAuditError as exc:
                        skipped.setdefault(spec, self._skip_reason(exc))
        else:
            for clip, spec, feat_key, emb_keys, wav_path in pending:
                if spec in skipped:
                    continue
                try:
                    result = _cell_task(clip, spec, context, native,
                                        str(wav_path) if wav_path else None)
                except EmbedAuditError as exc:
                    skipped[spec] = self._skip_reason(exc)
                    continue
                _store(clip, spec, feat_key, emb_keys, result)

        for spec, reason in sorted(skipped.items()):
            self.log.note(f"group {spec.label()}: {reason}")
            for clip in excerpts:
                features.pop((clip.id, spec), None)
                for per_encoder in embeddings.values():
                    per_encoder.pop((clip.id, spec), None)
        if OG in skipped:
            raise ConfigError(f"originals failed to process: {skipped[OG]}")
        return CellResults(features=features, embeddings=embeddings, skipped_specs=skipped)

    @staticmethod
    def _skip_reason(exc: Exception) -> str:
        if isinstance(exc, CodecUnavailableError):
            return f"SKIPPED: {exc}"
        return f"failed: {exc}"

    def load_external(self, excerpts, active_specs) -> dict[str, dict[CellKey, np.ndarray]]:
        result = {}
        expected = [(clip.id, spec) for spec in active_specs for clip in excerpts]
        for descriptor in self.config.encoders:
            if descriptor.kind == "external":
                mapping = load_external_embeddings(descriptor.manifest, expected_keys=expected)
                result[descriptor.id] = {k: np.asarray(v, dtype=np.float64) for k, v in mapping.items()}
        return result

    # ----- distance stage -----

    def _measure_params(self, measure: str) -> dict:
        if measure == "dtw":
            return {"radius": self.config.fastdtw_radius}
        if measure == "simple":
            return {"subseq_len": self.config.simple_subseq_len}
        return {}

    def distance_matrices(self, excerpts, cells: CellResults,
                          external: dict[str, dict[CellKey, np.ndarray]]):
        """All matrices keyed (space, owner, measure, spec); owner is the
        encoder id for latent matrices and "" for audio ones."""
        config = self.config
        active = [s for s in grid_specs(config) if s not in cells.skipped_specs]
        clip_ids = [c.id for c in excerpts]
        per_encoder = dict(cells.embeddings)
        per_encoder.update(external)

        def rows_for(source: dict, spec: TransformSpec):
            return [(cid, source[(cid, spec)]) for cid in clip_ids]

        plan = []  # (map_key, measure, space, rows, cols)
        for measure in config.audio_measures:
            cols = rows_for(cells.features, OG)
            for spec in active:
                plan.append((("audio", "", measure, spec), measure, "audio",
                             rows_for(cells.features, spec), cols))
        for descriptor in config.encoders:
            source = per_encoder[descriptor.id]
            cols = rows_for(source, OG)
            for measure in config.latent_measures:
                for spec in active:
                    plan.append((("latent", descriptor.id, measure, spec), measure,
                                 "latent", rows_for(source, spec), cols))

        matrices: dict[tuple[str, str, str, TransformSpec], DistanceMatrix] = {}
        tasks = []

        def _assemble(map_key, measure, space, rows, cols, values):
            matrices[map_key] = DistanceMatrix(
                row_ids=tuple(k for k, _ in rows), col_ids=tuple(k for k, _ in cols),
                values=values, measure=measure, space=space,
            )

        for map_key, measure, space, rows, cols in plan:
            params = self._measure_params(measure)
            key = content_key({
                "stage": "distances",
                "rev": ALGORITHM_REVISION,
                "measure": measure,
                "params": params,
                "space": space,
                "rows": [(k, _array_digest(v)) for k, v in rows],
                "cols": [(k, _array_digest(v)) for k, v in cols],
            })
            cached = self.cache.get(key)
            if cached is not None:
                _assemble(map_key, measure, space, rows, cols, cached["values"])
            elif config.jobs > 1:
                tasks.append((map_key, key, measure, space, rows, cols, params))
            else:
                values = pairwise_distances(rows, cols, measure, space, **params).values
                self.cache.put(key, {"values": values})
                _assemble(map_key, measure, space, rows, cols, values)

        if tasks:
            with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
                futures = {
                    pool.submit(_distance_task, measure, space, rows, cols, params):
                        (map_key, key, measure, space, rows, cols)
                    for map_key, key, measure, space, rows, cols, params in tasks
                }
                for future in concurrent.futures.as_completed(futures):
                    map_key, key, measure, space, rows, cols = futures[future]
                    values = future.result()
                    self.cache.put(key, {"values": values})
                    _assemble(map_key, measure, space, rows, cols, values)
        return matrices, active

    # ----- consistency stage -----

    def consistency_records(self, excerpts, matrices, active_specs) -> list[ConsistencyRecord]:
        config = self.config
        clip_ids = [c.id for c in excerpts]
        own = {cid: cid for cid in clip_ids}
        boot = dict(n_boot=config.n_boot, level=config.ci_level)
        records: list[ConsistencyRecord] = []

        def bseed(*parts) -> int:
            return _derived_seed(config.seeds.bootstrap, *parts)

        audio_deltas = {}
        for measure in config.audio_measures:
            for spec in active_specs:
                matrix = matrices[("audio", "", measure, spec)]
                dv = delta_vector(matrix, own, "audio", spec)
                audio_deltas[(measure, spec)] = dv
                records.append(summarize(
                    "CW", 1.0 - dv.values(), audio_measure=measure,
                    category=spec.category, magnitude=spec.magnitude,
                    seed=bseed("CW-audio", measure, spec.label()), **boot,
                ))

        for descriptor in config.encoders:
            eid, task = descriptor.id, descriptor.task_label
            latent_deltas = {}
            for lmeasure in config.latent_measures:
                for spec in active_specs:
                    matrix = matrices[("latent", eid, lmeasure, spec)]
                    dv = delta_vector(matrix, own, "latent", spec)
                    latent_deltas[(lmeasure, spec)] = dv
                    records.append(summarize(
                        "CW", 1.0 - dv.values(), encoder=eid, task_label=task,
                        latent_measure=lmeasure, category=spec.category,
                        magnitude=spec.magnitude,
                        seed=bseed("CW-latent", eid, lmeasure, spec.label()), **boot,
                    ))
            for ameasure in config.audio_measures:
                for lmeasure in config.latent_measures:
                    for spec in active_specs:
                        a_matrix = matrices[("audio", "", ameasure, spec)]
                        l_matrix = matrices[("latent", eid, lmeasure, spec)]
                        agreement = agreement_values(
                            audio_deltas[(ameasure, spec)], latent_deltas[(lmeasure, spec)]
                        )
                        records.append(summarize(
                            "CB_acc", agreement, encoder=eid, task_label=task,
                            audio_measure=ameasure, latent_measure=lmeasure,
                            category=spec.category, magnitude=spec.magnitude,
                            seed=bseed("CB_acc", eid, ameasure, lmeasure, spec.label()), **boot,
                        ))
                        rhos = []
                        excluded = 0
                        for i, cid in enumerate(clip_ids):
                            a_row = np.delete(a_matrix.values[i], i)
                            l_row = np.delete(l_matrix.values[i], i)
                            # Undefined on constant rows, and on rows with
                            # fewer than 3 competing originals.
                            rho = spearman(a_row, l_row) if a_row.size >= 3 else float("nan")
                            if np.isnan(rho):
                                excluded += 1
                            else:
                                rhos.append(rho)
                        if not rhos:
                            self.log.note(
                                f"CB_rho {eid}/{ameasure}/{lmeasure}/{spec.label()}: "
                                "all rank correlations undefined"
                            )
                            continue
                        records.append(summarize(
                            "CB_rho", rhos, encoder=eid, task_label=task,
                            audio_measure=ameasure, latent_measure=lmeasure,
                            category=spec.category, magnitude=spec.magnitude,
                            n_excluded=excluded,
                            seed=bseed("CB_rho", eid, ameasure, lmeasure, spec.label()), **boot,
                        ))
        return records


def _distance_task(measure, space, rows, cols, params):
    return pairwise_distances(rows, cols, measure, space, **params).values


def run_experiment(config: ExperimentConfig) -> RunArtifact:
    """Execute the full pipeline and write the run directory."""
    log = RunLog()
    pipeline = Pipeline(config, log=log)
    run_id = content_key({"config": config.snapshot(), "rev": ALGORITHM_REVISION})[:12]
    run_dir = Path(config.out_dir) / f"run-{run_id}"
    run_dir.mkdir(parents=True, exist_ok=True)
    log.note(f"run {run_id} starting")

    excerpts, skipped_files = ingest_corpus(config, log)
    log.note(f"ingested {len(excerpts)} excerpts ({skipped_files} files skipped)")

    export_dir = run_dir / "excerpts" if config.export_excerpt_wavs else None
    cells = pipeline.compute_cells(excerpts, export_dir=export_dir)
    external = pipeline.load_external(
        excerpts, [s for s in grid_specs(config) if s not in cells.skipped_specs]
    )
    matrices, active = pipeline.distance_matrices(excerpts, cells, external)
    records = pipeline.consistency_records(excerpts, matrices, active)
    log.note(f"computed {len(records)} consistency records")

    artifact = RunArtifact(
        run_id=run_id,
        run_dir=run_dir,
        config=config,
        records=records,
        skipped_groups={s.label(): r for s, r in cells.skipped_specs.items()},
        ingest_skipped=skipped_files,
        cache_hits=pipeline.cache.hits,
        cache_misses=pipeline.cache.misses,
    )
    artifact.outputs = report.emit_report(artifact)
    report.write_distance_csvs(matrices, run_dir / "distances")

    snapshot_path = run_dir / "config.resolved.json"
    snapshot_path.write_text(config.snapshot_json())
    log.note(f"cache: {pipeline.cache.hits} hits, {pipeline.cache.misses} misses")
    log.write(run_dir / "run.log")
    return artifact
