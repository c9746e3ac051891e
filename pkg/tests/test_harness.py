import numpy as np
import pytest

from embedaudit.config import ExperimentConfig, Seeds, config_from_dict
from embedaudit.encoders import EncoderDescriptor
from embedaudit.errors import ConfigError
from embedaudit.harness import Pipeline, RunLog, ingest_corpus, run_experiment
from embedaudit.report import read_consistency_csv
from embedaudit.synthetic import generate_synthetic_corpus
from embedaudit.transforms import MagnitudeGrid

TINY_GRIDS = {
    "PN": MagnitudeGrid("PN", (30.0, 0.0)),
    "TS": MagnitudeGrid("TS", (102.0,)),
    "MP": MagnitudeGrid("MP", (64.0,)),
}


def tiny_config(corpus_dir, tmp_path, **overrides) -> ExperimentConfig:
    base = dict(
        corpus_dir=corpus_dir,
        grids=dict(TINY_GRIDS),
        audio_measures=("dtw",),
        latent_measures=("euclidean",),
        encoders=[EncoderDescriptor(id="mfcc", kind="mfcc_stats", dim=144)],
        seeds=Seeds(10, 20, 30),
        out_dir=tmp_path / "runs",
        cache_dir=tmp_path / "cache",
        n_boot=200,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def corpus5(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus5")
    generate_synthetic_corpus(root, n_clips=5, seed=5)
    return root


class TestIngest:
    def test_counts_and_length(self, corpus5, tmp_path):
        config = tiny_config(corpus5, tmp_path)
        excerpts, skipped = ingest_corpus(config)
        assert len(excerpts) == 5
        assert skipped == 0
        assert all(len(e) == 33536 for e in excerpts)
        assert [e.id for e in excerpts] == sorted(e.id for e in excerpts)

    def test_deterministic(self, corpus5, tmp_path):
        config = tiny_config(corpus5, tmp_path)
        a, _ = ingest_corpus(config)
        b, _ = ingest_corpus(config)
        for x, y in zip(a, b):
            assert np.array_equal(x.samples, y.samples)

    def test_unreadable_skipped_with_count(self, corpus5, tmp_path):
        import shutil

        corpus = tmp_path / "corpus"
        shutil.copytree(corpus5, corpus)
        (corpus / "broken.wav").write_bytes(b"RIFFgarbage")
        config = tiny_config(corpus, tmp_path)
        excerpts, skipped = ingest_corpus(config)
        assert len(excerpts) == 5
        assert skipped == 1

    def test_single_clip_rejected(self, tmp_path):
        corpus = tmp_path / "one"
        generate_synthetic_corpus(corpus, n_clips=1, seed=2)
        with pytest.raises(ConfigError):
            ingest_corpus(tiny_config(corpus, tmp_path))

    def test_test_set_size_cap(self, corpus5, tmp_path):
        config = tiny_config(corpus5, tmp_path, test_set_size=3)
        excerpts, _ = ingest_corpus(config)
        assert len(excerpts) == 3


class TestRunExperiment:
    @pytest.fixture(scope="class")
    def artifact(self, corpus5, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("run")
        return run_experiment(tiny_config(corpus5, tmp))

    def test_og_within_consistency_is_one(self, artifact):
        og = [r for r in artifact.records if r.metric == "CW" and r.category == "OG"]
        assert og
        assert all(r.value == 1.0 for r in og)

    def test_every_record_in_csv_once(self, artifact):
        rows = read_consistency_csv(artifact.run_dir / "consistency.csv")
        assert len(rows) == len(artifact.records)
        keys = [(r.metric, r.encoder, r.audio_measure, r.latent_measure,
                 r.category, r.magnitude) for r in rows]
        assert len(set(keys)) == len(keys)

    def test_summary_group_count(self, artifact):
        import json

        summary = json.loads((artifact.run_dir / "summary.json").read_text())
        config = artifact.config
        expected = (len(config.encoders) * 3 * len(config.audio_measures)
                    * len(config.latent_measures) * len(config.grids))
        assert len(summary["groups"]) == expected

    def test_figure_tables_exist(self, artifact):
        for name in ("within_audio_by_magnitude", "within_latent_by_magnitude",
                     "between_by_magnitude", "between_marginal_means",
                     "original_sample_rank_correlation"):
            assert (artifact.run_dir / "figures" / f"{name}.csv").is_file()

    def test_rerun_fully_cached(self, corpus5, artifact, tmp_path_factory):
        again = run_experiment(artifact.config)
        assert again.cache_misses == 0
        assert again.cache_hits > 0
        assert (again.run_dir / "consistency.csv").read_bytes() == (
            artifact.run_dir / "consistency.csv").read_bytes()

    def test_cache_bypass_same_metrics(self, corpus5, artifact, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("nocache")
        config = tiny_config(corpus5, tmp, cache_dir=None)
        bare = run_experiment(config)
        assert [(r.metric, r.value) for r in bare.records] == [
            (r.metric, r.value) for r in artifact.records]

    def test_category_removal_only_drops_its_rows(self, corpus5, artifact, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("drop")
        grids = {c: g for c, g in TINY_GRIDS.items() if c != "TS"}
        config = tiny_config(corpus5, tmp, grids=grids)
        smaller = run_experiment(config)

        def key(r):
            return (r.metric, r.encoder, r.audio_measure, r.latent_measure,
                    r.category, r.magnitude)

        full = {key(r): r.value for r in artifact.records}
        reduced = {key(r): r.value for r in smaller.records}
        assert set(full) - set(reduced) == {k for k in full if k[4] == "TS"}
        for k, value in reduced.items():
            assert full[k] == value


class TestParallelism:
    def test_jobs_two_matches_serial(self, corpus5, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("par")
        serial = run_experiment(tiny_config(corpus5, tmp / "a", cache_dir=None))
        parallel = run_experiment(tiny_config(corpus5, tmp / "b", cache_dir=None, jobs=2))
        assert [(r.metric, r.value, r.ci_low, r.ci_high) for r in serial.records] == [
            (r.metric, r.value, r.ci_low, r.ci_high) for r in parallel.records]


class TestIdentityEncoder:
    def test_between_space_metrics_all_one(self, corpus5, tmp_path_factory):
        tmp = tmp_path_factory.mktemp("ident")
        config = tiny_config(
            corpus5, tmp,
            audio_measures=("dtw",),
            latent_measures=("dtw",),
            encoders=[EncoderDescriptor(id="identity", kind="identity")],
        )
        artifact = run_experiment(config)
        between = [r for r in artifact.records if r.metric in ("CB_acc", "CB_rho")]
        assert between
        for r in between:
            assert r.value == pytest.approx(1.0, abs=1e-9)


class TestConfigValidation:
    def test_en_requires_noise(self, corpus5, tmp_path):
        with pytest.raises(ConfigError) as err:
            config_from_dict({
                "corpus_dir": str(corpus5),
                "grids": {"EN": [30.0]},
            })
        assert "noise_wav" in str(err.value)

    def test_en_noise_path_must_exist(self, corpus5, tmp_path):
        with pytest.raises(ConfigError) as err:
            config_from_dict({
                "corpus_dir": str(corpus5),
                "noise_wav": str(tmp_path / "missing.wav"),
                "grids": {"EN": [30.0]},
            })
        assert "missing.wav" in str(err.value)

    def test_sequence_latent_requires_identity(self, corpus5, tmp_path):
        config = tiny_config(corpus5, tmp_path, latent_measures=("dtw",))
        with pytest.raises(ConfigError):
            config.validate()

    def test_duplicate_encoder_ids(self, corpus5, tmp_path):
        config = tiny_config(corpus5, tmp_path, encoders=[
            EncoderDescriptor(id="e", kind="mfcc_stats"),
            EncoderDescriptor(id="e", kind="toy"),
        ])
        with pytest.raises(ConfigError):
            config.validate()

    def test_toml_roundtrip(self, corpus5, tmp_path, babble_path):
        toml = tmp_path / "exp.toml"
        toml.write_text(f"""
corpus_dir = "{corpus5}"
noise_wav = "{babble_path}"
excerpt_frames = 128

[grids]
PN = [30.0, 0.0]
EN = [30.0]

[measures]
audio = ["dtw"]
latent = ["cosine"]

[[encoders]]
id = "mfcc"
kind = "mfcc_stats"
dim = 144

[seeds]
crop = 7
noise = 8
bootstrap = 9

[run]
jobs = 2
n_boot = 100
""")
        from embedaudit.config import load_config

        config = load_config(toml)
        assert config.seeds == Seeds(7, 8, 9)
        assert config.jobs == 2
        assert set(config.grids) == {"PN", "EN"}
        assert config.latent_measures == ("cosine",)


class TestExternalEmbeddings:
    def test_external_encoder_roundtrip(self, corpus5, tmp_path):
        from embedaudit import emb1
        from embedaudit.harness import grid_specs

        config = tiny_config(corpus5, tmp_path)
        pipeline = Pipeline(config, log=RunLog())
        excerpts, _ = ingest_corpus(config)
        rng = np.random.default_rng(0)
        rows = {(clip.id, spec): rng.normal(size=8).astype(np.float32)
                for spec in grid_specs(config) for clip in excerpts}
        manifest = emb1.write_embeddings(tmp_path / "ext", "deep", rows)

        config.encoders = [EncoderDescriptor(id="deep", kind="external", dim=8,
                                             manifest=str(manifest),
                                             metadata={"task": "AT"})]
        artifact = run_experiment(config)
        assert any(r.encoder == "deep" and r.task_label == "AT" for r in artifact.records)
