"""Experiment configuration: TOML parsing, defaults and validation."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .codec import CodecConfig
from .distances import AUDIO_MEASURES, DEFAULT_RADIUS, DEFAULT_SUBSEQ_LEN, VECTOR_MEASURES
from .encoders import EncoderDescriptor
from .errors import ConfigError
from .transforms import MagnitudeGrid, default_grids

SEQUENCE_MEASURES = AUDIO_MEASURES  # dtw/simple also usable on identity latents


@dataclass(frozen=True)
class Seeds:
    crop: int = 1000
    noise: int = 2000
    bootstrap: int = 3000

    @classmethod
    def from_root(cls, root: int) -> "Seeds":
        return cls(crop=root, noise=root + 1, bootstrap=root + 2)


@dataclass
class ExperimentConfig:
    corpus_dir: Path
    noise_wav: Path | None = None
    excerpt_frames: int = 128
    test_set_size: int | None = None
    grids: dict[str, MagnitudeGrid] = field(default_factory=default_grids)
    audio_measures: tuple[str, ...] = ("dtw", "simple")
    latent_measures: tuple[str, ...] = ("euclidean", "cosine")
    encoders: list[EncoderDescriptor] = field(
        default_factory=lambda: [EncoderDescriptor(id="mfcc", kind="mfcc_stats", dim=144)]
    )
    seeds: Seeds = field(default_factory=Seeds)
    codec: CodecConfig | None = None
    use_surrogate_codec: bool = True
    scratch_dir: Path | None = None
    cache_dir: Path | None = None
    out_dir: Path = Path("runs")
    jobs: int = 1
    n_boot: int = 1000
    ci_level: float = 0.95
    fastdtw_radius: int = DEFAULT_RADIUS
    simple_subseq_len: int = DEFAULT_SUBSEQ_LEN
    export_excerpt_wavs: bool = False

    def validate(self) -> None:
        if not self.encoders:
            raise ConfigError("need at least one encoder")
        if not self.audio_measures:
            raise ConfigError("need at least one audio-space measure")
        if not self.latent_measures:
            raise ConfigError("need at least one latent-space measure")
        for m in self.audio_measures:
            if m not in SEQUENCE_MEASURES:
                raise ConfigError(f"unknown audio measure {m!r}")
        for m in self.latent_measures:
            if m not in VECTOR_MEASURES + SEQUENCE_MEASURES:
                raise ConfigError(f"unknown latent measure {m!r}")
        ids = [e.id for e in self.encoders]
        if len(set(ids)) != len(ids):
            raise ConfigError("encoder ids must be unique")
        for category in self.grids:
            if category == "OG":
                raise ConfigError("OG has no magnitude grid")
        if "EN" in self.grids:
            if self.noise_wav is None:
                raise ConfigError("EN grid configured but noise_wav is not set")
            if not Path(self.noise_wav).is_file():
                raise ConfigError(f"noise_wav not found: {self.noise_wav}")
        if "MP" in self.grids and self.codec is None and not self.use_surrogate_codec:
            raise ConfigError("MP grid needs either a codec command or the surrogate")
        has_sequence_latent = any(m in SEQUENCE_MEASURES for m in self.latent_measures)
        if has_sequence_latent and not all(e.kind == "identity" for e in self.encoders):
            raise ConfigError("sequence measures on the latent side require identity encoders")

    def snapshot(self) -> dict:
        """JSON-serializable resolved view (also the run-identity payload)."""
        return {
            "corpus_dir": str(self.corpus_dir),
            "noise_wav": str(self.noise_wav) if self.noise_wav else None,
            "excerpt_frames": self.excerpt_frames,
            "test_set_size": self.test_set_size,
            "grids": {c: list(g.magnitudes) for c, g in sorted(self.grids.items())},
            "audio_measures": list(self.audio_measures),
            "latent_measures": list(self.latent_measures),
            "encoders": [
                {
                    "id": e.id, "kind": e.kind, "dim": e.dim, "seed": e.seed,
                    "manifest": e.manifest, "metadata": dict(sorted(e.metadata.items())),
                }
                for e in self.encoders
            ],
            "seeds": {"crop": self.seeds.crop, "noise": self.seeds.noise,
                      "bootstrap": self.seeds.bootstrap},
            "codec": (
                {"encode": self.codec.encode, "decode": self.codec.decode,
                 "extension": self.codec.extension}
                if self.codec else None
            ),
            "use_surrogate_codec": self.use_surrogate_codec,
            "n_boot": self.n_boot,
            "ci_level": self.ci_level,
            "fastdtw_radius": self.fastdtw_radius,
            "simple_subseq_len": self.simple_subseq_len,
        }

    def snapshot_json(self) -> str:
        return json.dumps(self.snapshot(), indent=1, sort_keys=True) + "\n"


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw, base_dir=path.parent)


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    base = Path(base_dir) if base_dir else Path.cwd()

    def _path(value):
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    if "corpus_dir" not in raw:
        raise ConfigError("corpus_dir is required")
    cfg = ExperimentConfig(corpus_dir=_path(raw["corpus_dir"]))
    cfg.noise_wav = _path(raw.get("noise_wav"))
    cfg.excerpt_frames = int(raw.get("excerpt_frames", cfg.excerpt_frames))
    if raw.get("test_set_size") is not None:
        cfg.test_set_size = int(raw["test_set_size"])

    if "grids" in raw:
        cfg.grids = {
            category: MagnitudeGrid(category, tuple(float(m) for m in mags))
            for category, mags in raw["grids"].items()
        }

    measures = raw.get("measures", {})
    if "audio" in measures:
        cfg.audio_measures = tuple(measures["audio"])
    if "latent" in measures:
        cfg.latent_measures = tuple(measures["latent"])

    if "encoders" in raw:
        cfg.encoders = [
            EncoderDescriptor(
                id=e["id"],
                kind=e["kind"],
                dim=e.get("dim"),
                seed=int(e.get("seed", 0)),
                manifest=str(_path(e["manifest"])) if e.get("manifest") else None,
                metadata=e.get("metadata", {}),
            )
            for e in raw["encoders"]
        ]

    seeds = raw.get("seeds", {})
    cfg.seeds = Seeds(
        crop=int(seeds.get("crop", cfg.seeds.crop)),
        noise=int(seeds.get("noise", cfg.seeds.noise)),
        bootstrap=int(seeds.get("bootstrap", cfg.seeds.bootstrap)),
    )

    if "codec" in raw:
        c = raw["codec"]
        cfg.codec = CodecConfig(encode=c["encode"], decode=c["decode"],
                                extension=c.get("extension", "mp3"))
        cfg.use_surrogate_codec = bool(c.get("use_surrogate", False))

    run = raw.get("run", {})
    cfg.out_dir = _path(run.get("out_dir", "runs"))
    cfg.cache_dir = _path(run.get("cache_dir"))
    cfg.scratch_dir = _path(run.get("scratch_dir"))
    cfg.jobs = int(run.get("jobs", 1))
    cfg.n_boot = int(run.get("n_boot", cfg.n_boot))
    cfg.ci_level = float(run.get("ci_level", cfg.ci_level))
    cfg.fastdtw_radius = int(run.get("fastdtw_radius", cfg.fastdtw_radius))
    cfg.simple_subseq_len = int(run.get("simple_subseq_len", cfg.simple_subseq_len))
    cfg.export_excerpt_wavs = bool(run.get("export_excerpt_wavs", False))

    cfg.validate()
    return cfg
