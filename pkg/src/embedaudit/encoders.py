"""Encoders mapping audio clips into latent representations.

Native encoders: the MFCC-statistics baseline (144 dims), a seeded
random-projection toy encoder for tests, and the identity encoder whose
"embedding" is the MFCC frame sequence itself, letting the latent space be
compared with the exact same sequence measure as the audio space.
External deep encoders enter through EMB1 interchange files only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import emb1
from .audio import AudioClip, FeatureSequence, mfcc, stft_magnitude
from .errors import TooShortError
from .transforms import TransformSpec

ENCODER_KINDS = ("mfcc_stats", "toy", "identity", "external")


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    encoder_id: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class EncoderDescriptor:
    id: str
    kind: str
    dim: int | None = None
    seed: int = 0
    manifest: str | None = None  # external encoders: path to the EMB1 manifest
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.kind == "external" and not self.manifest:
            raise ValueError(f"external encoder {self.id!r} needs a manifest path")

    @property
    def task_label(self) -> str:
        return str(self.metadata.get("task", ""))


def _central_difference(frames: np.ndarray) -> np.ndarray:
    padded = np.pad(frames, ((1, 1), (0, 0)), mode="edge")
    return 0.5 * (padded[2:] - padded[:-2])


def mfcc_stats_encode(clip: AudioClip) -> Embedding:
    """MFCC summary-statistics baseline: 24 coefficients, their first and
    second time derivatives, mean and standard deviation over time (144 dims,
    ordered mean(c), mean(d), mean(dd), std(c), std(d), std(dd))."""
    seq = mfcc(clip)
    if len(seq) < 3:
        raise TooShortError(f"clip {clip.id!r}: need >= 3 MFCC frames")
    return Embedding(values=mfcc_stats_from_frames(seq.frames), encoder_id="mfcc_stats")


def mfcc_stats_from_frames(frames: np.ndarray) -> np.ndarray:
    d1 = _central_difference(frames)
    d2 = _central_difference(d1)
    return np.concatenate([
        frames.mean(axis=0), d1.mean(axis=0), d2.mean(axis=0),
        frames.std(axis=0), d1.std(axis=0), d2.std(axis=0),
    ])


TOY_DIM = 32


def toy_encode(clip: AudioClip, seed: int = 0) -> Embedding:
    """Mean-pooled magnitude spectrum through a seeded random projection."""
    pooled = stft_magnitude(clip).values.mean(axis=0)
    rng = np.random.default_rng(seed)
    projection = rng.normal(size=(TOY_DIM, pooled.shape[0])) / np.sqrt(pooled.shape[0])
    return Embedding(values=projection @ pooled, encoder_id="toy")


def identity_encode(clip: AudioClip) -> FeatureSequence:
    """The audio-space representation itself, for self-consistency runs."""
    return mfcc(clip)


def encode_clip(descriptor: EncoderDescriptor, clip: AudioClip):
    """Run a native encoder; returns a 1-D vector or a FeatureSequence."""
    if descriptor.kind == "mfcc_stats":
        return mfcc_stats_encode(clip).values
    if descriptor.kind == "toy":
        return toy_encode(clip, seed=descriptor.seed).values
    if descriptor.kind == "identity":
        return identity_encode(clip).frames
    raise ValueError(f"encoder {descriptor.id!r} of kind {descriptor.kind!r} "
                     "cannot be evaluated natively")


def load_external_embeddings(manifest_path, expected_keys=None
                             ) -> dict[tuple[str, TransformSpec], np.ndarray]:
    """Load an external encoder's EMB1 embeddings, validating coverage."""
    mapping, _, _ = emb1.load_embeddings(manifest_path, expected_keys=expected_keys)
    return mapping
