"""The graded transformation families and their default magnitude grids.

Categories: pink noise (PN) and environmental noise (EN) at a target SNR,
tempo shift (TS, percent of original tempo), pitch shift (PS, cents), MP3
compression (MP, kb/s), and OG for the untransformed original. Every
transformed clip is loudness-matched back to its input.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import vocoder
from .audio import AudioClip
from .errors import MissingNoiseError, SilentAudioError
from .loudness import match_loudness

CATEGORIES = ("PN", "EN", "TS", "PS", "MP", "OG")


@dataclass(frozen=True, order=True)
class TransformSpec:
    """One transformation at one grid point; OG carries no magnitude."""

    category: str
    magnitude: float | None = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown transform category {self.category!r}")
        if self.category == "OG":
            if self.magnitude is not None:
                raise ValueError("OG carries no magnitude")
        else:
            if self.magnitude is None:
                raise ValueError(f"{self.category} requires a magnitude")
            object.__setattr__(self, "magnitude", float(self.magnitude))

    def label(self) -> str:
        if self.category == "OG":
            return "OG"
        return f"{self.category}@{self.magnitude!r}"

    def filename_token(self) -> str:
        if self.category == "OG":
            return "OG__none"
        return f"{self.category}__{self.magnitude!r}"

    @classmethod
    def from_filename_token(cls, token: str) -> "TransformSpec":
        category, _, magnitude = token.partition("__")
        if magnitude in ("none", ""):
            return cls(category=category)
        return cls(category=category, magnitude=float(magnitude))


OG = TransformSpec("OG")


@dataclass(frozen=True)
class MagnitudeGrid:
    category: str
    magnitudes: tuple[float, ...]

    def __post_init__(self):
        mags = tuple(float(m) for m in self.magnitudes)
        if not mags:
            raise ValueError(f"{self.category}: empty magnitude grid")
        diffs = np.diff(mags)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError(f"{self.category}: grid must be strictly monotone")
        object.__setattr__(self, "magnitudes", mags)

    def specs(self) -> list[TransformSpec]:
        return [TransformSpec(self.category, m) for m in self.magnitudes]


# Noise grids run from the mildest transformation (high SNR) to the gravest,
# with denser sampling on the mild side. Tempo steps tighten to 2% around the
# original; pitch uses quarter/half/whole semitone steps near the original and
# whole-tone steps beyond; MP covers the common MP3 encoder bitrates.
_DEFAULT_GRIDS = {
    "PN": (30, 27, 24, 21, 18, 15, 12, 9, 6, 3, 0, -5, -10, -15),
    "EN": (30, 27, 24, 21, 18, 15, 12, 9, 6, 3, 0, -5, -10, -15),
    "TS": (30, 50, 70, 80, 90, 94, 96, 98, 102, 104, 106, 110, 120, 130, 150),
    "PS": (-1200, -1000, -800, -600, -400, -200, -100, -50, -25,
           25, 50, 100, 200, 400, 600, 800, 1000, 1200),
    "MP": (8, 16, 24, 32, 40, 48, 64, 80, 96, 112, 128, 160, 192, 224, 256, 320),
}

# The mildest grid point per category, used for near-imperceptible checks:
# +/-25 cents, +/-2% tempo, 30 dB SNR, and the 192 kb/s bitrate.
SMALLEST_MAGNITUDES = {
    "PN": (30.0,),
    "EN": (30.0,),
    "TS": (98.0, 102.0),
    "PS": (-25.0, 25.0),
    "MP": (192.0,),
}


def default_grid(category: str) -> MagnitudeGrid:
    if category == "OG":
        raise ValueError("OG has no magnitude grid")
    return MagnitudeGrid(category, _DEFAULT_GRIDS[category])


def default_grids() -> dict[str, MagnitudeGrid]:
    return {c: default_grid(c) for c in _DEFAULT_GRIDS}


def generate_pink_noise(
    length: int, seed: int, sample_rate: int = 22050, rms: float = 0.1
) -> AudioClip:
    """Pink noise by frequency-domain synthesis.

    Uniform random phases, magnitude proportional to 1/sqrt(f), inverse
    transform, then normalization to the requested RMS. Deterministic per seed.
    """
    if length < 4096:
        raise ValueError("pink noise length must be >= 4096 samples")
    rng = np.random.default_rng(seed)
    n_bins = length // 2 + 1
    mags = np.zeros(n_bins)
    mags[1:] = 1.0 / np.sqrt(np.arange(1, n_bins))
    phases = rng.uniform(0.0, 2.0 * np.pi, n_bins)
    spectrum = mags * np.exp(1j * phases)
    spectrum[0] = 0.0
    if length % 2 == 0:
        spectrum[-1] = mags[-1] * np.sign(np.cos(phases[-1]))  # Nyquist bin must be real
    x = np.fft.irfft(spectrum, n=length)
    x *= rms / np.sqrt(np.mean(x**2))
    return AudioClip(samples=x, sample_rate=sample_rate, id=f"pink-{seed}")


def _tile_to_length(noise: np.ndarray, length: int) -> np.ndarray:
    if noise.shape[0] >= length:
        return noise[:length]
    reps = int(np.ceil(length / noise.shape[0]))
    return np.tile(noise, reps)[:length]


def mix_at_snr(signal: AudioClip, noise: AudioClip, snr_db: float) -> AudioClip:
    """Add noise scaled so the full-excerpt power ratio hits `snr_db` exactly."""
    if signal.sample_rate != noise.sample_rate:
        raise ValueError("signal and noise sample rates differ")
    n = _tile_to_length(noise.samples, len(signal))
    p_signal = np.mean(signal.samples**2)
    p_noise = np.mean(n**2)
    if p_signal == 0.0:
        raise SilentAudioError(f"signal {signal.id!r} is silent: SNR undefined")
    if p_noise == 0.0:
        raise SilentAudioError(f"noise {noise.id!r} is silent: SNR undefined")
    gain = np.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0)))
    return signal.with_samples(signal.samples + gain * n)


def surrogate_codec(clip: AudioClip, bitrate: float) -> AudioClip:
    """Deterministic stand-in for a lossy codec when no external encoder exists.

    Low-passes at min(11025, 250*sqrt(bitrate)) Hz and quantizes spectral
    magnitudes with a step inversely proportional to the bitrate.
    """
    x = clip.samples
    n = x.shape[0]
    spectrum = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(n, 1.0 / clip.sample_rate)
    cutoff = min(11025.0, 250.0 * np.sqrt(bitrate))
    spectrum = np.where(freqs <= cutoff, spectrum, 0.0)
    # Quantize on a per-sample magnitude scale so the step does not depend on
    # clip length, and the operation is idempotent at a fixed bitrate.
    scale = 2.0 / n
    step = 1.0 / (2.0 * bitrate)
    mags = np.abs(spectrum) * scale
    quantized = np.round(mags / step) * step
    phases = np.angle(spectrum)
    out = np.fft.irfft(quantized / scale * np.exp(1j * phases), n=n)
    return clip.with_samples(out)


@dataclass
class TransformContext:
    """Everything apply_transform needs beyond the clip and the spec."""

    seed: int = 0
    noise: AudioClip | None = None
    codec: "object | None" = None  # codec.CodecConfig when external MP3 is wired up
    use_surrogate_codec: bool = True
    scratch_dir: str | None = None
    phase_locking: bool = False


def _derived_seed(root: int, clip_id: str, spec: TransformSpec) -> int:
    digest = hashlib.sha256(f"{root}:{clip_id}:{spec.label()}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def apply_transform(clip: AudioClip, spec: TransformSpec, context: TransformContext) -> AudioClip:
    """Dispatch to the category's operation, then loudness-match to the input."""
    if spec.category == "OG":
        return clip
    if spec.category == "PN":
        noise = generate_pink_noise(
            len(clip), _derived_seed(context.seed, clip.id, spec), clip.sample_rate
        )
        out = mix_at_snr(clip, noise, spec.magnitude)
    elif spec.category == "EN":
        if context.noise is None:
            raise MissingNoiseError("EN transform requires a registered noise clip")
        out = mix_at_snr(clip, context.noise, spec.magnitude)
    elif spec.category == "TS":
        out = vocoder.tempo_shift(clip, spec.magnitude, phase_locking=context.phase_locking)
    elif spec.category == "PS":
        out = vocoder.pitch_shift(clip, spec.magnitude)
    elif spec.category == "MP":
        if context.codec is not None and not context.use_surrogate_codec:
            from .codec import codec_roundtrip

            out = codec_roundtrip(clip, spec.magnitude, context.codec, context.scratch_dir)
        else:
            out = surrogate_codec(clip, spec.magnitude)
    else:  # pragma: no cover - guarded by TransformSpec validation
        raise ValueError(f"unhandled category {spec.category}")
    return match_loudness(out, clip)
