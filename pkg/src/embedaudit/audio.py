"""Audio I/O and the shared signal frontend.

Everything downstream (transforms, features, encoders) works on mono clips
at 22050 Hz. The STFT uses a 1024-sample periodic Hann window with hop 256,
giving 513 positive-frequency bins; MFCCs are 25 orthonormal-DCT cepstra of
a 40-band mel filterbank with the first coefficient dropped (24 dims kept).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.fft import dct
from scipy.io import wavfile
from scipy.special import i0

from .errors import (
    EmptyAudioError,
    TooShortError,
    UnreadableFileError,
    UnsupportedFormatError,
)

SAMPLE_RATE = 22050
WINDOW = 1024
HOP = 256
N_BINS = WINDOW // 2 + 1
N_MELS = 40
N_CEPSTRA = 25
LOG_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono PCM samples plus their rate and an opaque identifier."""

    samples: np.ndarray
    sample_rate: int
    id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise EmptyAudioError(f"clip {self.id!r} has no samples")
        if not np.all(np.isfinite(samples)):
            raise ValueError(f"clip {self.id!r} contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError(f"clip {self.id!r}: sample_rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples) -> "AudioClip":
        return replace(self, samples=np.asarray(samples, dtype=np.float64))

    def scaled(self, gain: float) -> "AudioClip":
        return self.with_samples(self.samples * gain)


@dataclass(frozen=True, eq=False)
class MagnitudeSpectrogram:
    """Linear-magnitude STFT, frames along axis 0."""

    values: np.ndarray
    window: int = WINDOW
    frame_hop: int = HOP

    @property
    def bin_count(self) -> int:
        return self.values.shape[1]

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """Time-ordered MFCC frame matrix [frames x dims]."""

    frames: np.ndarray
    frame_hop: int = HOP

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError("feature sequence needs at least one frame")
        object.__setattr__(self, "frames", frames)

    @property
    def dims(self) -> int:
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]


def load_audio(path, clip_id: str | None = None) -> AudioClip:
    """Read a PCM WAV file as a mono clip with samples in [-1, 1].

    Multi-channel input is downmixed by channel mean. 16/24-bit integer and
    32/64-bit float encodings are accepted.
    """
    path = Path(path)
    if not path.is_file():
        raise UnreadableFileError(f"not a readable file: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except ValueError as exc:
        raise UnsupportedFormatError(f"{path}: {exc}") from exc
    except Exception as exc:  # truncated/corrupt container
        raise UnreadableFileError(f"{path}: {exc}") from exc
    if data.size == 0:
        raise EmptyAudioError(f"{path}: zero-length stream")

    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        # 24-bit PCM comes back as int32 with the low byte zeroed.
        samples = data / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise UnsupportedFormatError(f"{path}: unsupported sample dtype {data.dtype}")

    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return AudioClip(samples=samples, sample_rate=int(rate), id=clip_id or path.stem)


def save_wav(path, clip: AudioClip) -> None:
    """Write a clip as 32-bit float WAV (round-trips bit-exactly)."""
    wavfile.write(str(path), clip.sample_rate, clip.samples.astype(np.float32))


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited resampling to a new rate (windowed-sinc, 64 taps)."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return clip
    ratio = target_rate / clip.sample_rate
    out = resample_by_ratio(clip.samples, ratio)
    return AudioClip(samples=out, sample_rate=int(target_rate), id=clip.id)


_TAPS = 64
_KAISER_BETA = 12.0
_ROLLOFF = 0.95


def resample_by_ratio(x: np.ndarray, ratio: float) -> np.ndarray:
    """Resample a signal by an arbitrary real ratio (output length round(n*ratio)).

    Each output sample is a 64-tap Kaiser-windowed-sinc interpolation of the
    input, with the cutoff lowered on downsampling to suppress aliasing.
    Samples beyond the signal edges are treated as zero.
    """
    x = np.asarray(x, dtype=np.float64)
    n_in = x.shape[0]
    n_out = max(1, int(round(n_in * ratio)))
    half = _TAPS // 2
    k = np.arange(-half + 1, half + 1, dtype=np.float64)
    cutoff = min(1.0, ratio) * _ROLLOFF
    support = half + 1.0

    out = np.empty(n_out, dtype=np.float64)
    # Chunked to bound the [chunk x taps] workspace for long signals.
    chunk = 16384
    for start in range(0, n_out, chunk):
        m = np.arange(start, min(start + chunk, n_out), dtype=np.float64)
        pos = m / ratio
        base = np.floor(pos).astype(np.int64)
        frac = pos - base
        p = k[None, :] - frac[:, None]
        u = p / support
        win = np.where(
            np.abs(u) < 1.0,
            i0(_KAISER_BETA * np.sqrt(np.maximum(0.0, 1.0 - u * u))) / i0(_KAISER_BETA),
            0.0,
        )
        kern = cutoff * np.sinc(cutoff * p) * win
        idx = base[:, None] + k[None, :].astype(np.int64)
        valid = (idx >= 0) & (idx < n_in)
        gathered = np.where(valid, x[np.clip(idx, 0, n_in - 1)], 0.0)
        out[start : start + len(m)] = np.einsum("ij,ij->i", gathered, kern)
    return out


@lru_cache(maxsize=8)
def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@lru_cache(maxsize=8)
def _hann_symmetric(n: int) -> np.ndarray:
    # Symmetric so that windowed frame magnitudes are invariant under time
    # reversal; the vocoder uses the periodic variant for overlap-add.
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))


def frame_count(n_samples: int, window: int = WINDOW, hop: int = HOP) -> int:
    return (n_samples - window) // hop + 1


def stft_magnitude(clip: AudioClip, window: int = WINDOW, hop: int = HOP) -> MagnitudeSpectrogram:
    """Hann-windowed magnitude STFT with 513 positive-frequency bins."""
    if clip.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected clip at {SAMPLE_RATE} Hz, got {clip.sample_rate}")
    if len(clip) < window:
        raise TooShortError(f"clip {clip.id!r}: {len(clip)} samples < one window ({window})")
    frames = _frame_signal(clip.samples, window, hop)
    spec = np.abs(np.fft.rfft(frames * _hann_symmetric(window), axis=1))
    return MagnitudeSpectrogram(values=spec, window=window, frame_hop=hop)


def _frame_signal(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    n_frames = frame_count(x.shape[0], window, hop)
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(
    n_mels: int = N_MELS,
    n_fft: int = WINDOW,
    sample_rate: int = SAMPLE_RATE,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> np.ndarray:
    """Triangular mel filterbank [n_mels x bins], unit peak per band."""
    if fmax is None:
        fmax = sample_rate / 2.0
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    fb = np.zeros((n_mels, bin_freqs.shape[0]))
    for m in range(n_mels):
        lo, mid, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bin_freqs - lo) / max(mid - lo, 1e-12)
        down = (hi - bin_freqs) / max(hi - mid, 1e-12)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def mfcc(
    clip: AudioClip,
    n_mels: int = N_MELS,
    n_cepstra: int = N_CEPSTRA,
    fmin: float = 0.0,
    fmax: float | None = None,
    log_floor: float = LOG_FLOOR,
) -> FeatureSequence:
    """MFCC frames with the first cepstral coefficient dropped (24 dims).

    Pipeline: power spectrogram -> 40-band mel filterbank (0..11025 Hz) ->
    log with an absolute floor -> orthonormal DCT-II -> keep cepstra 1..24.
    """
    spec = stft_magnitude(clip)
    power = spec.values**2
    fb = mel_filterbank(n_mels, spec.window, clip.sample_rate, fmin, fmax)
    mel_power = power @ fb.T
    log_mel = np.log(np.maximum(mel_power, log_floor))
    cepstra = dct(log_mel, type=2, norm="ortho", axis=1)[:, :n_cepstra]
    return FeatureSequence(frames=cepstra[:, 1:], frame_hop=spec.frame_hop)


def excerpt_length(frames: int = 128, window: int = WINDOW, hop: int = HOP) -> int:
    return (frames - 1) * hop + window


def crop_excerpt(clip: AudioClip, frames: int = 128, seed: int = 0) -> AudioClip:
    """Cut a random fixed-length excerpt; pure function of (clip, frames, seed)."""
    length = excerpt_length(frames)
    if len(clip) < length:
        raise TooShortError(
            f"clip {clip.id!r}: {len(clip)} samples < excerpt length {length}"
        )
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, len(clip) - length + 1))
    return AudioClip(samples=clip.samples[start : start + length], sample_rate=clip.sample_rate, id=clip.id)
