"""Round-trip through an external lossy codec, with delay alignment.

The encoder and decoder are arbitrary command templates with {in}, {out} and
{bitrate} placeholders, so any MP3 (or other) toolchain can be plugged in.
Codec delay is removed by cross-correlating the decoded audio against the
input rather than trusting encoder metadata.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve

from .audio import AudioClip, load_audio, resample
from .errors import CodecError, CodecUnavailableError, SuspectAlignmentWarning

ALIGN_SEARCH = 4096
ALIGN_MIN_CORRELATION = 0.5


@dataclass(frozen=True)
class CodecConfig:
    encode: str  # e.g. "ffmpeg -y -i {in} -codec:a libmp3lame -b:a {bitrate}k {out}"
    decode: str  # e.g. "ffmpeg -y -i {in} {out}"
    extension: str = "mp3"


def _run_template(template: str, in_path: Path, out_path: Path, bitrate: float) -> None:
    command = [
        part.replace("{in}", str(in_path))
        .replace("{out}", str(out_path))
        .replace("{bitrate}", f"{bitrate:g}")
        for part in shlex.split(template)
    ]
    try:
        proc = subprocess.run(command, capture_output=True, text=True, timeout=300)
    except FileNotFoundError as exc:
        raise CodecUnavailableError(f"codec binary not found: {command[0]}") from exc
    if proc.returncode != 0:
        raise CodecError(
            f"{command[0]} exited {proc.returncode}: {proc.stderr.strip()[-400:]}"
        )


def align_by_correlation(decoded: np.ndarray, reference: np.ndarray,
                         search: int = ALIGN_SEARCH) -> tuple[np.ndarray, float]:
    """Shift `decoded` onto `reference` using the best lag within +/-search.

    Returns the aligned signal (truncated/padded to the reference length) and
    the normalized correlation at the chosen lag.
    """
    xcorr = fftconvolve(decoded, reference[::-1], mode="full")
    center = reference.shape[0] - 1  # lag 0
    lo = max(0, center - search)
    hi = min(xcorr.shape[0], center + search + 1)
    lag = int(np.argmax(xcorr[lo:hi])) + lo - center

    if lag > 0:
        shifted = decoded[lag:]
    else:
        shifted = np.concatenate([np.zeros(-lag), decoded])
    n = reference.shape[0]
    if shifted.shape[0] < n:
        shifted = np.concatenate([shifted, np.zeros(n - shifted.shape[0])])
    aligned = shifted[:n]

    denom = np.linalg.norm(aligned) * np.linalg.norm(reference)
    corr = float(np.dot(aligned, reference) / denom) if denom > 0 else 0.0
    return aligned, corr


def codec_roundtrip(
    clip: AudioClip,
    bitrate: float,
    codec: CodecConfig,
    scratch_dir: str | None = None,
) -> AudioClip:
    """Encode, decode, resample back to the clip's rate, and align."""
    with tempfile.TemporaryDirectory(dir=scratch_dir) as tmp:
        tmp = Path(tmp)
        src = tmp / "in.wav"
        compressed = tmp / f"mid.{codec.extension}"
        dst = tmp / "out.wav"
        pcm = np.clip(clip.samples, -1.0, 1.0)
        wavfile.write(str(src), clip.sample_rate, (pcm * 32767.0).astype(np.int16))
        _run_template(codec.encode, src, compressed, bitrate)
        _run_template(codec.decode, compressed, dst, bitrate)
        decoded = load_audio(dst, clip_id=clip.id)
    decoded = resample(decoded, clip.sample_rate)
    aligned, corr = align_by_correlation(decoded.samples, clip.samples)
    if corr < ALIGN_MIN_CORRELATION:
        warnings.warn(
            f"clip {clip.id!r} at {bitrate:g} kb/s: alignment correlation {corr:.2f}",
            SuspectAlignmentWarning,
            stacklevel=2,
        )
    return clip.with_samples(aligned)
