"""Deterministic synthetic audio: corpus clips and a babble-like noise bed.

Three clip families (harmonic tone mixtures, band-filtered noise, and
amplitude-modulated chords) with per-clip seeded parameters, spectrally
concentrated below ~3 kHz so that band-limiting transforms stay mild.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfilt

from .audio import SAMPLE_RATE, AudioClip, save_wav


def _tone_mixture(rng, n, rate) -> np.ndarray:
    t = np.arange(n) / rate
    f0 = float(np.exp(rng.uniform(np.log(130.0), np.log(700.0))))
    x = np.zeros(n)
    for h in range(1, int(rng.integers(2, 5)) + 1):
        f = f0 * h * (1.0 + rng.normal(0.0, 0.002))
        if f > 2800.0:
            break
        x += rng.uniform(0.3, 1.0) / h * np.sin(2.0 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    vib = 1.0 + 0.05 * np.sin(2.0 * np.pi * rng.uniform(0.2, 1.0) * t)
    return x * vib


def _filtered_noise(rng, n, rate) -> np.ndarray:
    fc = float(np.exp(rng.uniform(np.log(300.0), np.log(2200.0))))
    sos = butter(4, [fc / 1.5, min(fc * 1.5, rate / 2 * 0.9)], "bandpass", fs=rate, output="sos")
    x = sosfilt(sos, rng.normal(size=n))
    am = 1.0 + 0.3 * np.sin(2.0 * np.pi * rng.uniform(0.5, 3.0) * np.arange(n) / rate)
    return x * am


def _am_chord(rng, n, rate) -> np.ndarray:
    t = np.arange(n) / rate
    root = rng.uniform(150.0, 500.0)
    x = np.zeros(n)
    for ratio in (1.0, 1.25, 1.5):
        x += np.sin(2.0 * np.pi * root * ratio * t + rng.uniform(0, 2 * np.pi))
    depth = rng.uniform(0.3, 0.7)
    x *= 1.0 - depth + depth * 0.5 * (1.0 + np.sin(2.0 * np.pi * rng.uniform(2.0, 8.0) * t))
    return x


_FAMILIES = (_tone_mixture, _filtered_noise, _am_chord)


def synthetic_clip(index: int, seed: int = 0, duration: float = 3.0,
                   rate: int = SAMPLE_RATE) -> AudioClip:
    rng = np.random.default_rng([seed, index])
    n = int(duration * rate)
    x = _FAMILIES[index % len(_FAMILIES)](rng, n, rate)
    x = 0.5 * x / np.max(np.abs(x))
    return AudioClip(samples=x, sample_rate=rate, id=f"clip_{index:03d}")


def generate_synthetic_corpus(out_dir, n_clips: int = 50, seed: int = 0,
                              duration: float = 3.0) -> list[Path]:
    """Write n_clips WAV files into out_dir; fully determined by the seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_clips):
        clip = synthetic_clip(i, seed=seed, duration=duration)
        path = out_dir / f"{clip.id}.wav"
        save_wav(path, clip)
        paths.append(path)
    return paths


def babble_noise(seed: int = 0, duration: float = 2.0,
                 rate: int = SAMPLE_RATE) -> AudioClip:
    """Babble-like bed: several independently modulated noise bands."""
    rng = np.random.default_rng([seed, 0xBABB1E])
    n = int(duration * rate)
    t = np.arange(n) / rate
    x = np.zeros(n)
    for _ in range(8):
        fc = float(np.exp(rng.uniform(np.log(300.0), np.log(3000.0))))
        sos = butter(2, [fc / 1.4, min(fc * 1.4, rate / 2 * 0.9)], "bandpass",
                     fs=rate, output="sos")
        band = sosfilt(sos, rng.normal(size=n))
        mod = 0.5 * (1.0 + np.sin(2.0 * np.pi * rng.uniform(1.0, 6.0) * t + rng.uniform(0, 2 * np.pi)))
        x += band * mod
    x = 0.3 * x / np.max(np.abs(x))
    return AudioClip(samples=x, sample_rate=rate, id="babble")


def write_babble_noise(path, seed: int = 0, duration: float = 2.0) -> Path:
    path = Path(path)
    save_wav(path, babble_noise(seed=seed, duration=duration))
    return path
