"""Phase-vocoder time stretching and the stretch-then-resample pitch shifter."""

from __future__ import annotations

import numpy as np

from .audio import HOP, WINDOW, AudioClip, _hann_periodic, resample_by_ratio
from .errors import TooShortError


def time_stretch(
    x: np.ndarray,
    factor: float,
    window: int = WINDOW,
    hop: int = HOP,
    phase_locking: bool = False,
) -> np.ndarray:
    """Stretch a signal's duration by `factor` without changing pitch.

    Analysis uses a fixed hop; the synthesis hop is scaled by the factor and
    per-bin phases are propagated from instantaneous-frequency estimates.
    Output length is exactly round(len(x) * factor).

    Frames are taken uncentered, starting at sample 0: the first frame must
    be genuine signal, because its bin phases seed the propagation and any
    padding artifact in them would be carried through every later frame.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < window:
        raise TooShortError("signal shorter than one analysis window")
    n_out = max(1, int(round(x.shape[0] * factor)))
    syn_hop = max(1, int(round(hop * factor)))

    # Reflect-pad the tail so the kept output never falls in the final
    # half-covered overlap-add region, where dividing by the vanishing window
    # sum would blow up non-decaying frame content.
    pad = min(window, x.shape[0] - 1)
    padded = np.pad(x, (0, pad), mode="reflect")
    n_frames = (padded.shape[0] - window) // hop + 1
    win = _hann_periodic(window)
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    spectra = np.fft.rfft(padded[idx] * win, axis=1)
    mags = np.abs(spectra)
    phases = np.angle(spectra)

    bin_omega = 2.0 * np.pi * np.arange(window // 2 + 1) * hop / window
    syn_phase = np.empty_like(phases)
    syn_phase[0] = phases[0]
    for t in range(1, n_frames):
        dphi = phases[t] - phases[t - 1] - bin_omega
        dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
        instantaneous = (bin_omega + dphi) / hop
        syn_phase[t] = syn_phase[t - 1] + instantaneous * syn_hop
        if phase_locking:
            syn_phase[t] = _lock_to_peaks(mags[t], phases[t], syn_phase[t])

    frames = np.fft.irfft(mags * np.exp(1j * syn_phase), n=window, axis=1) * win
    total = (n_frames - 1) * syn_hop + window
    acc = np.zeros(total)
    norm = np.zeros(total)
    wsq = win * win
    for t in range(n_frames):
        start = t * syn_hop
        acc[start : start + window] += frames[t]
        norm[start : start + window] += wsq
    out = np.where(norm > 1e-9, acc, 0.0) / np.maximum(norm, 1e-9)

    if out.shape[0] >= n_out:
        return out[:n_out]
    return np.pad(out, (0, n_out - out.shape[0]))


def _lock_to_peaks(mag: np.ndarray, ana_phase: np.ndarray, syn_phase: np.ndarray) -> np.ndarray:
    """Identity phase locking: non-peak bins keep their analysis-phase offset
    relative to the nearest spectral peak."""
    interior = (mag[1:-1] >= mag[:-2]) & (mag[1:-1] >= mag[2:])
    peaks = np.flatnonzero(interior) + 1
    if peaks.size == 0:
        return syn_phase
    bins = np.arange(mag.shape[0])
    nearest = peaks[np.argmin(np.abs(bins[:, None] - peaks[None, :]), axis=1)]
    locked = syn_phase[nearest] + (ana_phase - ana_phase[nearest])
    locked[peaks] = syn_phase[peaks]
    return locked


def pitch_shift_samples(x: np.ndarray, cents: float) -> np.ndarray:
    """Shift pitch by `cents` while preserving duration.

    Time-stretch by r = 2^(cents/1200), then resample by 1/r; the output is
    trimmed or zero-padded to the input length.
    """
    x = np.asarray(x, dtype=np.float64)
    if cents == 0:
        return time_stretch(x, 1.0)
    r = 2.0 ** (cents / 1200.0)
    stretched = time_stretch(x, r)
    shifted = resample_by_ratio(stretched, 1.0 / r)
    n = x.shape[0]
    if shifted.shape[0] >= n:
        return shifted[:n]
    return np.pad(shifted, (0, n - shifted.shape[0]))


def tempo_shift(clip: AudioClip, percent: float, phase_locking: bool = False) -> AudioClip:
    """Change tempo to `percent` of the original, pitch preserved."""
    if not 30.0 <= percent <= 150.0:
        raise ValueError(f"tempo percent {percent} outside [30, 150]")
    out = time_stretch(clip.samples, 100.0 / percent, phase_locking=phase_locking)
    return AudioClip(samples=out, sample_rate=clip.sample_rate, id=clip.id)


def pitch_shift(clip: AudioClip, cents: float) -> AudioClip:
    """Shift pitch by `cents` (plus raises, minus lowers), duration preserved."""
    if not -1200.0 <= cents <= 1200.0:
        raise ValueError(f"pitch shift {cents} cents outside [-1200, 1200]")
    out = pitch_shift_samples(clip.samples, cents)
    return AudioClip(samples=out, sample_rate=clip.sample_rate, id=clip.id)
