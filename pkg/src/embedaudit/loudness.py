"""Integrated loudness (EBU R128 / BS.1770 gated measurement) and matching.

K-weighting is realized as the usual two biquads (high-shelf pre-filter and
RLB high-pass) redesigned for the clip's actual sample rate via the bilinear
transform, so the meter works at 22050 Hz as well as the broadcast rates.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np
from scipy.signal import sosfilt

from .audio import AudioClip
from .errors import ClippingWarning, SilentAudioError, TooShortError

BLOCK_SECONDS = 0.4
BLOCK_OVERLAP = 0.75
ABSOLUTE_GATE_LUFS = -70.0
RELATIVE_GATE_LU = -10.0
# BS.1770 calibration offset: a 0 dBFS 997 Hz sine reads -3.01 LUFS.
_OFFSET = -0.691


@lru_cache(maxsize=8)
def k_weighting_sos(rate: int) -> np.ndarray:
    """Second-order sections for the K-weighting filter at an arbitrary rate."""
    # Stage 1: +4 dB high-frequency shelf.
    f0, gain_db, q = 1681.9744509555319, 3.99984385397, 0.7071752369554193
    k = math.tan(math.pi * f0 / rate)
    vh = 10.0 ** (gain_db / 20.0)
    vb = vh**0.499666774155
    a0 = 1.0 + k / q + k * k
    shelf = [
        (vh + vb * k / q + k * k) / a0,
        2.0 * (k * k - vh) / a0,
        (vh - vb * k / q + k * k) / a0,
        1.0,
        2.0 * (k * k - 1.0) / a0,
        (1.0 - k / q + k * k) / a0,
    ]
    # Stage 2: RLB high-pass.
    f0, q = 38.13547087613982, 0.5003270373253953
    k = math.tan(math.pi * f0 / rate)
    a0 = 1.0 + k / q + k * k
    highpass = [
        1.0,
        -2.0,
        1.0,
        1.0,
        2.0 * (k * k - 1.0) / a0,
        (1.0 - k / q + k * k) / a0,
    ]
    return np.array([shelf, highpass])


def integrated_loudness(clip: AudioClip) -> float:
    """Gated integrated loudness in LUFS; -inf for fully gated (silent) input.

    400 ms blocks with 75% overlap, -70 LUFS absolute gate, -10 LU relative
    gate, mono channel weight 1.0.
    """
    rate = clip.sample_rate
    block = int(round(BLOCK_SECONDS * rate))
    hop = int(round(BLOCK_SECONDS * (1.0 - BLOCK_OVERLAP) * rate))
    if len(clip) < block:
        raise TooShortError(
            f"clip {clip.id!r}: need >= {BLOCK_SECONDS * 1000:.0f} ms for one gating block"
        )
    weighted = sosfilt(k_weighting_sos(rate), clip.samples)
    n_blocks = (len(weighted) - block) // hop + 1
    idx = np.arange(block)[None, :] + hop * np.arange(n_blocks)[:, None]
    z = np.mean(weighted[idx] ** 2, axis=1)

    with np.errstate(divide="ignore"):
        block_lufs = _OFFSET + 10.0 * np.log10(z)
    above_abs = block_lufs > ABSOLUTE_GATE_LUFS
    if not above_abs.any():
        return float("-inf")
    relative_gate = _OFFSET + 10.0 * np.log10(np.mean(z[above_abs])) + RELATIVE_GATE_LU
    kept = above_abs & (block_lufs > relative_gate)
    if not kept.any():
        return float("-inf")
    return float(_OFFSET + 10.0 * np.log10(np.mean(z[kept])))


def match_loudness(clip: AudioClip, reference: AudioClip) -> AudioClip:
    """Scale `clip` by one scalar so its integrated loudness matches `reference`.

    Because gating-block membership can shift with gain, the scalar is refined
    over a few measurement passes; the final output is the original samples
    times a single gain. Peaks beyond full scale are allowed and reported via
    ClippingWarning.
    """
    target = integrated_loudness(reference)
    if not math.isfinite(target):
        raise SilentAudioError(f"reference {reference.id!r} is silence: loudness target undefined")
    current = integrated_loudness(clip)
    if not math.isfinite(current):
        raise SilentAudioError(f"clip {clip.id!r} is silence: cannot match loudness")

    gain = 1.0
    for _ in range(5):
        delta = target - current
        if abs(delta) <= 0.02:
            break
        gain *= 10.0 ** (delta / 20.0)
        current = integrated_loudness(clip.scaled(gain))
    out = clip.scaled(gain)
    if np.max(np.abs(out.samples)) > 1.0:
        warnings.warn(
            f"clip {clip.id!r}: loudness match gain {gain:.3f} clips beyond full scale",
            ClippingWarning,
            stacklevel=2,
        )
    return out
