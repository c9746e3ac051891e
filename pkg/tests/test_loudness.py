import numpy as np
import pytest

from embedaudit.audio import SAMPLE_RATE, AudioClip
from embedaudit.errors import ClippingWarning, SilentAudioError, TooShortError
from embedaudit.loudness import integrated_loudness, match_loudness
from embedaudit.transforms import generate_pink_noise
from conftest import make_tone


def test_full_scale_997_sine():
    clip = make_tone(freq=997.0, amplitude=1.0, duration=3.0, clip_id="cal")
    assert integrated_loudness(clip) == pytest.approx(-3.01, abs=0.1)


@pytest.mark.parametrize("gain", [0.1, 0.5, 2.0])
def test_gain_law(gain):
    clip = make_tone(freq=440.0, amplitude=0.25, duration=2.0)
    base = integrated_loudness(clip)
    shifted = integrated_loudness(clip.scaled(gain))
    assert shifted - base == pytest.approx(20.0 * np.log10(gain), abs=0.01)


def test_silence_is_minus_infinity():
    clip = AudioClip(np.zeros(SAMPLE_RATE), SAMPLE_RATE, "sil")
    assert integrated_loudness(clip) == float("-inf")


def test_too_short_for_one_block():
    clip = AudioClip(np.ones(2000), SAMPLE_RATE, "tiny")
    with pytest.raises(TooShortError):
        integrated_loudness(clip)


class TestMatchLoudness:
    def test_identity_gain(self, tone):
        out = match_loudness(tone, tone)
        gain = out.samples[1000] / tone.samples[1000]
        assert gain == pytest.approx(1.0, abs=0.01)

    def test_quarter_scale_gain(self, tone):
        quarter = tone.scaled(0.25)
        out = match_loudness(quarter, tone)
        gain = out.samples[1000] / quarter.samples[1000]
        assert gain == pytest.approx(4.0, abs=0.05)

    def test_pink_noise_matched_to_sine(self, tone):
        noise = generate_pink_noise(len(tone), seed=5)
        out = match_loudness(noise, tone)
        assert integrated_loudness(out) == pytest.approx(integrated_loudness(tone), abs=0.1)

    def test_clipping_warning(self):
        # A sine needs ~1.3x full-scale amplitude to match a near-full-scale
        # square wave's integrated loudness.
        sine = make_tone(amplitude=0.5, duration=1.0)
        square = AudioClip(0.95 * np.sign(sine.samples + 1e-9), SAMPLE_RATE, "sq")
        with pytest.warns(ClippingWarning):
            out = match_loudness(sine, square)
        assert np.abs(out.samples).max() > 1.0

    def test_silent_reference_rejected(self, tone):
        silence = AudioClip(np.zeros(SAMPLE_RATE), SAMPLE_RATE, "sil")
        with pytest.raises(SilentAudioError):
            match_loudness(tone, silence)
