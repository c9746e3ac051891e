import numpy as np
import pytest

from embedaudit.errors import TooShortError
from embedaudit.vocoder import pitch_shift, tempo_shift, time_stretch
from conftest import dominant_frequency, make_tone


class TestTempoShift:
    def test_unity_length(self, tone):
        out = tempo_shift(tone, 100.0)
        assert abs(len(out) - len(tone)) <= 256

    def test_half_tempo_doubles_duration(self, tone):
        out = tempo_shift(tone, 50.0)
        assert len(out) == pytest.approx(2 * len(tone), rel=0.01)

    def test_pitch_preserved(self, tone):
        out = tempo_shift(tone, 75.0)
        assert dominant_frequency(out.samples, out.sample_rate) == pytest.approx(440.0, abs=5.0)

    @pytest.mark.parametrize("percent", [30.0, 150.0])
    def test_extreme_lengths(self, tone, percent):
        out = tempo_shift(tone, percent)
        assert len(out) == round(len(tone) * 100.0 / percent)

    def test_out_of_range(self, tone):
        with pytest.raises(ValueError):
            tempo_shift(tone, 20.0)
        with pytest.raises(ValueError):
            tempo_shift(tone, 151.0)

    def test_noise_stays_bounded(self):
        # Phase scrambling must not blow up non-tonal content.
        rng = np.random.default_rng(8)
        clip = make_tone(duration=1.52).with_samples(rng.uniform(-0.5, 0.5, 33536))
        for percent in (30.0, 50.0, 102.0, 150.0):
            out = tempo_shift(clip, percent)
            assert np.abs(out.samples).max() < 10.0

    def test_phase_locking_flag_runs(self, tone):
        out = tempo_shift(tone, 80.0, phase_locking=True)
        assert len(out) == round(len(tone) * 1.25)
        assert dominant_frequency(out.samples, out.sample_rate) == pytest.approx(440.0, abs=5.0)


class TestPitchShift:
    def test_zero_cents_near_identity(self, tone):
        out = pitch_shift(tone, 0.0)
        assert len(out) == len(tone)
        spec_in = np.abs(np.fft.rfft(tone.samples)) ** 2
        spec_out = np.abs(np.fft.rfft(out.samples)) ** 2
        freqs = np.fft.rfftfreq(len(tone), 1.0 / tone.sample_rate)
        centroid_in = (freqs * spec_in).sum() / spec_in.sum()
        centroid_out = (freqs * spec_out).sum() / spec_out.sum()
        assert abs(centroid_out - centroid_in) / centroid_in < 0.01

    def test_octave_up(self, tone):
        out = pitch_shift(tone, 1200.0)
        assert abs(len(out) - len(tone)) <= 256
        assert dominant_frequency(out.samples, out.sample_rate) == pytest.approx(880.0, abs=8.0)

    def test_semitone_down(self, tone):
        out = pitch_shift(tone, -100.0)
        assert dominant_frequency(out.samples, out.sample_rate) == pytest.approx(415.3, abs=4.0)

    def test_out_of_range(self, tone):
        with pytest.raises(ValueError):
            pitch_shift(tone, 1300.0)


def test_time_stretch_rejects_short_input():
    with pytest.raises(TooShortError):
        time_stretch(np.zeros(512), 2.0)
