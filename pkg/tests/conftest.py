import numpy as np
import pytest

from embedaudit.audio import SAMPLE_RATE, AudioClip
from embedaudit.synthetic import generate_synthetic_corpus, write_babble_noise


def make_tone(freq=440.0, duration=1.6, amplitude=0.5, rate=SAMPLE_RATE, clip_id="tone"):
    t = np.arange(int(duration * rate)) / rate
    return AudioClip(samples=amplitude * np.sin(2.0 * np.pi * freq * t),
                     sample_rate=rate, id=clip_id)


def dominant_frequency(samples, rate, zero_pad=8):
    windowed = samples * np.hanning(len(samples))
    spectrum = np.abs(np.fft.rfft(windowed, zero_pad * len(samples)))
    freqs = np.fft.rfftfreq(zero_pad * len(samples), 1.0 / rate)
    return freqs[int(spectrum.argmax())]


@pytest.fixture
def tone():
    return make_tone()


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus10")
    generate_synthetic_corpus(root, n_clips=10, seed=1234)
    return root


@pytest.fixture(scope="session")
def babble_path(tmp_path_factory):
    root = tmp_path_factory.mktemp("noise")
    return write_babble_noise(root / "babble.wav", seed=77)
