import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nomadlite.audio_core import (
    SpectrogramConfig,
    Waveform,
    load_wav,
    log_band_spectrogram,
    resample,
    save_wav,
)
from nomadlite.errors import CorruptHeaderError, SignalTooShortError, UnsupportedFormatError


def write_raw_wav(path, pcm_bytes, channels=1, sampwidth=2, rate=16000):
    with wave.open(str(path), "wb") as f:
        f.setnchannels(channels)
        f.setsampwidth(sampwidth)
        f.setframerate(rate)
        f.writeframes(pcm_bytes)


class TestLoadWav:
    def test_one_second_mono_16k(self, tmp_path):
        path = tmp_path / "a.wav"
        save_wav(Waveform(np.zeros(16000), 16000), path)
        w = load_wav(path)
        assert len(w.samples) == 16000
        assert w.sample_rate == 16000

    def test_stereo_rejected(self, tmp_path):
        path = tmp_path / "st.wav"
        write_raw_wav(path, b"\x00\x00" * 200, channels=2)
        with pytest.raises(UnsupportedFormatError):
            load_wav(path)

    def test_wrong_bit_depth_rejected(self, tmp_path):
        path = tmp_path / "b24.wav"
        write_raw_wav(path, b"\x00\x00\x00" * 100, sampwidth=3)
        with pytest.raises(UnsupportedFormatError):
            load_wav(path)

    def test_full_scale_negative_maps_to_minus_one(self, tmp_path):
        path = tmp_path / "fs.wav"
        pcm = np.array([-32768, 0, 32767], dtype="<i2")
        write_raw_wav(path, pcm.tobytes())
        w = load_wav(path)
        assert w.samples[0] == -1.0
        assert w.samples[1] == 0.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_wav(tmp_path / "nope.wav")

    def test_corrupt_header(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"RIFFgarbage-not-a-wave-file")
        with pytest.raises(CorruptHeaderError):
            load_wav(path)

    def test_roundtrip_values(self, tmp_path):
        rng = np.random.default_rng(0)
        w = Waveform(rng.uniform(-0.9, 0.9, 1000), 16000)
        path = tmp_path / "rt.wav"
        save_wav(w, path)
        back = load_wav(path)
        assert np.max(np.abs(back.samples - w.samples)) < 1 / 32768


class TestResample:
    def test_identity_is_bit_exact(self):
        rng = np.random.default_rng(1)
        w = Waveform(rng.uniform(-1, 1, 4321), 16000)
        out = resample(w, 16000)
        assert np.array_equal(out.samples, w.samples)
        assert out.samples is not w.samples

    def test_halving_sample_count(self):
        w = Waveform(np.random.default_rng(2).uniform(-0.5, 0.5, 32000), 32000)
        out = resample(w, 16000)
        assert abs(len(out.samples) - 16000) <= 1
        assert out.sample_rate == 16000

    def test_sine_survives_downsampling(self):
        # FFT-peak oracle: a 1 kHz tone must stay the dominant bin at 16 kHz
        t = np.arange(48000) / 48000
        w = Waveform(0.5 * np.sin(2 * np.pi * 1000 * t), 48000)
        out = resample(w, 16000)
        spec = np.abs(np.fft.rfft(out.samples))
        peak_hz = np.argmax(spec) * 16000 / len(out.samples)
        assert abs(peak_hz - 1000) < 2

    def test_upsampling_preserves_duration(self):
        w = Waveform(np.random.default_rng(3).uniform(-0.5, 0.5, 16000), 16000)
        out = resample(w, 48000)
        assert abs(len(out.samples) - 48000) <= 1

    def test_bad_rate(self):
        w = Waveform(np.zeros(10), 16000)
        with pytest.raises(ValueError):
            resample(w, 0)


class TestSpectrogram:
    def test_silence_hits_log_floor(self):
        w = Waveform(np.zeros(16000), 16000)
        s = log_band_spectrogram(w)
        assert np.all(s.values == -10.0)

    def test_single_frame(self):
        w = Waveform(np.random.default_rng(4).uniform(-0.5, 0.5, 400), 16000)
        s = log_band_spectrogram(w)
        assert s.values.shape[0] == 1

    def test_too_short(self):
        with pytest.raises(SignalTooShortError):
            log_band_spectrogram(Waveform(np.zeros(399), 16000))

    @given(st.integers(min_value=400, max_value=20000))
    @settings(max_examples=30, deadline=None)
    def test_framing_count_law(self, n):
        w = Waveform(np.ones(n) * 0.1, 16000)
        s = log_band_spectrogram(w)
        assert s.values.shape[0] == (n - 400) // 160 + 1

    def test_scale_shift_law(self):
        rng = np.random.default_rng(5)
        w = Waveform(rng.uniform(-0.4, 0.4, 8000), 16000)
        g = 0.5
        s1 = log_band_spectrogram(w)
        s2 = log_band_spectrogram(Waveform(w.samples * g, w.sample_rate))
        above = s2.values > -10.0  # entries the floor did not touch
        assert np.any(above)
        diff = s2.values[above] - s1.values[above]
        assert np.max(np.abs(diff - 2 * np.log10(g))) < 1e-9

    def test_white_noise_half_amplitude(self):
        # closed form: power ratio 0.25 -> uniform log10 shift
        rng = np.random.default_rng(6)
        w = Waveform(rng.uniform(-0.5, 0.5, 16000), 16000)
        s1 = log_band_spectrogram(w)
        s2 = log_band_spectrogram(Waveform(w.samples * 0.5, w.sample_rate))
        assert np.allclose(s2.values - s1.values, np.log10(0.25), atol=1e-9)

    def test_resamples_on_entry(self):
        w = Waveform(np.random.default_rng(7).uniform(-0.5, 0.5, 32000), 32000)
        s = log_band_spectrogram(w)
        assert s.values.shape == ((16000 - 400) // 160 + 1, 32)
        assert s.band_count == 32

    def test_custom_config(self):
        w = Waveform(np.random.default_rng(8).uniform(-0.5, 0.5, 16000), 16000)
        s = log_band_spectrogram(w, SpectrogramConfig(bands=16))
        assert s.values.shape[1] == 16
