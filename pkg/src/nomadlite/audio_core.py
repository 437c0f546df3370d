"""Audio I/O, resampling, and the log mel-band spectrogram front-end.

Canonical sample rate is 16 kHz: every spectrogram-producing entry point
resamples its input first.
"""

import wave
from dataclasses import dataclass

import numpy as np

from ._accel import resample_fir
from .errors import CorruptHeaderError, SignalTooShortError, UnsupportedFormatError

CANONICAL_RATE = 16000


@dataclass
class Waveform:
    """Mono PCM audio, amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValueError("waveform must be a nonempty 1-d array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class Spectrogram:
    """T x B matrix of log10 band power."""

    values: np.ndarray
    frame_hop_s: float
    band_count: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("spectrogram must be 2-d")
        if self.values.shape[1] != self.band_count:
            raise ValueError("band_count does not match matrix width")


@dataclass
class SpectrogramConfig:
    sample_rate: int = CANONICAL_RATE
    window: int = 400          # 25 ms at 16 kHz
    hop: int = 160             # 10 ms
    bands: int = 32
    fmin: float = 0.0
    fmax: float = 8000.0
    power_floor: float = 1e-10


def load_wav(path) -> Waveform:
    """Read a RIFF PCM 16-bit mono WAV file, scaled to [-1, 1] by 1/32768."""
    try:
        with wave.open(str(path), "rb") as f:
            channels = f.getnchannels()
            sampwidth = f.getsampwidth()
            rate = f.getframerate()
            n = f.getnframes()
            raw = f.readframes(n)
    except FileNotFoundError:
        raise
    except (wave.Error, EOFError) as e:
        raise CorruptHeaderError(f"{path}: {e}") from e
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: expected mono, got {channels} channels")
    if sampwidth != 2:
        raise UnsupportedFormatError(f"{path}: expected 16-bit PCM, got {8 * sampwidth}-bit")
    pcm = np.frombuffer(raw, dtype="<i2")
    if pcm.size < 1:
        raise CorruptHeaderError(f"{path}: no audio frames")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def save_wav(w: Waveform, path) -> None:
    """Write 16-bit PCM mono, clipping to the representable range."""
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(w.sample_rate)
        f.writeframes(pcm.tobytes())


def _design_lowpass(up: int, down: int) -> np.ndarray:
    # windowed sinc, Kaiser beta=8, ~64 taps per polyphase branch (odd length
    # so the group delay is an integer number of upsampled samples)
    n_taps = 64 * up + 1
    fc = 1.0 / (2 * max(up, down))  # cycles/sample at the upsampled rate
    n = np.arange(n_taps) - (n_taps - 1) / 2
    h = 2 * fc * np.sinc(2 * fc * n) * np.kaiser(n_taps, 8.0)
    return h * (up / h.sum())


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Windowed-sinc polyphase resampling; identity is a bit-exact copy."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    g = np.gcd(target_rate, w.sample_rate)
    up = target_rate // g
    down = w.sample_rate // g
    h = _design_lowpass(up, down)
    delay = (len(h) - 1) // 2
    n_out = int(round(len(w.samples) * up / down))
    y = resample_fir(w.samples, h, up, down, n_out, delay)
    return Waveform(y, target_rate)


def _mel_filterbank(bands: int, nfft: int, sr: int, fmin: float, fmax: float) -> np.ndarray:
    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), bands + 2))
    freqs = np.fft.rfftfreq(nfft, 1.0 / sr)
    fb = np.zeros((bands, len(freqs)))
    for j in range(bands):
        lo, mid, hi = edges[j], edges[j + 1], edges[j + 2]
        rising = (freqs - lo) / max(mid - lo, 1e-12)
        falling = (hi - freqs) / max(hi - mid, 1e-12)
        fb[j] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return fb


def log_band_spectrogram(w: Waveform, cfg: SpectrogramConfig | None = None) -> Spectrogram:
    """Hann-windowed STFT power pooled into mel bands, log10 with a floor."""
    cfg = cfg or SpectrogramConfig()
    if w.sample_rate != cfg.sample_rate:
        w = resample(w, cfg.sample_rate)
    x = w.samples
    if len(x) < cfg.window:
        raise SignalTooShortError(
            f"signal of {len(x)} samples shorter than window {cfg.window}"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window)[:: cfg.hop]
    win = np.hanning(cfg.window)
    spec = np.fft.rfft(frames * win, axis=1)
    power = spec.real**2 + spec.imag**2
    fb = _mel_filterbank(cfg.bands, cfg.window, cfg.sample_rate, cfg.fmin, cfg.fmax)
    band_power = power @ fb.T
    values = np.log10(np.maximum(band_power, cfg.power_floor))
    return Spectrogram(values, cfg.hop / cfg.sample_rate, cfg.bands)
