"""Neurogram similarity (NSIM) between clean and degraded spectrograms.

Patchwise luminance x structure scores averaged into an utterance score.
Constants follow the SSIM convention with the same C1 in numerator and
denominator of the luminance term, so a signal scores exactly 1 against
itself: C1 = 0.01*L, C3 = (0.03*L)^2 with L the reference intensity range.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ._accel import patch_stats
from .audio_core import Spectrogram, SpectrogramConfig, Waveform, log_band_spectrogram
from .errors import PatchTooLargeError, ShapeMismatchError

log = logging.getLogger(__name__)


@dataclass
class NsimConfig:
    patch_t: int = 3
    patch_b: int = 3
    c1_scale: float = 0.01
    c23_scale: float = 0.03
    intensity_range: float | None = None  # None: from the reference spectrogram

    def __post_init__(self):
        if self.patch_t < 1 or self.patch_t % 2 == 0:
            raise ValueError("patch_t must be odd and >= 1")
        if self.patch_b < 1 or self.patch_b % 2 == 0:
            raise ValueError("patch_b must be odd and >= 1")
        if self.c1_scale <= 0 or self.c23_scale <= 0:
            raise ValueError("constant scales must be positive")


@dataclass
class NsimScore:
    utterance: float
    patch_scores: np.ndarray  # clamped to [0, 1]
    max_excursion: float = 0.0  # largest pre-clamp overshoot beyond [0, 1]


def nsim(ref: Spectrogram, deg: Spectrogram, cfg: NsimConfig | None = None) -> NsimScore:
    cfg = cfg or NsimConfig()
    r = ref.values
    d = deg.values
    if r.shape != d.shape:
        raise ShapeMismatchError(f"spectrogram shapes differ: {r.shape} vs {d.shape}")
    if r.shape[0] < cfg.patch_t or r.shape[1] < cfg.patch_b:
        raise PatchTooLargeError(
            f"patch {cfg.patch_t}x{cfg.patch_b} exceeds spectrogram {r.shape}"
        )

    L = cfg.intensity_range if cfg.intensity_range is not None else float(r.max() - r.min())
    if L == 0.0:
        # constant reference: similarity is all-or-nothing
        log.warning("constant reference spectrogram; NSIM degenerates to equality check")
        q = 1.0 if np.array_equal(r, d) else 0.0
        shape = (r.shape[0] - cfg.patch_t + 1, r.shape[1] - cfg.patch_b + 1)
        return NsimScore(q, np.full(shape, q))

    mu_r, mu_d, var_r, var_d, cov = patch_stats(r, d, cfg.patch_t, cfg.patch_b)
    sig_r = np.sqrt(np.maximum(var_r, 0.0))
    sig_d = np.sqrt(np.maximum(var_d, 0.0))
    c1 = cfg.c1_scale * L
    c3 = (cfg.c23_scale * L) ** 2
    luminance = (2 * mu_r * mu_d + c1) / (mu_r**2 + mu_d**2 + c1)
    structure = (cov + c3) / (sig_r * sig_d + c3)
    q = luminance * structure

    # excursion tracks overshoot above 1 (patch level) and out-of-range
    # utterance means; negative patch scores are expected for anticorrelated
    # structure and simply clamp to 0
    utt_raw = float(np.mean(q))
    excursion = max(float(np.max(q)) - 1.0, -utt_raw, utt_raw - 1.0, 0.0)
    if excursion > 0:
        log.debug("NSIM pre-clamp excursion %.4g beyond [0,1]", excursion)
    patch_scores = np.clip(q, 0.0, 1.0)
    utterance = float(min(max(utt_raw, 0.0), 1.0))
    return NsimScore(utterance, patch_scores, excursion)


def utterance_nsim(
    ref_wav: Waveform,
    deg_wav: Waveform,
    cfg: NsimConfig | None = None,
    spec_cfg: SpectrogramConfig | None = None,
) -> float:
    """NSIM of two waveforms through the shared front-end, trimmed to the
    common frame count (frame counts may differ by at most one)."""
    sr = log_band_spectrogram(ref_wav, spec_cfg)
    sd = log_band_spectrogram(deg_wav, spec_cfg)
    t = min(sr.values.shape[0], sd.values.shape[0])
    if max(sr.values.shape[0], sd.values.shape[0]) - t > 1:
        raise ShapeMismatchError(
            f"frame counts differ by more than one: {sr.values.shape[0]} vs {sd.values.shape[0]}"
        )
    sr = Spectrogram(sr.values[:t], sr.frame_hop_s, sr.band_count)
    sd = Spectrogram(sd.values[:t], sd.frame_hop_s, sd.band_count)
    return nsim(sr, sd, cfg).utterance
