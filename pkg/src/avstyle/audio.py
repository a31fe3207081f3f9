"""Waveform loading, framing, spectrograms, and sound-manipulation operators.

All operations are pure given (input, rng) and operate on float32 numpy
arrays; nothing here touches torch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import AudioDecodeError, EmptyInputError


@dataclass(frozen=True)
class WaveformClip:
    """Mono audio samples at a known rate. Values nominally in [-1, 1] but unclamped."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float32)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if samples.size == 0:
            raise EmptyInputError("waveform has no samples")
        object.__setattr__(self, "samples", samples)

    @property
    def num_samples(self) -> int:
        return int(self.samples.size)

    @property
    def duration_seconds(self) -> float:
        return self.num_samples / self.sample_rate


@dataclass(frozen=True)
class FramingConfig:
    """STFT framing: 512-pt DFT, 25 ms Hann window, 10 ms hop at 16 kHz by default."""

    n_fft: int = 512
    win_length: int = 400
    hop_length: int = 160
    sample_rate: int = 16000
    log_floor: float = 1e-5

    def __post_init__(self):
        if not (0 < self.win_length <= self.n_fft):
            raise ValueError("require 0 < win_length <= n_fft")
        if self.hop_length <= 0:
            raise ValueError("hop_length must be positive")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def num_bins(self) -> int:
        return self.n_fft // 2 + 1

    def num_frames(self, num_samples: int) -> int:
        # center padding: one frame per hop plus the frame anchored at sample 0
        return num_samples // self.hop_length + 1

    def to_dict(self) -> dict:
        return {
            "n_fft": self.n_fft,
            "win_length": self.win_length,
            "hop_length": self.hop_length,
            "sample_rate": self.sample_rate,
            "log_floor": self.log_floor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FramingConfig":
        return cls(**d)


@dataclass(frozen=True)
class Spectrogram:
    """frames x bins grid of log-compressed magnitudes plus its framing metadata."""

    magnitudes: np.ndarray
    n_fft: int
    win_length: int
    hop_length: int
    sample_rate: int
    log_floor: float = 1e-5

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=np.float32)
        if mags.ndim != 2:
            raise ValueError(f"magnitudes must be 2-D, got shape {mags.shape}")
        if mags.shape[1] != self.n_fft // 2 + 1:
            raise ValueError(
                f"bin count {mags.shape[1]} inconsistent with n_fft {self.n_fft}"
            )
        if not np.all(np.isfinite(mags)):
            raise ValueError("spectrogram contains non-finite values")
        object.__setattr__(self, "magnitudes", mags)

    @property
    def num_frames(self) -> int:
        return int(self.magnitudes.shape[0])

    @property
    def num_bins(self) -> int:
        return int(self.magnitudes.shape[1])

    def linear_magnitudes(self) -> np.ndarray:
        """Invert the log compression: exp(m) - floor."""
        return np.exp(self.magnitudes.astype(np.float64)) - self.log_floor


def load_and_standardize(path, target_rate: int = 16000) -> WaveformClip:
    """Load an audio file, downmix to mono, and resample to target_rate."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    path = Path(path)
    try:
        rate, data = wavfile.read(str(path))
    except (ValueError, OSError, EOFError) as exc:
        raise AudioDecodeError(f"cannot decode {path}: {exc}") from exc
    if data.size == 0:
        raise EmptyInputError(f"{path} decodes to zero samples")
    samples = _to_float(data)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if rate != target_rate:
        samples = _resample(samples, rate, target_rate)
    if samples.size == 0:
        raise EmptyInputError(f"{path} is empty after resampling")
    return WaveformClip(samples.astype(np.float32), target_rate)


def save_waveform(clip: WaveformClip, path) -> None:
    """Write the clip as a float32 WAV."""
    wavfile.write(str(path), clip.sample_rate, clip.samples.astype(np.float32))


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:
        return (data.astype(np.float32) - 128.0) / 128.0
    if data.dtype.kind == "i":
        # scipy left-justifies 24-bit into int32, so iinfo scaling is correct
        return data.astype(np.float32) / float(np.iinfo(data.dtype).max + 1)
    return data.astype(np.float32)


def _resample(samples: np.ndarray, rate: int, target_rate: int) -> np.ndarray:
    g = math.gcd(rate, target_rate)
    return resample_poly(samples.astype(np.float64), target_rate // g, rate // g)


def fix_duration(
    clip: WaveformClip, duration_seconds: float, rng: np.random.Generator | None = None
) -> WaveformClip:
    """Tile or truncate to exactly duration_seconds.

    Longer clips are cut at a random start offset drawn from rng; with no rng
    the offset is 0 (deterministic inference).
    """
    if duration_seconds <= 0:
        raise ValueError("duration_seconds must be positive")
    target = int(round(duration_seconds * clip.sample_rate))
    n = clip.num_samples
    if n == target:
        return clip
    if n < target:
        reps = -(-target // n)
        samples = np.tile(clip.samples, reps)[:target]
    else:
        offset = int(rng.integers(0, n - target + 1)) if rng is not None else 0
        samples = clip.samples[offset : offset + target]
    return WaveformClip(samples.copy(), clip.sample_rate)


def spectrogram(clip: WaveformClip, cfg: FramingConfig | None = None) -> Spectrogram:
    """STFT magnitudes, log-compressed as log(floor + |X|).

    Reflect-pads n_fft//2 on both sides so the frame count is a pure
    function of the length: floor(N / hop) + 1.
    """
    cfg = cfg or FramingConfig(sample_rate=clip.sample_rate)
    n = clip.num_samples
    if n < cfg.hop_length:
        raise ValueError(
            f"clip of {n} samples is shorter than one hop ({cfg.hop_length})"
        )
    pad = cfg.n_fft // 2
    padded = np.pad(clip.samples.astype(np.float64), pad, mode="reflect")
    frames = cfg.num_frames(n)
    window = np.hanning(cfg.win_length)
    # window is centered inside the n_fft-long analysis frame
    lead = (cfg.n_fft - cfg.win_length) // 2
    idx = np.arange(cfg.win_length)[None, :] + cfg.hop_length * np.arange(frames)[:, None]
    segs = padded[idx + lead] * window[None, :]
    full = np.zeros((frames, cfg.n_fft))
    full[:, lead : lead + cfg.win_length] = segs
    mags = np.abs(np.fft.rfft(full, n=cfg.n_fft, axis=1))
    logmags = np.log(cfg.log_floor + mags)
    return Spectrogram(
        logmags.astype(np.float32),
        n_fft=cfg.n_fft,
        win_length=cfg.win_length,
        hop_length=cfg.hop_length,
        sample_rate=clip.sample_rate,
        log_floor=cfg.log_floor,
    )


def scale_volume(clip: WaveformClip, gain: float) -> WaveformClip:
    """Rescale the waveform. No clipping; the log spectrogram absorbs the range."""
    if gain < 0:
        raise ValueError(f"gain must be >= 0, got {gain}")
    return WaveformClip(clip.samples * np.float32(gain), clip.sample_rate)


def mix(a: WaveformClip, b: WaveformClip, alpha: float) -> WaveformClip:
    """Convex combination (1-alpha)*a + alpha*b of two aligned clips."""
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if a.sample_rate != b.sample_rate:
        raise ValueError(
            f"sample rates differ: {a.sample_rate} vs {b.sample_rate}"
        )
    if a.num_samples != b.num_samples:
        raise ValueError(
            f"lengths differ: {a.num_samples} vs {b.num_samples}; fix_duration both first"
        )
    samples = (1.0 - alpha) * a.samples + alpha * b.samples
    return WaveformClip(samples.astype(np.float32), a.sample_rate)
