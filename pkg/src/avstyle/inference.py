"""Immutable inference-time snapshot: load a checkpoint once, then stylize
images under (possibly mixed, volume-scaled) sounds deterministically."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import audio as audio_ops
from .audio import FramingConfig, WaveformClip
from .models import image_to_tensor, spectrogram_to_tensor, tensor_to_image
from .training import TrainConfig, Trainer, _read_checkpoint


@dataclass
class StylizeResult:
    image: np.ndarray  # HxWx3 float32 [0,1], same size as input
    applied_gain: float
    applied_alpha: float | None
    pad: tuple[int, int]  # (bottom, right) padding that was applied and removed


class ModelSnapshot:
    """Frozen generator + audio encoder for serving; safe for concurrent
    read-only use."""

    def __init__(self, checkpoint_path, device: str = "cpu"):
        state = _read_checkpoint(checkpoint_path)
        self.config = TrainConfig.from_dict(state["config"])
        trainer = Trainer(self.config, device=device)
        trainer.generator.load_state_dict(state["generator"])
        trainer.audio_encoder.load_state_dict(state["audio_encoder"])
        self.generator = trainer.generator.eval()
        self.audio_encoder = trainer.audio_encoder.eval()
        for p in self.generator.parameters():
            p.requires_grad_(False)
        for p in self.audio_encoder.parameters():
            p.requires_grad_(False)
        self.device = torch.device(device)
        self.framing = self.config.framing_config()
        digest = hashlib.sha256(Path(checkpoint_path).read_bytes()).hexdigest()[:16]
        self.version = f"{digest}-epoch{state['epoch']}"

    @property
    def size_multiple(self) -> int:
        return 2**self.generator.cfg.n_downsample

    def prepare_audio(
        self,
        clip: WaveformClip,
        gain: float = 1.0,
        mix_clip: WaveformClip | None = None,
        alpha: float = 0.5,
        seed: int | None = None,
    ) -> WaveformClip:
        """fix_duration -> optional mix -> volume scaling."""
        rng = np.random.default_rng(seed) if seed is not None else None
        clip = audio_ops.fix_duration(clip, self.config.clip_seconds, rng)
        if mix_clip is not None:
            mix_clip = audio_ops.fix_duration(mix_clip, self.config.clip_seconds, rng)
            clip = audio_ops.mix(clip, mix_clip, alpha)
        return audio_ops.scale_volume(clip, gain)

    def embed_audio(self, clip: WaveformClip) -> torch.Tensor:
        spec = audio_ops.spectrogram(clip, self.framing)
        with torch.no_grad():
            return self.audio_encoder(
                spectrogram_to_tensor(spec, self.device).unsqueeze(0)
            )

    def stylize(
        self,
        image: np.ndarray,
        clip: WaveformClip,
        gain: float = 1.0,
        mix_clip: WaveformClip | None = None,
        alpha: float = 0.5,
        seed: int | None = None,
    ) -> StylizeResult:
        prepared = self.prepare_audio(clip, gain, mix_clip, alpha, seed)
        emb = self.embed_audio(prepared)
        t = image_to_tensor(image, self.device).unsqueeze(0)
        h, w = t.shape[2:]
        mult = self.size_multiple
        if h < mult or w < mult:
            raise ValueError(f"image sides must be >= {mult}, got {h}x{w}")
        pad_b = (-h) % mult
        pad_r = (-w) % mult
        if pad_b or pad_r:
            t = F.pad(t, (0, pad_r, 0, pad_b), mode="reflect")
        with torch.no_grad():
            out = self.generator(t, emb)
        out = out[:, :, :h, :w]
        return StylizeResult(
            image=tensor_to_image(out),
            applied_gain=float(gain),
            applied_alpha=None if mix_clip is None else float(alpha),
            pad=(pad_b, pad_r),
        )
