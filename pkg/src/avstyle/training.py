"""Optimization loop: alternating discriminator/generator updates, the
constant-then-linear learning-rate schedule, checkpointing with full RNG
state, and per-step metrics logging (line-delimited JSON)."""

from __future__ import annotations

import dataclasses
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .audio import FramingConfig
from .data import ClipManifest, TrainPair, sample_pair
from .errors import CheckpointError
from .losses import (
    LossReport,
    LossWeights,
    NCEConfig,
    adversarial_losses,
    identity_nce,
    multilayer_nce,
    total_generator_loss,
)
from .models import (
    AudioEncoder,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    PatchDiscriminator,
    ProjectionHeads,
    fuse_spectrogram,
    image_to_tensor,
    spectrogram_to_tensor,
)
from .patches import sample_locations

CHECKPOINT_SCHEMA_VERSION = 1

METRIC_KEYS = ("step", "epoch", "lr", "gan_g", "gan_d", "nce_x", "nce_idt", "total", "wall_time")


@dataclass(frozen=True)
class TrainConfig:
    # optimization
    batch_size: int = 16
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epochs: int = 50
    constant_epochs: int = 30
    decay_epochs: int = 20
    steps_per_epoch: int = 100
    seed: int = 0
    # objective
    lambda_nce: float = 0.5
    mu_identity: float = 0.5
    temperature: float = 0.07
    num_locations: int = 256
    gan_mode: str = "lsgan"
    use_identity: bool = True
    # data
    domain_x: str = "source"
    domain_y: str = "target"
    crop: int = 256
    clip_seconds: float = 3.0
    # architecture
    base_width: int = 64
    n_residual_blocks: int = 9
    audio_base_width: int = 64
    disc_base_width: int = 64
    disc_n_layers: int = 3
    fusion: str = "early"
    projection_dim: int = 256
    # audio framing
    framing: dict = field(default_factory=lambda: FramingConfig().to_dict())
    pretrained_audio_weights: str | None = None

    def __post_init__(self):
        if self.epochs != self.constant_epochs + self.decay_epochs:
            raise ValueError("epochs must equal constant_epochs + decay_epochs")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")

    @property
    def audio_feature_dim(self) -> int:
        return self.audio_base_width * 8

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            base_width=self.base_width,
            n_residual_blocks=self.n_residual_blocks,
            audio_feature_dim=self.audio_feature_dim,
        )

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(
            fusion=self.fusion,
            base_width=self.disc_base_width,
            n_layers=self.disc_n_layers,
        )

    def framing_config(self) -> FramingConfig:
        return FramingConfig.from_dict(self.framing)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Constant for the first constant_epochs, then linear to zero, hitting 0
    one epoch past the end (the last trained epoch keeps a nonzero lr)."""
    if not (0 <= epoch < cfg.epochs):
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    if epoch < cfg.constant_epochs:
        return cfg.lr
    return cfg.lr * (cfg.epochs - epoch) / cfg.decay_epochs


def _num_workers() -> int:
    try:
        return max(1, int(os.environ.get("AVSTYLE_NUM_WORKERS", "1")))
    except ValueError:
        return 1


class Trainer:
    """Owns all mutable model state; one logical optimization thread."""

    def __init__(self, cfg: TrainConfig, device: str = "cpu"):
        self.cfg = cfg
        self.device = torch.device(device)
        torch.manual_seed(cfg.seed)
        self.rng = np.random.default_rng(cfg.seed)

        gcfg = cfg.generator_config()
        framing = cfg.framing_config()
        spec_shape = (framing.num_bins, framing.num_frames(int(cfg.clip_seconds * framing.sample_rate)))
        self.generator = Generator(gcfg).to(self.device)
        self.heads = ProjectionHeads(gcfg.tap_channels, out_dim=cfg.projection_dim).to(self.device)
        self.audio_encoder = AudioEncoder(cfg.audio_base_width, expected_shape=spec_shape).to(self.device)
        self.discriminator = PatchDiscriminator(cfg.discriminator_config()).to(self.device)

        gen_params = (
            list(self.generator.parameters())
            + list(self.heads.parameters())
            + list(self.audio_encoder.parameters())
        )
        self.opt_g = torch.optim.Adam(gen_params, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
        self.opt_d = torch.optim.Adam(
            self.discriminator.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2)
        )
        self.epoch = 0
        self.step = 0
        self.weights = LossWeights(cfg.lambda_nce, cfg.mu_identity if cfg.use_identity else 0.0)
        self.nce_cfg = NCEConfig(cfg.temperature, cfg.num_locations)

        if cfg.pretrained_audio_weights:
            self.load_pretrained_audio(cfg.pretrained_audio_weights)

    # ----- schedule -----

    def set_lr(self, epoch: int) -> float:
        lr = lr_at(epoch, self.cfg)
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr
        return lr

    # ----- single update -----

    def _batch_tensors(self, batch: list[TrainPair]):
        x = torch.stack([image_to_tensor(p.source_image) for p in batch]).to(self.device)
        y = torch.stack([image_to_tensor(p.target_image) for p in batch]).to(self.device)
        spec = torch.stack(
            [spectrogram_to_tensor(p.target_spectrogram) for p in batch]
        ).to(self.device)
        return x, y, spec

    def train_step(self, batch: list[TrainPair]) -> LossReport:
        cfg = self.cfg
        x, y, spec = self._batch_tensors(batch)
        self.generator.train()
        self.heads.train()
        self.audio_encoder.train()
        self.discriminator.train()

        audio_emb = self.audio_encoder(spec)
        stack_x = self.generator.encode(x)
        fake = self.generator.decode(stack_x, audio_emb)
        spec_map = fuse_spectrogram(spec, tuple(x.shape[2:]))

        # discriminator update on (real, audio) vs (detached fake, audio)
        self.opt_d.zero_grad(set_to_none=True)
        d_real = self.discriminator(y, spec_map)
        d_fake = self.discriminator(fake.detach(), spec_map)
        d_loss, _ = adversarial_losses(d_real, d_fake, cfg.gan_mode)
        d_loss.backward()
        self.opt_d.step()

        # generator (+heads+audio encoder) update
        self.opt_g.zero_grad(set_to_none=True)
        d_fake_for_g = self.discriminator(fake, spec_map)
        _, g_gan = adversarial_losses(d_real.detach(), d_fake_for_g, cfg.gan_mode)

        stack_fake = self.generator.encode(fake)
        locs = sample_locations(stack_x.shapes(), cfg.num_locations, self.rng)
        nce_x = multilayer_nce(stack_x, stack_fake, self.heads, locs, self.nce_cfg)

        if cfg.use_identity and cfg.mu_identity > 0:
            nce_idt = identity_nce(
                self.generator, self.heads, y, audio_emb, self.rng, self.nce_cfg
            )
        else:
            nce_idt = torch.zeros((), device=self.device)

        g_total = g_gan + self.weights.nce * nce_x + self.weights.identity * nce_idt
        g_total.backward()
        self.opt_g.step()

        report = LossReport(
            gan_g=float(g_gan.item()),
            gan_d=float(d_loss.item()),
            nce_x=float(nce_x.item()),
            nce_idt=float(nce_idt.item()),
            total=0.0,
        )
        report.total = total_generator_loss(report, self.weights)  # also NaN-checks
        self.step += 1
        return report

    # ----- batch assembly -----

    def sample_batch(self, manifest: ClipManifest) -> list[TrainPair]:
        cfg = self.cfg
        seeds = [int(self.rng.integers(0, 2**63)) for _ in range(cfg.batch_size)]

        def load(seed: int) -> TrainPair:
            return sample_pair(
                manifest,
                cfg.domain_x,
                cfg.domain_y,
                np.random.default_rng(seed),
                crop=cfg.crop,
                augment=True,
                framing=cfg.framing_config(),
                clip_seconds=cfg.clip_seconds,
            )

        workers = _num_workers()
        if workers == 1:
            return [load(s) for s in seeds]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(load, seeds))

    # ----- checkpointing -----

    def state_dict(self) -> dict:
        return {
            "schema_version": CHECKPOINT_SCHEMA_VERSION,
            "config": self.cfg.to_dict(),
            "epoch": self.epoch,
            "step": self.step,
            "generator": self.generator.state_dict(),
            "heads": self.heads.state_dict(),
            "audio_encoder": self.audio_encoder.state_dict(),
            "discriminator": self.discriminator.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_d": self.opt_d.state_dict(),
            "torch_rng": torch.get_rng_state(),
            "numpy_rng": self.rng.bit_generator.state,
        }

    def save_checkpoint(self, path) -> None:
        torch.save(self.state_dict(), str(path))

    @classmethod
    def load_checkpoint(cls, path, device: str = "cpu") -> "Trainer":
        state = _read_checkpoint(path)
        trainer = cls(TrainConfig.from_dict(state["config"]), device=device)
        trainer.generator.load_state_dict(state["generator"])
        trainer.heads.load_state_dict(state["heads"])
        trainer.audio_encoder.load_state_dict(state["audio_encoder"])
        trainer.discriminator.load_state_dict(state["discriminator"])
        trainer.opt_g.load_state_dict(state["opt_g"])
        trainer.opt_d.load_state_dict(state["opt_d"])
        trainer.epoch = state["epoch"]
        trainer.step = state["step"]
        torch.set_rng_state(state["torch_rng"])
        trainer.rng.bit_generator.state = state["numpy_rng"]
        return trainer

    def load_pretrained_audio(self, path) -> None:
        """Initialize only the audio encoder from a state-dict file."""
        try:
            weights = torch.load(str(path), map_location="cpu", weights_only=True)
        except Exception as exc:
            raise CheckpointError(f"cannot read audio weights {path}: {exc}") from exc
        own = self.audio_encoder.state_dict()
        for name, tensor in weights.items():
            if name not in own:
                raise CheckpointError(f"unexpected audio weight entry {name!r}")
            if own[name].shape != tensor.shape:
                raise CheckpointError(
                    f"shape mismatch for {name!r}: checkpoint {tuple(tensor.shape)} "
                    f"vs model {tuple(own[name].shape)}"
                )
        missing = set(own) - set(weights)
        if missing:
            raise CheckpointError(f"audio weights missing entries: {sorted(missing)[:3]}")
        self.audio_encoder.load_state_dict(weights)

    # ----- full loop -----

    def fit(self, manifest: ClipManifest, out_dir, progress: bool = False) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg = self.cfg
        metrics_path = out_dir / "metrics.jsonl"
        with open(out_dir / "config.json", "w") as f:
            json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        latest = out_dir / "checkpoint_latest.pt"
        if self.epoch == 0 and self.step == 0:
            self.save_checkpoint(latest)

        t0 = time.time()
        mode = "a" if self.step > 0 else "w"
        with open(metrics_path, mode) as mf:
            for epoch in range(self.epoch, cfg.epochs):
                self.epoch = epoch
                lr = self.set_lr(epoch)
                for _ in range(cfg.steps_per_epoch):
                    batch = self.sample_batch(manifest)
                    try:
                        report = self.train_step(batch)
                    except FloatingPointError:
                        self.save_checkpoint(out_dir / "checkpoint_diagnostic.pt")
                        raise
                    row = {
                        "step": self.step,
                        "epoch": epoch,
                        "lr": lr,
                        **report.as_dict(),
                        "wall_time": time.time() - t0,
                    }
                    mf.write(json.dumps(row) + "\n")
                    if progress and self.step % 10 == 0:
                        print(
                            f"epoch {epoch} step {self.step} "
                            f"total {report.total:.3f} nce_x {report.nce_x:.3f}",
                            flush=True,
                        )
                mf.flush()
                self.epoch = epoch + 1
                self.save_checkpoint(out_dir / f"checkpoint_epoch{epoch}.pt")
                self.save_checkpoint(latest)
        return latest


def _read_checkpoint(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        state = torch.load(str(path), map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = state.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(
            f"checkpoint schema version {version} != {CHECKPOINT_SCHEMA_VERSION}"
        )
    return state


def read_metrics(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(ln) for ln in f if ln.strip()]
