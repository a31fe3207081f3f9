"""Network definitions: generator encoder/decoder with audio conditioning,
audio feature extractor, patch discriminator (early/late fusion), and the
per-layer projection heads used by the contrastive loss."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .audio import Spectrogram

# fixed affine applied to log magnitudes before they enter a network, so the
# spectrogram channel lives on roughly the same scale as [-1, 1] images
SPEC_CENTER = -5.0
SPEC_SCALE = 4.0


@dataclass(frozen=True)
class GeneratorConfig:
    input_channels: int = 3
    base_width: int = 64
    n_downsample: int = 2
    n_residual_blocks: int = 9
    audio_feature_dim: int = 512

    def __post_init__(self):
        if self.n_residual_blocks < 1:
            raise ValueError("n_residual_blocks must be >= 1")
        if self.base_width < 1 or self.audio_feature_dim < 1:
            raise ValueError("widths must be positive")
        if self.n_downsample < 1:
            raise ValueError("n_downsample must be >= 1")

    @property
    def encoder_residual_blocks(self) -> int:
        # encoder holds the first half of the residual stack
        return min(5, (self.n_residual_blocks + 1) // 2)

    @property
    def bottleneck_channels(self) -> int:
        return self.base_width * 2**self.n_downsample

    @property
    def tap_channels(self) -> tuple[int, ...]:
        w = self.base_width
        return (
            self.input_channels,
            w * 2,
            w * 2**self.n_downsample,
            self.bottleneck_channels,
            self.bottleneck_channels,
        )


@dataclass(frozen=True)
class DiscriminatorConfig:
    fusion: str = "early"  # "early" | "late"
    image_channels: int = 3
    spectrogram_channels: int = 1
    base_width: int = 64
    n_layers: int = 3

    def __post_init__(self):
        if self.fusion not in ("early", "late"):
            raise ValueError(f"fusion must be 'early' or 'late', got {self.fusion!r}")

    @property
    def input_channels(self) -> int:
        return self.image_channels + self.spectrogram_channels

    def layer_spec(self) -> list[tuple[int, int, int]]:
        """(kernel, stride, padding) per conv, input to score map."""
        spec = [(4, 2, 1)]
        spec += [(4, 2, 1)] * (self.n_layers - 1)
        spec += [(4, 1, 1), (4, 1, 1)]
        return spec

    def score_map_size(self, side: int) -> int:
        """Output-size oracle from the layer spec alone."""
        for k, s, p in self.layer_spec():
            side = (side + 2 * p - k) // s + 1
        return side


@dataclass
class FeatureStack:
    """The 5 tapped maps: input pixels, two downsampling outputs, first and
    last encoder residual-block outputs. All maps are (B, C, H, W)."""

    maps: tuple[torch.Tensor, ...]

    def __post_init__(self):
        if len(self.maps) != 5:
            raise ValueError(f"expected 5 tap layers, got {len(self.maps)}")
        self.maps = tuple(self.maps)

    @property
    def bottleneck(self) -> torch.Tensor:
        return self.maps[-1]

    def shapes(self) -> list[tuple[int, int]]:
        return [(int(m.shape[2]), int(m.shape[3])) for m in self.maps]


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, 3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


class Encoder(nn.Module):
    """First half of the generator; exposes the 5 tap layers."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.base_width
        self.stem = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(cfg.input_channels, w, 7),
            nn.InstanceNorm2d(w),
            nn.ReLU(inplace=True),
        )
        downs = []
        for i in range(cfg.n_downsample):
            cin, cout = w * 2**i, w * 2 ** (i + 1)
            downs.append(
                nn.Sequential(
                    nn.Conv2d(cin, cout, 3, stride=2, padding=1),
                    nn.InstanceNorm2d(cout),
                    nn.ReLU(inplace=True),
                )
            )
        self.downs = nn.ModuleList(downs)
        self.res_blocks = nn.ModuleList(
            ResidualBlock(cfg.bottleneck_channels)
            for _ in range(cfg.encoder_residual_blocks)
        )

    def forward(self, x: torch.Tensor) -> FeatureStack:
        if x.shape[1] != self.cfg.input_channels:
            raise ValueError(f"expected {self.cfg.input_channels} channels, got {x.shape[1]}")
        div = 2**self.cfg.n_downsample
        if x.shape[2] % div or x.shape[3] % div:
            raise ValueError(
                f"spatial dims {tuple(x.shape[2:])} not divisible by {div}"
            )
        taps = [x]
        h = self.stem(x)
        for down in self.downs:
            h = down(h)
            taps.append(h)
        taps = [taps[0], taps[1], taps[-1]]
        for i, block in enumerate(self.res_blocks):
            h = block(h)
            if i == 0:
                taps.append(h)
        taps.append(h)
        return FeatureStack(tuple(taps))


class Decoder(nn.Module):
    """Second half of the generator. The pooled audio embedding is tiled over
    the bottleneck grid, concatenated channelwise, and folded back to the
    decoder width with a 1x1 conv."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        ch = cfg.bottleneck_channels
        # no norm here: the tiled audio enters as a spatially constant offset,
        # and instance normalization would subtract it out exactly
        self.fuse = nn.Sequential(
            nn.Conv2d(ch + cfg.audio_feature_dim, ch, 1),
            nn.ReLU(inplace=True),
        )
        n_rest = cfg.n_residual_blocks - cfg.encoder_residual_blocks
        self.res_blocks = nn.Sequential(*[ResidualBlock(ch) for _ in range(n_rest)])
        ups = []
        w = cfg.base_width
        for i in reversed(range(cfg.n_downsample)):
            cin, cout = w * 2 ** (i + 1), w * 2**i
            ups.append(
                nn.Sequential(
                    nn.ConvTranspose2d(cin, cout, 3, stride=2, padding=1, output_padding=1),
                    nn.InstanceNorm2d(cout),
                    nn.ReLU(inplace=True),
                )
            )
        self.ups = nn.Sequential(*ups)
        self.head = nn.Sequential(
            nn.ReflectionPad2d(3), nn.Conv2d(w, cfg.input_channels, 7), nn.Tanh()
        )

    def forward(self, stack: FeatureStack, audio: torch.Tensor) -> torch.Tensor:
        h = stack.bottleneck
        if audio.shape[-1] != self.cfg.audio_feature_dim:
            raise ValueError(
                f"audio embedding dim {audio.shape[-1]} != {self.cfg.audio_feature_dim}"
            )
        if audio.dim() == 1:
            audio = audio.unsqueeze(0)
        tiled = audio[:, :, None, None].expand(-1, -1, h.shape[2], h.shape[3])
        h = self.fuse(torch.cat([h, tiled], dim=1))
        h = self.res_blocks(h)
        h = self.ups(h)
        return self.head(h)


class AudioBasicBlock(nn.Module):
    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(
                nn.Conv2d(cin, cout, 1, stride=stride, bias=False), nn.BatchNorm2d(cout)
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        h = F.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        return F.relu(h + self.shortcut(x))


class AudioEncoder(nn.Module):
    """ResNet18-shaped extractor over 1-channel log spectrograms; the pooled
    terminal feature is the conditioning embedding (512-dim at width 64)."""

    def __init__(self, base_width: int = 64, expected_shape: tuple[int, int] | None = None):
        super().__init__()
        w = base_width
        self.expected_shape = expected_shape
        self.stem = nn.Sequential(
            nn.Conv2d(1, w, 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(w),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        stages = []
        for i, stride in enumerate([1, 2, 2, 2]):
            cin = w * 2 ** max(i - 1, 0)
            cout = w * 2**i
            stages += [AudioBasicBlock(cin, cout, stride), AudioBasicBlock(cout, cout)]
        self.stages = nn.Sequential(*stages)
        self.out_dim = w * 8

    def forward(self, spec: torch.Tensor) -> torch.Tensor:
        if spec.dim() == 3:
            spec = spec.unsqueeze(0)
        if spec.shape[1] != 1:
            raise ValueError(f"expected 1-channel spectrogram, got {spec.shape[1]}")
        if self.expected_shape is not None and tuple(spec.shape[2:]) != self.expected_shape:
            raise ValueError(
                f"spectrogram shape {tuple(spec.shape[2:])} != expected {self.expected_shape}"
            )
        h = self.stages(self.stem(spec))
        return h.mean(dim=(2, 3))


class Generator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.decoder = Decoder(cfg)
        init_weights(self)

    def encode(self, image: torch.Tensor) -> FeatureStack:
        return self.encoder(image)

    def decode(self, stack: FeatureStack, audio: torch.Tensor) -> torch.Tensor:
        return self.decoder(stack, audio)

    def forward(self, image: torch.Tensor, audio: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(image), audio)


def _conv_tower(channels: list[int], spec: list[tuple[int, int, int]], with_norm=True):
    layers: list[nn.Module] = []
    for i, ((k, s, p), cin, cout) in enumerate(zip(spec, channels[:-1], channels[1:])):
        layers.append(nn.Conv2d(cin, cout, k, stride=s, padding=p))
        if with_norm and 0 < i:
            layers.append(nn.InstanceNorm2d(cout))
        layers.append(nn.LeakyReLU(0.2, inplace=True))
    return nn.Sequential(*layers)


class PatchDiscriminator(nn.Module):
    """PatchGAN over the fused audio-visual input; outputs one unbounded
    score per receptive-field patch (LSGAN form, no sigmoid)."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.base_width
        widths = [w * 2 ** min(i, 3) for i in range(cfg.n_layers + 1)]
        spec = cfg.layer_spec()
        if cfg.fusion == "early":
            self.tower = _conv_tower([cfg.input_channels] + widths, spec[:-1])
        else:
            split = max(1, cfg.n_layers // 2)
            self.image_tower = _conv_tower(
                [cfg.image_channels] + widths[:split], spec[:split]
            )
            self.audio_tower = _conv_tower(
                [cfg.spectrogram_channels] + widths[:split], spec[:split]
            )
            # concat of the two towers doubles the channel count
            self.classifier = _conv_tower(
                [2 * widths[split - 1]] + widths[split:], spec[split:-1]
            )
        self.score = nn.Conv2d(widths[-1], 1, 4, stride=1, padding=1)
        init_weights(self)

    def forward(self, image: torch.Tensor, spec_map: torch.Tensor) -> torch.Tensor:
        if spec_map.shape[2:] != image.shape[2:]:
            raise ValueError(
                f"spectrogram map {tuple(spec_map.shape[2:])} does not match image "
                f"{tuple(image.shape[2:])}; resize before discriminating"
            )
        if self.cfg.fusion == "early":
            h = self.tower(torch.cat([image, spec_map], dim=1))
        else:
            hi = self.image_tower(image)
            ha = self.audio_tower(spec_map)
            h = self.classifier(torch.cat([hi, ha], dim=1))
        return self.score(h)


class ProjectionHeads(nn.Module):
    """One 2-layer MLP per tap layer mapping channel vectors to unit-norm
    embeddings for the contrastive loss. Not used during inference."""

    def __init__(self, tap_channels: tuple[int, ...], out_dim: int = 256):
        super().__init__()
        self.out_dim = out_dim
        self.heads = nn.ModuleList(
            nn.Sequential(nn.Linear(c, out_dim), nn.ReLU(inplace=True), nn.Linear(out_dim, out_dim))
            for c in tap_channels
        )
        init_weights(self)

    def forward(self, per_layer_vectors: list[torch.Tensor]) -> list[torch.Tensor]:
        if len(per_layer_vectors) != len(self.heads):
            raise ValueError(
                f"got {len(per_layer_vectors)} layers for {len(self.heads)} heads"
            )
        out = []
        for head, vecs in zip(self.heads, per_layer_vectors):
            z = head(vecs)
            out.append(F.normalize(z, dim=-1))
        return out


def spectrogram_to_tensor(spec: Spectrogram, device=None) -> torch.Tensor:
    """(1, bins, frames) tensor of standardized log magnitudes."""
    m = torch.from_numpy(np.ascontiguousarray(spec.magnitudes.T))
    return ((m - SPEC_CENTER) / SPEC_SCALE).unsqueeze(0).to(device or "cpu")


def fuse_spectrogram(spec_tensor: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Bilinearly resize a (B, 1, F, T) spectrogram map to the image size."""
    if spec_tensor.dim() == 3:
        spec_tensor = spec_tensor.unsqueeze(0)
    return F.interpolate(spec_tensor, size=size, mode="bilinear", align_corners=False)


def image_to_tensor(img: np.ndarray, device=None) -> torch.Tensor:
    """HxWx3 [0,1] float image -> (3,H,W) tensor in [-1,1]."""
    t = torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))
    return (t * 2.0 - 1.0).to(device or "cpu")


def tensor_to_image(t: torch.Tensor) -> np.ndarray:
    """(3,H,W) or (1,3,H,W) tensor in [-1,1] -> HxWx3 [0,1] float image."""
    if t.dim() == 4:
        t = t.squeeze(0)
    img = ((t.detach().cpu().float() + 1.0) / 2.0).clamp(0, 1)
    return img.numpy().transpose(1, 2, 0)
