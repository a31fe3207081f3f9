"""Objective evaluation: audio-visual correspondence (mean cosine), Frechet
distance between embedding Gaussians, and a text-image similarity score.
Embedding backbones are abstracted behind providers so the harness runs with
deterministic mocks; real pretrained adapters plug into the same interface."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .errors import EmptyInputError


class EmbeddingProvider(Protocol):
    modality: str  # "image" | "audio" | "text"
    dim: int

    def embed(self, item) -> np.ndarray: ...


@dataclass
class FunctionProvider:
    """Wraps a deterministic callable as a provider."""

    modality: str
    dim: int
    fn: Callable

    def embed(self, item) -> np.ndarray:
        out = np.asarray(self.fn(item), dtype=np.float64)
        if out.shape != (self.dim,):
            raise ValueError(f"provider returned shape {out.shape}, expected ({self.dim},)")
        return out


@dataclass
class MetricReport:
    avc: float | None
    fid: float | None
    clip_score: float | None
    n_samples: int
    per_domain: dict | None = None

    def to_dict(self) -> dict:
        return {
            "avc": self.avc,
            "fid": self.fid,
            "clip_score": self.clip_score,
            "n_samples": self.n_samples,
            "per_domain": self.per_domain,
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "MetricReport":
        with open(path) as f:
            return cls(**json.load(f))


def mock_providers(dim: int = 32, seed: int = 0) -> dict:
    """Deterministic desk-scale providers sharing one joint space: image
    embeddings from pooled pixel statistics, audio from pooled spectrogram
    bins, text from a seeded hash. No pretrained weights involved."""
    from . import audio as audio_ops

    rng = np.random.default_rng(seed)
    img_proj = rng.normal(size=(48, dim))
    aud_proj = rng.normal(size=(32, dim))

    def embed_image(img):
        img = np.asarray(img, float)
        h, w = img.shape[:2]
        hb, wb = max(1, h // 4), max(1, w // 4)
        pooled = img[: hb * 4, : wb * 4].reshape(4, hb, 4, wb, 3).mean(axis=(1, 3))
        v = pooled.reshape(-1) @ img_proj
        return v / (np.linalg.norm(v) + 1e-12)

    def embed_audio(clip):
        spec = audio_ops.spectrogram(clip)
        m = spec.magnitudes.mean(axis=0)  # per-bin average over frames
        chunks = np.array_split(m, 32)
        v = np.array([c.mean() for c in chunks]) @ aud_proj
        return v / (np.linalg.norm(v) + 1e-12)

    def embed_text(text):
        h = int.from_bytes(str(text).encode(), "little") % (2**32)
        v = np.random.default_rng(h).normal(size=dim)
        return v / np.linalg.norm(v)

    return {
        "image": FunctionProvider("image", dim, embed_image),
        "audio": FunctionProvider("audio", dim, embed_audio),
        "text": FunctionProvider("text", dim, embed_text),
    }


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm embedding; cosine undefined")
    return float(a @ b / (na * nb))


def avc_score(pairs, img_provider: EmbeddingProvider, aud_provider: EmbeddingProvider) -> float:
    """Mean cosine similarity over (image, audio) pairs in a joint space."""
    if img_provider.dim != aud_provider.dim:
        raise ValueError(
            f"providers must share a space: dims {img_provider.dim} vs {aud_provider.dim}"
        )
    pairs = list(pairs)
    if not pairs:
        raise EmptyInputError("no pairs to score")
    sims = [
        _cosine(img_provider.embed(img), aud_provider.embed(aud)) for img, aud in pairs
    ]
    return float(np.mean(sims))


def clip_style_score(images, texts, img_provider, txt_provider) -> float:
    """Mean cosine similarity between images and their texts (one text per
    image, or one shared text)."""
    images = list(images)
    texts = list(texts)
    if len(texts) == 1:
        texts = texts * len(images)
    if len(images) != len(texts):
        raise ValueError(f"{len(images)} images vs {len(texts)} texts")
    return avc_score(zip(images, texts), img_provider, txt_provider)


def _sqrt_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.where(vals < 1e-10, 0.0, vals)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid_from_stats(mu1, sigma1, mu2, sigma2) -> float:
    """||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}) with a symmetric-root
    evaluation of the cross term; tiny negative eigenvalues are clamped."""
    mu1, mu2 = np.atleast_1d(np.asarray(mu1, float)), np.atleast_1d(np.asarray(mu2, float))
    sigma1, sigma2 = np.atleast_2d(np.asarray(sigma1, float)), np.atleast_2d(np.asarray(sigma2, float))
    diff = mu1 - mu2
    s1h = _sqrt_psd(sigma1)
    inner = s1h @ sigma2 @ s1h
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    vals = np.where(vals < 1e-10, 0.0, vals)
    cross = 2.0 * np.sum(np.sqrt(vals))
    return float(diff @ diff + np.trace(sigma1) + np.trace(sigma2) - cross)


def fid(real_embs: np.ndarray, fake_embs: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two embedding sets."""
    real = np.asarray(real_embs, float)
    fake = np.asarray(fake_embs, float)
    if real.ndim != 2 or fake.ndim != 2 or real.shape[1] != fake.shape[1]:
        raise ValueError(f"embedding shapes incompatible: {real.shape} vs {fake.shape}")
    if real.shape[0] < 2 or fake.shape[0] < 2:
        raise ValueError("need at least 2 samples per side")
    mu1, mu2 = real.mean(axis=0), fake.mean(axis=0)
    s1 = np.cov(real, rowvar=False)
    s2 = np.cov(fake, rowvar=False)
    return fid_from_stats(mu1, s1, mu2, s2)


def evaluate_run(
    checkpoint_path,
    manifest,
    img_provider: EmbeddingProvider | None = None,
    aud_provider: EmbeddingProvider | None = None,
    txt_provider: EmbeddingProvider | None = None,
    keywords: dict | None = None,
    domain_x: str | None = None,
    domain_y: str | None = None,
    seed: int = 0,
    per_domain: bool = False,
    max_samples: int | None = None,
) -> MetricReport:
    """Stylize each test source frame under a seeded-random target audio and
    score the results. Metrics whose providers are absent are reported None."""
    from . import audio as audio_ops
    from .data import load_frame
    from .inference import ModelSnapshot

    snapshot = ModelSnapshot(checkpoint_path)
    cfg = snapshot.config
    domain_x = domain_x or cfg.domain_x
    domain_y = domain_y or cfg.domain_y
    sources = manifest.select(domain=domain_x, split="test")
    targets = manifest.select(domain=domain_y, split="test")
    if not sources or not targets:
        raise EmptyInputError("test split is empty for a requested domain")
    if max_samples is not None:
        sources = sources[:max_samples]
    rng = np.random.default_rng(seed)

    stylized, audios, real_frames, tags = [], [], [], []
    for rec in sources:
        tgt = targets[int(rng.integers(0, len(targets)))]
        clip = audio_ops.load_and_standardize(tgt.audio_path, snapshot.framing.sample_rate)
        img = load_frame(rec.frame_paths[0])
        result = snapshot.stylize(img, clip, seed=int(rng.integers(0, 2**31)))
        stylized.append(result.image)
        audios.append(clip)
        tags.append(tgt.domain_tag)
    for rec in targets:
        real_frames.append(load_frame(rec.frame_paths[0]))

    avc = fid_val = clip_val = None
    per_domain_out = None
    if img_provider is not None and aud_provider is not None:
        avc = avc_score(zip(stylized, audios), img_provider, aud_provider)
        if per_domain:
            per_domain_out = {}
            for tag in sorted(set(tags)):
                sel = [(s, a) for s, a, t in zip(stylized, audios, tags) if t == tag]
                per_domain_out[tag] = avc_score(sel, img_provider, aud_provider)
    if img_provider is not None:
        real_embs = np.stack([img_provider.embed(f) for f in real_frames])
        fake_embs = np.stack([img_provider.embed(f) for f in stylized])
        fid_val = fid(real_embs, fake_embs)
    if img_provider is not None and txt_provider is not None and keywords:
        texts = [keywords.get(t, t) for t in tags]
        clip_val = clip_style_score(stylized, texts, img_provider, txt_provider)

    return MetricReport(
        avc=avc,
        fid=fid_val,
        clip_score=clip_val,
        n_samples=len(stylized),
        per_domain=per_domain_out,
    )
