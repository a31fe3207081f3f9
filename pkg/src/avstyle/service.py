"""Stateless HTTP inference service for the editing studio. One model
snapshot and one sound library are loaded at startup; every request is
independent and deterministic for identical parameters."""

from __future__ import annotations

import io
import os
import time
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from fastapi import FastAPI, File, Form, UploadFile
from fastapi.responses import JSONResponse, Response

from . import audio as audio_ops
from .audio import WaveformClip
from .inference import ModelSnapshot

DEFAULT_MAX_PIXELS = 2048 * 2048


@dataclass(frozen=True)
class SoundLibraryEntry:
    id: str
    name: str
    duration: float
    path: str
    category: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "duration": self.duration,
            "path": self.path,
            "category": self.category,
        }


class SoundLibrary:
    """Sounds standardized to the model's sample rate at registration,
    listed in stable id order."""

    def __init__(self, sample_rate: int):
        self.sample_rate = sample_rate
        self._clips: dict[str, WaveformClip] = {}
        self._entries: dict[str, SoundLibraryEntry] = {}

    def register(self, sound_id: str, path, name: str | None = None, category: str | None = None) -> SoundLibraryEntry:
        if sound_id in self._entries:
            raise KeyError(f"sound id {sound_id!r} already registered")
        clip = audio_ops.load_and_standardize(path, self.sample_rate)
        entry = SoundLibraryEntry(
            id=sound_id,
            name=name or sound_id,
            duration=round(clip.samples.shape[0] / clip.sample_rate, 3),
            path=str(path),
            category=category,
        )
        self._clips[sound_id] = clip
        self._entries[sound_id] = entry
        return entry

    def register_directory(self, directory) -> None:
        for path in sorted(Path(directory).glob("*.wav")):
            self.register(path.stem, path)

    def entries(self) -> list[SoundLibraryEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def get(self, sound_id: str) -> WaveformClip:
        return self._clips[sound_id]

    def __contains__(self, sound_id: str) -> bool:
        return sound_id in self._entries


def _error(status: int, field: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"field": field, "error": message})


def create_app(checkpoint_path, sounds_dir=None, max_pixels: int | None = None) -> FastAPI:
    """Build the service around one checkpoint and an optional sound
    directory. AVSTYLE_MAX_PIXELS caps the accepted image area."""
    snapshot = ModelSnapshot(checkpoint_path)
    if max_pixels is None:
        max_pixels = int(os.environ.get("AVSTYLE_MAX_PIXELS", DEFAULT_MAX_PIXELS))
    library = SoundLibrary(snapshot.framing.sample_rate)
    if sounds_dir is not None:
        library.register_directory(sounds_dir)
    started = time.time()

    app = FastAPI(title="avstyle studio")
    app.state.snapshot = snapshot
    app.state.library = library

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "model_version": snapshot.version,
            "uptime": time.time() - started,
        }

    @app.get("/v1/sounds")
    def sounds():
        return [e.to_dict() for e in library.entries()]

    @app.post("/v1/stylize")
    async def stylize(
        image: UploadFile = File(...),
        sound_ids: list[str] = Form(...),
        alpha: float = Form(0.5),
        gain: float = Form(1.0),
        seed: int | None = Form(None),
    ):
        if not 1 <= len(sound_ids) <= 2:
            return _error(422, "sound_ids", f"need 1 or 2 sound ids, got {len(sound_ids)}")
        if not 0.0 <= alpha <= 1.0:
            return _error(422, "alpha", f"alpha must be in [0, 1], got {alpha}")
        if not gain >= 0.0:
            return _error(422, "gain", f"gain must be >= 0, got {gain}")
        for sid in sound_ids:
            if sid not in library:
                return _error(404, "sound_ids", f"unknown sound id {sid!r}")

        raw = np.frombuffer(await image.read(), dtype=np.uint8)
        decoded = cv2.imdecode(raw, cv2.IMREAD_COLOR)
        if decoded is None:
            return _error(422, "image", "cannot decode image payload")
        h, w = decoded.shape[:2]
        if h * w > max_pixels:
            return _error(413, "image", f"{w}x{h} exceeds max {max_pixels} pixels")
        rgb = cv2.cvtColor(decoded, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0

        clip = library.get(sound_ids[0])
        mix_clip = library.get(sound_ids[1]) if len(sound_ids) == 2 else None
        try:
            result = snapshot.stylize(
                rgb, clip, gain=gain, mix_clip=mix_clip, alpha=alpha, seed=seed
            )
        except ValueError as exc:
            return _error(422, "image", str(exc))

        bgr = cv2.cvtColor((result.image * 255).round().astype(np.uint8), cv2.COLOR_RGB2BGR)
        ok, png = cv2.imencode(".png", bgr)
        if not ok:
            return _error(422, "image", "failed to encode result")
        return Response(
            content=png.tobytes(),
            media_type="image/png",
            headers={
                "X-Applied-Gain": str(result.applied_gain),
                "X-Applied-Alpha": "" if result.applied_alpha is None else str(result.applied_alpha),
                "X-Model-Version": snapshot.version,
            },
        )

    return app
