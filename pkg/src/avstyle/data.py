"""Video ingest, clip manifests, and unpaired training-pair sampling.

A source video is chopped into consecutive non-overlapping 3 s clips; each
clip stores 8 uniformly spaced frames (PNG) and one standardized waveform
(WAV) under <root>/<video_id>/<clip_index>/. The manifest is a line-delimited
JSON file with a schema-versioned header line followed by one record per line.

Audio is taken from a sidecar WAV next to the video (same stem): this
environment has no container demuxer, so ingest requires the audio track to
be provided alongside the video file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import cv2
import numpy as np

from . import audio as audio_ops
from .audio import FramingConfig, Spectrogram, WaveformClip
from .errors import EmptyInputError, MissingAudioError, VideoDecodeError

MANIFEST_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ClipRecord:
    video_id: str
    clip_index: int
    time_range: tuple[float, float]
    frame_paths: tuple[str, ...]
    audio_path: str
    domain_tag: str
    split: str = "train"

    def __post_init__(self):
        if len(self.frame_paths) != 8:
            raise ValueError(f"expected 8 frame paths, got {len(self.frame_paths)}")
        if self.split not in ("train", "test"):
            raise ValueError(f"bad split {self.split!r}")
        object.__setattr__(self, "frame_paths", tuple(self.frame_paths))
        object.__setattr__(self, "time_range", tuple(self.time_range))

    @property
    def key(self) -> tuple[str, int]:
        return (self.video_id, self.clip_index)

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "clip_index": self.clip_index,
            "time_range": list(self.time_range),
            "frame_paths": list(self.frame_paths),
            "audio_path": self.audio_path,
            "domain_tag": self.domain_tag,
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClipRecord":
        return cls(
            video_id=d["video_id"],
            clip_index=d["clip_index"],
            time_range=tuple(d["time_range"]),
            frame_paths=tuple(d["frame_paths"]),
            audio_path=d["audio_path"],
            domain_tag=d["domain_tag"],
            split=d["split"],
        )


@dataclass
class ClipManifest:
    records: list[ClipRecord] = field(default_factory=list)
    fingerprint: dict = field(default_factory=dict)
    split_seed: int | None = None

    def __post_init__(self):
        keys = [r.key for r in self.records]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (video_id, clip_index) keys in manifest")

    def domains(self) -> list[str]:
        return sorted({r.domain_tag for r in self.records})

    def select(self, domain: str | None = None, split: str | None = None) -> list[ClipRecord]:
        out = self.records
        if domain is not None:
            out = [r for r in out if r.domain_tag == domain]
        if split is not None:
            out = [r for r in out if r.split == split]
        return out

    def save(self, path) -> None:
        header = {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "fingerprint": self.fingerprint,
            "split_seed": self.split_seed,
        }
        with open(path, "w") as f:
            f.write(json.dumps(header, sort_keys=True) + "\n")
            for rec in self.records:
                f.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ClipManifest":
        with open(path) as f:
            lines = [ln for ln in f.read().splitlines() if ln.strip()]
        if not lines:
            raise EmptyInputError(f"manifest {path} is empty")
        header = json.loads(lines[0])
        version = header.get("schema_version")
        if version != MANIFEST_SCHEMA_VERSION:
            raise ValueError(
                f"manifest schema version {version} != {MANIFEST_SCHEMA_VERSION}"
            )
        records = [ClipRecord.from_dict(json.loads(ln)) for ln in lines[1:]]
        return cls(
            records=records,
            fingerprint=header.get("fingerprint", {}),
            split_seed=header.get("split_seed"),
        )


@dataclass
class TrainPair:
    source_image: np.ndarray  # HxWx3 float32 in [0, 1]
    target_image: np.ndarray
    target_audio: WaveformClip
    target_spectrogram: Spectrogram
    source_record: ClipRecord
    target_record: ClipRecord


def default_fingerprint(
    frame_size: int = 512,
    clip_seconds: float = 3.0,
    frames_per_clip: int = 8,
    sample_rate: int = 16000,
) -> dict:
    return {
        "frame_size": frame_size,
        "clip_seconds": clip_seconds,
        "frames_per_clip": frames_per_clip,
        "sample_rate": sample_rate,
    }


def ingest_video(
    video_path,
    out_root,
    domain_tag: str,
    clip_seconds: float = 3.0,
    frames_per_clip: int = 8,
    frame_size: int = 512,
    sample_rate: int = 16000,
    audio_path=None,
) -> list[ClipRecord]:
    """Split one video into clip records and write frames + audio to out_root.

    audio_path defaults to the sidecar WAV with the video's stem. The
    trailing remainder shorter than clip_seconds is dropped.
    """
    video_path = Path(video_path)
    out_root = Path(out_root)
    if audio_path is None:
        audio_path = video_path.with_suffix(".wav")
    if not Path(audio_path).exists():
        raise MissingAudioError(
            f"no audio track for {video_path}: expected sidecar {audio_path}"
        )
    clip_wave = audio_ops.load_and_standardize(audio_path, sample_rate)

    cap = cv2.VideoCapture(str(video_path))
    if not cap.isOpened():
        raise VideoDecodeError(f"cannot open video {video_path}")
    fps = cap.get(cv2.CAP_PROP_FPS)
    total_frames = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
    if fps <= 0 or total_frames <= 0:
        cap.release()
        raise VideoDecodeError(f"cannot read frame geometry of {video_path}")

    frames_per_chunk = int(round(fps * clip_seconds))
    n_clips = total_frames // frames_per_chunk
    samples_per_chunk = int(round(clip_seconds * sample_rate))
    n_clips = min(n_clips, clip_wave.num_samples // samples_per_chunk)

    video_id = video_path.stem
    records: list[ClipRecord] = []
    frame_cache: dict[int, np.ndarray] = {}
    wanted: set[int] = set()
    per_clip_indices = []
    for k in range(n_clips):
        # uniform spacing inside [k*chunk, (k+1)*chunk)
        rel = np.linspace(0, frames_per_chunk - 1, frames_per_clip).round().astype(int)
        idxs = (k * frames_per_chunk + rel).tolist()
        per_clip_indices.append(idxs)
        wanted.update(idxs)

    pos = 0
    while wanted:
        ok, frame = cap.read()
        if not ok:
            break
        if pos in wanted:
            frame_cache[pos] = frame
            wanted.discard(pos)
        pos += 1
    cap.release()

    for k in range(n_clips):
        idxs = per_clip_indices[k]
        if any(i not in frame_cache for i in idxs):
            break  # container reported more frames than decodable
        clip_dir = out_root / video_id / str(k)
        clip_dir.mkdir(parents=True, exist_ok=True)
        frame_paths = []
        for j, i in enumerate(idxs):
            img = cv2.resize(
                frame_cache[i], (frame_size, frame_size), interpolation=cv2.INTER_LINEAR
            )
            p = clip_dir / f"frame_{j}.png"
            cv2.imwrite(str(p), img)
            frame_paths.append(str(p))
        seg = WaveformClip(
            clip_wave.samples[k * samples_per_chunk : (k + 1) * samples_per_chunk],
            sample_rate,
        )
        wav_path = clip_dir / "audio.wav"
        audio_ops.save_waveform(seg, wav_path)
        records.append(
            ClipRecord(
                video_id=video_id,
                clip_index=k,
                time_range=(k * clip_seconds, (k + 1) * clip_seconds),
                frame_paths=tuple(frame_paths),
                audio_path=str(wav_path),
                domain_tag=domain_tag,
                split="train",
            )
        )
    return records


def split_manifest(manifest: ClipManifest, test_fraction: float = 0.2, seed: int = 0) -> ClipManifest:
    """Assign train/test split; fraction within one record of test_fraction."""
    if not manifest.records:
        raise EmptyInputError("cannot split an empty manifest")
    if not (0.0 <= test_fraction <= 1.0):
        raise ValueError("test_fraction must be in [0, 1]")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(manifest.records))
    n_test = int(round(test_fraction * len(manifest.records)))
    test_idx = set(order[:n_test].tolist())
    records = [
        replace(rec, split="test" if i in test_idx else "train")
        for i, rec in enumerate(manifest.records)
    ]
    return ClipManifest(records=records, fingerprint=manifest.fingerprint, split_seed=seed)


def load_frame(path) -> np.ndarray:
    """Read a stored frame as HxWx3 RGB float32 in [0, 1]."""
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise VideoDecodeError(f"cannot read frame {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0


def _crop_and_flip(
    img: np.ndarray, crop: int, rng: np.random.Generator | None, augment: bool
) -> np.ndarray:
    h, w = img.shape[:2]
    if crop > h or crop > w:
        raise ValueError(f"crop {crop} exceeds frame size {h}x{w}")
    if augment and rng is not None:
        top = int(rng.integers(0, h - crop + 1))
        left = int(rng.integers(0, w - crop + 1))
        out = img[top : top + crop, left : left + crop]
        if rng.random() < 0.5:
            out = out[:, ::-1]
    else:
        top = (h - crop) // 2
        left = (w - crop) // 2
        out = img[top : top + crop, left : left + crop]
    return np.ascontiguousarray(out)


def sample_pair(
    manifest: ClipManifest,
    domain_x: str,
    domain_y: str,
    rng: np.random.Generator,
    crop: int = 256,
    augment: bool = True,
    framing: FramingConfig | None = None,
    clip_seconds: float = 3.0,
    split: str = "train",
) -> TrainPair:
    """Draw one unpaired (source, target) pair; target audio stays paired
    with the target record's frames."""
    xs = manifest.select(domain=domain_x, split=split)
    ys = manifest.select(domain=domain_y, split=split)
    if not xs:
        raise KeyError(f"no {split} records for domain {domain_x!r}")
    if not ys:
        raise KeyError(f"no {split} records for domain {domain_y!r}")
    x_rec = xs[int(rng.integers(0, len(xs)))]
    y_rec = ys[int(rng.integers(0, len(ys)))]

    def pick_frame(rec: ClipRecord) -> np.ndarray:
        i = int(rng.integers(0, len(rec.frame_paths))) if augment else 0
        return load_frame(rec.frame_paths[i])

    src = _crop_and_flip(pick_frame(x_rec), crop, rng, augment)
    tgt = _crop_and_flip(pick_frame(y_rec), crop, rng, augment)
    wave = audio_ops.load_and_standardize(
        y_rec.audio_path, (framing or FramingConfig()).sample_rate
    )
    wave = audio_ops.fix_duration(wave, clip_seconds, rng if augment else None)
    spec = audio_ops.spectrogram(wave, framing)
    return TrainPair(
        source_image=src,
        target_image=tgt,
        target_audio=wave,
        target_spectrogram=spec,
        source_record=x_rec,
        target_record=y_rec,
    )
