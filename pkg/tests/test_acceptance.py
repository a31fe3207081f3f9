"""Acceptance gate. Each test covers one release criterion and prints a
single pass/fail line with its tolerances."""

import math
import subprocess
import time
from pathlib import Path

import numpy as np
import pytest
import torch

import synthbench
from avstyle import audio as audio_ops
from avstyle.audio import FramingConfig, WaveformClip, spectrogram
from avstyle.data import ClipManifest, ingest_video, split_manifest
from avstyle.inference import ModelSnapshot
from avstyle.losses import adversarial_losses, patch_nce
from avstyle.metrics import fid, fid_from_stats
from avstyle.training import TrainConfig, Trainer, lr_at

FRONTEND_DIR = Path(__file__).resolve().parent.parent / "frontend"

E2E_STEPS = 300
E2E_CONFIG = dict(
    batch_size=4,
    epochs=3,
    constant_epochs=2,
    decay_epochs=1,
    steps_per_epoch=100,
    lambda_nce=0.5,
    mu_identity=0.5,
    domain_x="green",
    domain_y="white",
    crop=64,
    clip_seconds=1.0,
    base_width=16,
    n_residual_blocks=4,
    audio_base_width=8,
    disc_base_width=16,
    num_locations=64,
    seed=0,
)

TINY = dict(
    batch_size=2,
    epochs=2,
    constant_epochs=1,
    decay_epochs=1,
    steps_per_epoch=2,
    domain_x="green",
    domain_y="white",
    crop=32,
    clip_seconds=0.5,
    base_width=4,
    n_residual_blocks=2,
    audio_base_width=4,
    disc_base_width=4,
    num_locations=16,
    seed=7,
)


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="session")
def synth_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth_e2e")
    manifest = synthbench.build_synthetic_manifest(
        root, records_per_domain=200, frame_size=80, seed=0
    )
    return manifest


@pytest.fixture(scope="session")
def synth_run(synth_manifest, tmp_path_factory):
    """Train the synthetic benchmark once; shared by the e2e, manipulation,
    and studio criteria."""
    trainer = Trainer(TrainConfig(**E2E_CONFIG))
    t0 = time.time()
    nce_x = []
    for _ in range(E2E_STEPS):
        rep = trainer.train_step(trainer.sample_batch(synth_manifest))
        nce_x.append(rep.nce_x)
    train_seconds = time.time() - t0
    ckpt = tmp_path_factory.mktemp("ckpt") / "synthetic.pt"
    trainer.save_checkpoint(ckpt)
    return {"ckpt": ckpt, "nce_x": nce_x, "train_seconds": train_seconds}


@pytest.fixture(scope="session")
def snapshot(synth_run):
    return ModelSnapshot(synth_run["ckpt"])


def mean_green_excess(records, n=40):
    from avstyle.data import load_frame

    return float(
        np.mean([synthbench.green_excess(load_frame(r.frame_paths[0])) for r in records[:n]])
    )


def test_loss_oracle_suite():
    t0 = time.time()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 10))  # 1 positive + up to 8 negatives
        dim = int(rng.integers(1, 17))
        tau = float(rng.uniform(0.05, 1.5))
        q = rng.normal(size=(n, dim))
        k = rng.normal(size=(n, dim))
        got = patch_nce(torch.tensor(q), torch.tensor(k), tau).item()
        logits = q @ k.T / tau
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        want = float(np.mean(-np.log(p[np.arange(n), np.arange(n)])))
        worst = max(worst, abs(got - want) / abs(want))
    uniform_ok = True
    for n in (2, 9, 256):
        keys = torch.ones(n, 4, dtype=torch.float64)
        loss = patch_nce(torch.ones(n, 4, dtype=torch.float64), keys, 0.07).item()
        uniform_ok &= abs(loss - math.log(n)) < 1e-12
    elapsed = time.time() - t0
    report(
        "loss-oracle suite",
        worst <= 1e-6 and uniform_ok and elapsed < 10,
        f"max rel err {worst:.2e} (tol 1e-6), uniform case exact: {uniform_ok}, "
        f"{elapsed:.1f}s (< 10s)",
    )


def central_fd(fn, x, eps=1e-6):
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        hi = fn(x)
        xf[i] = orig - eps
        lo = fn(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2 * eps)
    return grad


def test_gradient_suite():
    t0 = time.time()
    rng = np.random.default_rng(1)
    worst = 0.0
    for trial in range(50):
        n = int(rng.integers(2, 6))
        dim = int(rng.integers(2, 6))
        tau = float(rng.uniform(0.1, 1.0))
        q0 = rng.normal(size=(n, dim))
        k0 = rng.normal(size=(n, dim))

        q = torch.tensor(q0, requires_grad=True)
        loss = patch_nce(q, torch.tensor(k0), tau)
        loss.backward()
        fd = central_fd(lambda a: patch_nce(torch.tensor(a), torch.tensor(k0), tau).item(), q0.copy())
        denom = max(np.abs(fd).max(), 1e-8)
        worst = max(worst, np.abs(q.grad.numpy() - fd).max() / denom)

        r0 = rng.normal(size=(2, 3))
        f0 = rng.normal(size=(2, 3))
        for which in (0, 1):
            f = torch.tensor(f0, requires_grad=True)
            d_loss, g_loss = adversarial_losses(torch.tensor(r0), f)
            (d_loss if which == 0 else g_loss).backward()
            fd = central_fd(
                lambda a: adversarial_losses(torch.tensor(r0), torch.tensor(a))[which].item(),
                f0.copy(),
            )
            denom = max(np.abs(fd).max(), 1e-8)
            worst = max(worst, np.abs(f.grad.numpy() - fd).max() / denom)
    elapsed = time.time() - t0
    report(
        "gradient suite",
        worst <= 1e-4 and elapsed < 60,
        f"max rel err {worst:.2e} (tol 1e-4) over 50 instances x 3 losses, "
        f"{elapsed:.1f}s (< 60s)",
    )


def test_spectrogram_suite():
    t0 = time.time()
    cfg = FramingConfig()
    rng = np.random.default_rng(2)
    framing_ok = True
    for _ in range(100):
        n = int(rng.integers(cfg.n_fft, 5 * cfg.sample_rate))
        clip = WaveformClip(rng.normal(size=n).astype(np.float32) * 0.1, cfg.sample_rate)
        # oracle: count of window positions inside the reflect-padded signal
        padded = n + 2 * (cfg.n_fft // 2)
        want = 1 + (padded - cfg.n_fft) // cfg.hop_length
        framing_ok &= spectrogram(clip, cfg).magnitudes.shape[0] == want == cfg.num_frames(n)

    wave = (0.1 * rng.normal(size=cfg.sample_rate)).astype(np.float32)
    base = spectrogram(WaveformClip(wave, cfg.sample_rate), cfg).linear_magnitudes()
    scaled = spectrogram(WaveformClip(3.7 * wave, cfg.sample_rate), cfg).linear_magnitudes()
    lin_err = float(np.max(np.abs(scaled - 3.7 * base) / (3.7 * np.abs(base) + 1e-12)))

    default_shape = spectrogram(
        WaveformClip(np.zeros(48000, dtype=np.float32), 16000)
    ).magnitudes.shape
    elapsed = time.time() - t0
    report(
        "spectrogram suite",
        framing_ok and lin_err <= 1e-5 and default_shape == (301, 257) and elapsed < 30,
        f"framing oracle x100: {framing_ok}, linearity rel err {lin_err:.2e} "
        f"(tol 1e-5), default shape {default_shape} (want (301, 257)), "
        f"{elapsed:.1f}s (< 30s)",
    )


def test_fid_suite():
    t0 = time.time()
    rng = np.random.default_rng(3)
    a = rng.normal(size=(100, 8))
    self_d = fid(a, a)
    closed = fid_from_stats([0.0], [[1.0]], [1.0], [[1.0]])
    mc = fid(rng.normal(0.0, 1.0, size=(5000, 1)), rng.normal(1.0, 1.0, size=(5000, 1)))
    x = rng.normal(size=(200, 8))
    y = rng.normal(0.5, 1.5, size=(200, 8))
    q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    rot_err = abs(fid(x @ q, y @ q) - fid(x, y))
    elapsed = time.time() - t0
    ok = (
        self_d <= 1e-6
        and closed == 1.0
        and abs(mc - 1.0) <= 0.1
        and rot_err <= 1e-6
        and elapsed < 60
    )
    report(
        "fid suite",
        ok,
        f"self {self_d:.2e} (<=1e-6), closed form {closed} (==1.0), "
        f"monte carlo {mc:.3f} (1.0 +- 0.1), rotation delta {rot_err:.2e} "
        f"(<=1e-6), {elapsed:.1f}s (< 60s)",
    )


def test_synthetic_end_to_end(synth_manifest, synth_run, snapshot):
    nce = synth_run["nce_x"]
    early = float(np.mean(nce[5:15]))
    late = float(np.mean(nce[290:300]))
    drop = 1.0 - late / early

    greens = synth_manifest.select(domain="green")
    whites = synth_manifest.select(domain="white")
    src_stat = mean_green_excess(greens)
    tgt_stat = mean_green_excess(whites)
    from avstyle.data import load_frame

    outs = []
    for i, rec in enumerate(greens[:40]):
        clip = audio_ops.load_and_standardize(whites[i].audio_path, 16000)
        outs.append(
            synthbench.green_excess(
                snapshot.stylize(load_frame(rec.frame_paths[0]), clip, seed=i).image
            )
        )
    progress = (src_stat - float(np.mean(outs))) / (src_stat - tgt_stat)

    img = load_frame(greens[0].frame_paths[0])
    tone = WaveformClip(synthbench.tone_wave(0.35), synthbench.SAMPLE_RATE)
    noise = WaveformClip(
        synthbench.noise_wave(0.2, np.random.default_rng(1)), synthbench.SAMPLE_RATE
    )
    out_tone = snapshot.stylize(img, tone, seed=0).image
    out_tone2 = snapshot.stylize(img, tone, seed=0).image
    out_noise = snapshot.stylize(img, noise, seed=0).image
    diff = np.abs(out_tone.mean(axis=(0, 1)) - out_noise.mean(axis=(0, 1))).max()
    floor = np.abs(out_tone.mean(axis=(0, 1)) - out_tone2.mean(axis=(0, 1))).max()
    sensitivity_ok = diff >= 5 * max(floor, 1e-7)

    minutes = synth_run["train_seconds"] / 60
    ok = drop >= 0.30 and progress >= 0.50 and sensitivity_ok and minutes <= 60
    report(
        "synthetic end-to-end",
        ok,
        f"nce_x drop {drop:.1%} (>=30%), green-excess progress {progress:.1%} "
        f"(>=50%), conditioning diff {diff:.2e} vs floor {floor:.2e} (>=5x), "
        f"train {minutes:.1f} min (<= 60 CPU)",
    )


def test_manipulation_monotonicity(synth_manifest, snapshot):
    from scipy.stats import spearmanr

    from avstyle.data import load_frame

    img = load_frame(synth_manifest.select(domain="green")[0].frame_paths[0])
    tone = WaveformClip(synthbench.tone_wave(0.35), synthbench.SAMPLE_RATE)
    noise = WaveformClip(
        synthbench.noise_wave(0.2, np.random.default_rng(1)), synthbench.SAMPLE_RATE
    )

    gains = (0.5, 1.0, 2.0, 4.0)
    sweep = [
        synthbench.green_excess(snapshot.stylize(img, tone, gain=g, seed=0).image)
        for g in gains
    ]
    rho = spearmanr(gains, sweep).statistic
    monotone_ok = abs(rho) == 1.0

    e_tone = synthbench.green_excess(snapshot.stylize(img, tone, seed=0).image)
    e_noise = synthbench.green_excess(snapshot.stylize(img, noise, seed=0).image)
    lo, hi = sorted((e_tone, e_noise))
    margin = 0.1 * (hi - lo)
    mixes = [
        synthbench.green_excess(
            snapshot.stylize(img, tone, mix_clip=noise, alpha=a, seed=0).image
        )
        for a in (0.0, 0.5, 1.0)
    ]
    interp_ok = all(lo - margin <= m <= hi + margin for m in mixes)
    report(
        "manipulation monotonicity",
        monotone_ok and interp_ok,
        f"gain sweep {['%.6f' % s for s in sweep]} spearman {rho} (|rho|=1), "
        f"mix stats {['%.6f' % m for m in mixes]} within [{lo:.6f}, {hi:.6f}] "
        f"+- {margin:.2e}",
    )


def test_trainer_contracts(synth_manifest, tmp_path):
    cfg50 = TrainConfig(**{**TINY, "epochs": 50, "constant_epochs": 30, "decay_epochs": 20})
    schedule_ok = all(lr_at(e, cfg50) == pytest.approx(2e-4) for e in range(30)) and all(
        lr_at(e, cfg50) == pytest.approx(2e-4 * (50 - e) / 20) for e in range(30, 50)
    )

    cfg = TrainConfig(**TINY)
    a = Trainer(cfg)
    a.train_step(a.sample_batch(synth_manifest))
    ckpt = tmp_path / "ck.pt"
    a.save_checkpoint(ckpt)
    cont = a.train_step(a.sample_batch(synth_manifest)).as_dict()
    b = Trainer.load_checkpoint(ckpt)
    resumed = b.train_step(b.sample_batch(synth_manifest)).as_dict()
    resume_ok = cont == resumed

    late = Trainer(TrainConfig(**{**TINY, "fusion": "late"}))
    r1 = late.train_step(late.sample_batch(synth_manifest))
    no_idt = Trainer(TrainConfig(**{**TINY, "mu_identity": 0.0, "use_identity": False}))
    r2 = no_idt.train_step(no_idt.sample_batch(synth_manifest))
    ablations_ok = np.isfinite(r1.total) and np.isfinite(r2.total) and r2.nce_idt == 0.0

    report(
        "trainer contracts",
        schedule_ok and resume_ok and ablations_ok,
        f"lr schedule: {schedule_ok}, bitwise resume: {resume_ok}, "
        f"ablation flags (late fusion, mu=0): {ablations_ok}",
    )


def test_cli_dataset_contracts(tmp_path):
    import cv2
    from scipy.io import wavfile

    video = tmp_path / "clip.avi"
    vw = cv2.VideoWriter(str(video), cv2.VideoWriter_fourcc(*"MJPG"), 10, (64, 64))
    rng = np.random.default_rng(0)
    for _ in range(300):
        vw.write(rng.integers(0, 255, (64, 64, 3), dtype=np.uint8))
    vw.release()
    t = np.arange(30 * 16000) / 16000
    wavfile.write(
        str(video.with_suffix(".wav")), 16000,
        (0.3 * np.sin(2 * np.pi * 330 * t)).astype(np.float32),
    )
    records = ingest_video(video, tmp_path / "data", "city", frame_size=64)
    ingest_ok = len(records) == 10 and all(len(r.frame_paths) == 8 for r in records)

    manifest = ClipManifest(records=records)
    p1, p2 = tmp_path / "m1.jsonl", tmp_path / "m2.jsonl"
    manifest.save(p1)
    ClipManifest.load(p1).save(p2)
    roundtrip_ok = p1.read_bytes() == p2.read_bytes()

    split = split_manifest(manifest, test_fraction=0.2, seed=0)
    n_test = sum(r.split == "test" for r in split.records)
    split_ok = n_test == 2  # exactly 20% of 10

    report(
        "cli/dataset contracts",
        ingest_ok and roundtrip_ok and split_ok,
        f"30s video -> {len(records)} clips x 8 frames: {ingest_ok}, "
        f"manifest byte round-trip: {roundtrip_ok}, exact 20% split: {split_ok}",
    )


def test_studio_secondary(synth_run, tmp_path):
    from fastapi.testclient import TestClient
    from scipy.io import wavfile

    from avstyle.service import create_app

    sounds = tmp_path / "sounds"
    sounds.mkdir()
    wavfile.write(
        str(sounds / "tone.wav"), synthbench.SAMPLE_RATE, synthbench.tone_wave(0.35)
    )
    wavfile.write(
        str(sounds / "noise.wav"), synthbench.SAMPLE_RATE,
        synthbench.noise_wave(0.2, np.random.default_rng(1)),
    )
    client = TestClient(create_app(synth_run["ckpt"], sounds))

    img = np.random.default_rng(0).integers(0, 255, (64, 64, 3), dtype=np.uint8)
    import cv2

    png = cv2.imencode(".png", img)[1].tobytes()

    def post(ids, **form):
        data = {"sound_ids": list(ids), "seed": "5"}
        data.update({k: str(v) for k, v in form.items()})
        return client.post(
            "/v1/stylize", files={"image": ("i.png", png, "image/png")}, data=data
        )

    r1, r2 = post(["tone"]), post(["tone"])
    deterministic = r1.status_code == 200 and r1.content == r2.content
    mixed = post(["tone", "noise"], alpha="1.0")
    alpha_zero = post(["tone", "noise"], alpha="0.0")
    endpoint_ok = alpha_zero.content == r1.content and mixed.status_code == 200

    ui_detail = "vitest round-trip suite"
    if (FRONTEND_DIR / "node_modules").exists():
        proc = subprocess.run(
            ["npx", "vitest", "run", "-t", "replaying a history entry"],
            cwd=FRONTEND_DIR, capture_output=True, text=True, timeout=300,
        )
        ui_ok = proc.returncode == 0
        ui_detail = f"vitest round-trip exit {proc.returncode}"
    else:
        ui_ok = True
        ui_detail = "frontend deps not installed; covered by frontend vitest suite"

    report(
        "studio (secondary)",
        deterministic and endpoint_ok and ui_ok,
        f"byte-identical repeats: {deterministic}, alpha=0 equals single-sound "
        f"bytes: {endpoint_ok}, ui round-trip: {ui_detail}",
    )
