import cv2
import numpy as np
import pytest
from fastapi.testclient import TestClient
from scipy.io import wavfile

from avstyle.service import SoundLibrary, create_app
from avstyle.training import TrainConfig, Trainer

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


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "model.pt"
    Trainer(TrainConfig(**TINY)).save_checkpoint(path)
    return path


@pytest.fixture(scope="module")
def sounds_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sounds")
    t = np.arange(16000) / 16000
    wavfile.write(str(d / "tone.wav"), 16000, (0.4 * np.sin(2 * np.pi * 220 * t)).astype(np.float32))
    rng = np.random.default_rng(0)
    wavfile.write(str(d / "rain.wav"), 16000, (0.2 * rng.standard_normal(16000)).astype(np.float32))
    return d


@pytest.fixture(scope="module")
def client(ckpt, sounds_dir):
    return TestClient(create_app(ckpt, sounds_dir))


def png_bytes(h=36, w=44, seed=0):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 255, (h, w, 3), dtype=np.uint8)
    ok, buf = cv2.imencode(".png", img)
    assert ok
    return buf.tobytes()


def post_stylize(client, sound_ids, image=None, **form):
    data = {"sound_ids": list(sound_ids)}
    data.update({k: str(v) for k, v in form.items()})
    return client.post(
        "/v1/stylize",
        files={"image": ("img.png", image or png_bytes(), "image/png")},
        data=data,
    )


class TestHealth:
    def test_ok(self, client):
        body = client.get("/v1/health").json()
        assert body["status"] == "ok"
        assert body["uptime"] >= 0.0

    def test_version_is_checkpoint_fingerprint(self, client, ckpt):
        import hashlib

        digest = hashlib.sha256(ckpt.read_bytes()).hexdigest()[:16]
        assert client.get("/v1/health").json()["model_version"] == f"{digest}-epoch0"

    def test_missing_checkpoint_refuses_to_boot(self, tmp_path):
        from avstyle.errors import CheckpointError

        with pytest.raises(CheckpointError):
            create_app(tmp_path / "nope.pt")


class TestSounds:
    def test_listing_sorted_by_id(self, client):
        body = client.get("/v1/sounds").json()
        assert [e["id"] for e in body] == ["rain", "tone"]
        assert all(e["duration"] == pytest.approx(1.0) for e in body)

    def test_empty_library(self, ckpt):
        app = create_app(ckpt, sounds_dir=None)
        assert TestClient(app).get("/v1/sounds").json() == []

    def test_duplicate_registration_conflicts(self, sounds_dir):
        lib = SoundLibrary(16000)
        lib.register("tone", sounds_dir / "tone.wav")
        with pytest.raises(KeyError, match="already registered"):
            lib.register("tone", sounds_dir / "rain.wav")


class TestStylize:
    def test_returns_png_same_size(self, client):
        r = post_stylize(client, ["tone"], seed=1)
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        img = cv2.imdecode(np.frombuffer(r.content, np.uint8), cv2.IMREAD_COLOR)
        assert img.shape == (36, 44, 3)
        assert r.headers["X-Applied-Gain"] == "1.0"
        assert r.headers["X-Applied-Alpha"] == ""
        assert r.headers["X-Model-Version"]

    def test_deterministic_repeat(self, client):
        a = post_stylize(client, ["tone"], gain=2.0, seed=5)
        b = post_stylize(client, ["tone"], gain=2.0, seed=5)
        assert a.status_code == b.status_code == 200
        assert a.content == b.content

    def test_two_sound_alpha_zero_equals_first_sound(self, client):
        single = post_stylize(client, ["tone"], seed=3)
        mixed = post_stylize(client, ["tone", "rain"], alpha=0.0, seed=3)
        assert mixed.status_code == 200
        assert mixed.content == single.content
        assert mixed.headers["X-Applied-Alpha"] == "0.0"

    def test_unknown_sound_404(self, client):
        r = post_stylize(client, ["thunder"])
        assert r.status_code == 404
        assert r.json()["field"] == "sound_ids"

    def test_bad_alpha_names_field(self, client):
        r = post_stylize(client, ["tone", "rain"], alpha=1.5)
        assert r.status_code == 422
        assert r.json()["field"] == "alpha"

    def test_negative_gain_names_field(self, client):
        r = post_stylize(client, ["tone"], gain=-1)
        assert r.status_code == 422
        assert r.json()["field"] == "gain"

    def test_three_sounds_rejected(self, client):
        r = post_stylize(client, ["tone", "rain", "tone"])
        assert r.status_code == 422
        assert r.json()["field"] == "sound_ids"

    def test_undecodable_image(self, client):
        r = post_stylize(client, ["tone"], image=b"not a png")
        assert r.status_code == 422
        assert r.json()["field"] == "image"

    def test_oversized_image_413(self, ckpt, sounds_dir):
        app = create_app(ckpt, sounds_dir, max_pixels=100)
        r = post_stylize(TestClient(app), ["tone"])
        assert r.status_code == 413
        assert r.json()["field"] == "image"

    def test_max_pixels_env(self, ckpt, sounds_dir, monkeypatch):
        monkeypatch.setenv("AVSTYLE_MAX_PIXELS", "100")
        app = create_app(ckpt, sounds_dir)
        assert post_stylize(TestClient(app), ["tone"]).status_code == 413
