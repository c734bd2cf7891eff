import io
import json
import subprocess
import sys

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from dccf.image import Mask, RgbImage, psnr
from dccf.imaging_io import encode_png, to_uint8
from dccf.resample import downsample_area
from dccf.service.app import create_app

from conftest import disk_mask, textured_image


def png_bytes(arr: np.ndarray) -> bytes:
    return encode_png(to_uint8(arr))


def decode_png(raw: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(raw)) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


@pytest.fixture(scope="module")
def assets():
    rng = np.random.default_rng(5)
    gt = textured_image(rng, 64, 64)
    mask = disk_mask(64, 64)
    from dccf.optimizer import synth_perturb

    comp = synth_perturb(gt, mask, theta=np.deg2rad(28), sigma=0.3, gamma=1.25)
    return {
        "composite": png_bytes(comp.data),
        "mask": png_bytes(mask.data),
        "gt": png_bytes(gt.data),
        "mask_arr": mask,
    }


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "sessions")
    with TestClient(app) as c:
        yield c


def make_session(client, assets, with_gt=True):
    files = {
        "composite": ("composite.png", assets["composite"], "image/png"),
        "mask": ("mask.png", assets["mask"], "image/png"),
    }
    if with_gt:
        files["gt"] = ("gt.png", assets["gt"], "image/png")
    resp = client.post("/sessions", files=files)
    assert resp.status_code == 201, resp.text
    return resp.json()["id"]


def run_fit(client, sid, iters=30, grid=8):
    resp = client.post(f"/sessions/{sid}/fit", json={"grid": grid, "iters": iters, "mode": "smooth"})
    assert resp.status_code == 200, resp.text
    return resp.json()


class TestSessionCreation:
    def test_create_returns_id(self, client, assets):
        sid = make_session(client, assets)
        info = client.get(f"/sessions/{sid}").json()
        assert info["has_gt"] and not info["fitted"]
        assert info["width"] == 64 and info["height"] == 64

    def test_missing_mask_is_400(self, client, assets):
        resp = client.post(
            "/sessions",
            files={"composite": ("c.png", assets["composite"], "image/png")},
        )
        assert resp.status_code == 400
        assert resp.json()["code"] == 400

    def test_mismatched_dims_is_400(self, client, assets):
        small_mask = png_bytes(np.ones((16, 16)))
        resp = client.post(
            "/sessions",
            files={
                "composite": ("c.png", assets["composite"], "image/png"),
                "mask": ("m.png", small_mask, "image/png"),
            },
        )
        assert resp.status_code == 400

    def test_undecodable_is_400(self, client, assets):
        resp = client.post(
            "/sessions",
            files={
                "composite": ("c.png", b"not an image", "image/png"),
                "mask": ("m.png", assets["mask"], "image/png"),
            },
        )
        assert resp.status_code == 400


class TestFit:
    def test_unknown_session_is_404(self, client):
        resp = client.post("/sessions/zzz/fit", json={})
        assert resp.status_code == 404

    def test_no_gt_is_422(self, client, assets):
        sid = make_session(client, assets, with_gt=False)
        resp = client.post(f"/sessions/{sid}/fit", json={})
        assert resp.status_code == 422

    def test_fit_returns_report(self, client, assets):
        sid = make_session(client, assets)
        report = run_fit(client, sid)
        assert set(report) == {"final_mse", "final_psnr", "iterations", "wall_time_s", "loss_history"}
        assert report["iterations"] == 30
        info = client.get(f"/sessions/{sid}").json()
        assert info["fitted"]


class TestPreviewAdjustExport:
    def test_preview_requires_fit(self, client, assets):
        sid = make_session(client, assets)
        assert client.get(f"/sessions/{sid}/preview?stage=4").status_code == 409

    def test_preview_stage_range(self, client, assets):
        sid = make_session(client, assets)
        run_fit(client, sid)
        assert client.get(f"/sessions/{sid}/preview?stage=0").status_code == 400
        assert client.get(f"/sessions/{sid}/preview?stage=5").status_code == 400
        for stage in (1, 2, 3, 4):
            resp = client.get(f"/sessions/{sid}/preview?stage={stage}")
            assert resp.status_code == 200
            assert resp.headers["content-type"] == "image/png"
            decode_png(resp.content)  # valid PNG

    def test_zero_alpha_adjust_matches_preview(self, client, assets):
        sid = make_session(client, assets)
        run_fit(client, sid)
        plain = client.get(f"/sessions/{sid}/preview?stage=4").content
        adjusted = client.post(
            f"/sessions/{sid}/adjust",
            json={"hue": {"theta": 120.0, "alpha": 0.0}, "sat": {"sigma": 0.5, "alpha": 0.0}},
        )
        assert adjusted.status_code == 200
        assert adjusted.content == plain

    def test_adjust_repeatable(self, client, assets):
        sid = make_session(client, assets)
        run_fit(client, sid)
        body = {"hue": {"theta": 90.0, "alpha": 0.7}}
        a = client.post(f"/sessions/{sid}/adjust", json=body).content
        b = client.post(f"/sessions/{sid}/adjust", json=body).content
        assert a == b

    def test_out_of_range_alpha_is_400(self, client, assets):
        sid = make_session(client, assets)
        run_fit(client, sid)
        resp = client.post(
            f"/sessions/{sid}/adjust", json={"hue": {"theta": 90.0, "alpha": 2.0}}
        )
        assert resp.status_code == 400

    def test_export_requires_fit(self, client, assets):
        sid = make_session(client, assets)
        assert client.get(f"/sessions/{sid}/export").status_code == 409
        assert client.get("/sessions/zzz/export").status_code == 404

    def test_export_matches_cli_path(self, client, assets, tmp_path):
        sid = make_session(client, assets)
        run_fit(client, sid)
        body = {"hue": {"theta": 45.0, "alpha": 0.4}, "sat": {"sigma": 0.2, "alpha": 0.3}}
        assert client.post(f"/sessions/{sid}/adjust", json=body).status_code == 200
        export = client.get(f"/sessions/{sid}/export")
        assert export.status_code == 200

        store = client.app.state.store
        session_dir = store.get(sid).directory
        out = tmp_path / "cli_adjusted.png"
        r = subprocess.run(
            [
                sys.executable, "-m", "dccf.cli", "adjust",
                str(session_dir / "composite.png"), str(session_dir / "stack.dccf"),
                "--hue-theta", "45.0", "--hue-alpha", "0.4",
                "--sat-sigma", "0.2", "--sat-alpha", "0.3",
                "--out", str(out),
            ],
            capture_output=True, text=True,
        )
        assert r.returncode == 0, r.stderr
        assert out.read_bytes() == export.content

    def test_preview_tracks_export(self, client, assets):
        # preview resolution equals working resolution here (64 < 512), so the
        # two rendering paths must agree to quantization
        sid = make_session(client, assets)
        run_fit(client, sid)
        preview = decode_png(client.get(f"/sessions/{sid}/preview?stage=4").content)
        export = decode_png(client.get(f"/sessions/{sid}/export").content)
        assert psnr(RgbImage(preview), RgbImage(export)) >= 35.0


class TestPersistence:
    def test_sessions_survive_restart(self, assets, tmp_path):
        root = tmp_path / "sessions"
        app = create_app(root)
        with TestClient(app) as client:
            sid = make_session(client, assets)
            run_fit(client, sid)
            body = {"sat": {"sigma": -0.4, "alpha": 0.6}}
            before = client.post(f"/sessions/{sid}/adjust", json=body).content
            export_before = client.get(f"/sessions/{sid}/export").content

        app2 = create_app(root)
        with TestClient(app2) as client2:
            info = client2.get(f"/sessions/{sid}")
            assert info.status_code == 200
            assert info.json()["fitted"]
            assert info.json()["adjustments"]["sat"]["sigma"] == -0.4
            export_after = client2.get(f"/sessions/{sid}/export").content
            assert export_after == export_before
            again = client2.post(f"/sessions/{sid}/adjust", json=body).content
            assert again == before
