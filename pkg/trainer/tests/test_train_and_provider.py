import json
import subprocess
import sys
import time

import numpy as np
import pytest
import torch

from dualsmoke_trainer.evaluate import eval_metrics, velocity_metrics
from dualsmoke_trainer.formats import load_manifest, read_mask, read_raster, write_raster
from dualsmoke_trainer.models import PatchDiscriminator, UNetGenerator
from dualsmoke_trainer.train import (
    TrainConfig,
    load_checkpoint,
    load_stage_arrays,
    train_stage,
)

OVERFIT_CONFIG = dict(epochs=200, batch=64, base_channels=16, seed=0)


@pytest.fixture(scope="session")
def overfit_checkpoints(toy_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt")
    t0 = time.time()
    ck_lcs = train_stage("lcs", toy_dataset, TrainConfig(**OVERFIT_CONFIG), out / "lcs.npz")
    ck_vf = train_stage("vf", toy_dataset, TrainConfig(**OVERFIT_CONFIG), out / "vf.npz")
    elapsed = time.time() - t0
    assert elapsed < 1800, f"overfit training took {elapsed:.0f}s, budget 30 min"
    return ck_lcs, ck_vf


class TestOverfit:
    def test_generator_l1_drops_80_percent(self, overfit_checkpoints):
        for ck in overfit_checkpoints:
            _, meta = load_checkpoint(ck)
            curve = meta["loss_curve"]["g_l1"]
            assert curve[-1] <= 0.2 * curve[0], (
                f"{meta['stage']}: L1 fell {curve[0]:.4f} -> {curve[-1]:.4f}, "
                "less than the required 80%"
            )

    def test_discriminator_beats_chance_on_untrained_generator(self, toy_dataset):
        rows = [r for r in load_manifest(toy_dataset) if r["split"] == "train"]
        inputs, targets, _ = load_stage_arrays(rows, "lcs")
        torch.manual_seed(0)
        gen = UNetGenerator(1, 1, base=8)
        disc = PatchDiscriminator(2, base=8)
        opt = torch.optim.Adam(disc.parameters(), lr=2e-4, betas=(0.5, 0.999))
        bce = torch.nn.BCEWithLogitsLoss()
        x = torch.from_numpy(inputs)
        y = torch.from_numpy(targets)
        with torch.no_grad():
            fake = gen(x)
        for _ in range(30):  # warmup on a frozen generator
            opt.zero_grad()
            lr_ = disc(x, y)
            lf_ = disc(x, fake)
            loss = 0.5 * (bce(lr_, torch.ones_like(lr_)) + bce(lf_, torch.zeros_like(lf_)))
            loss.backward()
            opt.step()
        with torch.no_grad():
            acc_real = (disc(x, y) > 0).float().mean()
            acc_fake = (disc(x, fake) < 0).float().mean()
        assert 0.5 * (acc_real + acc_fake) > 0.5

    def test_seeded_first_epoch_reproducible(self, toy_dataset, tmp_path):
        cfg = TrainConfig(epochs=1, batch=8, base_channels=8, seed=123)
        a = train_stage("lcs", toy_dataset, cfg, tmp_path / "a.npz")
        b = train_stage("lcs", toy_dataset, cfg, tmp_path / "b.npz")
        _, ma = load_checkpoint(a)
        _, mb = load_checkpoint(b)
        assert ma["loss_curve"] == mb["loss_curve"]

    def test_training_rejects_shape_mismatch(self, toy_dataset, tmp_path):
        rows = load_manifest(toy_dataset)
        # corrupt a copy of the manifest to point one sample at a wrong-size raster
        bad_dir = tmp_path / "bad"
        bad_dir.mkdir()
        write_raster(bad_dir / "wrong.dsfld", np.zeros((2, 16, 16)))
        bad_rows = []
        for r in rows:
            r = dict(r)
            r.pop("_base")
            bad_rows.append(r)
        bad_rows[0]["files"] = dict(bad_rows[0]["files"])
        bad_rows[0]["files"]["vf"] = "bad/wrong.dsfld"
        manifest = tmp_path / "manifest.jsonl"
        manifest.write_text("\n".join(json.dumps(r) for r in bad_rows))
        for rel in ("samples",):
            (tmp_path / rel).symlink_to(load_manifest(toy_dataset)[0]["_base"] + "/samples")
        from dualsmoke_trainer.formats import FormatError

        with pytest.raises(FormatError):
            train_stage("lcs", manifest, TrainConfig(epochs=1, batch=4))


class TestEvalMetrics:
    def test_identity_prediction(self):
        rng = np.random.default_rng(0)
        gt = rng.normal(size=(2, 32, 32))
        m = velocity_metrics(gt, gt)
        assert m["l1"] == 0.0 and m["l2"] == 0.0 and m["cosine"] == pytest.approx(1.0)

    def test_negated_prediction(self):
        rng = np.random.default_rng(1)
        gt = rng.normal(size=(2, 16, 16))
        m = velocity_metrics(-gt, gt)
        assert m["cosine"] == pytest.approx(-1.0)

    def test_mask_restriction(self):
        gt = np.zeros((2, 8, 8))
        pred = gt.copy()
        pred[:, :4, :] = 1.0  # error outside the mask only
        mask = np.zeros((8, 8), dtype=bool)
        mask[6:, :] = True
        m = velocity_metrics(pred, gt, mask)
        assert m["l1"] == 0.0

    def test_end_to_end_on_test_split(self, overfit_checkpoints, toy_dataset):
        ck_lcs, ck_vf = overfit_checkpoints
        metrics = eval_metrics(ck_lcs, ck_vf, toy_dataset, split="test")
        for key in ("l1", "l2", "cosine", "l1_lcs", "l2_lcs", "cosine_lcs"):
            assert np.isfinite(metrics[key]), key
        assert metrics["n_samples"] == 2


class TestProviderProtocol:
    def request_dir(self, tmp_path, toy_dataset, nx=64, ny=64):
        rows = load_manifest(toy_dataset)
        import shutil

        d = tmp_path / "req"
        d.mkdir()
        from dualsmoke_trainer.formats import sample_paths

        shutil.copy(sample_paths(rows[0])["sketch"], d / "sketch.png")
        (d / "request.json").write_text(
            json.dumps({"grid": [nx, ny], "sketch": "sketch.png", "want": ["lcs", "vf"]})
        )
        return d

    def test_serve_writes_valid_outputs(self, overfit_checkpoints, toy_dataset, tmp_path):
        ck_lcs, ck_vf = overfit_checkpoints
        d = self.request_dir(tmp_path, toy_dataset)
        from dualsmoke_trainer.provider import serve_request

        serve_request(ck_lcs, ck_vf, d)
        mask = read_mask(d / "lcs.png")
        assert mask.shape == (64, 64)
        assert mask.any()  # trained on its own sample: region present
        comps, dx = read_raster(d / "vf.dsfld")
        assert comps.shape == (2, 64, 64)
        assert np.all(np.isfinite(comps))

    def test_untrained_checkpoints_still_conform(self, toy_dataset, tmp_path):
        # format conformance must not depend on training quality
        cfg = TrainConfig(epochs=1, batch=8, base_channels=8, seed=5)
        ck_lcs = train_stage("lcs", toy_dataset, cfg, tmp_path / "l.npz")
        ck_vf = train_stage("vf", toy_dataset, cfg, tmp_path / "v.npz")
        d = self.request_dir(tmp_path, toy_dataset)
        from dualsmoke_trainer.provider import serve_request

        serve_request(ck_lcs, ck_vf, d)
        assert read_mask(d / "lcs.png").shape == (64, 64)
        comps, _ = read_raster(d / "vf.dsfld")
        assert np.all(np.isfinite(comps))

    def test_malformed_request_exits_nonzero(self, overfit_checkpoints, tmp_path):
        ck_lcs, ck_vf = overfit_checkpoints
        d = tmp_path / "broken"
        d.mkdir()
        (d / "request.json").write_text("{not json")
        from dualsmoke_trainer.provider import main as provider_main

        assert provider_main([str(ck_lcs), str(ck_vf), str(d)]) == 1
        assert provider_main([str(ck_lcs)]) == 2

    def test_cli_serve_through_simulator_validation(
        self, overfit_checkpoints, toy_dataset, tmp_path
    ):
        # integration: the simulator's provider client accepts this provider
        ck_lcs, ck_vf = overfit_checkpoints
        from dualsmoke.fields import GridSpec
        from dualsmoke.guide import SketchDoc, Stroke, external_guide

        doc = SketchDoc(
            GridSpec(64, 64),
            [Stroke("smoke", np.array([[32.5, 6.0], [32.5, 58.0]]), 3.0)],
        )
        command = (
            f"{sys.executable} -m dualsmoke_trainer.cli serve --lcs {ck_lcs} --vf {ck_vf}"
        )
        guide = external_guide(doc, command, timeout=120.0)
        assert guide.provenance.startswith("external:")
        assert guide.omega.count() > 0
        assert guide.u_g.spec.shape == (64, 64)
