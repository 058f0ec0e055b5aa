"""Stage training: adversarial patch loss plus weighted reconstruction.

Stage "lcs" maps sketch rasters to region masks; stage "vf" maps region
masks to 2-channel velocity images. Velocity channels are min-max
normalized to [-1, 1] with the scale taken over the training set and stored
in the checkpoint, so inference can restore physical units.

Checkpoints are flat .npz tensor archives: parameters under gen/<name> and
disc/<name>, plus a JSON metadata blob (architecture, stage, normalization,
loss curve), so consumers need no pickled classes.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .formats import FormatError, load_manifest, read_mask, read_raster, read_sketch, sample_paths
from .models import PatchDiscriminator, UNetGenerator

STAGES = ("lcs", "vf")


@dataclass
class TrainConfig:
    batch: int = 64
    epochs: int = 100
    lr: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    l1_weight: float = 100.0
    base_channels: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.batch < 1 or self.epochs < 1 or self.lr <= 0 or self.l1_weight < 0:
            raise ValueError("training configuration values must be positive")


def _to_signed(img: np.ndarray) -> np.ndarray:
    """{0,1} or [0,1] image -> [-1,1]."""
    return img.astype(np.float32) * 2.0 - 1.0


def load_stage_arrays(manifest_rows, stage: str):
    """Stacked (inputs, targets) in [-1,1] plus the vf normalization scales."""
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}")
    sketches, masks, vels = [], [], []
    shape = None
    for row in manifest_rows:
        paths = sample_paths(row)
        sk = read_sketch(paths["sketch"])
        ms = read_mask(paths["lcs"])
        comps, _ = read_raster(paths["vf"])
        if comps.shape[0] != 2:
            raise FormatError(f"{paths['vf']}: expected a 2-component raster")
        if shape is None:
            shape = sk.shape
        if sk.shape != shape or ms.shape != shape or comps.shape[1:] != shape:
            raise FormatError(f"{row['id']}: sample shapes disagree with the manifest grid")
        sketches.append(sk)
        masks.append(ms)
        vels.append(comps)
    sketches = np.stack(sketches)[:, None].astype(np.float32)
    masks = np.stack(masks)[:, None].astype(np.float32)
    vels = np.stack(vels).astype(np.float32)
    # per-channel min-max over the set, degenerate channels pinned to span 1
    lo = vels.min(axis=(0, 2, 3))
    hi = vels.max(axis=(0, 2, 3))
    span = np.where(hi > lo, hi - lo, 1.0)
    norm = {"lo": lo.tolist(), "hi": hi.tolist()}
    vels_n = (vels - lo[None, :, None, None]) / span[None, :, None, None] * 2.0 - 1.0
    if stage == "lcs":
        return _to_signed(sketches), _to_signed(masks), norm
    return _to_signed(masks), vels_n, norm


def normalize_vf(comps: np.ndarray, norm: dict) -> np.ndarray:
    lo = np.asarray(norm["lo"], dtype=np.float32)
    hi = np.asarray(norm["hi"], dtype=np.float32)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (comps - lo[:, None, None]) / span[:, None, None] * 2.0 - 1.0


def denormalize_vf(img: np.ndarray, norm: dict) -> np.ndarray:
    lo = np.asarray(norm["lo"], dtype=np.float64)
    hi = np.asarray(norm["hi"], dtype=np.float64)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (img.astype(np.float64) + 1.0) / 2.0 * span[:, None, None] + lo[:, None, None]


def save_checkpoint(path, gen: UNetGenerator, disc: PatchDiscriminator | None, meta: dict):
    arrays = {}
    for name, tensor in gen.state_dict().items():
        arrays[f"gen/{name}"] = tensor.detach().cpu().numpy()
    meta = dict(meta)
    meta["gen_config"] = gen.config
    if disc is not None:
        for name, tensor in disc.state_dict().items():
            arrays[f"disc/{name}"] = tensor.detach().cpu().numpy()
        meta["disc_config"] = disc.config
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[UNetGenerator, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        gen = UNetGenerator(**meta["gen_config"])
        state = {
            name[len("gen/"):]: torch.from_numpy(data[name])
            for name in data.files
            if name.startswith("gen/")
        }
    gen.load_state_dict(state)
    gen.eval()
    return gen, meta


def train_stage(
    stage: str,
    manifest_path,
    config: TrainConfig | None = None,
    out_path=None,
) -> Path:
    """Train one stage on the manifest's train split; returns the checkpoint
    path. Loss curves ride along in the checkpoint metadata."""
    if config is None:
        config = TrainConfig()
    rows = [r for r in load_manifest(manifest_path) if r.get("split", "train") == "train"]
    if not rows:
        raise FormatError("manifest has no train rows")
    inputs, targets, norm = load_stage_arrays(rows, stage)
    n = len(inputs)
    batch = min(config.batch, n)

    torch.manual_seed(config.seed)
    gen = UNetGenerator(inputs.shape[1], targets.shape[1], base=config.base_channels)
    disc = PatchDiscriminator(inputs.shape[1] + targets.shape[1], base=config.base_channels)
    opt_g = torch.optim.Adam(gen.parameters(), lr=config.lr, betas=config.betas)
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr, betas=config.betas)
    bce = nn.BCEWithLogitsLoss()
    l1 = nn.L1Loss()

    x = torch.from_numpy(inputs)
    y = torch.from_numpy(targets)
    rng = torch.Generator().manual_seed(config.seed)
    curve = {"g_adv": [], "g_l1": [], "d": []}
    for epoch in range(config.epochs):
        perm = torch.randperm(n, generator=rng)
        g_adv_sum = g_l1_sum = d_sum = 0.0
        nb = 0
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            xb, yb = x[idx], y[idx]
            fake = gen(xb)
            # discriminator
            opt_d.zero_grad()
            logits_real = disc(xb, yb)
            logits_fake = disc(xb, fake.detach())
            loss_d = 0.5 * (
                bce(logits_real, torch.ones_like(logits_real))
                + bce(logits_fake, torch.zeros_like(logits_fake))
            )
            loss_d.backward()
            opt_d.step()
            # generator
            opt_g.zero_grad()
            logits = disc(xb, fake)
            loss_adv = bce(logits, torch.ones_like(logits))
            loss_l1 = l1(fake, yb)
            loss_g = loss_adv + config.l1_weight * loss_l1
            loss_g.backward()
            opt_g.step()
            if not (torch.isfinite(loss_g) and torch.isfinite(loss_d)):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}: g={loss_g.item()} d={loss_d.item()}"
                )
            g_adv_sum += float(loss_adv)
            g_l1_sum += float(loss_l1)
            d_sum += float(loss_d)
            nb += 1
        curve["g_adv"].append(g_adv_sum / nb)
        curve["g_l1"].append(g_l1_sum / nb)
        curve["d"].append(d_sum / nb)

    if out_path is None:
        out_path = Path(manifest_path).parent / f"checkpoint_{stage}.npz"
    out_path = Path(out_path)
    meta = {
        "stage": stage,
        "config": asdict(config),
        "norm": norm,
        "loss_curve": curve,
        "n_train": n,
        "image_size": list(inputs.shape[2:]),
    }
    save_checkpoint(out_path, gen, disc, meta)
    return out_path
