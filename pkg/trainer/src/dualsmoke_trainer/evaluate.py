"""Velocity-field comparison metrics: L1, L2 (mean squared), and global
cosine similarity of normalized fields, over the whole domain and restricted
to the region mask.

Reference magnitudes for a fully trained two-stage system at production
scale are around L1=0.071 and L2=0.011 on normalized fields; they are
documentation targets only, not thresholds toy-scale runs are expected to
reach."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .formats import FormatError, load_manifest, read_mask, read_raster, read_sketch, sample_paths
from .train import load_checkpoint, normalize_vf


def velocity_metrics(pred: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None) -> dict:
    """Metrics between two (2, ny, nx) normalized velocity images. With a
    mask, pixels outside it are ignored."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("prediction and target shapes differ")
    if mask is not None:
        sel = np.broadcast_to(mask[None], pred.shape)
        p = pred[sel]
        t = target[sel]
    else:
        p = pred.ravel()
        t = target.ravel()
    if p.size == 0:
        return {"l1": float("nan"), "l2": float("nan"), "cosine": float("nan")}
    l1 = float(np.abs(p - t).mean())
    l2 = float(((p - t) ** 2).mean())
    denom = float(np.linalg.norm(p) * np.linalg.norm(t))
    cosine = float(p @ t / denom) if denom > 0 else 1.0 if np.allclose(p, t) else 0.0
    return {"l1": l1, "l2": l2, "cosine": cosine}


def _infer(gen, arr: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        out = gen(torch.from_numpy(arr[None].astype(np.float32)))
    return out[0].numpy()


def eval_metrics(ckpt_lcs, ckpt_vf, manifest_path, split: str = "test") -> dict:
    """Two-stage inference over the manifest split, averaged Table-style
    metrics (whole domain and region-restricted)."""
    gen_lcs, meta_lcs = load_checkpoint(ckpt_lcs)
    gen_vf, meta_vf = load_checkpoint(ckpt_vf)
    rows = [r for r in load_manifest(manifest_path) if r.get("split") == split]
    if not rows:
        raise FormatError(f"manifest has no {split} rows")
    totals = {k: [] for k in ("l1", "l2", "cosine", "l1_lcs", "l2_lcs", "cosine_lcs")}
    for row in rows:
        paths = sample_paths(row)
        sketch = read_sketch(paths["sketch"]).astype(np.float32)[None] * 2 - 1
        gt_mask = read_mask(paths["lcs"])
        comps, _ = read_raster(paths["vf"])
        gt = normalize_vf(comps.astype(np.float32), meta_vf["norm"])
        lcs_img = _infer(gen_lcs, sketch)
        pred = _infer(gen_vf, np.sign(lcs_img))  # binarized region drives stage two
        full = velocity_metrics(pred, gt)
        region = velocity_metrics(pred, gt, gt_mask)
        for k in ("l1", "l2", "cosine"):
            totals[k].append(full[k])
            totals[f"{k}_lcs"].append(region[k])
    out = {k: float(np.mean(v)) for k, v in totals.items()}
    out["n_samples"] = len(rows)
    return out


def write_metrics(metrics: dict, path) -> None:
    Path(path).write_text(json.dumps(metrics, indent=2))
