"""Guide-provider protocol endpoint.

Invoked with a request directory containing request.json and sketch.png;
runs both generator stages and writes lcs.png (mask) and vf.dsfld (velocity
at cell centers, physical units restored from the checkpoint scales). Any
protocol violation exits non-zero.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
import torch

from .formats import read_sketch, write_mask, write_raster
from .train import denormalize_vf, load_checkpoint


def serve_request(ckpt_lcs, ckpt_vf, request_dir) -> None:
    workdir = Path(request_dir)
    request = json.loads((workdir / "request.json").read_text())
    nx, ny = (int(v) for v in request["grid"])
    sketch_path = workdir / request.get("sketch", "sketch.png")
    sketch = read_sketch(sketch_path)
    if sketch.shape != (ny, nx):
        raise ValueError(f"sketch is {sketch.shape}, request grid says {(ny, nx)}")

    gen_lcs, meta_lcs = load_checkpoint(ckpt_lcs)
    gen_vf, meta_vf = load_checkpoint(ckpt_vf)
    x = torch.from_numpy(sketch.astype(np.float32)[None, None] * 2 - 1)
    with torch.no_grad():
        lcs_img = gen_lcs(x)
        vf_img = gen_vf(torch.sign(lcs_img))
    mask = lcs_img[0, 0].numpy() > 0.0
    if not mask.any():
        # guarantee a usable region: keep the sketch strokes themselves
        mask = sketch.copy()
    want = request.get("want", ["lcs", "vf"])
    if "lcs" in want:
        write_mask(workdir / "lcs.png", mask)
    if "vf" in want:
        comps = denormalize_vf(vf_img[0].numpy(), meta_vf["norm"])
        write_raster(workdir / "vf.dsfld", comps, dx=1.0)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 3:
        print("usage: provider <checkpoint_lcs> <checkpoint_vf> <request_dir>", file=sys.stderr)
        return 2
    try:
        serve_request(argv[0], argv[1], argv[2])
    except Exception as e:
        print(f"provider error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
