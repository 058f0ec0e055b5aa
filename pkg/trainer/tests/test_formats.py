import numpy as np
import pytest

from dualsmoke_trainer.formats import (
    FormatError,
    load_manifest,
    read_mask,
    read_raster,
    read_sketch,
    sample_paths,
    write_mask,
    write_raster,
)


class TestRasterCodec:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        comps = rng.normal(size=(2, 12, 16)).astype(np.float32).astype(np.float64)
        p = tmp_path / "v.dsfld"
        write_raster(p, comps, dx=0.5)
        back, dx = read_raster(p)
        assert dx == 0.5
        assert np.array_equal(back, comps)

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "x.dsfld"
        p.write_bytes(b"WRONG!!!" + b"\x00" * 32)
        with pytest.raises(FormatError):
            read_raster(p)

    def test_truncated_rejected(self, tmp_path):
        p = tmp_path / "t.dsfld"
        write_raster(p, np.zeros((1, 8, 8)))
        p.write_bytes(p.read_bytes()[:-5])
        with pytest.raises(FormatError):
            read_raster(p)

    def test_nonfinite_write_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            write_raster(tmp_path / "n.dsfld", np.full((1, 8, 8), np.nan))


class TestMaskCodec:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        mask = rng.random((10, 14)) > 0.5
        p = tmp_path / "m.png"
        write_mask(p, mask)
        assert np.array_equal(read_mask(p), mask)


class TestInterchangeWithSimulator(object):
    def test_reads_simulator_outputs(self, toy_dataset):
        rows = load_manifest(toy_dataset)
        assert len(rows) == 10
        assert {r["split"] for r in rows} == {"train", "test"}
        paths = sample_paths(rows[0])
        comps, dx = read_raster(paths["vf"])
        assert comps.shape == (2, 64, 64)
        mask = read_mask(paths["lcs"])
        sketch = read_sketch(paths["sketch"])
        assert mask.shape == (64, 64) and sketch.shape == (64, 64)
        assert sketch.any()
        assert not (sketch & ~mask).any()  # strokes live inside the region
