"""Acceptance suite: one test per release criterion, each at its stated
tolerance and runtime budget. Run with `pytest tests/test_acceptance.py -v -s`
to see one PASS line per criterion.
"""

import hashlib
import io
import json
import time

import numpy as np
import pytest
from PIL import Image
from scipy.spatial import cKDTree
from skimage.measure import euler_number, label
from skimage.morphology import medial_axis
from starlette.testclient import TestClient

from flows import (
    brute_force_ftle,
    double_gyre_sequence,
    rotation_flow,
    saddle_flow,
    steady_sequence,
)

from dualsmoke.fields import GridSpec, MaskField, ScalarField, VelocityField
from dualsmoke.ftle import FtleParams, ftle_field
from dualsmoke.guide import SketchDoc, Stroke, baseline_guide
from dualsmoke.guided import GuidedParams, guided_step, guiding_force, tracking_error
from dualsmoke.lcs import LcsParams, extract_lcs, fit_gmm2
from dualsmoke.skeleton import synthetic_sketch
from dualsmoke.solver import (
    SimParams,
    SimState,
    advect_maccormack,
    advect_semi_lagrangian,
    divergence,
    project,
)


def report(name, start, budget):
    elapsed = time.time() - start
    print(f"\n[PASS] {name} ({elapsed:.1f}s, budget {budget:.0f}s)")
    assert elapsed < budget, f"{name}: runtime {elapsed:.1f}s exceeds budget {budget}s"


class TestAcceptance:
    def test_ftle_analytic_oracle(self):
        t0 = time.time()
        spec = GridSpec(128, 128)
        # saddle: sigma at the stagnation point equals the strain rate
        fu, fv = saddle_flow(0.5, 63.5, 63.5)
        f = ftle_field(steady_sequence(spec, fu, fv, 2.0), 0.0, FtleParams(T=2.0, substep_dt=0.01))
        assert f.values[63, 63] == pytest.approx(0.5, rel=0.02)
        # isometric flows: vanishing exponent everywhere
        for ux, uy in [(1.0, 0.0), (0.0, 0.7)]:
            seq = steady_sequence(
                spec, lambda x, y, t: ux + 0 * x, lambda x, y, t: uy + 0 * x, span=2.5
            )
            f = ftle_field(seq, 0.0, FtleParams(T=2.5, substep_dt=0.1))
            assert np.abs(f.values).max() <= 1e-4
        fu, fv = rotation_flow(0.01, 64.0, 64.0)
        f = ftle_field(steady_sequence(spec, fu, fv, 2.0), 0.0, FtleParams(T=2.0, substep_dt=0.05))
        assert np.abs(f.values).max() <= 1e-4
        report("FTLE analytic oracle (saddle 2%, isometries 1e-4)", t0, 30)

    def test_ftle_brute_force_equivalence(self):
        t0 = time.time()
        seq = double_gyre_sequence(n_cells=64, n_frames=151)
        mod = ftle_field(seq, 0.0, FtleParams(T=15.0, substep_dt=0.1)).values
        oracle = brute_force_ftle(seq, 0.0, 15.0, substep=0.01, spacing_cells=0.1)
        bound = 0.05 * np.abs(oracle).max()
        diff = np.abs(mod - oracle).max()
        assert diff <= bound, f"max abs diff {diff:.5f} > 5% bound {bound:.5f}"
        report(f"FTLE brute-force equivalence (diff {diff:.2e} <= {bound:.2e})", t0, 300)

    def test_projection(self):
        t0 = time.time()
        spec = GridSpec(32, 32)
        rng = np.random.default_rng(7)
        state = SimState.new(spec)
        state.vel = VelocityField(spec, rng.normal(size=(32, 33)), rng.normal(size=(33, 32)))
        obst = np.zeros(spec.shape, dtype=bool)
        obst[12:18, 14:20] = True
        state.obstacles = MaskField(spec, obst)
        project(state, SimParams(pressure_tol=1e-5))
        assert np.abs(divergence(state)[~obst]).max() <= 1e-4
        assert np.all(state.vel.u[12:18, 14] == 0.0) and np.all(state.vel.u[12:18, 20] == 0.0)
        assert np.all(state.vel.v[12, 14:20] == 0.0) and np.all(state.vel.v[18, 14:20] == 0.0)
        report("projection (div <= 1e-4, obstacle faces exactly 0)", t0, 1)

    def test_advection_bounds(self):
        t0 = time.time()
        from dualsmoke.solver import _backtrace, _lattice_lookup, _lattice_positions

        spec = GridSpec(16, 16)
        rng = np.random.default_rng(1)
        fld = ScalarField(spec, rng.normal(size=spec.shape))
        for k in range(1000):
            if k % 50 == 0:
                vel = VelocityField(
                    spec, rng.normal(size=(16, 17)) * 2, rng.normal(size=(17, 16)) * 2
                )
            lo, hi = fld.values.min(), fld.values.max()
            out = advect_semi_lagrangian(fld, vel, 0.1)
            assert out.values.min() >= lo - 1e-12 and out.values.max() <= hi + 1e-12
            mc = advect_maccormack(fld, vel, 0.1)
            pos = _backtrace(vel, _lattice_positions(spec, "cell"), 0.1)
            _, slo, shi = _lattice_lookup(fld.values, spec, "cell", pos, with_extrema=True)
            assert np.all(mc.values >= slo - 1e-12) and np.all(mc.values <= shi + 1e-12)
            fld = mc
        report("advection bounds (1000 steps, per-sample clamp)", t0, 30)

    def test_gmm_lcs(self):
        t0 = time.time()
        rng = np.random.default_rng(42)
        samples = np.concatenate(
            [rng.normal(0.1, 0.05, 2500), rng.normal(0.9, 0.05, 2500)]
        )
        model = fit_gmm2(samples, LcsParams(seed=0))
        assert model.threshold == pytest.approx(0.9, abs=0.05)
        # affine rescaling leaves the mask bit-identical
        noise = np.random.default_rng(21)
        vals = np.full((64, 64), 0.1) + noise.normal(0, 0.02, (64, 64))
        vals[32, :] = 0.9 + noise.normal(0, 0.02, 64)
        fld = ScalarField(GridSpec(64, 64), vals)
        base = extract_lcs(fld)
        for a, b in [(3.7, -1.2), (0.013, 40.0), (250.0, 0.6)]:
            scaled = extract_lcs(ScalarField(fld.spec, a * fld.values + b))
            assert np.array_equal(scaled.cells, base.cells)
        report("GMM/LCS (threshold within 0.05, affine-invariant mask)", t0, 10)

    def test_skeleton(self):
        t0 = time.time()

        def sym_hausdorff(a, b):
            pa, pb = np.argwhere(a), np.argwhere(b)
            return max(cKDTree(pb).query(pa)[0].max(), cKDTree(pa).query(pb)[0].max())

        # bar
        bar = np.zeros((16, 40), dtype=bool)
        bar[7:10, 4:36] = True
        sk = synthetic_sketch(MaskField(GridSpec(40, 16), bar))
        assert sym_hausdorff(sk.pixels, medial_axis(bar)) <= 2.0
        assert label(sk.pixels, connectivity=2).max() == 1
        # square: heat ridge = diagonals plus center cross; medial oracle
        # (diagonals) must be covered within 2 px
        sq = np.zeros((32, 32), dtype=bool)
        sq[6:26, 6:26] = True
        sk = synthetic_sketch(MaskField(GridSpec(32, 32), sq))
        oracle = medial_axis(sq)
        cover = cKDTree(np.argwhere(sk.pixels)).query(np.argwhere(oracle))[0].max()
        assert cover <= 2.0
        assert label(sk.pixels, connectivity=2).max() == 1
        # annulus: cycle preserved
        xs, ys = np.meshgrid(np.arange(40), np.arange(40))
        r2 = (xs - 19.5) ** 2 + (ys - 19.5) ** 2
        ring = (r2 <= 15**2) & (r2 >= 9**2)
        sk = synthetic_sketch(MaskField(GridSpec(40, 40), ring))
        assert sym_hausdorff(sk.pixels, medial_axis(ring)) <= 2.0
        assert label(sk.pixels, connectivity=2).max() == 1
        assert euler_number(sk.pixels, connectivity=2) == euler_number(ring, connectivity=2) == 0
        report("skeleton (Hausdorff <= 2 px, topology preserved)", t0, 10)

    def test_guiding_force(self):
        t0 = time.time()
        spec = GridSpec(16, 16)
        cells = np.zeros(spec.shape, dtype=bool)
        cells[4:12, 4:12] = True
        omega = MaskField(spec, cells)
        u_g = VelocityField(spec, np.full((16, 17), 0.2), np.zeros((17, 16)))
        u_s = VelocityField.zeros(spec)
        # F = 0 cases
        assert np.all(guiding_force(u_g, u_g, omega, 1.0, 0.1) == 0.0)
        assert np.all(guiding_force(u_g, u_s, omega, 0.0, 0.1) == 0.0)
        # direct arithmetic: c=1, dt=0.1, du=0.2 -> F=2.0 exactly
        f = guiding_force(u_g, u_s, omega, 1.0, 0.1)
        assert np.all(f[cells, 0] == pytest.approx(2.0, abs=0))
        assert np.all(f[~cells] == 0.0)
        # linearity in c, bit-exact
        rng = np.random.default_rng(3)
        u_r = VelocityField(spec, rng.normal(size=(16, 17)), rng.normal(size=(17, 16)))
        f1 = guiding_force(u_g, u_r, omega, 0.85, 0.1)
        f2 = guiding_force(u_g, u_r, omega, 1.7, 0.1)
        assert np.array_equal(f2, 2.0 * f1)
        # tracking-error monotonicity on the vertical-stroke scenario
        gspec = GridSpec(64, 64)
        doc = SketchDoc(gspec, [Stroke("smoke", np.array([[32.0, 6.0], [32.0, 58.0]]))])
        guide = baseline_guide(doc)
        errors = []
        for c in (0.25, 0.5, 1.0, 2.0, 4.0):
            state = SimState.new(gspec)
            src = np.zeros(gspec.shape, dtype=bool)
            src[1:3, 28:36] = True
            state.sources = MaskField(gspec, src)
            params = GuidedParams(c=c)
            tail = []
            for k in range(200):
                guided_step(state, guide, params)
                if k >= 150:
                    tail.append(tracking_error(state, guide))
            errors.append(float(np.mean(tail)))
        assert all(b <= a + 1e-12 for a, b in zip(errors, errors[1:])), errors
        report(f"guiding force (unit tests exact, errors monotone {np.round(errors, 4)})", t0, 120)

    def test_dataset_pipeline(self, tmp_path):
        t0 = time.time()
        from dualsmoke.dataset import (
            ScenarioConfig,
            build_dataset,
            load_manifest,
            run_scenario,
            verify_dataset,
        )

        template = ScenarioConfig(seed=0, grid=GridSpec(128, 128), frames=300)
        hashes = []
        manifests = []
        for run in ("r1", "r2"):
            m = build_dataset(4, 2, base_seed=9000, out_dir=tmp_path / run, template=template)
            rows = load_manifest(m)
            assert len(rows) == 6
            digest = {}
            for row in rows:
                for key, rel in row["files"].items():
                    digest[f"{row['id']}:{key}"] = hashlib.sha256(
                        (tmp_path / run / rel).read_bytes()
                    ).hexdigest()
            hashes.append(digest)
            manifests.append(m)
        assert hashes[0] == hashes[1], "two runs must produce identical file hashes"
        assert verify_dataset(manifests[0]) == []
        # backward window: 25 frames of dt=0.1 span T=2.5 at this scale too
        assert template.backward_frames * template.dt == pytest.approx(2.5)
        seq, _ = run_scenario(ScenarioConfig(seed=9000, grid=GridSpec(128, 128), frames=300))
        assert len(seq.frames) == 26
        assert seq.span == pytest.approx(2.5)
        report("dataset pipeline (deterministic hashes, verify, 25-frame window)", t0, 600)

    def test_service_scripted_session(self, tmp_path):
        t0 = time.time()
        from dualsmoke.service import create_app

        app = create_app(data_root=tmp_path, default_grid=(48, 48))

        def sketch_json(x):
            return json.dumps(
                {
                    "canvas": {"nx": 48, "ny": 48, "dx": 1.0},
                    "strokes": [
                        {"kind": "smoke", "points": [[x, 4.0], [x, 42.0]], "width": 3.0}
                    ],
                }
            )

        with TestClient(app) as client:
            sids = []
            for k in range(4):
                sid = client.post("/sessions").json()["id"]
                assert client.put(
                    f"/sessions/{sid}/sketch", content=sketch_json(10.5 + 8 * k)
                ).status_code == 200
                assert client.post(
                    f"/sessions/{sid}/guide", json={"provider": "baseline"}
                ).status_code == 200
                assert client.post(f"/sessions/{sid}/start").status_code == 200
                sids.append(sid)

            indices = {sid: [] for sid in sids}

            def pump(sid, upto, stride=10):
                # each long-poll returns the newest frame past `after`
                last = indices[sid][-1] if indices[sid] else -1
                while last < upto:
                    after = min(last + stride - 1, upto - 1)
                    r = client.get(f"/sessions/{sid}/frame", params={"after": after, "wait": 10.0})
                    assert r.status_code == 200
                    nxt = int(r.headers["X-Frame-Index"])
                    assert nxt > last
                    indices[sid].append(nxt)
                    last = nxt

            for sid in sids:
                pump(sid, 50)
                assert client.put(f"/sessions/{sid}/params", json={"c": 2.0}).status_code == 200
            for sid in sids:
                pump(sid, 100)
                st = client.get(f"/sessions/{sid}/status").json()
                assert st["c"] == 2.0
                seq = indices[sid]
                assert all(b > a for a, b in zip(seq, seq[1:])), "frame indices must increase"
            # save and reload the first session
            rid = client.post(f"/sessions/{sids[0]}/save").json()["record_id"]
            sid2 = client.post("/sessions", json={"from_record": rid}).json()["id"]
            st = client.get(f"/sessions/{sid2}/status").json()
            assert st["grid"] == [48, 48]
            # no cross-session interference: streams stayed per-session consistent
            frames_now = {
                sid: client.get(f"/sessions/{sid}/status").json()["frame"] for sid in sids
            }
            assert all(v >= 100 for v in frames_now.values())
        report("service scripted session (4 concurrent, monotone frames)", t0, 120)

    def test_paper_constants_defaults(self):
        t0 = time.time()
        from dualsmoke.config import DEFAULTS

        assert SimParams().dt == 0.1
        assert SimParams().alpha == 0.025
        assert FtleParams().tau == 0.1
        assert abs(FtleParams().T) == 2.5
        assert LcsParams().gaussian_sigma == 1.0
        assert GuidedParams().c == 1.0
        assert DEFAULTS["grid_nx"] == 256 and DEFAULTS["grid_ny"] == 256
        report("defaults wired (dt, alpha, tau, |T|, sigma, c, grid)", t0, 1)
