"""Acceptance suite: one test per primary criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines and
timings as they happen.
"""

import json
import math
import time
import tracemalloc
from contextlib import contextmanager

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from phantomforge.api import create_app
from phantomforge.catalog import Catalog
from phantomforge.cli import main as cli_main
from phantomforge.config import PipelineConfig
from phantomforge.dip import dip_pvalue, dip_statistic
from phantomforge.gmm import gmm_fit_em
from phantomforge.grid import VoxelGrid
from phantomforge.meshing import (
    TriangleMesh,
    check_watertight,
    euler_characteristic,
    laplacian_smooth,
    marching_cubes,
    mesh_volume,
)
from phantomforge.qc import statistical_check, symmetry_check
from phantomforge.seeds import derive_seed
from phantomforge.synthetic import generate_cohort, generate_cohort_catalog
from phantomforge.taxonomy import load_taxonomy
from phantomforge.volume_model import fit_volume_model, outlier_probability
from phantomforge.volumetry import VolumeTable, dice, structure_volumes, zero_volume_fraction
from phantomforge.voxelize import GridTemplate, voxelize_mesh

from conftest import grid_from_array, sphere_mask


@contextmanager
def criterion(name: str):
    t0 = time.time()
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL ({time.time() - t0:.1f}s)")
        raise
    print(f"\nACCEPTANCE {name}: PASS ({time.time() - t0:.1f}s)")


# --------------------------------------------------------------- criterion 1
def test_synthetic_funnel(tmp_path):
    with criterion("synthetic-funnel"):
        catalog, truth = generate_cohort_catalog(tmp_path / "cat", n_scans=200)
        runner = CliRunner()

        t0 = time.time()
        r = runner.invoke(cli_main, ["qc", "run", "--catalog", str(catalog.root)])
        qc_seconds = time.time() - t0
        assert r.exit_code == 0, r.output
        assert qc_seconds < 60.0, f"qc run took {qc_seconds:.1f}s"

        first_funnel = (catalog.root / "funnel.json").read_bytes()
        first_qc = {
            str(p): p.read_bytes() for p in sorted(catalog.root.rglob("qc.json"))
        }

        funnel = json.loads(first_funnel)
        stages = {s["name"]: s for s in funnel["stages"]}
        assert stages["symmetry"]["rejected"] == 5
        assert stages["symmetry"]["rejected_ids"] == sorted(truth.symmetry_scans)
        assert stages["zero_volume"]["rejected"] == 4
        assert stages["zero_volume"]["rejected_ids"] == sorted(truth.truncation_scans)
        assert stages["statistical"]["rejected"] == 3
        assert stages["statistical"]["rejected_ids"] == sorted(truth.outlier_scans)

        # deterministic across re-runs and across --jobs values
        for jobs in ("1", "4"):
            r = runner.invoke(
                cli_main, ["qc", "run", "--catalog", str(catalog.root), "--jobs", jobs]
            )
            assert r.exit_code == 0
            assert (catalog.root / "funnel.json").read_bytes() == first_funnel
            again = {
                str(p): p.read_bytes() for p in sorted(catalog.root.rglob("qc.json"))
            }
            assert again == first_qc

        # approve everything pending; dedup must keep exactly one accepted
        # scan per duplicated patient
        cat = Catalog.load(catalog.root)
        for item in cat.pending_reviews():
            cat.submit_review(item["scan_id"], "approved", 4, "dr_acceptance")
        for pid, scan_ids in truth.duplicate_patients.items():
            accepted = [
                s for s in scan_ids if cat.outcomes[s].final_status == "accepted"
            ]
            superseded = [
                s
                for s in scan_ids
                if cat.outcomes[s].final_status == "superseded_duplicate"
            ]
            assert len(accepted) == 1 and len(superseded) == 1, (pid, scan_ids)


# --------------------------------------------------------------- criterion 2
def test_threshold_boundary_semantics():
    with criterion("threshold-boundaries"):
        # bilateral relative difference: 0.50 passes, 0.51 fails
        vt = VolumeTable({1: 100.0, 2: 50.0}, {}, {}, 0, (1, 1, 1), (1, 1, 1))
        assert symmetry_check(vt, [(1, 2)]).discrepant_pairs == []
        vt = VolumeTable({1: 100.0, 2: 49.0}, {}, {}, 0, (1, 1, 1), (1, 1, 1))
        assert len(symmetry_check(vt, [(1, 2)]).discrepant_pairs) == 1

        # zero-volume fraction: 35/140 passes, 36/140 fails (strict > 0.25)
        expected = set(range(1, 141))
        for zeros, should_fail in ((35, False), (36, True)):
            vols = {i: (0.0 if i <= zeros else 1.0) for i in expected}
            table = VolumeTable(vols, {}, {}, 0, (1, 1, 1), (1, 1, 1))
            frac = zero_volume_fraction(table, expected)
            assert (frac > 0.25) == should_fail, (zeros, frac)

        # flagged organs: 2 pass, 3 fail (strict "more than two")
        trio = (100, 101, 10)
        assert statistical_check({1: 0.95, 2: 0.95}, trio).passed
        assert not statistical_check({1: 0.95, 2: 0.95, 3: 0.91}, trio).passed

        # age: 14.0 passes, 13.9 rejected (strict "less than 14")
        from phantomforge.qc import run_qc_pipeline
        from phantomforge.synthetic import fixture_config

        scans, _, _ = generate_cohort(
            n_scans=30, seed=31, n_duplicate_patients=0, n_symmetry_defects=0,
            n_truncations=0, n_triple_outliers=0,
        )
        scans[0].age_years = 13.9
        scans[1].age_years = 14.0
        res = run_qc_pipeline(scans, load_taxonomy(), fixture_config(), jobs=1)
        assert res.outcomes[scans[0].scan_id].final_status == "rejected_age"
        assert res.outcomes[scans[1].scan_id].final_status != "rejected_age"


# --------------------------------------------------------------- criterion 3
def test_dip_calibration():
    """Faithful to the stated criterion.  The uniform-null bootstrap is
    the spec's own p-value definition; it is conservative for peaked
    unimodal data, so the [0.03, 0.07] window and the 4-sigma/95% power
    figure are not attainable (see the decisions ledger).  The assertions
    below state the criterion as written and report the measured rates.
    """
    with criterion("dip-calibration"):
        t0 = time.time()
        null_seed = 1234

        rng = np.random.default_rng(20240809)
        rejections = 0
        trials = 1000
        for _ in range(trials):
            xs = np.sort(rng.normal(0.0, 1.0, 50))
            p = dip_pvalue(dip_statistic(xs), 50, 2000, seed=null_seed)
            rejections += p < 0.05
        rate = rejections / trials

        detected = 0
        two_cluster_trials = 200
        for k in range(two_cluster_trials):
            r = np.random.default_rng(5000 + k)
            modes = r.integers(0, 2, 100) * 4.0  # modes 4 robust-sigmas apart
            xs = np.sort(r.normal(0.0, 1.0, 100) + modes)
            p = dip_pvalue(dip_statistic(xs), 100, 2000, seed=null_seed)
            detected += p < 0.05
        power = detected / two_cluster_trials

        elapsed = time.time() - t0
        print(
            f"\n  measured: normal-sample rejection rate {rate:.4f} "
            f"(criterion window [0.03, 0.07]); "
            f"4-sigma two-cluster detection {power:.3f} (criterion >= 0.95); "
            f"runtime {elapsed:.1f}s (criterion < 300s)"
        )
        assert elapsed < 300.0
        assert 0.03 <= rate <= 0.07, (
            f"rejection rate {rate:.4f} outside [0.03, 0.07]: Hartigan's "
            "uniform-null calibration is conservative for normal samples"
        )
        assert power >= 0.95, (
            f"two-cluster detection {power:.3f} < 0.95 at 4 robust-sigma "
            "separation under the uniform-null bootstrap"
        )


# --------------------------------------------------------------- criterion 4
def test_gmm_em_recovery():
    with criterion("gmm-em"):
        rng = np.random.default_rng(42)
        xs = np.concatenate([rng.normal(100, 15, 250), rng.normal(300, 15, 250)])
        fit = gmm_fit_em(xs, 2)
        means = np.sort(fit.means)
        assert abs(means[0] - 100) <= 5 and abs(means[1] - 300) <= 5
        assert np.abs(fit.weights - 0.5).max() <= 0.05
        # per-iteration log-likelihood never decreases, across all trials
        for seed in range(30):
            r = np.random.default_rng(seed)
            n1 = int(r.integers(150, 350))
            sample = np.concatenate(
                [r.normal(100, 15, n1), r.normal(300, 15, 500 - n1)]
            )
            trial = gmm_fit_em(sample, 2)
            assert (np.diff(trial.ll_history) >= -1e-9).all(), f"seed {seed}"


# --------------------------------------------------------------- criterion 5
def test_outlier_probability_semantics():
    with criterion("outlier-probability"):
        from scipy.special import ndtri

        # symmetric quantile sample of a normal population
        n = 4001
        xs = 30 + 5 * ndtri((np.arange(n) + 0.5) / n)
        model = fit_volume_model(xs, 86, dip_seed=1, mc_seed=2)
        up = model.unimodal_params
        assert outlier_probability(model, up.median) == 0.0
        fence = up.q3 + 1.5 * (up.q3 - up.q1)
        expected = 2 * 0.5 * (1 + math.erf(2.698 / math.sqrt(2))) - 1
        assert abs(outlier_probability(model, fence) - expected) <= 1e-3
        assert abs(expected - 0.9930) <= 1e-3

        # organ absent in exactly 16% of the cohort: 0.84 +/- 0.01, no flag
        vols = np.array(xs)
        vols[: int(0.16 * n + 0.5)] = 0.0
        gall = fit_volume_model(vols, 86, dip_seed=1, mc_seed=2)
        p_zero = outlier_probability(gall, 0.0)
        assert abs(p_zero - 0.84) <= 0.01
        assert p_zero <= 0.9

        # scale equivariance within 1e-6 for both model kinds
        c = 3.7
        rng = np.random.default_rng(21)
        bimix = np.concatenate([rng.normal(100, 8, 150), rng.normal(260, 8, 150)])
        for samples, sid in ((xs, 86), (bimix, 105)):
            base = fit_volume_model(samples, sid, dip_seed=1, mc_seed=2)
            scaled = fit_volume_model(samples * c, sid, dip_seed=1, mc_seed=2)
            for q in (0.05, 0.25, 0.5, 0.9, 0.999):
                x = float(np.quantile(samples, q))
                assert abs(
                    outlier_probability(base, x) - outlier_probability(scaled, x * c)
                ) < 1e-6


# --------------------------------------------------------------- criterion 6
def test_geometry():
    with criterion("geometry"):
        # single voxel -> exact analytic octahedron
        arr = np.zeros((3, 3, 3), dtype=np.uint16)
        arr[1, 1, 1] = 1
        octa = marching_cubes(grid_from_array(arr))
        assert octa.n_vertices == 6
        assert mesh_volume(octa) == 1 / 6
        assert check_watertight(octa).watertight
        assert euler_characteristic(octa) == 2

        # sphere r=20: volume within 2% of analytic
        sphere = sphere_mask(20, 45)
        smesh = marching_cubes(sphere)
        assert mesh_volume(smesh) == pytest.approx(4 / 3 * np.pi * 20**3, rel=0.02)
        assert check_watertight(smesh).watertight

        # lambda = 0 smoothing is bit-identical
        frozen = laplacian_smooth(smesh, 0.0, 20)
        assert np.array_equal(frozen.vertices, smesh.vertices)

        # regular tetrahedron, lambda=1, one step: centroid distances x 1/3
        tv = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
        tt = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
        tet = TriangleMesh(tv, tt)
        out = laplacian_smooth(tet, 1.0, 1)
        centroid = tv.mean(axis=0)
        ratio = np.linalg.norm(out.vertices - centroid, axis=1) / np.linalg.norm(
            tv - centroid, axis=1
        )
        assert np.allclose(ratio, 1 / 3, rtol=1e-12)

        # voxelize(marching_cubes(.)) round trips
        back = voxelize_mesh(smesh, GridTemplate.like(sphere))
        assert dice(sphere, back) >= 0.98

        rng = np.random.default_rng(11)
        gx, gy, gz = np.meshgrid(*(np.arange(24),) * 3, indexing="ij")
        for k in range(20):
            blob = np.zeros((24, 24, 24))
            for _ in range(4):
                cx, cy, cz = rng.uniform(6, 18, 3)
                rr = rng.uniform(3, 7)
                blob += (gx - cx) ** 2 + (gy - cy) ** 2 + (gz - cz) ** 2 <= rr * rr
            mask = grid_from_array((blob > 0).astype(np.uint16))
            mesh = marching_cubes(mask)
            assert check_watertight(mesh).watertight, f"blob {k}"
            assert dice(mask, voxelize_mesh(mesh, GridTemplate.like(mask))) >= 0.95


# --------------------------------------------------------------- criterion 7
def test_performance():
    with criterion("performance"):
        tax = load_taxonomy()
        nx, ny, nz = 512, 512, 256
        rng = np.random.default_rng(0)
        tile = rng.integers(0, 141, nx * ny).astype(np.uint16)
        grid = VoxelGrid((nx, ny, nz), (1.0, 1.0, 1.0), (0, 0, 0), np.tile(tile, nz))

        tracemalloc.start()
        t0 = time.time()
        vt = structure_volumes(grid, tax)
        volumetry_s = time.time() - t0
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        assert volumetry_s < 10.0, f"volumetry took {volumetry_s:.2f}s"
        # O(slice) working memory: a z-slice is 0.5 MB, the label tally
        # 0.5 MB; 16 MB covers both plus allocator noise, far under the
        # 134 MB grid
        assert peak < 16e6, f"peak extra memory {peak / 1e6:.1f} MB"
        assert vt.counts[1] == int((tile == 1).sum()) * nz

        sphere = sphere_mask(20, 45)
        t0 = time.time()
        mesh = marching_cubes(sphere)
        smoothed = laplacian_smooth(mesh, 0.5, 20)
        mesh_s = time.time() - t0
        assert mesh_s < 5.0, f"marching cubes + smoothing took {mesh_s:.2f}s"
        assert smoothed.n_triangles == mesh.n_triangles


# --------------------------------------------------------------- criterion 8
def test_persistence_and_api(tmp_path, synthetic_catalog):
    with criterion("persistence-api"):
        # event-log replay reproduces final statuses exactly
        catalog, _ = generate_cohort_catalog(
            tmp_path / "replay",
            n_scans=30,
            seed=91,
            n_duplicate_patients=2,
            n_symmetry_defects=1,
            n_truncations=1,
            n_triple_outliers=1,
        )
        catalog.run_qc(jobs=1)
        verdicts = ["approved", "flagged", "rejected"]
        for k, item in enumerate(catalog.pending_reviews()):
            catalog.submit_review(
                item["scan_id"], verdicts[k % 3], 1 + k % 5, "dr_replay", notes=f"n{k}"
            )
        live = {sid: o.to_json() for sid, o in catalog.outcomes.items()}
        replayed = {
            sid: o.to_json() for sid, o in Catalog.load(catalog.root).outcomes.items()
        }
        assert replayed == live

        # every documented endpoint answers with schema-valid JSON
        cat, truth = synthetic_catalog
        client = TestClient(create_app(cat))
        pid = cat.accepted_scan_ids()[0]

        r = client.get("/api/phantoms")
        assert r.status_code == 200 and {"count", "phantoms"} <= set(r.json())
        man = r.json()["phantoms"][0]
        assert {"phantom_id", "patient", "structures", "qc"} <= set(man)

        r = client.get(f"/api/phantoms/{pid}")
        assert r.status_code == 200 and r.json()["phantom_id"] == pid

        r = client.get(f"/api/phantoms/{pid}/preview/x.png")
        assert r.status_code == 200 and r.content[:4] == b"\x89PNG"

        r = client.get("/api/reviews/pending")
        assert r.status_code == 200 and "pending" in r.json()

        r = client.post(f"/api/reviews/{pid}", json={"verdict": "approved", "rating": 3})
        assert r.status_code == 409 and set(r.json()) == {"error", "message"}

        r = client.get("/api/stats/demographics")
        assert r.status_code == 200
        assert {"n_phantoms", "sex_counts", "age_histogram_by_race",
                "height_weight_histogram", "volume_stats"} <= set(r.json())

        r = client.get("/api/stats/volumes")
        assert r.status_code == 200 and "volumes" in r.json()

        r = client.get("/api/qc/funnel")
        assert r.status_code == 200
        assert [s["name"] for s in r.json()["stages"]] == [
            "age", "symmetry", "zero_volume", "statistical", "review", "dedup"
        ]

        # the primary suite runs without any secondary component: nothing
        # in this package imports from or requires the frontend build
        import phantomforge

        assert not any("frontend" in m for m in dir(phantomforge))
