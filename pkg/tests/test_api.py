import pytest
from fastapi.testclient import TestClient

from phantomforge.api import create_app


@pytest.fixture(scope="module")
def client(synthetic_catalog):
    catalog, truth = synthetic_catalog
    return TestClient(create_app(catalog)), catalog, truth


def test_list_phantoms_matches_catalog(client):
    c, catalog, _ = client
    r = c.get("/api/phantoms")
    assert r.status_code == 200
    body = r.json()
    assert body["count"] == len(catalog.accepted_scan_ids())
    assert [m["phantom_id"] for m in body["phantoms"]] == catalog.accepted_scan_ids()


def test_filtered_query(client):
    c, catalog, _ = client
    r = c.get("/api/phantoms", params={"sex": "female", "age_min": 60, "age_max": 70})
    assert r.status_code == 200
    expected = catalog.query_phantoms(sex="female", age_range=(60, 70))
    assert r.json()["count"] == len(expected)
    for m in r.json()["phantoms"]:
        assert m["patient"]["sex"] == "female"
        assert 60 <= m["patient"]["age_years"] <= 70


def test_get_single_phantom_and_404(client):
    c, catalog, _ = client
    pid = catalog.accepted_scan_ids()[0]
    r = c.get(f"/api/phantoms/{pid}")
    assert r.status_code == 200
    doc = r.json()
    assert doc["phantom_id"] == pid
    assert {"patient", "structures", "qc", "pipeline_version"} <= set(doc)
    r = c.get("/api/phantoms/missing-id")
    assert r.status_code == 404
    assert set(r.json()) == {"error", "message"}


def test_preview_png(client):
    c, catalog, _ = client
    pid = catalog.accepted_scan_ids()[0]
    r = c.get(f"/api/phantoms/{pid}/preview/x.png")
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    assert r.content[:8] == b"\x89PNG\r\n\x1a\n"
    assert c.get(f"/api/phantoms/{pid}/preview/w.png").status_code == 400


def test_mesh_endpoint(client, tmp_path):
    c, catalog, _ = client
    pid = catalog.accepted_scan_ids()[0]
    # no mesh yet -> 404 with guidance
    r = c.get(f"/api/phantoms/{pid}/structures/85/mesh")
    assert r.status_code == 404
    # extract one then it serves valid PLY bytes
    from phantomforge.grid import extract_mask
    from phantomforge.mesh_io import read_ply, write_ply
    from phantomforge.meshing import marching_cubes

    mesh = marching_cubes(extract_mask(catalog.load_grid(pid), 85))
    pdir = catalog.phantom_dir(pid)
    pdir.mkdir(parents=True, exist_ok=True)
    write_ply(mesh, str(pdir / "85.ply"))
    r = c.get(f"/api/phantoms/{pid}/structures/85/mesh")
    assert r.status_code == 200
    back = read_ply(r.content)
    assert back.n_triangles == mesh.n_triangles


def test_reviews_pending_and_conflict(client):
    c, catalog, _ = client
    r = c.get("/api/reviews/pending")
    assert r.status_code == 200
    assert r.json()["count"] == len(catalog.pending_reviews())
    accepted = catalog.accepted_scan_ids()[0]
    r = c.post(f"/api/reviews/{accepted}", json={"verdict": "approved", "rating": 4})
    assert r.status_code == 409
    assert r.json()["error"] == "conflict"


def test_review_validation_errors(client):
    c, _, _ = client
    r = c.post("/api/reviews/whatever", json={"verdict": "meh", "rating": 4})
    assert r.status_code == 400
    r = c.post("/api/reviews/whatever", json={"verdict": "approved", "rating": 11})
    assert r.status_code == 400
    r = c.post("/api/reviews/definitely-missing", json={"verdict": "approved", "rating": 3})
    assert r.status_code == 404


def test_stats_endpoints(client):
    c, catalog, _ = client
    r = c.get("/api/stats/demographics")
    assert r.status_code == 200
    assert r.json()["n_phantoms"] == len(catalog.accepted_scan_ids())
    r = c.get("/api/stats/volumes")
    assert r.status_code == 200
    assert len(r.json()["volumes"]) == 140
    entry = r.json()["volumes"]["85"]
    assert {"name", "n", "missing_fraction", "mean_ml", "std_ml"} <= set(entry)


def test_funnel_endpoint(client):
    c, _, truth = client
    r = c.get("/api/qc/funnel")
    assert r.status_code == 200
    stages = {s["name"]: s for s in r.json()["stages"]}
    assert stages["symmetry"]["rejected"] == len(truth.symmetry_scans)
    assert stages["zero_volume"]["rejected"] == len(truth.truncation_scans)
    assert stages["statistical"]["rejected"] == len(truth.outlier_scans)


def test_bad_range_is_400(client):
    c, _, _ = client
    r = c.get("/api/phantoms", params={"age_min": 70, "age_max": 10})
    assert r.status_code == 400
    assert r.json()["error"] == "bad_request"


def test_review_flow_end_to_end(tmp_path):
    from phantomforge.catalog import Catalog
    from phantomforge.synthetic import generate_cohort_catalog

    catalog, _ = generate_cohort_catalog(
        tmp_path / "c",
        n_scans=24,
        seed=55,
        n_duplicate_patients=1,
        n_symmetry_defects=1,
        n_truncations=1,
        n_triple_outliers=0,
    )
    catalog.run_qc(jobs=1)
    c = TestClient(create_app(catalog))
    pending = c.get("/api/reviews/pending").json()
    n0 = pending["count"]
    sid = pending["pending"][0]["scan_id"]
    r = c.post(f"/api/reviews/{sid}", json={"verdict": "approved", "rating": 5, "reviewer": "dr_x"})
    assert r.status_code == 200
    assert r.json()["qc"]["final_status"] == "accepted"
    assert c.get("/api/reviews/pending").json()["count"] == n0 - 1
    ids = [m["phantom_id"] for m in c.get("/api/phantoms").json()["phantoms"]]
    assert sid in ids
    # reject another: disappears from default queries
    sid2 = c.get("/api/reviews/pending").json()["pending"][0]["scan_id"]
    c.post(f"/api/reviews/{sid2}", json={"verdict": "rejected", "rating": 1})
    ids = [m["phantom_id"] for m in c.get("/api/phantoms").json()["phantoms"]]
    assert sid2 not in ids
