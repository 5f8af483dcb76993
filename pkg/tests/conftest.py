import numpy as np
import pytest

from phantomforge.grid import VoxelGrid


def grid_from_array(arr, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> VoxelGrid:
    """Build a VoxelGrid from a 3-D array indexed [x, y, z]."""
    arr = np.asarray(arr, dtype=np.uint16)
    return VoxelGrid(arr.shape, spacing, origin, arr.T.reshape(-1).copy())


def sphere_mask(radius=20, n=45) -> VoxelGrid:
    c = (n - 1) / 2
    xs = np.arange(n)
    x, y, z = np.meshgrid(xs, xs, xs, indexing="ij")
    return grid_from_array(
        ((x - c) ** 2 + (y - c) ** 2 + (z - c) ** 2 <= radius * radius).astype(np.uint16)
    )


@pytest.fixture(scope="session")
def sphere_r20() -> VoxelGrid:
    return sphere_mask(20, 45)


@pytest.fixture(scope="session")
def synthetic_catalog(tmp_path_factory):
    """One shared 200-scan fixture catalog with QC run and reviews applied.

    Session-scoped: catalog/api/cli tests read it; tests that mutate
    review state build their own smaller catalogs.
    """
    from phantomforge.catalog import Catalog
    from phantomforge.synthetic import generate_cohort_catalog

    root = tmp_path_factory.mktemp("catalog") / "cat"
    catalog, truth = generate_cohort_catalog(root)
    catalog.run_qc(jobs=1)
    for item in catalog.pending_reviews():
        catalog.submit_review(item["scan_id"], "approved", 4, "dr_fixture")
    return Catalog.load(root), truth
