"""Command-line orchestration: ingest -> qc -> mesh -> voxelize -> serve.

Every command exits 0 on success and nonzero with a machine-readable
JSON error on stderr otherwise.  The catalog directory comes from
--catalog or the PHANTOMFORGE_CATALOG environment variable.
"""

from __future__ import annotations

import csv as csv_mod
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .catalog import Catalog, CatalogError
from .config import PipelineConfig, load_config
from .grid import read_label_grid, write_label_grid
from .mesh_io import read_ply, write_ply
from .meshing import laplacian_smooth, marching_cubes, mesh_volume
from .records import PatientRecord
from .taxonomy import load_taxonomy
from .voxelize import GridTemplate, assemble_phantom, voxelize_mesh
from .grid import extract_mask

CATALOG_ENVVAR = "PHANTOMFORGE_CATALOG"

catalog_option = click.option(
    "--catalog",
    "catalog_dir",
    envvar=CATALOG_ENVVAR,
    required=True,
    type=click.Path(file_okay=False),
    help=f"Catalog directory (or ${CATALOG_ENVVAR}).",
)


def fail_json(func):
    """Convert exceptions into stable JSON on stderr + nonzero exit."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (CatalogError, ValueError, OSError) as exc:
            payload = {"error": type(exc).__name__, "message": str(exc)}
            click.echo(json.dumps(payload), err=True)
            raise SystemExit(1)

    return wrapper


@click.group()
def main():
    """Digital-twin phantom pipeline: QC, meshing, voxelization, catalog."""


def _load_meta(path: str) -> dict[str, dict]:
    """Patient metadata keyed by scan_id, from JSON or CSV."""
    p = Path(path)
    if p.suffix.lower() == ".json":
        doc = json.loads(p.read_text())
        rows = doc["scans"] if isinstance(doc, dict) and "scans" in doc else doc
        if isinstance(rows, dict):
            return {k: dict(v) for k, v in rows.items()}
        return {row["scan_id"]: dict(row) for row in rows}
    with open(p, newline="") as fh:
        return {row["scan_id"]: dict(row) for row in csv_mod.DictReader(fh)}


def _patient_from_meta(meta: dict) -> PatientRecord:
    def opt_float(key):
        v = meta.get(key)
        return float(v) if v not in (None, "") else None

    return PatientRecord(
        patient_id=str(meta["patient_id"]),
        sex=meta.get("sex", "unknown") or "unknown",
        age_years=float(meta.get("age_years", 0) or 0),
        height_m=opt_float("height_m"),
        weight_kg=opt_float("weight_kg"),
        race=meta.get("race", "Unknown") or "Unknown",
    )


@main.command()
@click.argument("volumes", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--meta", "meta_path", required=True, type=click.Path(exists=True))
@catalog_option
@fail_json
def ingest(volumes, meta_path, catalog_dir):
    """Ingest label volumes; scan ids come from the file stems."""
    meta = _load_meta(meta_path)
    root = Path(catalog_dir)
    if (root / "patients.json").exists():
        catalog = Catalog.load(root)
    else:
        catalog = Catalog.init(root)
    for vol_path in volumes:
        scan_id = Path(vol_path).name
        for suffix in (".lvol", ".nii.gz", ".nii"):
            if scan_id.endswith(suffix):
                scan_id = scan_id[: -len(suffix)]
                break
        if scan_id not in meta:
            raise CatalogError(f"no metadata row for scan {scan_id!r} in {meta_path}")
        grid = read_label_grid(vol_path)
        catalog.ingest_scan(grid, _patient_from_meta(meta[scan_id]), scan_id)
        click.echo(f"ingested {scan_id}")
    click.echo(f"catalog now holds {len(catalog.scan_records)} scans")


@main.group()
def qc():
    """Quality-control cascade."""


@qc.command("run")
@catalog_option
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--jobs", default=1, show_default=True)
@fail_json
def qc_run(catalog_dir, config_path, jobs):
    """Run the full QC cascade over every ingested scan."""
    catalog = Catalog.load(catalog_dir)
    config = load_config(config_path) if config_path else catalog.config()
    result = catalog.run_qc(config, jobs=jobs)
    _print_funnel(catalog.funnel())
    if result.warnings:
        for w in result.warnings:
            click.echo(f"warning: {w}", err=True)


@qc.command("report")
@catalog_option
@click.option("--json", "as_json", is_flag=True, help="Emit the funnel as JSON.")
@fail_json
def qc_report(catalog_dir, as_json):
    """Print the current QC funnel."""
    catalog = Catalog.load(catalog_dir)
    funnel = catalog.funnel()
    if as_json:
        click.echo(json.dumps(funnel.to_json(), indent=1, sort_keys=True))
    else:
        _print_funnel(funnel)


def _print_funnel(funnel) -> None:
    click.echo(f"{'stage':<14}{'entrants':>9}{'passed':>8}{'rejected':>9}  pending")
    for s in funnel.stages:
        pending = s.pending if s.name == "review" else ""
        click.echo(f"{s.name:<14}{s.entrants:>9}{s.passed:>8}{s.rejected:>9}  {pending}")
    for w in funnel.warnings:
        click.echo(f"warning: {w}")


@main.group()
def mesh():
    """Surface extraction."""


@mesh.command("extract")
@catalog_option
@click.option("--phantom", "phantom_id", default=None, help="Single phantom id.")
@click.option("--structure", "structures", multiple=True, type=int)
@click.option("--lambda", "lam", default=None, type=float, help="Smoothing weight.")
@click.option("--iters", default=None, type=int, help="Smoothing iterations.")
@fail_json
def mesh_extract(catalog_dir, phantom_id, structures, lam, iters):
    """Extract smoothed per-structure meshes for accepted phantoms."""
    catalog = Catalog.load(catalog_dir)
    config = catalog.config()
    lam = config.smoothing_lambda if lam is None else lam
    iters = config.smoothing_iterations if iters is None else iters
    targets = [phantom_id] if phantom_id else catalog.accepted_scan_ids()
    if not targets:
        raise CatalogError("no accepted phantoms; run qc and reviews first")
    for pid in targets:
        if pid not in catalog.scan_records:
            raise CatalogError(f"unknown phantom {pid!r}")
        grid = catalog.load_grid(pid)
        vt = catalog.volumes_of(pid)
        wanted = [int(s) for s in structures] or sorted(vt.nonzero_ids())
        pdir = catalog.phantom_dir(pid)
        pdir.mkdir(parents=True, exist_ok=True)
        n = 0
        for sid in wanted:
            if vt.volume(sid) <= 0:
                continue
            surface = marching_cubes(extract_mask(grid, sid))
            smoothed = laplacian_smooth(surface, lam, iters)
            write_ply(smoothed, str(pdir / f"{sid}.ply"))
            n += 1
        catalog.write_manifest(pid)
        click.echo(f"{pid}: wrote {n} meshes (lambda={lam}, iterations={iters})")


@main.command()
@catalog_option
@click.option("--phantom", "phantom_id", required=True)
@click.option("--spacing", required=True, type=float, help="Voxel size in mm.")
@fail_json
def voxelize(catalog_dir, phantom_id, spacing):
    """Rasterize a phantom's meshes back into a multi-label voxel grid."""
    catalog = Catalog.load(catalog_dir)
    pdir = catalog.phantom_dir(phantom_id)
    mesh_files = sorted(pdir.glob("[0-9]*.ply"))
    if not mesh_files:
        raise CatalogError(f"no meshes under {pdir}; run `mesh extract` first")
    meshes = {int(p.stem): read_ply(p) for p in mesh_files}
    los = np.array([m.vertices.min(axis=0) for m in meshes.values()]).min(axis=0)
    his = np.array([m.vertices.max(axis=0) for m in meshes.values()]).max(axis=0)
    margin = spacing
    dims = tuple(int(np.ceil((hi - lo + 2 * margin) / spacing)) + 1 for lo, hi in zip(los, his))
    tpl = GridTemplate(dims, (spacing,) * 3, tuple(lo - margin for lo in los))
    masks = [(sid, voxelize_mesh(m, tpl)) for sid, m in sorted(meshes.items())]
    # bigger structures first so small/contained ones override them
    priority = sorted(meshes, key=lambda sid: -abs(mesh_volume(meshes[sid])))
    grid = assemble_phantom(masks, priority)
    out_dir = pdir / "voxel"
    out_dir.mkdir(exist_ok=True)
    out = out_dir / f"phantom_{spacing:g}mm.lvol"
    write_label_grid(grid, str(out), compress=True)
    click.echo(f"wrote {out} dims={dims}")


@main.command()
@catalog_option
@fail_json
def stats(catalog_dir):
    """Demographic and organ-volume summary of accepted phantoms (JSON)."""
    catalog = Catalog.load(catalog_dir)
    click.echo(json.dumps(catalog.demographics_summary(), indent=1, sort_keys=True))


@main.command()
@catalog_option
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--ui", "ui_dir", default=None, type=click.Path(exists=True, file_okay=False))
@fail_json
def serve(catalog_dir, port, host, ui_dir):
    """Serve the catalog HTTP API (and optionally the review UI bundle)."""
    import uvicorn

    from .api import create_app

    app = create_app(Catalog.load(catalog_dir), ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
