"""HTTP/JSON API over a catalog (the surface the review UI consumes).

Errors are always {"error": <code>, "message": <text>} with a matching
status: 404 unknown ids, 409 review-state conflicts, 400 bad input.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .catalog import Catalog, CatalogError, NotFoundError
from .mesh_io import read_ply
from .qc import QcStateError


class ReviewSubmission(BaseModel):
    verdict: str = Field(pattern="^(approved|flagged|rejected)$")
    rating: int = Field(ge=1, le=5)
    reviewer: str = ""
    notes: str = ""


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "message": message})


def create_app(catalog: Catalog, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="phantomforge catalog", docs_url=None, redoc_url=None)

    @app.exception_handler(NotFoundError)
    async def _nf(request: Request, exc: NotFoundError):
        return _error(404, "not_found", str(exc))

    @app.exception_handler(QcStateError)
    async def _state(request: Request, exc: QcStateError):
        return _error(409, "conflict", str(exc))

    @app.exception_handler(CatalogError)
    async def _cat(request: Request, exc: CatalogError):
        return _error(400, "bad_request", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _val(request: Request, exc: RequestValidationError):
        return _error(400, "validation", str(exc.errors()))

    @app.get("/api/phantoms")
    def list_phantoms(
        sex: str | None = None,
        age_min: float | None = None,
        age_max: float | None = None,
        race: str | None = None,
        bmi_min: float | None = None,
        bmi_max: float | None = None,
        structure: int | None = None,
        include_all: bool = False,
    ):
        manifests = catalog.query_phantoms(
            sex=sex,
            age_range=(age_min, age_max) if (age_min is not None or age_max is not None) else None,
            race=race,
            bmi_range=(bmi_min, bmi_max) if (bmi_min is not None or bmi_max is not None) else None,
            structure=structure,
            include_all=include_all,
        )
        return {"count": len(manifests), "phantoms": manifests}

    @app.get("/api/phantoms/{phantom_id}")
    def get_phantom(phantom_id: str):
        return catalog.manifest(phantom_id)

    @app.get("/api/phantoms/{phantom_id}/structures/{structure_id}/mesh")
    def get_mesh(phantom_id: str, structure_id: int):
        if phantom_id not in catalog.scan_records:
            raise NotFoundError(f"unknown phantom {phantom_id!r}")
        path = catalog.phantom_dir(phantom_id) / f"{structure_id}.ply"
        if not path.exists():
            raise NotFoundError(
                f"no mesh for structure {structure_id} of {phantom_id} "
                "(run `phantomforge mesh extract`)"
            )
        # parse/validate before serving so a corrupt file 500s loudly here
        read_ply(path)
        return Response(
            content=path.read_bytes(),
            media_type="application/octet-stream",
            headers={"Content-Disposition": f'attachment; filename="{structure_id}.ply"'},
        )

    @app.get("/api/phantoms/{phantom_id}/preview/{axis}.png")
    def get_preview(phantom_id: str, axis: str):
        if phantom_id not in catalog.scan_records:
            raise NotFoundError(f"unknown phantom {phantom_id!r}")
        if axis not in ("x", "y", "z"):
            raise CatalogError(f"axis must be x, y or z, got {axis!r}")
        path = catalog.scan_dir(phantom_id) / "previews" / f"{axis}.png"
        if not path.exists():
            raise NotFoundError(f"no preview for {phantom_id}")
        return FileResponse(path, media_type="image/png")

    @app.get("/api/reviews/pending")
    def pending():
        items = catalog.pending_reviews()
        for item in items:
            item["previews"] = {
                axis: f"/api/phantoms/{item['scan_id']}/preview/{axis}.png"
                for axis in item["previews"]
            }
        return {"count": len(items), "pending": items}

    @app.post("/api/reviews/{scan_id}")
    def submit(scan_id: str, body: ReviewSubmission):
        outcome = catalog.submit_review(
            scan_id,
            verdict=body.verdict,
            rating=body.rating,
            reviewer=body.reviewer,
            notes=body.notes,
        )
        return {"scan_id": scan_id, "qc": outcome.to_json()}

    @app.get("/api/stats/demographics")
    def demographics():
        return catalog.demographics_summary()

    @app.get("/api/stats/volumes")
    def volumes():
        return {"volumes": catalog.volume_stats()}

    @app.get("/api/qc/funnel")
    def funnel():
        return catalog.funnel().to_json()

    if ui_dir:
        app.mount("/", StaticFiles(directory=Path(ui_dir), html=True), name="ui")

    return app
