"""HTTP session service: upload, fit, stage previews, live adjustment, export.

Error bodies are JSON ``{code, message}``.  Adjustments never mutate the
fitted stack; every render applies the blends to a fresh copy, so repeated
calls with the same body return identical bytes.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, File, Request, Response, UploadFile
from fastapi.exceptions import HTTPException, RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .. import imaging_io
from ..assembly import run_pipeline
from ..errors import ImageFormatError
from ..filters import FilterStack
from ..image import RgbImage
from ..interact import Adjustments
from ..optimizer import FitConfig, fit
from .models import AdjustRequest, FitReportOut, FitRequest, SessionCreated, SessionInfo
from .store import Session, SessionNotFound, SessionStore


def _finite(x: float) -> float:
    return x if math.isfinite(x) else 1e9


def _report_dict(report) -> dict:
    return {
        "final_mse": _finite(report.final_mse),
        "final_psnr": _finite(report.final_psnr),
        "iterations": report.iterations_run,
        "wall_time_s": report.wall_time,
        "loss_history": report.loss_history,
    }


def create_app(
    session_dir: Path,
    ui_dir: Optional[Path] = None,
    cors_origins: Optional[list[str]] = None,
) -> FastAPI:
    app = FastAPI(title="dccf studio service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(Path(session_dir))
    app.state.store = store

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status_code,
            content={"code": exc.status_code, "message": str(exc.detail)},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=400, content={"code": 400, "message": str(exc.errors())}
        )

    def get_session(session_id: str) -> Session:
        try:
            return store.get(session_id)
        except SessionNotFound:
            raise HTTPException(404, f"unknown session {session_id!r}")

    def require_fitted(session: Session) -> FilterStack:
        if session.stack is None:
            raise HTTPException(409, "session has no fitted stack yet")
        return session.stack

    def render_png(session: Session, stack: FilterStack, stage: int, full: bool) -> Response:
        image = session.composite if full else session.preview_composite()
        with session.lock:
            trace = run_pipeline(image, stack)
        data = imaging_io.encode_png(imaging_io.to_uint8(trace.stage(stage).data))
        return Response(content=data, media_type="image/png")

    @app.post("/sessions", response_model=SessionCreated, status_code=201)
    async def create_session(
        composite: UploadFile = File(...),
        mask: UploadFile = File(...),
        gt: Optional[UploadFile] = File(None),
    ) -> SessionCreated:
        try:
            comp_img = imaging_io.decode_image_bytes(await composite.read(), composite.filename)
            mask_img = imaging_io.decode_mask_bytes(await mask.read(), mask.filename)
            gt_img = None
            if gt is not None:
                gt_img = imaging_io.decode_image_bytes(await gt.read(), gt.filename)
        except ImageFormatError as exc:
            raise HTTPException(400, f"cannot decode upload: {exc}")
        if mask_img.data.shape != comp_img.data.shape[:2]:
            raise HTTPException(400, "mask dimensions do not match the composite")
        if gt_img is not None and gt_img.data.shape != comp_img.data.shape:
            raise HTTPException(400, "ground truth dimensions do not match the composite")
        session = store.create(comp_img, mask_img, gt_img)
        return SessionCreated(id=session.id)

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def session_info(session_id: str) -> SessionInfo:
        session = get_session(session_id)
        return SessionInfo(
            id=session.id,
            width=session.composite.width,
            height=session.composite.height,
            has_gt=session.gt is not None,
            fitted=session.fitted,
            report=FitReportOut(**session.report) if session.report else None,
            adjustments=session.adjustments,
        )

    @app.post("/sessions/{session_id}/fit", response_model=FitReportOut)
    def fit_session(session_id: str, request: FitRequest) -> FitReportOut:
        session = get_session(session_id)
        if session.gt is None:
            raise HTTPException(422, "session has no ground truth to fit against")
        if not session.lock.acquire(blocking=False):
            raise HTTPException(409, "a fit is already running for this session")
        try:
            cfg = FitConfig(
                grid_width=request.grid,
                grid_height=request.grid,
                mode=request.mode,
                max_iters=request.iters,
                seed=request.seed,
            )
            stack, report = fit(session.composite, session.gt, session.mask, cfg)
            report_json = _report_dict(report)
            store.set_stack(session, stack, report_json)
        finally:
            session.lock.release()
        return FitReportOut(**report_json)

    @app.get("/sessions/{session_id}/preview")
    def preview(session_id: str, stage: int = 4) -> Response:
        session = get_session(session_id)
        if stage not in (1, 2, 3, 4):
            raise HTTPException(400, f"stage must be 1..4, got {stage}")
        stack = require_fitted(session)
        return render_png(session, stack, stage, full=False)

    @app.post("/sessions/{session_id}/adjust")
    def adjust(session_id: str, request: AdjustRequest) -> Response:
        session = get_session(session_id)
        stack = require_fitted(session)
        payload = request.model_dump(exclude_none=True)
        adjustments = Adjustments.from_dict(payload)
        try:
            adjusted = adjustments.apply(stack)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        session.adjustments = adjustments.to_dict()
        session.persist_state()
        return render_png(session, adjusted, 4, full=False)

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str) -> Response:
        session = get_session(session_id)
        stack = require_fitted(session)
        adjusted = session.adjustments_obj().apply(stack)
        return render_png(session, adjusted, 4, full=True)

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
