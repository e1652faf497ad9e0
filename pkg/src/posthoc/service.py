"""HTTP service for calibrate-once, query-many workflows.

A session uploads one PHDAT stack and calibrates the configured methods a
single time; bound, cluster, drill-down, and curve queries then reuse the
calibrated templates without touching the null distribution again.  Run with
``uvicorn posthoc.service:app``.

State lives in process memory; sessions disappear on restart.
"""

from __future__ import annotations

import os
import tempfile
import threading
import uuid
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .bench import ALL_METHODS, Analysis, BenchConfig, analyze, default_curve_ks
from .bounds import Selection, confidence_curve, tdp_bound_linear
from .clusters import cluster_table, drill_down, extract_clusters
from .data import SubjectStack
from .errors import ContractError, ParamError, PostHocError
from .phdat import read_phdat


class SessionInfo(BaseModel):
    session_id: str
    m: int
    n_subjects: int
    grid: tuple[int, int, int]
    voxel_size: tuple[float, float, float]
    methods: tuple[str, ...]
    alpha: float
    seed: int


class BoundRequest(BaseModel):
    indices: list[int] = Field(min_length=1)


class BoundResponse(BaseModel):
    size: int
    bounds: dict[str, float]


class ClusterEntry(BaseModel):
    id: int
    peak_world: tuple[float, float, float]
    peak_index: int
    peak_stat: float
    size_vox: int
    size_mm3: float
    bounds: dict[str, float]
    best_methods: list[str]
    reportable: bool


class ClusterTableResponse(BaseModel):
    z_threshold: float
    connectivity: int
    methods: list[str]
    clusters: list[ClusterEntry]


class DrillRequest(BaseModel):
    z: float
    cluster_id: int
    z_new: float
    connectivity: int | None = None


class DrillChild(BaseModel):
    peak_world: tuple[float, float, float]
    peak_stat: float
    size_vox: int
    size_mm3: float
    bounds: dict[str, float]


class DrillResponse(BaseModel):
    parent_id: int
    z: float
    z_new: float
    children: list[DrillChild]


class CurveResponse(BaseModel):
    methods: list[str]
    k: list[int]
    z_at_k: list[float]
    bounds: dict[str, list[float]]


@dataclass
class _Session:
    stack: SubjectStack
    cfg: BenchConfig
    analysis: Analysis


_sessions: dict[str, _Session] = {}
_lock = threading.Lock()

app = FastAPI(title="posthoc", description="simultaneous TDP bound service")


@app.exception_handler(PostHocError)
async def _posthoc_error(request: Request, exc: PostHocError):
    status = 422 if isinstance(exc, (ParamError, ContractError)) else 400
    return JSONResponse(
        status_code=status,
        content={"error": type(exc).__name__, "detail": str(exc)},
    )


def _get(session_id: str) -> _Session:
    with _lock:
        session = _sessions.get(session_id)
    if session is None:
        raise HTTPException(status_code=404, detail=f"no session {session_id}")
    return session


def _info(session_id: str, s: _Session) -> SessionInfo:
    return SessionInfo(
        session_id=session_id,
        m=s.stack.m,
        n_subjects=s.stack.n_subjects,
        grid=s.stack.grid.shape,
        voxel_size=s.stack.grid.voxel_size,
        methods=s.cfg.methods,
        alpha=s.cfg.alpha,
        seed=s.cfg.seed,
    )


@app.post("/sessions", response_model=SessionInfo)
async def create_session(
    request: Request,
    alpha: float = 0.05,
    b: int = 1000,
    b_train: int = 1000,
    b_calib: int = 500,
    delta: int = 27,
    kmax: int | None = None,
    seed: int = 0,
    methods: str = ",".join(ALL_METHODS),
    sidedness: str = "two-sided",
):
    """Upload a PHDAT stack (request body) and calibrate once."""
    body = await request.body()
    cfg = BenchConfig(
        methods=tuple(m.strip() for m in methods.split(",") if m.strip()),
        alpha=alpha,
        b=b,
        b_train=b_train,
        b_calib=b_calib,
        delta=delta,
        k_max=kmax,
        seed=seed,
        sidedness=sidedness,
    )
    # read_phdat is path-based; stage the upload in a temp file
    fd, path = tempfile.mkstemp(suffix=".phdat")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(body)
        stack = read_phdat(path)
    finally:
        os.unlink(path)
    analysis = analyze(stack, cfg)
    session_id = uuid.uuid4().hex[:12]
    with _lock:
        _sessions[session_id] = _Session(stack, cfg, analysis)
    return _info(session_id, _sessions[session_id])


@app.get("/sessions/{session_id}", response_model=SessionInfo)
async def session_info(session_id: str):
    return _info(session_id, _get(session_id))


@app.delete("/sessions/{session_id}")
async def delete_session(session_id: str):
    with _lock:
        if _sessions.pop(session_id, None) is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
    return {"deleted": session_id}


@app.post("/sessions/{session_id}/bound", response_model=BoundResponse)
async def bound(session_id: str, req: BoundRequest):
    s = _get(session_id)
    selection = Selection(np.asarray(req.indices, dtype=np.int64))
    if int(selection.indices[-1]) >= s.stack.m:
        raise ParamError(
            f"selection index {int(selection.indices[-1])} outside mask of size {s.stack.m}"
        )
    sorted_p = np.sort(s.analysis.p.p[selection.indices])
    bounds = {
        method: tdp_bound_linear(sorted_p, template)
        for method, template in s.analysis.templates.items()
    }
    return BoundResponse(size=selection.size, bounds=bounds)


def _table_response(s: _Session, z: float, connectivity: int) -> ClusterTableResponse:
    clusters = extract_clusters(s.analysis.zmap, z, connectivity)
    table = cluster_table(clusters, s.analysis.p, s.analysis.templates, connectivity)
    entries = [
        ClusterEntry(
            id=c.id,
            peak_world=c.peak_world,
            peak_index=c.peak_index,
            peak_stat=c.peak_stat,
            size_vox=c.size,
            size_mm3=c.size_mm3,
            bounds=row,
            best_methods=sorted(best),
            reportable=keep,
        )
        for c, row, best, keep in zip(
            table.clusters, table.bounds, table.best, table.reportable
        )
    ]
    return ClusterTableResponse(
        z_threshold=z,
        connectivity=connectivity,
        methods=table.methods,
        clusters=entries,
    )


@app.get("/sessions/{session_id}/clusters", response_model=ClusterTableResponse)
async def clusters(session_id: str, z: float, connectivity: int | None = None):
    s = _get(session_id)
    return _table_response(s, z, connectivity or s.cfg.connectivity)


@app.post("/sessions/{session_id}/drill", response_model=DrillResponse)
async def drill(session_id: str, req: DrillRequest):
    s = _get(session_id)
    connectivity = req.connectivity or s.cfg.connectivity
    parents = extract_clusters(s.analysis.zmap, req.z, connectivity)
    parent = next((c for c in parents if c.id == req.cluster_id), None)
    if parent is None:
        raise HTTPException(
            status_code=404,
            detail=f"no cluster {req.cluster_id} at z={req.z:g}",
        )
    children = drill_down(parent, s.analysis.zmap, req.z_new, connectivity)
    out = []
    for child in children:
        sorted_p = np.sort(s.analysis.p.p[child.selection.indices])
        out.append(
            DrillChild(
                peak_world=child.peak_world,
                peak_stat=child.peak_stat,
                size_vox=child.size,
                size_mm3=child.size_mm3,
                bounds={
                    method: tdp_bound_linear(sorted_p, template)
                    for method, template in s.analysis.templates.items()
                },
            )
        )
    return DrillResponse(
        parent_id=parent.id, z=req.z, z_new=req.z_new, children=out
    )


@app.get("/sessions/{session_id}/curve", response_model=CurveResponse)
async def curve(session_id: str, points: int = 200):
    s = _get(session_id)
    ks = default_curve_ks(s.stack.m, points)
    result = confidence_curve(s.analysis.zmap, s.analysis.p, s.analysis.templates, ks)
    return CurveResponse(
        methods=list(result.bounds),
        k=[int(k) for k in result.ks],
        z_at_k=[float(v) for v in result.z_at_k],
        bounds={m: [float(v) for v in vec] for m, vec in result.bounds.items()},
    )
