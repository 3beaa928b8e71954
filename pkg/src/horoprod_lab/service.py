"""FastAPI service wrapping the experiment runner.

Each experiment kind has a typed request model; all endpoints return the
same response envelope the command line consumes. The service holds no
state: a run is fully determined by its config document.
"""
from __future__ import annotations

from typing import Any, Dict, List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .errors import ConfigError, HoroprodError, PartialFailure
from .experiments import CONFIG_FORMAT, run_config

app = FastAPI(
    title="horoprod-lab",
    description="Simulation laboratory for random trees, branching "
    "boundary measures, and horospheric products.",
    version=__version__,
)


class LawDoc(BaseModel):
    format: str = "horoprod-law/1"
    probs: Dict[str, Any]
    override: bool = False


class RunResponse(BaseModel):
    ok: bool
    exit_code: int  # 0 success, 2 mathematical check failed, 1 partial
    report: Dict[str, Any]
    files: Dict[str, str] = Field(default_factory=dict)
    error: Optional[str] = None
    cell_status: Optional[Dict[int, str]] = None


class SampleTreeRequest(BaseModel):
    law: LawDoc
    depth: int
    seed: int
    augmented: bool = False
    export: Optional[str] = None


class MassMeanRequest(BaseModel):
    law: LawDoc
    depth: int
    replicas: int
    seed: int
    augmented: bool = True


class ConformalRequest(BaseModel):
    law: LawDoc
    trials: int
    seed: int


class InvarianceRequest(BaseModel):
    law: LawDoc
    replicas: int
    seed: int
    radius: int = 1
    tv_max: float = 0.02
    p_min: float = 0.001


class WindowRequest(BaseModel):
    left: LawDoc
    right: LawDoc
    height: int
    seed: int
    depth: Optional[int] = None
    left_depth: Optional[int] = None
    right_depth: Optional[int] = None


class BuildWindowRequest(WindowRequest):
    export: Optional[str] = None


class WalkRequest(WindowRequest):
    steps: int = 0
    replicas: Optional[int] = None
    dirichlet: bool = False
    tol: float = 1e-10
    method: str = "power"


class FolnerRequest(WindowRequest):
    mode: str = "slab"
    n: Optional[int] = None
    budget: int = 500


class SweepRequest(BaseModel):
    experiment: str
    seed: int
    base: Dict[str, Any] = Field(default_factory=dict)
    grid: List[Dict[str, Any]]


def _execute(kind: str, params: dict) -> RunResponse:
    cfg = {"format": CONFIG_FORMAT, "kind": kind}
    cfg.update({k: v for k, v in params.items() if v is not None})
    try:
        result = run_config(cfg)
    except ConfigError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except PartialFailure as e:
        partial = getattr(e, "partial_result", None)
        return RunResponse(
            ok=False,
            exit_code=1,
            report=partial.report if partial else {},
            files=partial.files if partial else {},
            error=str(e),
            cell_status=e.cell_status,
        )
    except HoroprodError as e:
        raise HTTPException(
            status_code=400, detail=f"{type(e).__name__}: {e}"
        )
    return RunResponse(
        ok=result.ok,
        exit_code=0 if result.ok else 2,
        report=result.report,
        files=result.files,
    )


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/v1/run", response_model=RunResponse)
def run_raw(cfg: Dict[str, Any]) -> RunResponse:
    """Run a raw config document (the config-file path)."""
    kind = cfg.get("kind")
    if kind is None:
        raise HTTPException(status_code=422, detail="config needs a kind")
    body = {k: v for k, v in cfg.items() if k not in ("format", "kind")}
    return _execute(kind, body)


@app.post("/v1/sample-tree", response_model=RunResponse)
def sample_tree(req: SampleTreeRequest) -> RunResponse:
    return _execute("sample-tree", req.model_dump())


@app.post("/v1/mass-mean", response_model=RunResponse)
def mass_mean(req: MassMeanRequest) -> RunResponse:
    return _execute("mass-mean", req.model_dump())


@app.post("/v1/conformal", response_model=RunResponse)
def conformal(req: ConformalRequest) -> RunResponse:
    return _execute("conformal", req.model_dump())


@app.post("/v1/invariance", response_model=RunResponse)
def invariance(req: InvarianceRequest) -> RunResponse:
    return _execute("invariance", req.model_dump())


@app.post("/v1/build-window", response_model=RunResponse)
def build_window(req: BuildWindowRequest) -> RunResponse:
    return _execute("build-window", req.model_dump())


@app.post("/v1/walk", response_model=RunResponse)
def walk(req: WalkRequest) -> RunResponse:
    return _execute("walk", req.model_dump())


@app.post("/v1/folner", response_model=RunResponse)
def folner(req: FolnerRequest) -> RunResponse:
    return _execute("folner", req.model_dump())


@app.post("/v1/sweep", response_model=RunResponse)
def sweep(req: SweepRequest) -> RunResponse:
    return _execute("sweep", req.model_dump())
