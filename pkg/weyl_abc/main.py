from datetime import datetime
import logging
import time
from typing import Any, Dict, List, Optional

from fastapi import Body, FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import ValidationError

from weyl_abc.cli import config_error, config_from_documents
from weyl_abc.config import get_settings
from weyl_abc.errors import ConfigError, WeylAbcError
from weyl_abc.models import ContourSampleOut, ComplexValue, ErrorSeries, RationalReport, RunSummary, Side
from weyl_abc.presets import get_preset, list_presets
from weyl_abc.services.experiments import ExperimentService
from weyl_abc.services.rational import to_report

settings = get_settings()
app = FastAPI(title=settings.app_name)

# Configure application logging
logging.basicConfig(
    level=settings.log_level.upper(),
    format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
    force=True,
)
logger = logging.getLogger("app")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["GET", "POST"],
    allow_headers=["Content-Type", "Accept"],
)


@app.exception_handler(WeylAbcError)
async def weyl_abc_error_handler(request: Request, exc: WeylAbcError):
    logger.warning("%s %s failed: %s", request.method, request.url.path, exc.message)
    return JSONResponse(status_code=422, content=exc.to_payload())


@app.exception_handler(ValidationError)
async def validation_error_handler(request: Request, exc: ValidationError):
    error = config_error(exc, "value")
    logger.warning("%s %s failed: %s", request.method, request.url.path, error.message)
    return JSONResponse(status_code=422, content=error.to_payload())


@app.on_event("startup")
async def on_startup():
    logger.info("Application startup")


@app.on_event("shutdown")
async def on_shutdown():
    logger.info("Application shutdown")


def _service(preset: Optional[str], body: Optional[Dict[str, Any]]) -> ExperimentService:
    if preset is not None and preset not in list_presets():
        raise HTTPException(status_code=404, detail=f"Unknown preset '{preset}'")
    return ExperimentService(config_from_documents(preset, body), threads=settings.threads)


def _fit_reports(service: ExperimentService, fits) -> Dict[str, RationalReport]:
    return {side.value: to_report(r, service.herglotz(r)) for side, r in fits.items()}


# Health & presets
@app.get("/api/health")
async def health_check():
    return {"status": "ok", "time": datetime.utcnow().isoformat()}


@app.get("/api/presets")
async def presets() -> Dict[str, List[str]]:
    return {"presets": list_presets()}


@app.get("/api/presets/{name}")
async def preset_detail(name: str):
    try:
        return get_preset(name)
    except ConfigError as e:
        raise HTTPException(status_code=404, detail=e.message)


# Computations run in the worker threadpool (plain `def`)
@app.post("/api/mfunc")
def mfunc(preset: Optional[str] = Query(None), body: Optional[Dict[str, Any]] = Body(None)):
    service = _service(preset, body)
    samples = service.mfunc()
    diagnostics = service.diagnostics(samples)
    return {
        side.value: {
            "samples": [
                ContourSampleOut(
                    f=s.f,
                    side=s.side,
                    lam=ComplexValue.from_complex(s.lam),
                    m=ComplexValue.from_complex(s.m),
                ).model_dump(mode="json", by_alias=True)
                for s in samples[side]
            ],
            "diagnostics": diagnostics[side].model_dump(mode="json", by_alias=True),
        }
        for side in (Side.LEFT, Side.RIGHT)
    }


@app.post("/api/fit", response_model=Dict[str, RationalReport])
def fit(preset: Optional[str] = Query(None), body: Optional[Dict[str, Any]] = Body(None)):
    service = _service(preset, body)
    return _fit_reports(service, service.fit())


@app.post("/api/solve/freq")
def solve_freq(
    preset: Optional[str] = Query(None),
    rational: bool = Query(False),
    body: Optional[Dict[str, Any]] = Body(None),
):
    started = time.perf_counter()
    service = _service(preset, body)
    run, series, flags = service.solve_freq(use_rational=rational)
    summary = RunSummary(
        subcommand="solve-freq",
        wall_time_sec=time.perf_counter() - started,
        max_error=series.max_error if series else None,
        flags=flags,
    )
    return {
        "summary": summary.model_dump(by_alias=True),
        "errors": series.model_dump(by_alias=True) if series else None,
        "sigma": run.sigma,
        "failures": run.failures,
    }


@app.post("/api/solve/time")
def solve_time(preset: Optional[str] = Query(None), body: Optional[Dict[str, Any]] = Body(None)):
    started = time.perf_counter()
    service = _service(preset, body)
    run, fits, flags = service.solve_time()
    series = ErrorSeries(times=run.error_times, rel_l2=run.errors)
    summary = RunSummary(
        subcommand="solve-time",
        wall_time_sec=time.perf_counter() - started,
        max_error=series.max_error,
        pole_count={side.value: r.degree for side, r in fits.items()},
        flags=flags,
    )
    return {
        "summary": summary.model_dump(by_alias=True),
        "errors": series.model_dump(by_alias=True),
        "poles": {k: v.model_dump(mode="json") for k, v in _fit_reports(service, fits).items()},
        "soeTerms": run.soe_terms,
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
