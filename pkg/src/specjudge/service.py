"""HTTP reward service for RL trainers.

POST /v1/reward scores a group of candidates and returns group-normalized
advantages computed server-side; POST /v1/eval runs a batch evaluation as
an async job; GET /v1/health probes the verifier. Responses carry a
schema_version field so clients can pin compatibility.
"""

from __future__ import annotations

import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import grpo
from .errors import VerifierUnavailable
from .metrics import EvalRecord, aggregate
from .rewards import RewardEngine, RewardWeights
from .source import parse
from .verifier import DafnyGateway, TOOL_ERROR, VERIFIED, VerifierConfig

SCHEMA_VERSION = "1"

PROBE_PROGRAM = "method Probe() {\n}\n"


@dataclass
class ServiceConfig:
    verifier: VerifierConfig = field(default_factory=VerifierConfig)
    weights: RewardWeights = field(default_factory=RewardWeights)
    auth_token: str | None = None
    max_body_bytes: int = 8 * 1024 * 1024
    eval_workers: int = 2

    def __post_init__(self):
        if self.max_body_bytes <= 0:
            raise ValueError("max_body_bytes must be positive")


class RewardRequest(BaseModel):
    code: str = ""
    ground_truth: str
    candidates: list[str] = Field(min_length=1)
    weights: list[float] | None = None


class EvalRecordRequest(BaseModel):
    input_id: str
    code: str = ""
    ground_truth: str
    candidates: list[str] = Field(min_length=1)


class EvalRequest(BaseModel):
    records: list[EvalRecordRequest] = Field(min_length=1)
    k_values: list[int] = Field(default_factory=lambda: [1])


def create_app(config: ServiceConfig | None = None,
               gateway: DafnyGateway | None = None) -> FastAPI:
    config = config or ServiceConfig()
    gateway = gateway or DafnyGateway(config.verifier)
    engine = RewardEngine(gateway, config.weights)
    app = FastAPI(title="specjudge reward service")
    app.state.config = config
    app.state.gateway = gateway
    app.state.engine = engine
    app.state.started = time.monotonic()
    app.state.jobs = {}
    app.state.jobs_lock = threading.Lock()
    app.state.executor = ThreadPoolExecutor(max_workers=config.eval_workers)

    @app.middleware("http")
    async def guard(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and length.isdigit() and int(length) > config.max_body_bytes:
            return JSONResponse(
                {"detail": f"body exceeds {config.max_body_bytes} bytes"},
                status_code=400,
            )
        if config.auth_token and request.url.path.startswith("/v1/"):
            expected = f"Bearer {config.auth_token}"
            if request.headers.get("authorization") != expected:
                return JSONResponse({"detail": "invalid token"}, status_code=401)
        return await call_next(request)

    @app.post("/v1/reward")
    def reward(body: RewardRequest):
        weights = None
        if body.weights is not None:
            if len(body.weights) != 3:
                return JSONResponse(
                    {"detail": "weights must be [syntax, verify, subset]"},
                    status_code=400,
                )
            weights = RewardWeights(*body.weights)
        code_file = parse(body.code, "code")
        rewards = []
        scalars = []
        try:
            for candidate in body.candidates:
                try:
                    breakdown = engine.score(
                        code_file, body.ground_truth, candidate, weights)
                    rewards.append(breakdown.to_dict())
                    scalars.append(breakdown.scalar)
                except VerifierUnavailable:
                    raise
                except Exception as exc:  # isolate the failing candidate
                    rewards.append({"error": f"{type(exc).__name__}: {exc}"})
                    scalars.append(None)
        except VerifierUnavailable as exc:
            return JSONResponse({"detail": str(exc)}, status_code=503)
        advantages = _aligned_advantages(scalars)
        return {
            "schema_version": SCHEMA_VERSION,
            "rewards": rewards,
            "advantages": advantages,
        }

    @app.post("/v1/eval")
    def submit_eval(body: EvalRequest):
        job_id = uuid.uuid4().hex
        with app.state.jobs_lock:
            app.state.jobs[job_id] = {"status": "pending"}
        app.state.executor.submit(_run_eval_job, app, job_id, body)
        return {"schema_version": SCHEMA_VERSION, "job_id": job_id}

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str):
        with app.state.jobs_lock:
            job = app.state.jobs.get(job_id)
            if job is None:
                return JSONResponse({"detail": "unknown job"}, status_code=404)
            payload = dict(job)
        payload["schema_version"] = SCHEMA_VERSION
        payload["job_id"] = job_id
        return payload

    @app.get("/v1/health")
    def health():
        try:
            probe = gateway.verify(PROBE_PROGRAM)
        except Exception as exc:
            return JSONResponse({"detail": str(exc)}, status_code=503)
        body = {
            "schema_version": SCHEMA_VERSION,
            "verifier_version": gateway.verifier_version(),
            "cache_stats": gateway.cache_stats(),
            "uptime_s": time.monotonic() - app.state.started,
            "probe_verdict": probe.verdict,
        }
        if probe.verdict != VERIFIED:
            return JSONResponse(
                {"detail": f"verifier probe verdict: {probe.verdict}", **body},
                status_code=503,
            )
        return body

    return app


def _aligned_advantages(scalars: list) -> list:
    valid = [s for s in scalars if s is not None]
    if not valid:
        return [None] * len(scalars)
    advs = iter(grpo.advantages(valid))
    return [next(advs) if s is not None else None for s in scalars]


def _run_eval_job(app: FastAPI, job_id: str, body: EvalRequest):
    with app.state.jobs_lock:
        app.state.jobs[job_id] = {"status": "running"}
    engine: RewardEngine = app.state.engine
    try:
        records = []
        for rec in body.records:
            code_file = parse(rec.code, rec.input_id)
            rollouts = tuple(
                engine.score(code_file, rec.ground_truth, candidate)
                for candidate in rec.candidates
            )
            records.append(EvalRecord(input_id=rec.input_id, rollouts=rollouts))
        report = aggregate(records, body.k_values)
        with app.state.jobs_lock:
            app.state.jobs[job_id] = {"status": "done", "report": report.to_dict()}
    except Exception as exc:
        with app.state.jobs_lock:
            app.state.jobs[job_id] = {
                "status": "error",
                "error": f"{type(exc).__name__}: {exc}",
            }
