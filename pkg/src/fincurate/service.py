"""Stateless HTTP reward service for online RL training.

Routes:

* ``POST /reward`` — one ``RewardRequest`` in, one ``RewardResponse`` out.
* ``POST /reward/batch`` — a sequence in, results in request order.
* ``GET /healthz`` — liveness plus verifier reachability.

Rule mode is pure: identical request bodies yield identical responses across
restarts, and well-formed input never produces a 5xx. Model mode forwards
extracted answers to the configured verifier endpoint; verifier failures
surface as 503 with a ``retryable`` flag.
"""

from __future__ import annotations

from typing import Literal

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .endpoints import EndpointConfig, health_check
from .errors import EndpointError
from .reward import RewardBreakdown, RewardMode, total_reward


class RewardRequest(BaseModel):
    response: str = Field(min_length=1)
    reference: str = Field(min_length=1)
    mode: Literal["rule", "model"] | None = None


class RewardResponse(BaseModel):
    total: float
    format_value: float
    outcome_value: float
    outcome_cause: str
    extracted_answer: str | None
    extraction_method: str


def _to_response(breakdown: RewardBreakdown) -> RewardResponse:
    return RewardResponse(**breakdown.to_json_dict())


def create_app(
    default_mode: RewardMode = RewardMode.RULE,
    verifier: EndpointConfig | None = None,
) -> FastAPI:
    app = FastAPI(title="fincurate reward service")
    default_mode = RewardMode(default_mode)

    def compute(request: RewardRequest) -> RewardResponse:
        mode = RewardMode(request.mode) if request.mode is not None else default_mode
        if mode is RewardMode.MODEL and verifier is None:
            raise HTTPException(status_code=400, detail="model mode requested but no verifier is configured")
        try:
            breakdown = total_reward(request.response, request.reference, mode=mode, verifier=verifier)
        except EndpointError as exc:
            raise HTTPException(
                status_code=503,
                detail={"message": f"verifier call failed: {exc}", "retryable": True},
            ) from exc
        return _to_response(breakdown)

    @app.post("/reward", response_model=RewardResponse)
    def reward_single(request: RewardRequest) -> RewardResponse:
        return compute(request)

    @app.post("/reward/batch", response_model=list[RewardResponse])
    def reward_batch(requests: list[RewardRequest]) -> list[RewardResponse]:
        return [compute(request) for request in requests]

    @app.get("/healthz")
    def healthz() -> dict:
        if verifier is None:
            verifier_state = "not_configured"
        else:
            verifier_state = "reachable" if health_check(verifier) else "unreachable"
        degraded = default_mode is RewardMode.MODEL and verifier_state != "reachable"
        return {
            "status": "degraded" if degraded else "ok",
            "mode": default_mode.value,
            "verifier": verifier_state,
        }

    return app


def serve_reward(
    bind_address: str = "127.0.0.1:8000",
    default_mode: RewardMode = RewardMode.RULE,
    verifier: EndpointConfig | None = None,
) -> None:
    """Run the reward service until interrupted."""
    import uvicorn

    host, _, port = bind_address.rpartition(":")
    app = create_app(default_mode=default_mode, verifier=verifier)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="info")
