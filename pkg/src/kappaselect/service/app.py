"""FastAPI application wrapping the session store.

Every mutation is serialized per session (advisory file lock plus optimistic
revision check: stale revisions get 409) and audited exactly like the CLI,
so a mutation through either surface yields the same session document.
Blinding is enforced server-side: while a round is open no response contains
another reviewer's verdicts, and what-if evaluation is refused because it
would leak them.
"""

from __future__ import annotations

import re
from fractions import Fraction
from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse

from ..agreement import Verdict, agreement_report, tabulate
from ..errors import KappaSelectError, StoreCorruption
from ..protocol import (
    NotAReviewer,
    NotYourPartition,
    RoundStatus,
    UnknownRound,
    UnknownStudy,
    round_view,
    session_summary,
)
from ..store import (
    ConcurrencyConflict,
    SessionExists,
    SessionNotFound,
    SessionStore,
    report_display,
    report_to_doc,
)
from ..timemodel import TimeModel, curve_to_csv, fit_model, projection_curve
from . import schemas
from .config import ServiceConfig

_SESSION_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class BlindingViolation(KappaSelectError):
    """The request would reveal another reviewer's verdicts mid-round."""


def _status_for(exc: KappaSelectError) -> int:
    if isinstance(exc, (SessionNotFound, UnknownRound)):
        return 404
    if isinstance(exc, (NotAReviewer, NotYourPartition, BlindingViolation)):
        return 403
    if isinstance(exc, (ConcurrencyConflict, SessionExists)):
        return 409
    if isinstance(exc, StoreCorruption):
        return 500
    return 400


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="kappaselect", version="1.0")

    def require_actor(authorization: str | None = Header(default=None)) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        actor = config.tokens.get(authorization.removeprefix("Bearer ").strip())
        if actor is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return actor

    def store_for(session_id: str) -> SessionStore:
        if not _SESSION_ID.match(session_id):
            raise HTTPException(status_code=400, detail=f"bad session id {session_id!r}")
        return SessionStore(Path(config.data_dir) / f"{session_id}.json")

    @app.exception_handler(KappaSelectError)
    async def _domain_error(request: Request, exc: KappaSelectError) -> JSONResponse:
        return JSONResponse(
            status_code=_status_for(exc),
            content={"error": {"code": exc.code, "message": str(exc)}},
        )

    # -- session lifecycle ---------------------------------------------------

    @app.post("/v1/sessions", status_code=201, response_model=schemas.MutationResponse)
    def create_session(
        body: schemas.CreateSessionRequest, actor: str = Depends(require_actor)
    ):
        store = store_for(body.session_id)
        payload = {
            "catalog": [study.model_dump() for study in body.catalog],
            "criteria": body.criteria.model_dump(),
            "config": body.config.model_dump(),
        }
        if not payload["criteria"]["change_note"]:
            payload["criteria"]["change_note"] = "initial criteria"
        _, result = SessionStore.create(store.path, payload, actor=actor, at=body.at)
        return {"revision": 0, "result": {**result, "session_id": body.session_id}}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str, actor: str = Depends(require_actor)):
        session = store_for(session_id).session()
        summary = session_summary(session)
        partitions = session.partitions or {}
        return {
            "session_id": session_id,
            "summary": summary,
            "reviewers": list(session.reviewers),
            "my_partition": list(partitions.get(actor, [])),
            "decided_phase2": sorted(session.phase2_decisions),
        }

    @app.get("/v1/sessions/{session_id}/summary")
    def get_summary(session_id: str, actor: str = Depends(require_actor)):
        return session_summary(store_for(session_id).session())

    @app.get("/v1/sessions/{session_id}/criteria")
    def get_criteria(session_id: str, actor: str = Depends(require_actor)):
        session = store_for(session_id).session()
        return {
            "criteria": [
                {
                    "version": criteria.version,
                    "inclusion": list(criteria.inclusion),
                    "exclusion": list(criteria.exclusion),
                    "change_note": criteria.change_note,
                    "created_at": criteria.created_at,
                }
                for criteria in session.criteria_history
            ]
        }

    @app.post("/v1/sessions/{session_id}/criteria", response_model=schemas.MutationResponse)
    def revise_criteria(
        session_id: str,
        body: schemas.CriteriaRevisionRequest,
        actor: str = Depends(require_actor),
    ):
        result = store_for(session_id).execute(
            "revise_criteria",
            {
                "inclusion": body.inclusion,
                "exclusion": body.exclusion,
                "change_note": body.change_note,
            },
            actor=actor,
            at=body.at,
            expected_revision=body.revision,
        )
        return {"revision": body.revision + 1, "result": result}

    # -- rounds ---------------------------------------------------------------

    @app.post("/v1/sessions/{session_id}/rounds", response_model=schemas.MutationResponse)
    def open_round(
        session_id: str,
        body: schemas.OpenRoundRequest,
        actor: str = Depends(require_actor),
    ):
        result = store_for(session_id).execute(
            "sample_batch", {}, actor=actor, at=body.at, expected_revision=body.revision
        )
        return {"revision": body.revision + 1, "result": result}

    @app.get("/v1/sessions/{session_id}/rounds/{round_index}")
    def get_round(
        session_id: str, round_index: int, actor: str = Depends(require_actor)
    ):
        session = store_for(session_id).session()
        return round_view(session, round_index, actor)

    @app.post(
        "/v1/sessions/{session_id}/rounds/{round_index}/decisions",
        response_model=schemas.MutationResponse,
    )
    def submit_decision(
        session_id: str,
        round_index: int,
        body: schemas.DecisionRequest,
        actor: str = Depends(require_actor),
    ):
        result = store_for(session_id).execute(
            "record_decision",
            {
                "round_index": round_index,
                "reviewer": actor,
                "study_id": body.study_id,
                "verdict": body.verdict,
                "cited_criteria": body.cited_criteria,
                "time_spent_minutes": body.time_spent_minutes,
            },
            actor=actor,
            at=body.at,
            expected_revision=body.revision,
        )
        return {"revision": body.revision + 1, "result": result}

    @app.post(
        "/v1/sessions/{session_id}/rounds/{round_index}/close",
        response_model=schemas.MutationResponse,
    )
    def close_round(
        session_id: str,
        round_index: int,
        body: schemas.CloseRoundRequest,
        actor: str = Depends(require_actor),
    ):
        result = store_for(session_id).execute(
            "close_round",
            {"round_index": round_index},
            actor=actor,
            at=body.at,
            expected_revision=body.revision,
        )
        return {"revision": body.revision + 1, "result": result}

    @app.post(
        "/v1/sessions/{session_id}/rounds/{round_index}/resolutions",
        response_model=schemas.MutationResponse,
    )
    def submit_resolutions(
        session_id: str,
        round_index: int,
        body: schemas.ResolutionsRequest,
        actor: str = Depends(require_actor),
    ):
        payload: dict = {
            "round_index": round_index,
            "resolutions": [resolution.model_dump() for resolution in body.resolutions],
        }
        if body.new_criteria is not None:
            payload["new_criteria"] = body.new_criteria.model_dump()
        result = store_for(session_id).execute(
            "resolve_and_refine",
            payload,
            actor=actor,
            at=body.at,
            expected_revision=body.revision,
        )
        return {"revision": body.revision + 1, "result": result}

    @app.get(
        "/v1/sessions/{session_id}/rounds/{round_index}/report",
        response_model=schemas.ReportResponse,
    )
    def get_round_report(
        session_id: str, round_index: int, actor: str = Depends(require_actor)
    ):
        session = store_for(session_id).session()
        rnd = session.get_round(round_index)
        if rnd.status is not RoundStatus.CLOSED or rnd.report is None:
            raise BlindingViolation(
                f"round {round_index} is still open; its report is not available"
            )
        return {
            "round_index": round_index,
            "gate_passed": rnd.gate_passed,
            "report": report_to_doc(rnd.report),
            "display": report_display(rnd.report),
        }

    @app.post(
        "/v1/sessions/{session_id}/rounds/{round_index}/what-if",
        response_model=schemas.WhatIfResponse,
    )
    def what_if(
        session_id: str,
        round_index: int,
        body: schemas.WhatIfRequest,
        actor: str = Depends(require_actor),
    ):
        """Recompute the agreement report with one study's verdicts overridden.

        Read-only; refused while the round is open because the hypothetical
        table would reveal the other reviewer's verdicts.
        """
        session = store_for(session_id).session()
        rnd = session.get_round(round_index)
        if rnd.status is not RoundStatus.CLOSED:
            raise BlindingViolation(
                f"round {round_index} is still open; what-if would leak verdicts"
            )
        if body.study_id not in rnd.batch:
            raise UnknownStudy(f"study {body.study_id} is not in round {round_index}")
        for reviewer in body.overrides:
            if reviewer not in session.reviewers:
                raise NotAReviewer(f"{reviewer} is not a reviewer on this session")
        first, second = session.reviewers
        pairs = []
        for study_id in rnd.batch:
            v1 = rnd.decisions[first][study_id].verdict
            v2 = rnd.decisions[second][study_id].verdict
            if study_id == body.study_id:
                v1 = Verdict(body.overrides.get(first, v1))
                v2 = Verdict(body.overrides.get(second, v2))
            pairs.append((v1, v2))
        report = agreement_report(tabulate(pairs))
        return {
            "study_id": body.study_id,
            "overrides": dict(body.overrides),
            "report": report_to_doc(report),
            "display": report_display(report),
        }

    # -- phase 2 ---------------------------------------------------------------

    @app.post("/v1/sessions/{session_id}/partition", response_model=schemas.MutationResponse)
    def partition(
        session_id: str,
        body: schemas.PartitionRequest,
        actor: str = Depends(require_actor),
    ):
        result = store_for(session_id).execute(
            "partition_remaining", {}, actor=actor, at=body.at, expected_revision=body.revision
        )
        return {"revision": body.revision + 1, "result": result}

    @app.post(
        "/v1/sessions/{session_id}/phase2-decisions",
        response_model=schemas.MutationResponse,
    )
    def submit_phase2_decision(
        session_id: str,
        body: schemas.Phase2DecisionRequest,
        actor: str = Depends(require_actor),
    ):
        result = store_for(session_id).execute(
            "record_phase2_decision",
            {
                "reviewer": actor,
                "study_id": body.study_id,
                "verdict": body.verdict,
                "cited_criteria": body.cited_criteria,
                "time_spent_minutes": body.time_spent_minutes,
            },
            actor=actor,
            at=body.at,
            expected_revision=body.revision,
        )
        return {"revision": body.revision + 1, "result": result}

    @app.post("/v1/sessions/{session_id}/timings", response_model=schemas.MutationResponse)
    def log_timing(
        session_id: str,
        body: schemas.TimingRequest,
        actor: str = Depends(require_actor),
    ):
        result = store_for(session_id).execute(
            "log_time",
            {
                "actor": body.actor or actor,
                "task": body.task,
                "phase": body.phase,
                "minutes": body.minutes,
            },
            actor=actor,
            at=body.at,
            expected_revision=body.revision,
        )
        return {"revision": body.revision + 1, "result": result}

    # -- projections -----------------------------------------------------------

    @app.get("/v1/sessions/{session_id}/savings", response_model=schemas.SavingsResponse)
    def get_savings(session_id: str, actor: str = Depends(require_actor)):
        fitted = fit_model(store_for(session_id).session())
        return fitted.as_payload()

    @app.get("/v1/sessions/{session_id}/curve", response_model=schemas.CurveResponse)
    def get_curve(
        session_id: str,
        s_max: int,
        steps: int = 50,
        v: str | None = None,
        t0: str | None = None,
        actor: str = Depends(require_actor),
    ):
        if (v is None) != (t0 is None):
            raise KappaSelectError("give both v and t0, or neither")
        if v is not None and t0 is not None:
            model = TimeModel(v=Fraction(v), t0=Fraction(t0))
        else:
            model = fit_model(store_for(session_id).session()).model
        curve = projection_curve(model, s_max, steps)
        return {
            "points": [{"s": float(s), "ts": float(ts)} for s, ts in curve.points],
            "csv": curve_to_csv(curve),
        }

    return app
