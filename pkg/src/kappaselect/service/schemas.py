"""Pydantic request/response models for the /v1 API.

Mutating requests carry the session revision they were computed against;
a stale revision is rejected with 409 so concurrent edits cannot trample
each other. Statistics appear twice in responses: exact rationals as "p/q"
strings and ready-to-render display strings, so clients never do their own
agreement arithmetic.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

Verdict = Literal["include", "exclude"]


class StudyIn(BaseModel):
    id: str
    title: str
    source: str = ""
    year: int = 0
    extra: dict[str, str] = Field(default_factory=dict)


class CriteriaIn(BaseModel):
    inclusion: list[str]
    exclusion: list[str]
    change_note: str = ""


class SessionConfigIn(BaseModel):
    reviewers: list[str]
    seed: int
    batch_size: int = 15
    threshold: str = "0.8"
    disagreement_policy: Literal["consensus_required", "include_on_disagreement"] = (
        "consensus_required"
    )
    max_rounds_warning: int = 5


class CreateSessionRequest(BaseModel):
    session_id: str
    catalog: list[StudyIn]
    criteria: CriteriaIn
    config: SessionConfigIn
    at: str | None = None


class MutationRequest(BaseModel):
    revision: int
    at: str | None = None


class OpenRoundRequest(MutationRequest):
    pass


class DecisionRequest(MutationRequest):
    study_id: str
    verdict: Verdict
    cited_criteria: list[str] = Field(default_factory=list)
    time_spent_minutes: int | None = None


class CloseRoundRequest(MutationRequest):
    pass


class ResolutionIn(BaseModel):
    study_id: str
    verdict: Verdict
    note: str = ""


class ResolutionsRequest(MutationRequest):
    resolutions: list[ResolutionIn] = Field(default_factory=list)
    new_criteria: CriteriaIn | None = None


class CriteriaRevisionRequest(MutationRequest):
    inclusion: list[str]
    exclusion: list[str]
    change_note: str


class PartitionRequest(MutationRequest):
    pass


class Phase2DecisionRequest(MutationRequest):
    study_id: str
    verdict: Verdict
    cited_criteria: list[str] = Field(default_factory=list)
    time_spent_minutes: int | None = None


class TimingRequest(MutationRequest):
    task: str
    phase: int
    minutes: int
    actor: str | None = None  # defaults to the authenticated actor


class WhatIfRequest(BaseModel):
    study_id: str
    overrides: dict[str, Verdict]


class TableOut(BaseModel):
    a: int
    b: int
    c: int
    d: int
    n: int


class ReportValues(BaseModel):
    table: TableOut
    p0: str
    pc: str
    k: str | None
    k_max: str
    k_min: str
    k_nor: str
    s_d: str | None
    s_a: str | None
    p_pp: str
    p_mm: str
    band: str | None
    paradox: bool
    paradox_deviation: str | None


class ReportDisplay(BaseModel):
    p0: str
    pc: str
    k: str
    k_max: str
    k_min: str
    k_nor: str
    s_d: str
    s_a: str
    p_pp: str
    p_mm: str
    band: str | None
    paradox: bool
    paradox_deviation: str | None


class ReportResponse(BaseModel):
    round_index: int
    gate_passed: bool
    report: ReportValues
    display: ReportDisplay


class WhatIfResponse(BaseModel):
    study_id: str
    overrides: dict[str, Verdict]
    report: ReportValues
    display: ReportDisplay


class MutationResponse(BaseModel):
    revision: int
    result: dict


class SavingsResponse(BaseModel):
    actual_minutes: int
    actual: str
    traditional_minutes: int
    traditional: str
    savings: str
    savings_fraction: str
    savings_pct: str
    velocity_studies_per_minute: str
    minutes_per_study: str
    t0_minutes: int
    phase2_studies: int
    phase2_review_minutes: int


class CurvePoint(BaseModel):
    s: float
    ts: float


class CurveResponse(BaseModel):
    points: list[CurvePoint]
    csv: str


class ErrorBody(BaseModel):
    code: str
    message: str


class ErrorResponse(BaseModel):
    error: ErrorBody
