"""Two-phase study-selection workflow gated on Cohen's kappa.

Phase 1 runs dual review in rounds: a seeded random batch is drawn, both
reviewers judge every study blind to each other, the round closes with an
agreement report, disagreements are resolved by consensus and the criteria are
refined. Rounds repeat until kappa strictly exceeds the gate threshold
(default 0.8). Phase 2 splits the remaining pool between the two reviewers
for single review. Every study ends up with exactly one final verdict, from
round agreement, round resolution, or phase-2 review.

Sessions are plain mutable objects with single-writer semantics; persistence,
auditing and locking live in `store`.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from fractions import Fraction

from .agreement import (
    AgreementReport,
    Verdict,
    agreement_report,
    format_half_up,
    tabulate,
)
from .errors import KappaSelectError

__all__ = [
    "CriteriaSet",
    "Decision",
    "DisagreementPolicy",
    "FinalVerdict",
    "Phase",
    "Resolution",
    "ReviewSession",
    "Round",
    "RoundOutcome",
    "RoundStatus",
    "SessionConfig",
    "Study",
    "TimingEntry",
    "close_round",
    "create_session",
    "log_time",
    "partition_remaining",
    "record_decision",
    "record_phase2_decision",
    "resolve_and_refine",
    "revise_criteria",
    "round_view",
    "sample_batch",
    "session_summary",
]


# ---------------------------------------------------------------------------
# Errors


class ProtocolError(KappaSelectError):
    """A session operation was attempted out of order or with bad input."""


class DuplicateStudyId(ProtocolError):
    pass


class InvalidConfig(ProtocolError):
    pass


class WrongPhase(ProtocolError):
    pass


class RoundAlreadyOpen(ProtocolError):
    pass


class PoolExhausted(ProtocolError):
    pass


class RoundClosed(ProtocolError):
    pass


class RoundNotClosed(ProtocolError):
    pass


class UnknownStudy(ProtocolError):
    pass


class UnknownRound(ProtocolError):
    pass


class DuplicateDecision(ProtocolError):
    pass


class NotAReviewer(ProtocolError):
    pass


class InvalidDecision(ProtocolError):
    pass


class IncompleteDecisions(ProtocolError):
    def __init__(self, missing: list[tuple[str, str]]):
        self.missing = missing
        pairs = ", ".join(f"{reviewer}/{study}" for reviewer, study in missing)
        super().__init__(f"missing decisions: {pairs}")


class UnresolvedDisagreement(ProtocolError):
    pass


class StaleRound(ProtocolError):
    pass


class UnfinalizedRound(ProtocolError):
    pass


class CriteriaRevisionRequired(ProtocolError):
    pass


class NotYourPartition(ProtocolError):
    pass


class AlreadyDecided(ProtocolError):
    pass


class AlreadyPartitioned(ProtocolError):
    pass


class InvalidTimeEntry(ProtocolError):
    pass


# ---------------------------------------------------------------------------
# Domain types


class Phase(str, Enum):
    PHASE1 = "phase1"
    PHASE2 = "phase2"
    COMPLETE = "complete"


class RoundStatus(str, Enum):
    OPEN = "open"
    CLOSED = "closed"


class DisagreementPolicy(str, Enum):
    #: every disagreement needs an explicit consensus verdict
    CONSENSUS_REQUIRED = "consensus_required"
    #: disagreements auto-resolve to include (title/abstract screening style)
    INCLUDE_ON_DISAGREEMENT = "include_on_disagreement"


@dataclass
class Study:
    id: str
    title: str
    source: str = ""
    year: int = 0
    extra: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not str(self.id):
            raise InvalidConfig("study id must be non-empty")
        if not self.title or not self.title.strip():
            raise InvalidConfig(f"study {self.id}: title must be non-empty")


_CRITERION_REF = re.compile(r"^(IC|EC)([1-9]\d*)$")


@dataclass
class CriteriaSet:
    """One immutable version of the inclusion/exclusion criteria.

    Criteria are cited by stable index: IC1..ICn for inclusion, EC1..ECm for
    exclusion.
    """

    version: int
    inclusion: list[str]
    exclusion: list[str]
    change_note: str
    created_at: str

    def __post_init__(self) -> None:
        if self.version < 1:
            raise InvalidConfig("criteria version must be >= 1")
        if not self.inclusion and not self.exclusion:
            raise InvalidConfig("criteria set must contain at least one criterion")
        if not self.change_note.strip():
            raise CriteriaRevisionRequired("criteria set needs a change note")

    def labels(self) -> list[str]:
        return [f"IC{i}" for i in range(1, len(self.inclusion) + 1)] + [
            f"EC{i}" for i in range(1, len(self.exclusion) + 1)
        ]

    def has_ref(self, ref: str) -> bool:
        match = _CRITERION_REF.match(ref)
        if not match:
            return False
        kind, index = match.group(1), int(match.group(2))
        limit = len(self.inclusion) if kind == "IC" else len(self.exclusion)
        return index <= limit


@dataclass
class Decision:
    reviewer: str
    study_id: str
    verdict: Verdict
    cited_criteria: list[str] = field(default_factory=list)
    time_spent_minutes: int | None = None
    recorded_at: str = ""

    def __post_init__(self) -> None:
        self.verdict = Verdict.coerce(self.verdict)
        if self.verdict is Verdict.EXCLUDE and not self.cited_criteria:
            raise InvalidDecision(
                f"exclude verdict for {self.study_id} must cite at least one criterion"
            )
        if self.time_spent_minutes is not None and self.time_spent_minutes < 0:
            raise InvalidDecision("time spent cannot be negative")


@dataclass
class Resolution:
    verdict: Verdict
    note: str = ""

    def __post_init__(self) -> None:
        self.verdict = Verdict.coerce(self.verdict)


@dataclass
class Round:
    index: int
    batch: list[str]
    criteria_version: int
    status: RoundStatus = RoundStatus.OPEN
    decisions: dict[str, dict[str, Decision]] = field(default_factory=dict)
    report: AgreementReport | None = None
    gate_passed: bool = False
    resolutions: dict[str, Resolution] = field(default_factory=dict)
    finalized: bool = False

    def disagreements(self, reviewers: tuple[str, str]) -> list[str]:
        first, second = reviewers
        out = []
        for study_id in self.batch:
            v1 = self.decisions.get(first, {}).get(study_id)
            v2 = self.decisions.get(second, {}).get(study_id)
            if v1 is not None and v2 is not None and v1.verdict is not v2.verdict:
                out.append(study_id)
        return out


@dataclass(frozen=True)
class FinalVerdict:
    verdict: Verdict
    #: "agreement", "resolution" or "phase2"
    origin: str
    round_index: int | None = None


@dataclass(frozen=True)
class TimingEntry:
    actor: str
    task: str
    phase: int
    minutes: int


@dataclass
class SessionConfig:
    reviewers: tuple[str, str]
    seed: int
    batch_size: int = 15
    threshold: Fraction = Fraction(4, 5)
    disagreement_policy: DisagreementPolicy = DisagreementPolicy.CONSENSUS_REQUIRED
    max_rounds_warning: int = 5

    def __post_init__(self) -> None:
        self.reviewers = tuple(self.reviewers)  # type: ignore[assignment]
        if len(self.reviewers) != 2 or len(set(self.reviewers)) != 2:
            raise InvalidConfig("exactly two distinct reviewer ids are required")
        if any(not r for r in self.reviewers):
            raise InvalidConfig("reviewer ids must be non-empty")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise InvalidConfig("seed must be an integer")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        self.threshold = Fraction(self.threshold)
        if not 0 < self.threshold < 1:
            raise InvalidConfig("threshold must lie strictly between 0 and 1")
        self.disagreement_policy = DisagreementPolicy(self.disagreement_policy)
        if self.max_rounds_warning < 1:
            raise InvalidConfig("max_rounds_warning must be >= 1")


@dataclass
class ReviewSession:
    catalog: list[Study]
    config: SessionConfig
    criteria_history: list[CriteriaSet]
    created_at: str
    rounds: list[Round] = field(default_factory=list)
    phase: Phase = Phase.PHASE1
    partitions: dict[str, list[str]] | None = None
    phase2_decisions: dict[str, Decision] = field(default_factory=dict)
    final_verdicts: dict[str, FinalVerdict] = field(default_factory=dict)
    timing_log: list[TimingEntry] = field(default_factory=list)
    revision: int = 0

    def study(self, study_id: str) -> Study:
        for s in self.catalog:
            if s.id == study_id:
                return s
        raise UnknownStudy(f"no study {study_id} in this session")

    @property
    def reviewers(self) -> tuple[str, str]:
        return self.config.reviewers

    @property
    def criteria(self) -> CriteriaSet:
        return self.criteria_history[-1]

    def criteria_version(self, version: int) -> CriteriaSet:
        for criteria in self.criteria_history:
            if criteria.version == version:
                return criteria
        raise InvalidConfig(f"no criteria version {version}")

    def drawn_ids(self) -> set[str]:
        return {study_id for rnd in self.rounds for study_id in rnd.batch}

    def remaining_pool(self) -> list[str]:
        """Catalog-ordered ids not yet drawn into any round."""
        drawn = self.drawn_ids()
        return [s.id for s in self.catalog if s.id not in drawn]

    def open_round(self) -> Round | None:
        for rnd in self.rounds:
            if rnd.status is RoundStatus.OPEN:
                return rnd
        return None

    def get_round(self, index: int) -> Round:
        if 1 <= index <= len(self.rounds):
            return self.rounds[index - 1]
        raise UnknownRound(f"no round {index}")


# ---------------------------------------------------------------------------
# Deterministic sampling

_RNG_SCOPE_ROUND = "round"
_RNG_SCOPE_PARTITION = "partition"


def _derived_rng(seed: int, scope: str, index: int = 0) -> random.Random:
    # hashlib, not hash(): process-independent derivation
    digest = hashlib.sha256(f"{seed}|{scope}|{index}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _shuffled(items: list[str], rng: random.Random) -> list[str]:
    # Fisher-Yates driven by rng.random(), the one generator method with a
    # cross-version output guarantee
    pool = list(items)
    for i in range(len(pool) - 1, 0, -1):
        j = int(rng.random() * (i + 1))
        pool[i], pool[j] = pool[j], pool[i]
    return pool


def _utcnow() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _stamp(at: str | None) -> str:
    return at if at else _utcnow()


# ---------------------------------------------------------------------------
# Operations


def create_session(
    catalog: list[Study],
    criteria: CriteriaSet,
    config: SessionConfig,
    at: str | None = None,
) -> ReviewSession:
    """Start a phase-1 session over a catalog with criteria version 1."""
    if not catalog:
        raise InvalidConfig("catalog must contain at least one study")
    seen: set[str] = set()
    for study in catalog:
        if study.id in seen:
            raise DuplicateStudyId(f"duplicate study id {study.id}")
        seen.add(study.id)
    if criteria.version != 1:
        criteria = CriteriaSet(
            version=1,
            inclusion=list(criteria.inclusion),
            exclusion=list(criteria.exclusion),
            change_note=criteria.change_note,
            created_at=criteria.created_at,
        )
    return ReviewSession(
        catalog=list(catalog),
        config=config,
        criteria_history=[criteria],
        created_at=_stamp(at),
    )


def sample_batch(session: ReviewSession, at: str | None = None) -> Round:
    """Draw the next seeded random batch and open a round over it."""
    if session.phase is not Phase.PHASE1:
        raise WrongPhase(f"cannot sample a batch in {session.phase.value}")
    if session.open_round() is not None:
        raise RoundAlreadyOpen(f"round {session.open_round().index} is still open")
    if session.rounds and not session.rounds[-1].finalized:
        raise UnfinalizedRound(
            f"round {session.rounds[-1].index} must be resolved before sampling again"
        )
    pool = session.remaining_pool()
    if not pool:
        raise PoolExhausted("no studies left to sample")
    index = len(session.rounds) + 1
    rng = _derived_rng(session.config.seed, _RNG_SCOPE_ROUND, index)
    size = min(session.config.batch_size, len(pool))
    batch = _shuffled(pool, rng)[:size]
    rnd = Round(index=index, batch=batch, criteria_version=session.criteria.version)
    session.rounds.append(rnd)
    return rnd


def record_decision(
    session: ReviewSession,
    round_index: int,
    decision: Decision,
) -> None:
    """Store one reviewer's verdict for one batch study, blind to the other."""
    rnd = session.get_round(round_index)
    if rnd.status is not RoundStatus.OPEN:
        raise RoundClosed(f"round {round_index} is closed")
    if decision.reviewer not in session.reviewers:
        raise NotAReviewer(f"{decision.reviewer} is not a reviewer on this session")
    if decision.study_id not in rnd.batch:
        raise UnknownStudy(f"study {decision.study_id} is not in round {round_index}")
    mine = rnd.decisions.setdefault(decision.reviewer, {})
    if decision.study_id in mine:
        raise DuplicateDecision(
            f"{decision.reviewer} already decided {decision.study_id} in round {round_index}"
        )
    criteria = session.criteria_version(rnd.criteria_version)
    for ref in decision.cited_criteria:
        if not criteria.has_ref(ref):
            raise InvalidDecision(
                f"criterion {ref} does not exist in criteria v{rnd.criteria_version}"
            )
    if not decision.recorded_at:
        decision.recorded_at = _utcnow()
    mine[decision.study_id] = decision


@dataclass(frozen=True)
class RoundOutcome:
    round_index: int
    report: AgreementReport
    gate_passed: bool
    phase: Phase
    disagreements: list[str]
    directive: str | None

    def headline(self) -> str:
        k_text = format_half_up(self.report.k)
        band = self.report.band.label if self.report.band else "no band"
        state = "gate PASSED: phase 2 begins" if self.gate_passed else (
            "gate NOT passed; revise criteria"
        )
        return f"k={k_text} ({band}) | {state}"


def close_round(session: ReviewSession, round_index: int) -> RoundOutcome:
    """Close a fully-decided round, attach its agreement report, apply the gate.

    A defined kappa strictly above the threshold moves the session to phase 2;
    a degenerate kappa never passes the gate.
    """
    rnd = session.get_round(round_index)
    if rnd.status is not RoundStatus.OPEN:
        raise RoundClosed(f"round {round_index} is already closed")
    missing = [
        (reviewer, study_id)
        for reviewer in session.reviewers
        for study_id in rnd.batch
        if study_id not in rnd.decisions.get(reviewer, {})
    ]
    if missing:
        raise IncompleteDecisions(missing)
    first, second = session.reviewers
    pairs = [
        (rnd.decisions[first][study_id].verdict, rnd.decisions[second][study_id].verdict)
        for study_id in rnd.batch
    ]
    report = agreement_report(tabulate(pairs))
    rnd.report = report
    rnd.status = RoundStatus.CLOSED
    gate_passed = report.k is not None and report.k > session.config.threshold
    rnd.gate_passed = gate_passed
    directive = None
    if gate_passed:
        session.phase = Phase.PHASE2
    else:
        directive = "criteria revision required"
    return RoundOutcome(
        round_index=round_index,
        report=report,
        gate_passed=gate_passed,
        phase=session.phase,
        disagreements=rnd.disagreements(session.reviewers),
        directive=directive,
    )


def resolve_and_refine(
    session: ReviewSession,
    round_index: int,
    resolutions: dict[str, Resolution] | None = None,
    new_criteria: tuple[list[str], list[str], str] | None = None,
    at: str | None = None,
) -> None:
    """Fix final verdicts for a closed round and optionally revise criteria.

    Agreements stand as-is; each disagreement takes its consensus resolution
    (or auto-includes under the include-on-disagreement policy). A round that
    failed the gate must come with a criteria revision carrying a change note.
    """
    rnd = session.get_round(round_index)
    if rnd.status is not RoundStatus.CLOSED:
        raise RoundNotClosed(f"round {round_index} is not closed")
    if rnd.finalized:
        raise StaleRound(f"round {round_index} was already resolved")
    resolutions = dict(resolutions or {})
    disagreed = rnd.disagreements(session.reviewers)
    for study_id in resolutions:
        if study_id not in disagreed:
            raise UnknownStudy(f"study {study_id} is not a disagreement in round {round_index}")
    missing = [s for s in disagreed if s not in resolutions]
    if missing:
        if session.config.disagreement_policy is DisagreementPolicy.INCLUDE_ON_DISAGREEMENT:
            for study_id in missing:
                resolutions[study_id] = Resolution(
                    verdict=Verdict.INCLUDE, note="auto-included on disagreement"
                )
        else:
            raise UnresolvedDisagreement(
                "unresolved disagreements: " + ", ".join(missing)
            )
    if not rnd.gate_passed and new_criteria is None:
        raise CriteriaRevisionRequired(
            f"round {round_index} did not pass the gate; supply revised criteria with a change note"
        )
    first, second = session.reviewers
    for study_id in rnd.batch:
        if study_id in resolutions:
            resolution = resolutions[study_id]
            session.final_verdicts[study_id] = FinalVerdict(
                verdict=resolution.verdict, origin="resolution", round_index=round_index
            )
        else:
            session.final_verdicts[study_id] = FinalVerdict(
                verdict=rnd.decisions[first][study_id].verdict,
                origin="agreement",
                round_index=round_index,
            )
    rnd.resolutions = resolutions
    rnd.finalized = True
    if new_criteria is not None:
        inclusion, exclusion, change_note = new_criteria
        revise_criteria(session, inclusion, exclusion, change_note, at=at)


def revise_criteria(
    session: ReviewSession,
    inclusion: list[str],
    exclusion: list[str],
    change_note: str,
    at: str | None = None,
) -> CriteriaSet:
    """Append the next criteria version; versions are immutable once created."""
    if session.open_round() is not None:
        raise RoundAlreadyOpen("cannot revise criteria while a round is open")
    criteria = CriteriaSet(
        version=session.criteria.version + 1,
        inclusion=list(inclusion),
        exclusion=list(exclusion),
        change_note=change_note,
        created_at=_stamp(at),
    )
    session.criteria_history.append(criteria)
    return criteria


def partition_remaining(session: ReviewSession) -> dict[str, list[str]]:
    """Shuffle the post-phase-1 remainder and split it between the reviewers.

    Halves differ by at most one study; on an odd count the lexicographically
    first reviewer id takes the larger half. An empty remainder completes the
    session immediately.
    """
    if session.phase is not Phase.PHASE2:
        raise WrongPhase(f"cannot partition in {session.phase.value}")
    if session.partitions is not None:
        raise AlreadyPartitioned("partition already created")
    unresolved = [r.index for r in session.rounds if not r.finalized]
    if unresolved:
        raise UnfinalizedRound(
            "rounds must be resolved before partitioning: " + ", ".join(map(str, unresolved))
        )
    pool = session.remaining_pool()
    rng = _derived_rng(session.config.seed, _RNG_SCOPE_PARTITION)
    shuffled = _shuffled(pool, rng)
    first, second = sorted(session.reviewers)
    half = (len(shuffled) + 1) // 2
    session.partitions = {first: shuffled[:half], second: shuffled[half:]}
    if not pool:
        session.phase = Phase.COMPLETE
    return session.partitions


def record_phase2_decision(session: ReviewSession, decision: Decision) -> None:
    """Record a single-review verdict; it is final immediately."""
    if session.phase is not Phase.PHASE2:
        raise WrongPhase(f"phase-2 decisions are not accepted in {session.phase.value}")
    if session.partitions is None:
        raise WrongPhase("partition has not been created yet")
    if decision.reviewer not in session.reviewers:
        raise NotAReviewer(f"{decision.reviewer} is not a reviewer on this session")
    own = session.partitions.get(decision.reviewer, [])
    if decision.study_id not in own:
        raise NotYourPartition(
            f"study {decision.study_id} is not in {decision.reviewer}'s partition"
        )
    if decision.study_id in session.phase2_decisions:
        raise AlreadyDecided(f"study {decision.study_id} was already decided")
    for ref in decision.cited_criteria:
        if not session.criteria.has_ref(ref):
            raise InvalidDecision(
                f"criterion {ref} does not exist in criteria v{session.criteria.version}"
            )
    if not decision.recorded_at:
        decision.recorded_at = _utcnow()
    session.phase2_decisions[decision.study_id] = decision
    session.final_verdicts[decision.study_id] = FinalVerdict(
        verdict=decision.verdict, origin="phase2"
    )
    total = sum(len(ids) for ids in session.partitions.values())
    if len(session.phase2_decisions) == total:
        session.phase = Phase.COMPLETE


def log_time(session: ReviewSession, entry: TimingEntry) -> None:
    """Append a self-reported timing entry (actor, task, phase, minutes)."""
    if not entry.actor.strip():
        raise InvalidTimeEntry("actor must be non-empty")
    if not entry.task.strip():
        raise InvalidTimeEntry("task must be non-empty")
    if entry.phase not in (1, 2):
        raise InvalidTimeEntry("phase must be 1 or 2")
    if entry.minutes < 0:
        raise InvalidTimeEntry("minutes cannot be negative")
    session.timing_log.append(entry)


# ---------------------------------------------------------------------------
# Read models


def round_view(session: ReviewSession, round_index: int, actor: str) -> dict:
    """Blinded view of a round: while it is open, only the actor's own
    verdicts appear; everyone else contributes progress counts only."""
    rnd = session.get_round(round_index)
    view: dict = {
        "index": rnd.index,
        "status": rnd.status.value,
        "criteria_version": rnd.criteria_version,
        "batch": list(rnd.batch),
        "progress": {
            reviewer: len(rnd.decisions.get(reviewer, {}))
            for reviewer in session.reviewers
        },
        "finalized": rnd.finalized,
    }
    if rnd.status is RoundStatus.OPEN:
        own = rnd.decisions.get(actor, {}) if actor in session.reviewers else {}
        view["decisions"] = {
            actor: {
                study_id: _decision_view(decision) for study_id, decision in own.items()
            }
        } if own else {}
    else:
        view["decisions"] = {
            reviewer: {
                study_id: _decision_view(decision)
                for study_id, decision in rnd.decisions.get(reviewer, {}).items()
            }
            for reviewer in session.reviewers
        }
        view["disagreements"] = rnd.disagreements(session.reviewers)
        view["gate_passed"] = rnd.gate_passed
        view["resolutions"] = {
            study_id: {"verdict": res.verdict.value, "note": res.note}
            for study_id, res in rnd.resolutions.items()
        }
    return view


def _decision_view(decision: Decision) -> dict:
    return {
        "verdict": decision.verdict.value,
        "cited_criteria": list(decision.cited_criteria),
        "time_spent_minutes": decision.time_spent_minutes,
        "recorded_at": decision.recorded_at,
    }


def session_summary(session: ReviewSession) -> dict:
    """Progress snapshot: per-phase counts, kappa trajectory, criteria history."""
    phase1_included = phase1_excluded = 0
    for verdict in session.final_verdicts.values():
        if verdict.origin in ("agreement", "resolution"):
            if verdict.verdict is Verdict.INCLUDE:
                phase1_included += 1
            else:
                phase1_excluded += 1
    per_reviewer_included: dict[str, int] = {r: 0 for r in session.reviewers}
    phase2_included = phase2_excluded = 0
    for decision in session.phase2_decisions.values():
        if decision.verdict is Verdict.INCLUDE:
            phase2_included += 1
            per_reviewer_included[decision.reviewer] += 1
        else:
            phase2_excluded += 1
    rounds = []
    trajectory = []
    for rnd in session.rounds:
        entry = {
            "index": rnd.index,
            "status": rnd.status.value,
            "finalized": rnd.finalized,
            "batch_size": len(rnd.batch),
            "criteria_version": rnd.criteria_version,
        }
        if rnd.report is not None:
            entry["k"] = format_half_up(rnd.report.k)
            entry["band"] = rnd.report.band.label if rnd.report.band else None
            entry["gate_passed"] = rnd.gate_passed
            trajectory.append(format_half_up(rnd.report.k))
        rounds.append(entry)
    warning = None
    if session.phase is Phase.PHASE1 and len(session.rounds) >= session.config.max_rounds_warning:
        warning = (
            f"{len(session.rounds)} rounds without passing the gate "
            f"(warning threshold {session.config.max_rounds_warning}); "
            "consider rewording the criteria more aggressively"
        )
    partition_sizes = (
        {reviewer: len(ids) for reviewer, ids in sorted(session.partitions.items())}
        if session.partitions is not None
        else None
    )
    return {
        "phase": session.phase.value,
        "revision": session.revision,
        "total_studies": len(session.catalog),
        "pool_remaining": len(session.remaining_pool()),
        "rounds": rounds,
        "k_trajectory": trajectory,
        "criteria_versions": [c.version for c in session.criteria_history],
        "phase1": {"included": phase1_included, "excluded": phase1_excluded},
        "phase2": {
            "included": phase2_included,
            "excluded": phase2_excluded,
            "included_by_reviewer": dict(sorted(per_reviewer_included.items())),
            "partition_sizes": partition_sizes,
            "decided": len(session.phase2_decisions),
        },
        "total_selected": phase1_included + phase2_included,
        "warning": warning,
    }
