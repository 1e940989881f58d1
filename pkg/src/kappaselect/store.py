"""Durable, auditable persistence for review sessions.

Three file formats live here:

* catalog: UTF-8 CSV with header columns id, title, source, year; extra
  columns ride along as study metadata. Import collapses duplicates (exact
  id, or normalized-title match) and reports every collapse.
* session document: canonical JSON (sorted keys, fraction-exact numbers as
  "p/q" strings, trailing newline) so identical sessions are byte-identical.
* round report: CSV of per-study verdicts followed by a '#'-prefixed
  statistics line rendered at two decimals.

`SessionStore` is the single mutation point: every write goes through
`execute`, which applies a named operation, bumps the session revision,
appends an audit event and atomically rewrites the document. Folding the
audit log from scratch reproduces the stored state byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from filelock import FileLock

from . import protocol
from .agreement import (
    AgreementBand,
    AgreementReport,
    ContingencyTable,
    Verdict,
    agreement_report,
    format_half_up,
)
from .errors import KappaSelectError, StoreCorruption
from .protocol import (
    CriteriaSet,
    Decision,
    DisagreementPolicy,
    FinalVerdict,
    Phase,
    Resolution,
    ReviewSession,
    Round,
    RoundStatus,
    SessionConfig,
    Study,
    TimingEntry,
)

__all__ = [
    "CorruptDocument",
    "DedupEntry",
    "DedupReport",
    "MissingColumn",
    "ParseError",
    "SCHEMA_VERSION",
    "SessionStore",
    "canonical_json",
    "data_dir",
    "export_round_report",
    "import_catalog",
    "load_session",
    "parse_round_report",
    "render_round_report",
    "save_session",
    "session_to_doc",
]

SCHEMA_VERSION = 1

#: environment variable overriding the base directory for relative paths
DATA_DIR_ENV = "KAPPASELECT_DATA_DIR"


class ParseError(KappaSelectError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


class MissingColumn(KappaSelectError):
    pass


class SchemaMismatch(StoreCorruption):
    pass


class CorruptDocument(StoreCorruption):
    pass


class SessionNotFound(KappaSelectError):
    pass


class SessionExists(KappaSelectError):
    pass


class ConcurrencyConflict(KappaSelectError):
    """The mutation carried a stale session revision."""


class RoundNotClosed(KappaSelectError):
    pass


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "."))


def resolve_path(path: str | Path) -> Path:
    path = Path(path)
    return path if path.is_absolute() else data_dir() / path


# ---------------------------------------------------------------------------
# Catalog import

_REQUIRED_COLUMNS = ("id", "title", "source", "year")
_NON_WORD = re.compile(r"[^\w\s]+", re.UNICODE)
_SPACE = re.compile(r"\s+")


def normalize_title(title: str) -> str:
    """Dedup key: lowercase, punctuation to spaces, whitespace collapsed."""
    return _SPACE.sub(" ", _NON_WORD.sub(" ", title.lower())).strip()


@dataclass(frozen=True)
class DedupEntry:
    line: int
    dropped_id: str
    kept_id: str
    reason: str  # "duplicate-id" or "duplicate-title"


@dataclass
class DedupReport:
    total_rows: int
    imported: int
    entries: list[DedupEntry] = field(default_factory=list)

    @property
    def duplicates(self) -> int:
        return len(self.entries)


def import_catalog(
    source: str | Path | io.TextIOBase,
    existing: list[Study] | None = None,
) -> tuple[list[Study], DedupReport]:
    """Parse a catalog CSV, collapsing duplicates against itself and against
    an optional existing catalog. Returns the *new* studies plus a report
    listing every collapse."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8-sig", newline="") as handle:
            return import_catalog(handle, existing)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("catalog is empty", line=1) from None
    columns = [name.strip().lower() for name in header]
    missing = [name for name in _REQUIRED_COLUMNS if name not in columns]
    if missing:
        raise MissingColumn("missing required columns: " + ", ".join(missing))
    extra_columns = [name for name in columns if name not in _REQUIRED_COLUMNS]
    position = {name: columns.index(name) for name in columns}

    seen_ids: dict[str, str] = {}
    seen_titles: dict[str, str] = {}
    for study in existing or []:
        seen_ids[study.id] = study.id
        seen_titles[normalize_title(study.title)] = study.id

    studies: list[Study] = []
    entries: list[DedupEntry] = []
    total = 0
    for line_number, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        total += 1
        if len(row) != len(columns):
            raise ParseError(
                f"expected {len(columns)} fields, found {len(row)}", line=line_number
            )
        study_id = row[position["id"]].strip()
        title = row[position["title"]].strip()
        if not study_id:
            raise ParseError("empty id", line=line_number)
        if not title:
            raise ParseError(f"empty title for id {study_id}", line=line_number)
        year_text = row[position["year"]].strip()
        try:
            year = int(year_text) if year_text else 0
        except ValueError:
            raise ParseError(f"year is not an integer: {year_text!r}", line=line_number) from None
        if study_id in seen_ids:
            entries.append(
                DedupEntry(line_number, study_id, seen_ids[study_id], "duplicate-id")
            )
            continue
        title_key = normalize_title(title)
        if title_key in seen_titles:
            entries.append(
                DedupEntry(line_number, study_id, seen_titles[title_key], "duplicate-title")
            )
            continue
        extra = {name: row[position[name]].strip() for name in extra_columns}
        studies.append(
            Study(
                id=study_id,
                title=title,
                source=row[position["source"]].strip(),
                year=year,
                extra=extra,
            )
        )
        seen_ids[study_id] = study_id
        seen_titles[title_key] = study_id
    return studies, DedupReport(total_rows=total, imported=len(studies), entries=entries)


def catalog_to_csv(studies: list[Study]) -> str:
    """Write studies back out in the catalog CSV format."""
    extra_columns = sorted({key for study in studies for key in study.extra})
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(list(_REQUIRED_COLUMNS) + extra_columns)
    for study in studies:
        row = [study.id, study.title, study.source, str(study.year)]
        row += [study.extra.get(column, "") for column in extra_columns]
        writer.writerow(row)
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Fraction-safe JSON helpers


def _frac_str(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


def _frac(value: str) -> Fraction:
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise CorruptDocument(f"bad rational value {value!r}") from exc


def _opt_frac_str(value: Fraction | None) -> str | None:
    return None if value is None else _frac_str(value)


def _opt_frac(value: str | None) -> Fraction | None:
    return None if value is None else _frac(value)


# ---------------------------------------------------------------------------
# Agreement report serialization


def report_to_doc(report: AgreementReport) -> dict:
    table = report.table
    return {
        "table": {"a": table.a, "b": table.b, "c": table.c, "d": table.d, "n": table.n},
        "p0": _frac_str(report.p0),
        "pc": _frac_str(report.pc),
        "k": _opt_frac_str(report.k),
        "k_max": _frac_str(report.k_max),
        "k_min": _frac_str(report.k_min),
        "k_nor": _frac_str(report.k_nor),
        "s_d": _opt_frac_str(report.s_d),
        "s_a": _opt_frac_str(report.s_a),
        "p_pp": _frac_str(report.p_pp),
        "p_mm": _frac_str(report.p_mm),
        "band": report.band.name.lower() if report.band else None,
        "paradox": report.paradox,
        "paradox_deviation": _opt_frac_str(report.paradox_deviation),
    }


def report_display(report: AgreementReport) -> dict:
    """Two-decimal display strings; undefined statistics render as "undef"."""
    return {
        "p0": format_half_up(report.p0),
        "pc": format_half_up(report.pc),
        "k": format_half_up(report.k),
        "k_max": format_half_up(report.k_max),
        "k_min": format_half_up(report.k_min),
        "k_nor": format_half_up(report.k_nor),
        "s_d": format_half_up(report.s_d),
        "s_a": format_half_up(report.s_a),
        "p_pp": format_half_up(report.p_pp),
        "p_mm": format_half_up(report.p_mm),
        "band": report.band.label if report.band else None,
        "paradox": report.paradox,
        "paradox_deviation": format_half_up(report.paradox_deviation)
        if report.paradox_deviation is not None
        else None,
    }


def _report_from_doc(doc: dict) -> AgreementReport:
    # the report is a pure function of the table; recompute rather than trust
    table = doc["table"]
    return agreement_report(
        ContingencyTable(int(table["a"]), int(table["b"]), int(table["c"]), int(table["d"]))
    )


# ---------------------------------------------------------------------------
# Session document


def _decision_to_doc(decision: Decision) -> dict:
    return {
        "reviewer": decision.reviewer,
        "study_id": decision.study_id,
        "verdict": decision.verdict.value,
        "cited_criteria": list(decision.cited_criteria),
        "time_spent_minutes": decision.time_spent_minutes,
        "recorded_at": decision.recorded_at,
    }


def _decision_from_doc(doc: dict) -> Decision:
    return Decision(
        reviewer=doc["reviewer"],
        study_id=doc["study_id"],
        verdict=Verdict(doc["verdict"]),
        cited_criteria=list(doc["cited_criteria"]),
        time_spent_minutes=doc["time_spent_minutes"],
        recorded_at=doc["recorded_at"],
    )


def session_to_doc(session: ReviewSession) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "session": {
            "created_at": session.created_at,
            "revision": session.revision,
            "phase": session.phase.value,
            "config": {
                "reviewers": list(session.config.reviewers),
                "seed": session.config.seed,
                "batch_size": session.config.batch_size,
                "threshold": _frac_str(session.config.threshold),
                "disagreement_policy": session.config.disagreement_policy.value,
                "max_rounds_warning": session.config.max_rounds_warning,
            },
            "catalog": [
                {
                    "id": study.id,
                    "title": study.title,
                    "source": study.source,
                    "year": study.year,
                    "extra": dict(sorted(study.extra.items())),
                }
                for study in session.catalog
            ],
            "criteria_history": [
                {
                    "version": criteria.version,
                    "inclusion": list(criteria.inclusion),
                    "exclusion": list(criteria.exclusion),
                    "change_note": criteria.change_note,
                    "created_at": criteria.created_at,
                }
                for criteria in session.criteria_history
            ],
            "rounds": [
                {
                    "index": rnd.index,
                    "batch": list(rnd.batch),
                    "criteria_version": rnd.criteria_version,
                    "status": rnd.status.value,
                    "decisions": {
                        reviewer: {
                            study_id: _decision_to_doc(decision)
                            for study_id, decision in sorted(decisions.items())
                        }
                        for reviewer, decisions in sorted(rnd.decisions.items())
                    },
                    "report": report_to_doc(rnd.report) if rnd.report else None,
                    "gate_passed": rnd.gate_passed,
                    "resolutions": {
                        study_id: {"verdict": res.verdict.value, "note": res.note}
                        for study_id, res in sorted(rnd.resolutions.items())
                    },
                    "finalized": rnd.finalized,
                }
                for rnd in session.rounds
            ],
            "partitions": (
                {reviewer: list(ids) for reviewer, ids in sorted(session.partitions.items())}
                if session.partitions is not None
                else None
            ),
            "phase2_decisions": {
                study_id: _decision_to_doc(decision)
                for study_id, decision in sorted(session.phase2_decisions.items())
            },
            "final_verdicts": {
                study_id: {
                    "verdict": final.verdict.value,
                    "origin": final.origin,
                    "round_index": final.round_index,
                }
                for study_id, final in sorted(session.final_verdicts.items())
            },
            "timing_log": [
                {
                    "actor": entry.actor,
                    "task": entry.task,
                    "phase": entry.phase,
                    "minutes": entry.minutes,
                }
                for entry in session.timing_log
            ],
        },
    }


def doc_to_session(doc: dict) -> ReviewSession:
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise CorruptDocument("not a session document")
    version = doc["schema_version"]
    if not isinstance(version, int) or version < 1:
        raise CorruptDocument(f"bad schema_version {version!r}")
    if version > SCHEMA_VERSION:
        raise SchemaMismatch(
            f"document schema {version} is newer than supported {SCHEMA_VERSION}"
        )
    # migration hook: nothing to migrate while only schema 1 exists
    try:
        body = doc["session"]
        config = SessionConfig(
            reviewers=tuple(body["config"]["reviewers"]),
            seed=body["config"]["seed"],
            batch_size=body["config"]["batch_size"],
            threshold=_frac(body["config"]["threshold"]),
            disagreement_policy=DisagreementPolicy(body["config"]["disagreement_policy"]),
            max_rounds_warning=body["config"]["max_rounds_warning"],
        )
        catalog = [
            Study(
                id=s["id"],
                title=s["title"],
                source=s["source"],
                year=s["year"],
                extra=dict(s["extra"]),
            )
            for s in body["catalog"]
        ]
        criteria_history = [
            CriteriaSet(
                version=c["version"],
                inclusion=list(c["inclusion"]),
                exclusion=list(c["exclusion"]),
                change_note=c["change_note"],
                created_at=c["created_at"],
            )
            for c in body["criteria_history"]
        ]
        rounds = []
        for r in body["rounds"]:
            rounds.append(
                Round(
                    index=r["index"],
                    batch=list(r["batch"]),
                    criteria_version=r["criteria_version"],
                    status=RoundStatus(r["status"]),
                    decisions={
                        reviewer: {
                            study_id: _decision_from_doc(d)
                            for study_id, d in decisions.items()
                        }
                        for reviewer, decisions in r["decisions"].items()
                    },
                    report=_report_from_doc(r["report"]) if r["report"] else None,
                    gate_passed=r["gate_passed"],
                    resolutions={
                        study_id: Resolution(verdict=Verdict(res["verdict"]), note=res["note"])
                        for study_id, res in r["resolutions"].items()
                    },
                    finalized=r["finalized"],
                )
            )
        partitions = body["partitions"]
        session = ReviewSession(
            catalog=catalog,
            config=config,
            criteria_history=criteria_history,
            created_at=body["created_at"],
            rounds=rounds,
            phase=Phase(body["phase"]),
            partitions=(
                {reviewer: list(ids) for reviewer, ids in partitions.items()}
                if partitions is not None
                else None
            ),
            phase2_decisions={
                study_id: _decision_from_doc(d)
                for study_id, d in body["phase2_decisions"].items()
            },
            final_verdicts={
                study_id: FinalVerdict(
                    verdict=Verdict(f["verdict"]),
                    origin=f["origin"],
                    round_index=f["round_index"],
                )
                for study_id, f in body["final_verdicts"].items()
            },
            timing_log=[
                TimingEntry(
                    actor=e["actor"], task=e["task"], phase=e["phase"], minutes=e["minutes"]
                )
                for e in body["timing_log"]
            ],
            revision=body["revision"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, StoreCorruption):
            raise
        raise CorruptDocument(f"malformed session document: {exc}") from exc
    return session


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def save_session(session: ReviewSession, path: str | Path) -> None:
    """Atomically write the canonical session document."""
    path = Path(path)
    text = canonical_json(session_to_doc(session))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def load_session(path: str | Path) -> ReviewSession:
    path = Path(path)
    if not path.exists():
        raise SessionNotFound(f"no session at {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptDocument(f"cannot read session document: {exc}") from exc
    return doc_to_session(doc)


# ---------------------------------------------------------------------------
# Round report export

_STATS_KEYS = ("k", "k_max", "k_min", "k_nor", "S_D", "P++")


def export_round_report(session: ReviewSession, round_index: int) -> str:
    """Verdict rows plus a '#'-prefixed statistics line for a closed round."""
    rnd = session.get_round(round_index)
    if rnd.status is not RoundStatus.CLOSED:
        raise RoundNotClosed(f"round {round_index} is not closed")
    first, second = session.reviewers
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["study_id", "title", first, second, "comments"])
    for study_id in rnd.batch:
        d1 = rnd.decisions[first][study_id]
        d2 = rnd.decisions[second][study_id]
        comments = [
            f"{first}: {' '.join(d1.cited_criteria) or '-'}",
            f"{second}: {' '.join(d2.cited_criteria) or '-'}",
        ]
        resolution = rnd.resolutions.get(study_id)
        if resolution is not None:
            note = f" ({resolution.note})" if resolution.note else ""
            comments.append(f"resolved {resolution.verdict.value}{note}")
        writer.writerow(
            [
                study_id,
                session.study(study_id).title,
                d1.verdict.value,
                d2.verdict.value,
                "; ".join(comments),
            ]
        )
    report = rnd.report
    assert report is not None
    stats = {
        "k": format_half_up(report.k),
        "k_max": format_half_up(report.k_max),
        "k_min": format_half_up(report.k_min),
        "k_nor": format_half_up(report.k_nor),
        "S_D": format_half_up(report.s_d),
        "P++": format_half_up(report.p_pp),
    }
    buffer.write("# " + " ".join(f"{key}={stats[key]}" for key in _STATS_KEYS) + "\n")
    return buffer.getvalue()


@dataclass
class ParsedRoundReport:
    columns: list[str]
    rows: list[list[str]]
    stats: dict[str, str]


def parse_round_report(text: str) -> ParsedRoundReport:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty round report", line=1)
    stats_lines = [line for line in lines if line.startswith("#")]
    if len(stats_lines) != 1:
        raise ParseError("expected exactly one statistics line")
    stats: dict[str, str] = {}
    for pair in stats_lines[0].lstrip("# ").split():
        key, _, value = pair.partition("=")
        if not value:
            raise ParseError(f"malformed statistics entry {pair!r}")
        stats[key] = value
    missing = [key for key in _STATS_KEYS if key not in stats]
    if missing:
        raise ParseError("statistics line missing: " + ", ".join(missing))
    table_lines = [line for line in lines if not line.startswith("#")]
    reader = csv.reader(io.StringIO("\n".join(table_lines) + "\n"))
    parsed = list(reader)
    if not parsed:
        raise ParseError("no verdict rows", line=1)
    columns, rows = parsed[0], parsed[1:]
    if len(columns) != 5:
        raise ParseError(f"expected 5 columns, found {len(columns)}", line=1)
    return ParsedRoundReport(columns=columns, rows=rows, stats=stats)


def render_round_report(parsed: ParsedRoundReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(parsed.columns)
    writer.writerows(parsed.rows)
    buffer.write(
        "# " + " ".join(f"{key}={parsed.stats[key]}" for key in _STATS_KEYS) + "\n"
    )
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Audited session store


def _canonical_payload(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _payload_digest(payload: dict) -> str:
    return hashlib.sha256(_canonical_payload(payload).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AuditEvent:
    sequence: int
    actor: str
    action: str
    payload: dict
    payload_sha256: str
    timestamp: str

    def to_line(self) -> str:
        return (
            _canonical_payload(
                {
                    "sequence": self.sequence,
                    "actor": self.actor,
                    "action": self.action,
                    "payload": self.payload,
                    "payload_sha256": self.payload_sha256,
                    "timestamp": self.timestamp,
                }
            )
            + "\n"
        )

    @classmethod
    def from_line(cls, line: str, line_number: int) -> "AuditEvent":
        try:
            raw = json.loads(line)
            event = cls(
                sequence=raw["sequence"],
                actor=raw["actor"],
                action=raw["action"],
                payload=raw["payload"],
                payload_sha256=raw["payload_sha256"],
                timestamp=raw["timestamp"],
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorruptDocument(f"bad audit event at line {line_number}: {exc}") from exc
        if event.payload_sha256 != _payload_digest(event.payload):
            raise CorruptDocument(f"audit digest mismatch at line {line_number}")
        return event


def _int_or_none(value) -> int | None:
    return None if value is None else int(value)


def _criteria_from_payload(payload: dict, version: int, at: str) -> CriteriaSet:
    return CriteriaSet(
        version=version,
        inclusion=[str(x) for x in payload["inclusion"]],
        exclusion=[str(x) for x in payload["exclusion"]],
        change_note=str(payload["change_note"]),
        created_at=at,
    )


def _threshold_fraction(value) -> Fraction:
    # floats round-trip through str() so "0.8" means exactly 4/5
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


# --- operation handlers: (session, payload) -> result dict


def _apply_create(payload: dict) -> tuple[ReviewSession, dict]:
    at = payload.get("at")
    catalog = [
        Study(
            id=str(s["id"]),
            title=str(s["title"]),
            source=str(s.get("source", "")),
            year=int(s.get("year", 0)),
            extra={str(k): str(v) for k, v in (s.get("extra") or {}).items()},
        )
        for s in payload["catalog"]
    ]
    criteria = _criteria_from_payload(payload["criteria"], version=1, at=at or "")
    if not criteria.created_at:
        criteria.created_at = protocol._utcnow()
    raw_config = payload["config"]
    config = SessionConfig(
        reviewers=tuple(raw_config["reviewers"]),
        seed=int(raw_config["seed"]),
        batch_size=int(raw_config.get("batch_size", 15)),
        threshold=_threshold_fraction(raw_config.get("threshold", "0.8")),
        disagreement_policy=DisagreementPolicy(
            raw_config.get("disagreement_policy", "consensus_required")
        ),
        max_rounds_warning=int(raw_config.get("max_rounds_warning", 5)),
    )
    session = protocol.create_session(catalog, criteria, config, at=at)
    return session, {
        "phase": session.phase.value,
        "total_studies": len(session.catalog),
        "criteria_version": session.criteria.version,
    }


def _apply_sample(session: ReviewSession, payload: dict) -> dict:
    rnd = protocol.sample_batch(session, at=payload.get("at"))
    return {
        "round_index": rnd.index,
        "batch": list(rnd.batch),
        "criteria_version": rnd.criteria_version,
    }


def _decision_from_payload(payload: dict) -> Decision:
    return Decision(
        reviewer=str(payload["reviewer"]),
        study_id=str(payload["study_id"]),
        verdict=Verdict.coerce(payload["verdict"]),
        cited_criteria=[str(x) for x in payload.get("cited_criteria") or []],
        time_spent_minutes=_int_or_none(payload.get("time_spent_minutes")),
        recorded_at=str(payload.get("at") or ""),
    )


def _apply_decision(session: ReviewSession, payload: dict) -> dict:
    decision = _decision_from_payload(payload)
    protocol.record_decision(session, int(payload["round_index"]), decision)
    return {
        "round_index": int(payload["round_index"]),
        "reviewer": decision.reviewer,
        "study_id": decision.study_id,
    }


def _apply_close(session: ReviewSession, payload: dict) -> dict:
    outcome = protocol.close_round(session, int(payload["round_index"]))
    return {
        "round_index": outcome.round_index,
        "gate_passed": outcome.gate_passed,
        "phase": outcome.phase.value,
        "disagreements": outcome.disagreements,
        "directive": outcome.directive,
        "headline": outcome.headline(),
        "report": report_to_doc(outcome.report),
        "display": report_display(outcome.report),
    }


def _apply_resolve(session: ReviewSession, payload: dict) -> dict:
    resolutions = {
        str(r["study_id"]): Resolution(
            verdict=Verdict.coerce(r["verdict"]), note=str(r.get("note", ""))
        )
        for r in payload.get("resolutions") or []
    }
    raw = payload.get("new_criteria")
    new_criteria = None
    if raw is not None:
        new_criteria = (
            [str(x) for x in raw["inclusion"]],
            [str(x) for x in raw["exclusion"]],
            str(raw["change_note"]),
        )
    round_index = int(payload["round_index"])
    protocol.resolve_and_refine(
        session, round_index, resolutions, new_criteria, at=payload.get("at")
    )
    rnd = session.get_round(round_index)
    return {
        "round_index": round_index,
        "finalized": rnd.finalized,
        "criteria_version": session.criteria.version,
        "final_verdicts": {
            study_id: session.final_verdicts[study_id].verdict.value
            for study_id in rnd.batch
        },
    }


def _apply_revise(session: ReviewSession, payload: dict) -> dict:
    criteria = protocol.revise_criteria(
        session,
        [str(x) for x in payload["inclusion"]],
        [str(x) for x in payload["exclusion"]],
        str(payload["change_note"]),
        at=payload.get("at"),
    )
    return {"criteria_version": criteria.version}


def _apply_partition(session: ReviewSession, payload: dict) -> dict:
    partitions = protocol.partition_remaining(session)
    return {
        "partitions": {reviewer: list(ids) for reviewer, ids in sorted(partitions.items())},
        "phase": session.phase.value,
    }


def _apply_phase2(session: ReviewSession, payload: dict) -> dict:
    decision = _decision_from_payload(payload)
    protocol.record_phase2_decision(session, decision)
    total = sum(len(ids) for ids in (session.partitions or {}).values())
    return {
        "reviewer": decision.reviewer,
        "study_id": decision.study_id,
        "phase": session.phase.value,
        "decided": len(session.phase2_decisions),
        "remaining": total - len(session.phase2_decisions),
    }


def _apply_log_time(session: ReviewSession, payload: dict) -> dict:
    protocol.log_time(
        session,
        TimingEntry(
            actor=str(payload["actor"]),
            task=str(payload["task"]),
            phase=int(payload["phase"]),
            minutes=int(payload["minutes"]),
        ),
    )
    return {"entries": len(session.timing_log)}


_HANDLERS = {
    "sample_batch": _apply_sample,
    "record_decision": _apply_decision,
    "close_round": _apply_close,
    "resolve_and_refine": _apply_resolve,
    "revise_criteria": _apply_revise,
    "partition_remaining": _apply_partition,
    "record_phase2_decision": _apply_phase2,
    "log_time": _apply_log_time,
}

CREATE_ACTION = "create_session"

#: every mutating operation reachable through a store
MUTATING_ACTIONS = (CREATE_ACTION,) + tuple(_HANDLERS)


class SessionStore:
    """One session on disk: canonical document, audit log, advisory lock.

    All mutations flow through `execute`, which reloads the document, applies
    the named operation, bumps the revision, appends the audit event and
    atomically rewrites the file while holding a cross-process lock.
    """

    def __init__(self, path: str | Path):
        self.path = resolve_path(path)
        self.audit_path = self.path.with_name(self.path.name + ".audit")
        self._lock = FileLock(str(self.path.with_name(self.path.name + ".lock")))

    # -- reads

    def exists(self) -> bool:
        return self.path.exists()

    def session(self) -> ReviewSession:
        return load_session(self.path)

    def document_bytes(self) -> bytes:
        if not self.path.exists():
            raise SessionNotFound(f"no session at {self.path}")
        return self.path.read_bytes()

    def events(self) -> list[AuditEvent]:
        if not self.audit_path.exists():
            return []
        events = []
        with open(self.audit_path, encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                if line.strip():
                    events.append(AuditEvent.from_line(line, line_number))
        return events

    # -- writes

    @classmethod
    def create(
        cls,
        path: str | Path,
        payload: dict,
        actor: str,
        at: str | None = None,
    ) -> tuple["SessionStore", dict]:
        store = cls(path)
        with store._lock:
            if store.path.exists():
                raise SessionExists(f"session already exists at {store.path}")
            if at is not None:
                payload = {**payload, "at": at}
            session, result = _apply_create(payload)
            store.path.parent.mkdir(parents=True, exist_ok=True)
            save_session(session, store.path)
            store._append_event(0, actor, CREATE_ACTION, payload)
        return store, result

    def execute(
        self,
        action: str,
        payload: dict,
        actor: str,
        at: str | None = None,
        expected_revision: int | None = None,
    ) -> dict:
        if action == CREATE_ACTION:
            raise KappaSelectError("create_session goes through SessionStore.create")
        handler = _HANDLERS.get(action)
        if handler is None:
            raise KappaSelectError(f"unknown action {action!r}")
        if at is not None:
            payload = {**payload, "at": at}
        with self._lock:
            session = self.session()
            if expected_revision is not None and expected_revision != session.revision:
                raise ConcurrencyConflict(
                    f"expected revision {expected_revision}, store is at {session.revision}"
                )
            result = handler(session, payload)
            session.revision += 1
            save_session(session, self.path)
            self._append_event(session.revision, actor, action, payload)
        return result

    def execute_many(
        self,
        steps: list[tuple[str, dict]],
        actor: str,
        at: str | None = None,
        expected_revision: int | None = None,
    ) -> list[dict]:
        """Apply several operations atomically: either every step lands (one
        document write, one audit event per step) or none do."""
        prepared = []
        for action, payload in steps:
            handler = _HANDLERS.get(action)
            if handler is None:
                raise KappaSelectError(f"unknown action {action!r}")
            if at is not None:
                payload = {**payload, "at": at}
            prepared.append((action, payload, handler))
        with self._lock:
            session = self.session()
            if expected_revision is not None and expected_revision != session.revision:
                raise ConcurrencyConflict(
                    f"expected revision {expected_revision}, store is at {session.revision}"
                )
            results = []
            sequence = session.revision
            for action, payload, handler in prepared:
                results.append(handler(session, payload))
                sequence += 1
            session.revision = sequence
            save_session(session, self.path)
            base = sequence - len(prepared)
            for offset, (action, payload, _) in enumerate(prepared, start=1):
                self._append_event(base + offset, actor, action, payload)
        return results

    def _append_event(self, sequence: int, actor: str, action: str, payload: dict) -> None:
        event = AuditEvent(
            sequence=sequence,
            actor=actor,
            action=action,
            payload=payload,
            payload_sha256=_payload_digest(payload),
            timestamp=str(payload.get("at") or protocol._utcnow()),
        )
        with open(self.audit_path, "a", encoding="utf-8") as handle:
            handle.write(event.to_line())

    # -- replay

    @classmethod
    def replay_events(cls, events: list[AuditEvent]) -> ReviewSession:
        """Fold an audit log from an empty state back into a session."""
        if not events:
            raise CorruptDocument("audit log is empty")
        for expected, event in enumerate(events):
            if event.sequence != expected:
                raise CorruptDocument(
                    f"audit sequence gap: expected {expected}, found {event.sequence}"
                )
        if events[0].action != CREATE_ACTION:
            raise CorruptDocument("audit log does not begin with session creation")
        session, _ = _apply_create(events[0].payload)
        for event in events[1:]:
            handler = _HANDLERS.get(event.action)
            if handler is None:
                raise CorruptDocument(f"unknown audited action {event.action!r}")
            handler(session, event.payload)
            session.revision += 1
        return session

    def replay(self) -> ReviewSession:
        return self.replay_events(self.events())
