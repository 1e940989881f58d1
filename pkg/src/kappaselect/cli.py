"""Offline command-line driver for review sessions.

Every session operation is reachable from here without the HTTP service:
init, import, criteria show/revise, sample, decide, close-round, resolve,
partition, decide2, log-time, summary, savings, curve.

Exit codes: 0 success, 1 user error (preconditions, bad input), 2 broken
store or internal failure. Mutations are written atomically, so a failed
command never leaves a half-updated session behind.
"""

from __future__ import annotations

import csv
import json
import random as _random
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import click

from . import store as store_mod
from . import timemodel
from .agreement import Verdict
from .errors import KappaSelectError, StoreCorruption
from .protocol import RoundStatus, session_summary
from .store import SessionStore
from .timemodel import TimeModel, curve_to_csv, fit_model, projection_curve

__all__ = ["CommandResult", "main", "run"]


@dataclass
class CommandResult:
    exit_code: int
    text: str
    payload: dict | None = None


def _emit(ctx: click.Context, text: str, payload: dict | None = None) -> None:
    state = ctx.obj
    state["payload"] = payload
    state["text"] = text
    if state.get("format") == "machine":
        click.echo(json.dumps(payload if payload is not None else {"text": text}, sort_keys=True))
    elif text:
        click.echo(text)


def _session_option(fn):
    return click.option(
        "--session",
        "session_path",
        required=True,
        help="Path to the session document (relative paths resolve against "
        f"${store_mod.DATA_DIR_ENV}).",
    )(fn)


def _common_options(fn):
    fn = click.option(
        "--format",
        "format_",
        type=click.Choice(["text", "machine"]),
        default="text",
        show_default=True,
        help="Human text or machine-readable JSON.",
    )(fn)
    fn = click.option("--at", default=None, help="Override the recorded timestamp (ISO 8601 UTC).")(fn)
    fn = click.option("--actor", default="cli", show_default=True, help="Actor recorded in the audit log.")(fn)
    return fn


def _set_format(ctx: click.Context, format_: str) -> None:
    ctx.obj["format"] = format_


def _parse_criteria_file(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise KappaSelectError(f"cannot read criteria file {path}: {exc}") from exc
    for key in ("inclusion", "exclusion"):
        if key not in raw or not isinstance(raw[key], list):
            raise KappaSelectError(f"criteria file {path} needs a list field {key!r}")
    return {
        "inclusion": [str(x) for x in raw["inclusion"]],
        "exclusion": [str(x) for x in raw["exclusion"]],
        "change_note": str(raw.get("change_note", "")),
    }


def _split_refs(text: str | None) -> list[str]:
    if not text:
        return []
    return [ref for chunk in text.replace(";", ",").split(",") if (ref := chunk.strip())]


def _read_decision_rows(path: str) -> list[dict]:
    """Parse a decision batch file: study_id, include (Y/N), criteria, minutes."""
    try:
        handle = open(path, encoding="utf-8-sig", newline="")
    except OSError as exc:
        raise KappaSelectError(f"cannot read decision file {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        field_names = [name.strip().lower() for name in reader.fieldnames or []]
        if "study_id" not in field_names or "include" not in field_names:
            raise KappaSelectError(
                f"decision file {path} needs at least study_id and include columns"
            )
        rows = []
        for line_number, raw in enumerate(reader, start=2):
            row = {(k or "").strip().lower(): (v or "").strip() for k, v in raw.items()}
            flag = row.get("include", "").upper()
            if flag not in ("Y", "N"):
                raise KappaSelectError(
                    f"{path} line {line_number}: include must be Y or N, got {flag!r}"
                )
            minutes_text = row.get("minutes", "")
            rows.append(
                {
                    "study_id": row["study_id"],
                    "verdict": Verdict.INCLUDE.value if flag == "Y" else Verdict.EXCLUDE.value,
                    "cited_criteria": _split_refs(row.get("criteria")),
                    "time_spent_minutes": timemodel.parse_hhmm(minutes_text) if minutes_text else None,
                }
            )
    if not rows:
        raise KappaSelectError(f"decision file {path} contains no rows")
    return rows


def _open_round_index(store: SessionStore) -> int:
    rnd = store.session().open_round()
    if rnd is None:
        raise KappaSelectError("no open round; run `sample` first")
    return rnd.index


def _latest_closed_unfinalized(store: SessionStore) -> int:
    for rnd in reversed(store.session().rounds):
        if rnd.status is RoundStatus.CLOSED and not rnd.finalized:
            return rnd.index
    raise KappaSelectError("no closed round awaiting resolution")


@click.group(name="kappaselect")
def cli() -> None:
    """Kappa-gated dual-review workbench."""


# -- init -------------------------------------------------------------------


@cli.command("init")
@_session_option
@_common_options
@click.option("--catalog", "catalog_path", required=True, help="Catalog CSV to review.")
@click.option("--criteria", "criteria_path", required=True, help="Criteria JSON (inclusion/exclusion lists).")
@click.option("--reviewer", "reviewers", multiple=True, required=True, help="Reviewer id (give exactly twice).")
@click.option("--seed", type=int, default=None, help="Sampling seed (random if omitted, recorded in the session).")
@click.option("--batch-size", type=int, default=15, show_default=True)
@click.option("--threshold", default="0.8", show_default=True, help="Kappa gate threshold (decimal or p/q).")
@click.option(
    "--policy",
    type=click.Choice(["consensus", "include-on-disagreement"]),
    default="consensus",
    show_default=True,
)
@click.option("--max-rounds-warning", type=int, default=5, show_default=True)
@click.pass_context
def cmd_init(
    ctx, session_path, format_, at, actor, catalog_path, criteria_path, reviewers,
    seed, batch_size, threshold, policy, max_rounds_warning,
):
    """Create a new session over a catalog."""
    _set_format(ctx, format_)
    studies, report = store_mod.import_catalog(catalog_path)
    criteria = _parse_criteria_file(criteria_path)
    if not criteria["change_note"]:
        criteria["change_note"] = "initial criteria"
    if seed is None:
        seed = _random.SystemRandom().getrandbits(32)
    payload = {
        "catalog": [
            {"id": s.id, "title": s.title, "source": s.source, "year": s.year, "extra": s.extra}
            for s in studies
        ],
        "criteria": criteria,
        "config": {
            "reviewers": list(reviewers),
            "seed": seed,
            "batch_size": batch_size,
            "threshold": str(Fraction(threshold)),
            "disagreement_policy": (
                "consensus_required" if policy == "consensus" else "include_on_disagreement"
            ),
            "max_rounds_warning": max_rounds_warning,
        },
    }
    _, result = SessionStore.create(session_path, payload, actor=actor, at=at)
    lines = [f"session created: {len(studies)} studies, seed {seed}"]
    if report.duplicates:
        lines.append(f"catalog import collapsed {report.duplicates} duplicate rows")
    _emit(ctx, "\n".join(lines), {**result, "seed": seed, "duplicates": report.duplicates})


# -- import -----------------------------------------------------------------


@cli.command("import")
@_common_options
@click.option("--input", "input_path", required=True, help="Raw catalog CSV.")
@click.option("--output", "output_path", required=True, help="Normalized catalog CSV to write.")
@click.option("--existing", "existing_path", default=None, help="Dedup against this catalog too.")
@click.pass_context
def cmd_import(ctx, format_, at, actor, input_path, output_path, existing_path):
    """Import a catalog CSV, collapsing duplicate rows."""
    _set_format(ctx, format_)
    existing = None
    if existing_path:
        existing, _ = store_mod.import_catalog(existing_path)
    studies, report = store_mod.import_catalog(input_path, existing=existing)
    Path(output_path).write_text(store_mod.catalog_to_csv(studies), encoding="utf-8")
    lines = [
        f"imported {report.imported} studies from {report.total_rows} rows "
        f"({report.duplicates} duplicates collapsed)"
    ]
    for entry in report.entries[:20]:
        lines.append(f"  line {entry.line}: {entry.dropped_id} -> kept {entry.kept_id} ({entry.reason})")
    if report.duplicates > 20:
        lines.append(f"  ... and {report.duplicates - 20} more")
    _emit(
        ctx,
        "\n".join(lines),
        {
            "imported": report.imported,
            "total_rows": report.total_rows,
            "duplicates": report.duplicates,
            "entries": [
                {
                    "line": e.line,
                    "dropped_id": e.dropped_id,
                    "kept_id": e.kept_id,
                    "reason": e.reason,
                }
                for e in report.entries
            ],
        },
    )


# -- criteria ---------------------------------------------------------------


@cli.group("criteria")
def cmd_criteria() -> None:
    """Show or revise the selection criteria."""


@cmd_criteria.command("show")
@_session_option
@_common_options
@click.option("--version", "version", type=int, default=None, help="Show one version (default: latest).")
@click.pass_context
def cmd_criteria_show(ctx, session_path, format_, at, actor, version):
    _set_format(ctx, format_)
    session = SessionStore(session_path).session()
    sets = session.criteria_history
    if version is not None:
        sets = [session.criteria_version(version)]
    lines = []
    payload = []
    for criteria in sets:
        lines.append(f"criteria v{criteria.version} ({criteria.created_at}): {criteria.change_note}")
        for i, text in enumerate(criteria.inclusion, start=1):
            lines.append(f"  IC{i}: {text}")
        for i, text in enumerate(criteria.exclusion, start=1):
            lines.append(f"  EC{i}: {text}")
        payload.append(
            {
                "version": criteria.version,
                "inclusion": list(criteria.inclusion),
                "exclusion": list(criteria.exclusion),
                "change_note": criteria.change_note,
                "created_at": criteria.created_at,
            }
        )
    _emit(ctx, "\n".join(lines), {"criteria": payload})


@cmd_criteria.command("revise")
@_session_option
@_common_options
@click.option("--file", "criteria_path", required=True, help="Criteria JSON for the next version.")
@click.option("--note", default=None, help="Change note (overrides the file's change_note).")
@click.pass_context
def cmd_criteria_revise(ctx, session_path, format_, at, actor, criteria_path, note):
    _set_format(ctx, format_)
    criteria = _parse_criteria_file(criteria_path)
    if note:
        criteria["change_note"] = note
    result = SessionStore(session_path).execute("revise_criteria", criteria, actor=actor, at=at)
    _emit(ctx, f"criteria v{result['criteria_version']} recorded", result)


# -- round flow -------------------------------------------------------------


@cli.command("sample")
@_session_option
@_common_options
@click.pass_context
def cmd_sample(ctx, session_path, format_, at, actor):
    """Draw the next random batch and open a round."""
    _set_format(ctx, format_)
    result = SessionStore(session_path).execute("sample_batch", {}, actor=actor, at=at)
    text = (
        f"round {result['round_index']} opened with {len(result['batch'])} studies "
        f"(criteria v{result['criteria_version']})\n" + "\n".join(f"  {s}" for s in result["batch"])
    )
    _emit(ctx, text, result)


@cli.command("decide")
@_session_option
@_common_options
@click.option("--reviewer", required=True)
@click.option("--round", "round_index", type=int, default=None, help="Round (default: the open round).")
@click.option("--study", "study_id", default=None)
@click.option("--verdict", type=click.Choice(["include", "exclude"]), default=None)
@click.option("--criteria", "refs", default=None, help="Cited criteria, e.g. 'IC1,EC2'.")
@click.option("--minutes", type=int, default=None, help="Self-reported minutes for this decision.")
@click.option("--file", "batch_path", default=None, help="Decision batch CSV (study_id,include,criteria,minutes).")
@click.pass_context
def cmd_decide(ctx, session_path, format_, at, actor, reviewer, round_index, study_id, verdict, refs, minutes, batch_path):
    """Record phase-1 verdicts, singly or from a batch file."""
    _set_format(ctx, format_)
    store = SessionStore(session_path)
    if round_index is None:
        round_index = _open_round_index(store)
    if batch_path is not None:
        if study_id or verdict:
            raise KappaSelectError("use either --file or --study/--verdict, not both")
        rows = _read_decision_rows(batch_path)
        steps = [
            (
                "record_decision",
                {"round_index": round_index, "reviewer": reviewer, **row},
            )
            for row in rows
        ]
        store.execute_many(steps, actor=actor, at=at)
        _emit(
            ctx,
            f"recorded {len(rows)} decisions by {reviewer} in round {round_index}",
            {"round_index": round_index, "reviewer": reviewer, "recorded": len(rows)},
        )
        return
    if not study_id or not verdict:
        raise KappaSelectError("give --study and --verdict, or a --file batch")
    payload = {
        "round_index": round_index,
        "reviewer": reviewer,
        "study_id": study_id,
        "verdict": verdict,
        "cited_criteria": _split_refs(refs),
        "time_spent_minutes": minutes,
    }
    result = store.execute("record_decision", payload, actor=actor, at=at)
    _emit(ctx, f"recorded {verdict} for {study_id} by {reviewer}", result)


@cli.command("close-round")
@_session_option
@_common_options
@click.option("--round", "round_index", type=int, default=None, help="Round (default: the open round).")
@click.pass_context
def cmd_close_round(ctx, session_path, format_, at, actor, round_index):
    """Close a fully-decided round and print its agreement report."""
    _set_format(ctx, format_)
    store = SessionStore(session_path)
    if round_index is None:
        round_index = _open_round_index(store)
    result = store.execute("close_round", {"round_index": round_index}, actor=actor, at=at)
    display = result["display"]
    lines = [result["headline"]]
    lines.append(
        "p0={p0} pc={pc} k_max={k_max} k_min={k_min} k_nor={k_nor} "
        "S_D={s_d} S_A={s_a} P++={p_pp} P--={p_mm}".format(**display)
    )
    if display["paradox"]:
        lines.append(
            f"paradox warning: high observed agreement with low kappa "
            f"(|k - k_nor| = {display['paradox_deviation']}); inspect marginal balance"
        )
    if result["disagreements"]:
        lines.append("disagreements: " + ", ".join(result["disagreements"]))
    _emit(ctx, "\n".join(lines), result)


@cli.command("resolve")
@_session_option
@_common_options
@click.option("--round", "round_index", type=int, default=None, help="Round (default: latest closed, unresolved).")
@click.option(
    "--resolution",
    "resolutions",
    multiple=True,
    help="STUDY=verdict[:note], e.g. '35705=exclude:not peer reviewed'. Repeatable.",
)
@click.option("--criteria-file", "criteria_path", default=None, help="Revised criteria JSON for the next version.")
@click.option("--note", default=None, help="Change note (overrides the criteria file's).")
@click.pass_context
def cmd_resolve(ctx, session_path, format_, at, actor, round_index, resolutions, criteria_path, note):
    """Fix consensus verdicts for a closed round and refine the criteria."""
    _set_format(ctx, format_)
    store = SessionStore(session_path)
    if round_index is None:
        round_index = _latest_closed_unfinalized(store)
    parsed = []
    for text in resolutions:
        study, _, rest = text.partition("=")
        verdict, _, res_note = rest.partition(":")
        if not study or verdict not in ("include", "exclude"):
            raise KappaSelectError(f"bad --resolution {text!r}; expected STUDY=include|exclude[:note]")
        parsed.append({"study_id": study.strip(), "verdict": verdict, "note": res_note.strip()})
    payload: dict = {"round_index": round_index, "resolutions": parsed}
    if criteria_path is not None:
        criteria = _parse_criteria_file(criteria_path)
        if note:
            criteria["change_note"] = note
        payload["new_criteria"] = criteria
    result = store.execute("resolve_and_refine", payload, actor=actor, at=at)
    _emit(
        ctx,
        f"round {round_index} resolved; criteria at v{result['criteria_version']}",
        result,
    )


@cli.command("partition")
@_session_option
@_common_options
@click.pass_context
def cmd_partition(ctx, session_path, format_, at, actor):
    """Split the remaining pool between the two reviewers."""
    _set_format(ctx, format_)
    result = SessionStore(session_path).execute("partition_remaining", {}, actor=actor, at=at)
    sizes = {reviewer: len(ids) for reviewer, ids in result["partitions"].items()}
    text = "partitioned: " + ", ".join(f"{r}={n}" for r, n in sorted(sizes.items()))
    _emit(ctx, text, result)


@cli.command("decide2")
@_session_option
@_common_options
@click.option("--reviewer", required=True)
@click.option("--study", "study_id", default=None)
@click.option("--verdict", type=click.Choice(["include", "exclude"]), default=None)
@click.option("--criteria", "refs", default=None)
@click.option("--minutes", type=int, default=None)
@click.option("--file", "batch_path", default=None, help="Decision batch CSV.")
@click.pass_context
def cmd_decide2(ctx, session_path, format_, at, actor, reviewer, study_id, verdict, refs, minutes, batch_path):
    """Record final single-review verdicts in phase 2."""
    _set_format(ctx, format_)
    store = SessionStore(session_path)
    if batch_path is not None:
        if study_id or verdict:
            raise KappaSelectError("use either --file or --study/--verdict, not both")
        rows = _read_decision_rows(batch_path)
        steps = [
            ("record_phase2_decision", {"reviewer": reviewer, **row})
            for row in rows
        ]
        results = store.execute_many(steps, actor=actor, at=at)
        _emit(
            ctx,
            f"recorded {len(rows)} phase-2 decisions by {reviewer} "
            f"({results[-1]['remaining']} remaining)",
            {"reviewer": reviewer, "recorded": len(rows), "phase": results[-1]["phase"]},
        )
        return
    if not study_id or not verdict:
        raise KappaSelectError("give --study and --verdict, or a --file batch")
    payload = {
        "reviewer": reviewer,
        "study_id": study_id,
        "verdict": verdict,
        "cited_criteria": _split_refs(refs),
        "time_spent_minutes": minutes,
    }
    result = store.execute("record_phase2_decision", payload, actor=actor, at=at)
    _emit(ctx, f"recorded {verdict} for {study_id} ({result['remaining']} remaining)", result)


@cli.command("log-time")
@_session_option
@_common_options
@click.option("--who", "who", required=True, help="Actor the minutes belong to (e.g. R1, 'R1 & R2').")
@click.option("--task", required=True)
@click.option("--phase", type=click.IntRange(1, 2), required=True)
@click.option("--minutes", type=int, default=None)
@click.option("--time", "hhmm", default=None, help="Duration as hh:mm (alternative to --minutes).")
@click.pass_context
def cmd_log_time(ctx, session_path, format_, at, actor, who, task, phase, minutes, hhmm):
    """Append a self-reported timing entry."""
    _set_format(ctx, format_)
    if (minutes is None) == (hhmm is None):
        raise KappaSelectError("give exactly one of --minutes or --time")
    if hhmm is not None:
        minutes = timemodel.parse_hhmm(hhmm)
    payload = {"actor": who, "task": task, "phase": phase, "minutes": minutes}
    result = SessionStore(session_path).execute("log_time", payload, actor=actor, at=at)
    _emit(ctx, f"logged {timemodel.format_hhmm(minutes)} for {who} (phase {phase})", result)


# -- reports ----------------------------------------------------------------


@cli.command("summary")
@_session_option
@_common_options
@click.pass_context
def cmd_summary(ctx, session_path, format_, at, actor):
    """Progress snapshot: phases, rounds, kappa trajectory, counts."""
    _set_format(ctx, format_)
    session = SessionStore(session_path).session()
    summary = session_summary(session)
    lines = [
        f"phase: {summary['phase']} | studies: {summary['total_studies']} "
        f"| pool remaining: {summary['pool_remaining']}"
    ]
    for rnd in summary["rounds"]:
        bits = f"round {rnd['index']}: {rnd['status']}"
        if "k" in rnd:
            gate = "passed" if rnd["gate_passed"] else "not passed"
            bits += f", k={rnd['k']} ({rnd['band'] or 'no band'}), gate {gate}"
        lines.append(bits)
    if summary["k_trajectory"]:
        lines.append("k trajectory: " + " -> ".join(summary["k_trajectory"]))
    lines.append(
        f"phase 1 selected {summary['phase1']['included']} / excluded {summary['phase1']['excluded']}"
    )
    phase2 = summary["phase2"]
    if phase2["partition_sizes"]:
        sizes = ", ".join(f"{r}={n}" for r, n in phase2["partition_sizes"].items())
        by_reviewer = ", ".join(
            f"{r}={n}" for r, n in phase2["included_by_reviewer"].items()
        )
        lines.append(
            f"phase 2 partitions: {sizes} | included {phase2['included']} ({by_reviewer}) "
            f"/ excluded {phase2['excluded']}"
        )
    lines.append(f"total selected: {summary['total_selected']}")
    if summary["warning"]:
        lines.append(f"warning: {summary['warning']}")
    _emit(ctx, "\n".join(lines), summary)


@cli.command("savings")
@_session_option
@_common_options
@click.pass_context
def cmd_savings(ctx, session_path, format_, at, actor):
    """Fit the time model from the session log and report the saving."""
    _set_format(ctx, format_)
    session = SessionStore(session_path).session()
    fitted = fit_model(session)
    _emit(ctx, fitted.headline(), fitted.as_payload())


@cli.command("curve")
@_session_option
@_common_options
@click.option("--s-max", "s_max", type=int, required=True)
@click.option("--steps", type=int, default=50, show_default=True)
@click.option("--velocity", "v", default=None, help="Override fitted velocity (studies/minute).")
@click.option("--t0", default=None, help="Override fitted dual-phase minutes.")
@click.option("--output", "output_path", default=None, help="Write CSV here instead of stdout.")
@click.pass_context
def cmd_curve(ctx, session_path, format_, at, actor, s_max, steps, v, t0, output_path):
    """Export the projected time-saving curve as CSV."""
    _set_format(ctx, format_)
    if v is not None and t0 is not None:
        model = TimeModel(v=Fraction(v), t0=Fraction(t0))
    elif v is None and t0 is None:
        model = fit_model(SessionStore(session_path).session()).model
    else:
        raise KappaSelectError("give both --velocity and --t0, or neither")
    curve = projection_curve(model, s_max, steps)
    text = curve_to_csv(curve)
    if output_path:
        Path(output_path).write_text(text, encoding="utf-8")
        _emit(ctx, f"wrote {len(curve.points)} points to {output_path}", {"points": len(curve.points)})
    else:
        _emit(
            ctx,
            text.rstrip("\n"),
            {"csv": text, "points": len(curve.points)},
        )


# -- entry points -----------------------------------------------------------


def run(argv: list[str]) -> CommandResult:
    """Execute one CLI invocation and map errors onto exit codes."""
    state: dict = {}
    try:
        cli.main(args=list(argv), prog_name="kappaselect", standalone_mode=False, obj=state)
    except click.ClickException as exc:
        message = exc.format_message()
        click.echo(f"error: {message}", err=True)
        return CommandResult(1, f"error: {message}")
    except click.exceptions.Abort:
        return CommandResult(1, "aborted")
    except StoreCorruption as exc:
        click.echo(f"store error: {exc}", err=True)
        return CommandResult(2, f"store error: {exc}")
    except KappaSelectError as exc:
        click.echo(f"error: {exc}", err=True)
        return CommandResult(1, f"error: {exc}")
    except Exception as exc:  # noqa: BLE001 - last-resort guard for exit code 2
        click.echo(f"internal error: {exc}", err=True)
        return CommandResult(2, f"internal error: {exc}")
    return CommandResult(0, state.get("text", ""), state.get("payload"))


def main() -> None:
    sys.exit(run(sys.argv[1:]).exit_code)


if __name__ == "__main__":
    main()
