"""CLI behaviour: full case-study replay, single commands, exit codes."""

import csv
import json

import pytest

from kappaselect.cli import run

from paperfixture import (
    CRITERIA_V1,
    EXPECTED_K_TRAJECTORY,
    EXPECTED_PARTITION_SIZES,
    EXPECTED_PHASE1_SELECTED,
    EXPECTED_TOTAL_SELECTED,
    drive_case_study,
    make_catalog,
    session_config,
)


def ok(*argv):
    result = run([str(a) for a in argv])
    assert result.exit_code == 0, result.text
    return result


def write_catalog_csv(path, catalog):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["id", "title", "source", "year"])
        for study in catalog:
            writer.writerow([study["id"], study["title"], study["source"], study["year"]])


def write_criteria_json(path, criteria):
    path.write_text(json.dumps(criteria), encoding="utf-8")


def make_cli_driver(session_path, tmp_path):
    """Adapt the case-study script onto CLI invocations."""
    scratch = tmp_path / "cli-files"
    scratch.mkdir(exist_ok=True)
    counter = {"n": 0}

    def do(action, payload, actor, at):
        base = ["--session", str(session_path), "--actor", actor, "--at", at]
        if action == "create_session":
            catalog_path = scratch / "catalog.csv"
            criteria_path = scratch / "criteria-v1.json"
            write_catalog_csv(catalog_path, payload["catalog"])
            write_criteria_json(criteria_path, payload["criteria"])
            config = payload["config"]
            argv = [
                "init", *base,
                "--catalog", catalog_path,
                "--criteria", criteria_path,
                "--reviewer", config["reviewers"][0],
                "--reviewer", config["reviewers"][1],
                "--seed", config["seed"],
                "--batch-size", config["batch_size"],
                "--threshold", config["threshold"],
                "--policy", "consensus",
                "--max-rounds-warning", config["max_rounds_warning"],
            ]
            return ok(*argv).payload
        if action == "sample_batch":
            return ok("sample", *base).payload
        if action == "record_decision":
            argv = [
                "decide", *base,
                "--reviewer", payload["reviewer"],
                "--round", payload["round_index"],
                "--study", payload["study_id"],
                "--verdict", payload["verdict"],
            ]
            if payload.get("cited_criteria"):
                argv += ["--criteria", ",".join(payload["cited_criteria"])]
            if payload.get("time_spent_minutes") is not None:
                argv += ["--minutes", payload["time_spent_minutes"]]
            return ok(*argv).payload
        if action == "close_round":
            return ok("close-round", *base, "--round", payload["round_index"]).payload
        if action == "resolve_and_refine":
            argv = ["resolve", *base, "--round", payload["round_index"]]
            for resolution in payload["resolutions"]:
                spec = f"{resolution['study_id']}={resolution['verdict']}"
                if resolution.get("note"):
                    spec += f":{resolution['note']}"
                argv += ["--resolution", spec]
            if payload.get("new_criteria") is not None:
                counter["n"] += 1
                criteria_path = scratch / f"criteria-{counter['n']}.json"
                write_criteria_json(criteria_path, payload["new_criteria"])
                argv += ["--criteria-file", criteria_path]
            return ok(*argv).payload
        if action == "partition_remaining":
            return ok("partition", *base).payload
        if action == "record_phase2_decision":
            argv = [
                "decide2", *base,
                "--reviewer", payload["reviewer"],
                "--study", payload["study_id"],
                "--verdict", payload["verdict"],
            ]
            if payload.get("cited_criteria"):
                argv += ["--criteria", ",".join(payload["cited_criteria"])]
            return ok(*argv).payload
        if action == "log_time":
            return ok(
                "log-time", *base,
                "--who", payload["actor"],
                "--task", payload["task"],
                "--phase", payload["phase"],
                "--minutes", payload["minutes"],
            ).payload
        raise AssertionError(f"unmapped action {action}")

    return do


@pytest.fixture(scope="module")
def cli_case_study(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cli-case")
    session_path = tmp_path / "session.json"
    artifacts = drive_case_study(make_cli_driver(session_path, tmp_path))
    return {"path": session_path, "artifacts": artifacts, "tmp": tmp_path}


class TestCaseStudyReplay:
    def test_summary_counts(self, cli_case_study):
        result = ok("summary", "--session", cli_case_study["path"])
        summary = result.payload
        assert summary["phase"] == "complete"
        assert summary["k_trajectory"] == EXPECTED_K_TRAJECTORY
        assert summary["phase1"]["included"] == EXPECTED_PHASE1_SELECTED
        assert summary["phase2"]["included_by_reviewer"] == {"R1": 34, "R2": 35}
        assert summary["phase2"]["partition_sizes"] == EXPECTED_PARTITION_SIZES
        assert summary["total_selected"] == EXPECTED_TOTAL_SELECTED
        assert f"total selected: {EXPECTED_TOTAL_SELECTED}" in result.text

    def test_savings_headline(self, cli_case_study):
        result = ok("savings", "--session", cli_case_study["path"])
        assert result.text == "actual 10:44 vs traditional 14:38 -> 26.7%"
        assert result.payload["savings"] == "0.2665"

    def test_curve_from_fitted_model(self, cli_case_study, tmp_path):
        out = tmp_path / "curve.csv"
        ok("curve", "--session", cli_case_study["path"], "--s-max", 1000, "--steps", 10, "--output", out)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "S,ts"
        assert len(lines) == 11
        last = float(lines[-1].split(",")[1])
        assert 0 < last < 0.5

    def test_criteria_show_lists_versions(self, cli_case_study):
        result = ok("criteria", "show", "--session", cli_case_study["path"])
        versions = [c["version"] for c in result.payload["criteria"]]
        assert versions == [1, 2, 3]
        assert "IC1" in result.text


class TestSingleCommands:
    @pytest.fixture
    def started(self, tmp_path):
        session_path = tmp_path / "s.json"
        do = make_cli_driver(session_path, tmp_path)
        do(
            "create_session",
            {"catalog": make_catalog(30), "criteria": CRITERIA_V1, "config": session_config()},
            "R3",
            "2026-02-01T09:00:00Z",
        )
        return session_path, do

    def test_close_round_report_text(self, started):
        session_path, do = started
        batch = do("sample_batch", {}, "R3", "2026-02-01T09:01:00Z")["batch"]
        from paperfixture import verdict_layout

        for study_id, (v1, v2) in verdict_layout(batch, (9, 1, 1, 4)):
            for reviewer, verdict in (("R1", v1), ("R2", v2)):
                do(
                    "record_decision",
                    {
                        "round_index": 1,
                        "reviewer": reviewer,
                        "study_id": study_id,
                        "verdict": verdict,
                        "cited_criteria": ["EC1"] if verdict == "exclude" else [],
                        "time_spent_minutes": None,
                    },
                    reviewer,
                    "2026-02-01T09:02:00Z",
                )
        result = ok("close-round", "--session", session_path)
        assert "k=0.70" in result.text
        assert "Substantial" in result.text
        assert "gate NOT passed" in result.text
        assert "revise criteria" in result.text

    def test_sample_while_round_open_exits_1(self, started):
        session_path, do = started
        do("sample_batch", {}, "R3", "2026-02-01T09:01:00Z")
        result = run(["sample", "--session", str(session_path)])
        assert result.exit_code == 1
        assert "open" in result.text

    def test_decide_batch_file(self, started, tmp_path):
        session_path, do = started
        batch = do("sample_batch", {}, "R3", "2026-02-01T09:01:00Z")["batch"]
        rows = "study_id,include,criteria,minutes\n" + "\n".join(
            f"{study_id},{'Y' if i % 3 else 'N'},{'IC1' if i % 3 else 'EC2'},{i % 5}"
            for i, study_id in enumerate(batch)
        )
        batch_file = tmp_path / "decisions.csv"
        batch_file.write_text(rows + "\n")
        result = ok("decide", "--session", session_path, "--reviewer", "R1", "--file", batch_file)
        assert result.payload["recorded"] == len(batch)

    def test_decide_batch_file_is_atomic(self, started, tmp_path):
        session_path, do = started
        batch = do("sample_batch", {}, "R3", "2026-02-01T09:01:00Z")["batch"]
        bad = tmp_path / "bad.csv"
        # second row cites a criterion that does not exist -> whole file rejected
        bad.write_text(
            "study_id,include,criteria\n"
            f"{batch[0]},Y,IC1\n"
            f"{batch[1]},N,EC99\n"
        )
        result = run(["decide", "--session", str(session_path), "--reviewer", "R1", "--file", str(bad)])
        assert result.exit_code == 1
        again = ok("decide", "--session", session_path, "--reviewer", "R1", "--study", batch[0], "--verdict", "include")
        assert again.exit_code == 0  # batch[0] was not recorded by the failed file

    def test_machine_format_prints_json(self, started, capfd):
        session_path, _ = started
        result = ok("summary", "--session", session_path, "--format", "machine")
        out = capfd.readouterr().out
        assert json.loads(out)["phase"] == "phase1"
        assert result.payload["phase"] == "phase1"


class TestExitCodes:
    def test_missing_session_is_user_error(self, tmp_path):
        result = run(["summary", "--session", str(tmp_path / "none.json")])
        assert result.exit_code == 1

    def test_corrupt_store_is_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema_version": 1, "session": "garbage"}')
        result = run(["summary", "--session", str(bad)])
        assert result.exit_code == 2

    def test_future_schema_is_exit_2(self, tmp_path):
        bad = tmp_path / "future.json"
        bad.write_text('{"schema_version": 99, "session": {}}')
        result = run(["summary", "--session", str(bad)])
        assert result.exit_code == 2

    def test_usage_error_is_exit_1(self):
        result = run(["decide"])  # missing required options
        assert result.exit_code == 1

    def test_unknown_command_is_exit_1(self):
        assert run(["frobnicate"]).exit_code == 1


class TestImportCommand:
    def test_import_writes_normalized_catalog(self, tmp_path):
        raw = tmp_path / "raw.csv"
        raw.write_text(
            "id,title,source,year\n"
            "a1,A Study of Testing,S,2010\n"
            "a2,a study   of testing!,S,2011\n"
            "a3,Another study,S,2012\n"
        )
        out = tmp_path / "catalog.csv"
        result = ok("import", "--input", raw, "--output", out)
        assert result.payload == {
            "imported": 2,
            "total_rows": 3,
            "duplicates": 1,
            "entries": [
                {"line": 3, "dropped_id": "a2", "kept_id": "a1", "reason": "duplicate-title"}
            ],
        }
        assert "a3" in out.read_text()

    def test_reimport_is_all_duplicates(self, tmp_path):
        raw = tmp_path / "raw.csv"
        raw.write_text("id,title,source,year\na1,First,S,2010\na2,Second,S,2011\n")
        out = tmp_path / "catalog.csv"
        ok("import", "--input", raw, "--output", out)
        result = ok("import", "--input", raw, "--output", tmp_path / "again.csv", "--existing", out)
        assert result.payload["imported"] == 0
        assert result.payload["duplicates"] == 2


class TestOperationParity:
    # one subcommand per store operation, no gaps, no doubling
    SUBCOMMAND_FOR_ACTION = {
        "create_session": "init",
        "sample_batch": "sample",
        "record_decision": "decide",
        "close_round": "close-round",
        "resolve_and_refine": "resolve",
        "revise_criteria": "criteria revise",
        "partition_remaining": "partition",
        "record_phase2_decision": "decide2",
        "log_time": "log-time",
    }

    def test_every_mutation_has_exactly_one_subcommand(self):
        from kappaselect.store import MUTATING_ACTIONS

        assert sorted(self.SUBCOMMAND_FOR_ACTION) == sorted(MUTATING_ACTIONS)
        names = list(self.SUBCOMMAND_FOR_ACTION.values())
        assert len(names) == len(set(names))

    def test_cli_exposes_all_mapped_subcommands(self):
        from kappaselect.cli import cli, cmd_criteria

        top = set(cli.commands)
        for name in self.SUBCOMMAND_FOR_ACTION.values():
            head = name.split()[0]
            assert head in top, name
        assert "revise" in cmd_criteria.commands
        # read-side commands over session_summary, fit_model, projection_curve
        for read_only in ("summary", "savings", "curve", "import"):
            assert read_only in top

    def test_criteria_revise_round_trip(self, tmp_path):
        session_path = tmp_path / "s.json"
        do = make_cli_driver(session_path, tmp_path)
        do(
            "create_session",
            {"catalog": make_catalog(10), "criteria": CRITERIA_V1, "config": session_config()},
            "R3",
            "2026-02-03T09:00:00Z",
        )
        revised = tmp_path / "v2.json"
        revised.write_text(json.dumps({"inclusion": ["only this"], "exclusion": ["none of that"]}))
        result = ok(
            "criteria", "revise", "--session", session_path,
            "--file", revised, "--note", "tightened wording",
        )
        assert result.payload == {"criteria_version": 2}
        shown = ok("criteria", "show", "--session", session_path, "--version", 2)
        assert shown.payload["criteria"][0]["change_note"] == "tightened wording"


class TestDataDirEnv:
    def test_relative_session_paths_resolve_against_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("KAPPASELECT_DATA_DIR", str(tmp_path))
        do = make_cli_driver("relative.json", tmp_path)
        do(
            "create_session",
            {"catalog": make_catalog(5), "criteria": CRITERIA_V1, "config": session_config()},
            "R3",
            "2026-02-03T09:00:00Z",
        )
        assert (tmp_path / "relative.json").exists()
        result = ok("summary", "--session", "relative.json")
        assert result.payload["total_studies"] == 5


class TestRecordedExample:
    def test_exclude_with_citation_lands_in_round(self, tmp_path):
        """A pool no larger than the batch makes the whole pool the batch, so
        named studies can be decided directly."""
        session_path = tmp_path / "s.json"
        do = make_cli_driver(session_path, tmp_path)
        catalog = make_catalog(15)
        catalog[4]["id"] = "35705"
        do(
            "create_session",
            {"catalog": catalog, "criteria": CRITERIA_V1, "config": session_config()},
            "R3",
            "2026-02-02T09:00:00Z",
        )
        do("sample_batch", {}, "R3", "2026-02-02T09:01:00Z")
        result = ok(
            "decide", "--session", session_path, "--reviewer", "R1",
            "--study", "35705", "--verdict", "exclude", "--criteria", "EC2",
        )
        assert result.payload["study_id"] == "35705"
        from kappaselect.store import SessionStore

        decision = SessionStore(session_path).session().rounds[0].decisions["R1"]["35705"]
        assert decision.cited_criteria == ["EC2"]
