"""The fix loop: grouping, ranking, give-up heuristics, rollback, report."""

import io
import json

import pytest

from fixloop.errors import ReplayError
from fixloop.llm import CompletionRequest, ReplayBackend
from fixloop.orchestrator import (
    FAIL_BUILD,
    FAIL_FORMAT,
    FAIL_TEST,
    GIVEUP_BACKEND,
    GIVEUP_BLOWUP,
    GIVEUP_ITERATION_LIMIT,
    GIVEUP_NO_PROGRESS,
    FixReport,
    KeyOutcome,
    Orchestrator,
    RunConfig,
    RunLog,
    fix_project,
)
from fixloop.prompting import PromptVariant

from conftest import FuncChecker, LineRule, PatternChecker, SequenceBackend, make_diag, make_ws


def fix_text(file, start, originals, fixed, gid=1, desc="apply the fix"):
    """Build a well-formed P4 changelog response."""
    lines = [f"ChangeLog:{gid}@{file}", f"FixDescription: {desc}"]
    end = start + len(originals) - 1
    lines.append(f"OriginalCode@{start}-{end}:")
    lines += [f"[{n}] {t}" for n, t in enumerate(originals, start)]
    fixed_end = start + len(fixed) - 1 if fixed else start
    lines.append(f"FixedCode@{start}-{fixed_end}:")
    lines += [f"[{n}] {t}" for n, t in enumerate(fixed, start)]
    return "\n".join(lines)


def run(ws, rules, responses, **cfg_kwargs):
    checker = PatternChecker(ws.root, rules)
    backend = SequenceBackend(responses)
    log = RunLog()
    cfg = RunConfig(**cfg_kwargs)
    report = Orchestrator(ws, checker, backend, cfg, log).fix_project()
    return report, log, checker, backend


# ----------------------------------------------------------------------
# happy paths
# ----------------------------------------------------------------------


def test_one_error_fixed_in_one_iteration(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "let x = bad;\nlet y = 1;\n"})
    rules = [LineRule("E1", "bad initializer", "bad")]
    responses = [[fix_text("a.rs", 1, ["let x = bad;"], ["let x = 0;"])]]
    report, log, checker, _ = run(ws, rules, responses)

    assert (report.initial_errors, report.fixed, report.gave_up) == (1, 1, 0)
    assert report.all_fixed
    assert report.inner_iterations == 1
    assert report.iterations_histogram == {1: 1}
    assert report.outcomes[0].outcome == "fixed"
    assert report.outcomes[0].failure_class is None
    assert (ws.root / "a.rs").read_text() == "let x = 0;\nlet y = 1;\n"
    assert [r["event"] for r in log.records] == [
        "run_start",
        "group_start",
        "iteration",
        "group_end",
        "run_end",
    ]
    assert log.of("group_end")[0]["outcome"] == "fixed"


def test_new_error_introduced_by_fix_joins_the_group(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "alpha\nok\n"})
    rules = [LineRule("E1", "alpha problem", "alpha"), LineRule("E2", "beta problem", "beta")]
    responses = [
        [fix_text("a.rs", 1, ["alpha"], ["beta"])],  # fixes E1, introduces E2
        [fix_text("a.rs", 1, ["beta"], ["done"])],
    ]
    report, log, _, _ = run(ws, rules, responses)

    assert report.all_fixed and report.initial_errors == 1
    assert report.inner_iterations == 2
    (end,) = log.of("group_end")
    assert end["outcome"] == "fixed" and end["iterations"] == 2
    first, second = log.of("iteration")
    assert first["group_keys_after"] == ["E2@a.rs"]
    assert second["target"]["code"] == "E2"
    assert (ws.root / "a.rs").read_text() == "done\nok\n"


def test_ranking_picks_completion_with_fewest_residual_errors(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "alpha\nbeta\ngamma\n"})
    rules = [
        LineRule("E1", "m1", "alpha"),
        LineRule("E2", "m2", "beta"),
        LineRule("E3", "m3", "gamma"),
    ]
    responses = [
        [
            fix_text("a.rs", 1, ["alpha"], ["alpha still here"]),    # residual 3
            fix_text("a.rs", 1, ["alpha", "beta"], ["one", "two"]),  # residual 1
            fix_text("a.rs", 1, ["alpha"], ["one"]),                 # residual 2
        ],
        [fix_text("a.rs", 3, ["gamma"], ["three"]), "junk", "junk"],
    ]
    report, log, _, backend = run(ws, rules, responses, n_completions=3)

    assert report.all_fixed and report.initial_errors == 3
    assert report.completions_consumed == 6
    assert report.inner_iterations == 2
    first, second = log.of("iteration")
    assert first["completion_scores"] == [3, 1, 2]
    assert first["chosen_index"] == 1
    assert second["completion_scores"] == [0, None, None]  # rejected -> None
    assert second["chosen_index"] == 0
    assert (ws.root / "a.rs").read_text() == "one\ntwo\nthree\n"
    assert all(req.n == 3 for req in backend.requests)


def test_ranking_tie_breaks_to_lowest_index(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "bad\n"})
    rules = [LineRule("E1", "m", "bad")]
    responses = [
        [
            fix_text("a.rs", 1, ["bad"], ["good one"]),
            fix_text("a.rs", 1, ["bad"], ["good two"]),
        ]
    ]
    report, log, _, _ = run(ws, rules, responses, n_completions=2)
    assert report.all_fixed
    assert log.of("iteration")[0]["completion_scores"] == [0, 0]
    assert log.of("iteration")[0]["chosen_index"] == 0
    assert (ws.root / "a.rs").read_text() == "good one\n"


def test_later_overlapping_group_is_dropped_not_fatal(tmp_path):
    before = "fn main() {\n  bad line\n}\n"
    ws = make_ws(tmp_path, {"a.rs": before})
    rules = [LineRule("E1", "m", "bad line")]
    keep = fix_text("a.rs", 2, ["  bad line"], ["  good line"], gid=1)
    clobber = fix_text("a.rs", 1, ["fn main() {", "  bad line", "}"], ["// gone"], gid=2)
    report, _, _, _ = run(ws, rules, [[keep + "\n" + clobber]])
    assert report.all_fixed
    assert (ws.root / "a.rs").read_text() == "fn main() {\n  good line\n}\n"


def test_two_independent_errors_fixed_by_separate_groups(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "first_bad\n", "b.rs": "second_bad\n"})
    rules = [LineRule("E1", "m1", "first_bad"), LineRule("E2", "m2", "second_bad")]
    responses = [
        [fix_text("a.rs", 1, ["first_bad"], ["ok"])],
        [fix_text("b.rs", 1, ["second_bad"], ["ok"])],
    ]
    report, log, _, _ = run(ws, rules, responses)
    assert report.all_fixed and report.initial_errors == 2
    assert [g["origin"]["code"] for g in log.of("group_start")] == ["E1", "E2"]
    assert report.iterations_histogram == {1: 2}


def test_explanation_text_reaches_the_prompt(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "bad\n"})
    checker = PatternChecker(ws.root, [LineRule("E1", "m", "bad")])
    checker.explanations["E1"] = "Long-form guidance about this lint."
    backend = SequenceBackend([[fix_text("a.rs", 1, ["bad"], ["good"])]])
    log = RunLog()
    report = Orchestrator(ws, checker, backend, RunConfig(), log).fix_project()
    assert report.all_fixed
    assert "Long-form guidance about this lint." in backend.requests[0].prompt_text
    assert log.of("iteration")[0]["explanation_source"] == "explain-command"


# ----------------------------------------------------------------------
# give-up heuristics and rollback
# ----------------------------------------------------------------------


def test_unapplied_format_failure_classified_as_format(tmp_path):
    before = "bad\n"
    ws = make_ws(tmp_path, {"a.rs": before})
    rules = [LineRule("E1", "m", "bad")]
    report, log, _, _ = run(ws, rules, [["I cannot help with this."]])

    assert (report.fixed, report.gave_up) == (0, 1)
    assert report.outcomes[0].failure_class == FAIL_FORMAT
    assert report.failure_class() == FAIL_FORMAT
    assert (ws.root / "a.rs").read_text() == before
    assert log.of("completions_rejected")[0]["reasons"][0].startswith("missing-section")
    # the seed survived an unapplied iteration: logged, and the group is over
    assert log.of("iteration")[0]["seed_vanished_unfixed"] is True


def test_applied_but_unfixed_classified_as_build(tmp_path):
    # fix is applied (tree changes) but the error key never goes away
    before = "bad\n"
    ws = make_ws(tmp_path, {"a.rs": before})
    rules = [LineRule("E1", "m", "bad")]
    responses = [[fix_text("a.rs", 1, ["bad"], ["bad but different"])]]
    report, log, _, _ = run(ws, rules, responses)

    assert report.gave_up == 1
    assert report.outcomes[0].failure_class == FAIL_BUILD
    # the group saw its seed persist and closed; the applied edit stays
    assert (ws.root / "a.rs").read_text() == "bad but different\n"
    assert log.of("group_end")[0]["outcome"] == "fixed"
    assert log.of("iteration")[0]["seed_vanished_unfixed"] is True


def test_no_progress_after_two_applied_unchanged_iterations(tmp_path):
    before = "alpha\nok\n"
    ws = make_ws(tmp_path, {"a.rs": before})
    rules = [LineRule("E1", "m1", "alpha"), LineRule("E2", "m2", "beta")]
    responses = [
        [fix_text("a.rs", 1, ["alpha"], ["beta"])],          # E1 -> E2 joins group
        [fix_text("a.rs", 1, ["beta"], ["beta // try1"])],   # applied, keys unchanged
        [fix_text("a.rs", 1, ["beta // try1"], ["beta // try2"])],  # second strike
    ]
    report, log, _, _ = run(ws, rules, responses)

    (end,) = log.of("group_end")
    assert end["outcome"] == "gave-up" and end["reason"] == GIVEUP_NO_PROGRESS
    assert end["iterations"] == 3
    assert (ws.root / "a.rs").read_text() == before  # rolled back byte-exact
    assert report.outcomes[0].failure_class == FAIL_BUILD


def test_no_progress_immediately_when_nothing_applied(tmp_path):
    before = "alpha\nok\n"
    ws = make_ws(tmp_path, {"a.rs": before})
    rules = [LineRule("E1", "m1", "alpha"), LineRule("E2", "m2", "beta")]
    responses = [
        [fix_text("a.rs", 1, ["alpha"], ["beta"])],
        ["no changelog here, sorry"],  # rejected, group keys unchanged
    ]
    report, log, _, _ = run(ws, rules, responses)
    (end,) = log.of("group_end")
    assert end["reason"] == GIVEUP_NO_PROGRESS and end["iterations"] == 2
    assert (ws.root / "a.rs").read_text() == before


def test_blowup_when_lifetime_keys_reach_limit(tmp_path):
    before = "a1\n"
    ws = make_ws(tmp_path, {"a.rs": before})
    rules = [LineRule(f"E{i}", f"m{i}", f"a{i}") for i in range(1, 6)]
    responses = [
        [fix_text("a.rs", 1, [f"a{i}"], [f"a{i + 1}"])] for i in range(1, 5)
    ]
    report, log, _, _ = run(ws, rules, responses, max_unique_errors=4)

    (end,) = log.of("group_end")
    assert end["reason"] == GIVEUP_BLOWUP
    assert end["iterations"] == 3  # lifetime hits 4 keys after the third fix
    assert end["lifetime_keys"] == 4
    assert (ws.root / "a.rs").read_text() == before


def test_iteration_limit_stops_key_oscillation(tmp_path):
    before = "a1\n"
    ws = make_ws(tmp_path, {"a.rs": before})
    rules = [
        LineRule("E1", "m1", "a1"),
        LineRule("E2", "m2", "a2"),
        LineRule("E3", "m3", "a3"),
    ]
    flips = ["a2", "a3", "a2", "a3", "a2"]
    responses = []
    current = "a1"
    for nxt in flips:
        responses.append([fix_text("a.rs", 1, [current], [nxt])])
        current = nxt
    report, log, _, _ = run(ws, rules, responses, max_unique_errors=5)

    (end,) = log.of("group_end")
    assert end["reason"] == GIVEUP_ITERATION_LIMIT
    assert end["iterations"] == 5
    assert end["lifetime_keys"] == 3  # oscillating, never blowing up
    assert (ws.root / "a.rs").read_text() == before


def test_backend_failure_gives_up_the_group(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "bad\n"})
    rules = [LineRule("E1", "m", "bad")]
    report, log, _, _ = run(ws, rules, [])  # no scripted responses at all
    (end,) = log.of("group_end")
    assert end["reason"] == GIVEUP_BACKEND and end["iterations"] == 1
    assert report.outcomes[0].failure_class == FAIL_FORMAT  # nothing ever applied
    assert "backend failure" in log.of("iteration")[0]["error"]


def test_replay_drift_raises_instead_of_giving_up(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "bad\n"})
    checker = PatternChecker(ws.root, [LineRule("E1", "m", "bad")])
    backend = ReplayBackend(tmp_path / "empty-store")  # nothing recorded
    with pytest.raises(ReplayError):
        Orchestrator(ws, checker, backend).fix_project()


def test_unlocalizable_error_consumes_no_completions(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "fine\n"})
    diag = make_diag("E1", "m", "README.md", 1)  # not an indexed file
    checker = FuncChecker(lambda: [diag])
    backend = SequenceBackend([])  # would raise if asked
    log = RunLog()
    report = Orchestrator(ws, checker, backend, RunConfig(), log).fix_project()
    assert backend.requests == []
    assert report.gave_up == 1
    assert report.outcomes[0].failure_class == FAIL_FORMAT
    assert "no indexed span location" in log.of("iteration")[0]["note"]


def test_given_up_key_is_never_reseeded(tmp_path):
    # E1's group applies a fix that spawns E3, then stalls -> real give-up;
    # the outer loop must move on to E2 instead of reseeding E1
    ws = make_ws(tmp_path, {"a.rs": "hopeless\nfixable\n"})
    rules = [
        LineRule("E1", "m1", "hopeless"),
        LineRule("E2", "m2", "fixable"),
        LineRule("E3", "m3", "aux_bad"),
    ]
    responses = [
        [fix_text("a.rs", 1, ["hopeless"], ["aux_bad"])],  # E1 -> E3
        ["nonsense"],  # E3 target rejected: unchanged, unapplied -> no-progress
        [fix_text("a.rs", 2, ["fixable"], ["fixed"])],
    ]
    report, log, _, _ = run(ws, rules, responses)
    assert (report.fixed, report.gave_up) == (1, 1)
    seeds = [g["origin"]["code"] for g in log.of("group_start")]
    assert seeds == ["E1", "E2"]  # E1 only once
    assert (ws.root / "a.rs").read_text() == "hopeless\nfixed\n"


def test_outer_budget_bounds_total_attempts(tmp_path):
    # every "fix" converts the seed into itself (applied, key persists):
    # each group closes as fixed-meta, the outer loop re-seeds, and the
    # attempt budget (= initial key count) must stop the run
    ws = make_ws(tmp_path, {"a.rs": "bad v0\n"})
    rules = [LineRule("E1", "m", "bad")]
    responses = [[fix_text("a.rs", 1, [f"bad v{i}"], [f"bad v{i + 1}"])] for i in range(10)]
    report, log, _, _ = run(ws, rules, responses)
    assert len(log.of("group_start")) == 1  # budget = 1 initial key
    assert report.gave_up == 1
    assert (ws.root / "a.rs").read_text() == "bad v1\n"  # applied edit kept


# ----------------------------------------------------------------------
# single-loop mode (grouping disabled)
# ----------------------------------------------------------------------


def test_single_mode_fixes_each_error_without_groups(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "one_bad\ntwo_bad\n"})
    rules = [LineRule("E1", "m1", "one_bad"), LineRule("E2", "m2", "two_bad")]
    responses = [
        [fix_text("a.rs", 1, ["one_bad"], ["one_ok"])],
        [fix_text("a.rs", 2, ["two_bad"], ["two_ok"])],
    ]
    report, log, _, _ = run(ws, rules, responses, grouping_enabled=False)

    assert report.all_fixed and report.initial_errors == 2
    assert log.of("group_start") == [] and log.of("group_end") == []
    assert {r["mode"] for r in log.of("iteration")} == {"single"}
    assert report.iterations_histogram == {1: 2}
    assert (ws.root / "a.rs").read_text() == "one_ok\ntwo_ok\n"


def test_single_mode_gives_up_and_rolls_back_per_key(tmp_path):
    before = "first_bad\nsecond_bad\n"
    ws = make_ws(tmp_path, {"a.rs": before})
    rules = [LineRule("E1", "m1", "first_bad"), LineRule("E2", "m2", "second_bad")]
    # E2's diagnostics sort after E1; E1 keeps "fixing" itself into itself
    responses = [
        [fix_text("a.rs", 1, ["first_bad"], ["first_bad x1"])],
        [fix_text("a.rs", 1, ["first_bad x1"], ["first_bad x2"])],
        [fix_text("a.rs", 2, ["second_bad"], ["second_ok"])],
    ]
    report, log, _, _ = run(ws, rules, responses, grouping_enabled=False)

    (giveup,) = log.of("target_given_up")
    assert giveup["target"]["code"] == "E1"
    assert giveup["reason"] == GIVEUP_NO_PROGRESS
    assert report.fixed == 1 and report.gave_up == 1
    # E1's snapshot rollback must not clobber E2's later fix
    assert (ws.root / "a.rs").read_text() == "first_bad\nsecond_ok\n"
    e1 = next(o for o in report.outcomes if o.key.code == "E1")
    assert e1.failure_class == FAIL_BUILD and e1.group_iterations == 2


def test_single_mode_backend_failure(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "bad\n"})
    rules = [LineRule("E1", "m", "bad")]
    report, log, _, _ = run(ws, rules, [], grouping_enabled=False)
    (giveup,) = log.of("target_given_up")
    assert giveup["reason"] == GIVEUP_BACKEND
    assert report.outcomes[0].failure_class == FAIL_FORMAT


# ----------------------------------------------------------------------
# patches, test command, report plumbing
# ----------------------------------------------------------------------


def test_emit_patch_dir_captures_each_applied_completion(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "bad\n"})
    rules = [LineRule("E1", "m", "bad")]
    patches = tmp_path / "patches"
    responses = [[fix_text("a.rs", 1, ["bad"], ["good"])]]
    report, _, _, _ = run(ws, rules, responses, emit_patch_dir=patches)
    assert report.all_fixed
    (patch,) = sorted(patches.iterdir())
    assert patch.name == "000_a1.i1-c0.patch"
    body = patch.read_text()
    assert body.splitlines()[0] == "# a1.i1/c0"
    assert "--- a/a.rs" in body and "+good" in body and "-bad" in body


def test_failing_test_command_flips_clean_keys_to_test_failures(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "bad\n"})
    rules = [LineRule("E1", "m", "bad")]
    responses = [[fix_text("a.rs", 1, ["bad"], ["good"])]]
    report, log, _, _ = run(
        ws,
        rules,
        responses,
        test_command='{python} -c "import sys; sys.exit(3)"',
    )
    assert report.test_command_ran and report.test_exit == 3
    assert report.fixed == 0 and report.gave_up == 1
    assert report.outcomes[0].failure_class == FAIL_TEST
    assert report.iterations_histogram == {}
    # the tree keeps the fix; only the report is downgraded
    assert (ws.root / "a.rs").read_text() == "good\n"
    assert log.of("test_command")[0]["exit_code"] == 3


def test_passing_test_command_keeps_fixed_outcomes(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "bad\n"})
    rules = [LineRule("E1", "m", "bad")]
    responses = [[fix_text("a.rs", 1, ["bad"], ["good"])]]
    report, _, _, _ = run(ws, rules, responses, test_command='{python} -c "pass"')
    assert report.test_command_ran and report.test_exit == 0
    assert report.all_fixed


def test_test_command_skipped_while_errors_remain(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "bad\n"})
    rules = [LineRule("E1", "m", "bad")]
    report, _, _, _ = run(
        ws, rules, [["junk"]], test_command='{python} -c "import sys; sys.exit(9)"'
    )
    assert not report.test_command_ran and report.test_exit is None
    assert report.outcomes[0].failure_class == FAIL_FORMAT  # not "test"


def test_run_log_streams_jsonl(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "bad\n"})
    rules = [LineRule("E1", "m", "bad")]
    stream = io.StringIO()
    checker = PatternChecker(ws.root, rules)
    backend = SequenceBackend([[fix_text("a.rs", 1, ["bad"], ["good"])]])
    Orchestrator(ws, checker, backend, RunConfig(), RunLog(stream)).fix_project()
    lines = [json.loads(ln) for ln in stream.getvalue().splitlines()]
    assert lines[0]["event"] == "run_start"
    assert lines[-1]["event"] == "run_end"
    assert lines[-1]["report"]["fixed"] == 1


def test_fix_report_accessors():
    k1 = make_diag("E1", "m", "a.rs", 1).key
    k2 = make_diag("E2", "m", "b.rs", 1).key
    report = FixReport(
        initial_errors=2,
        outcomes=[
            KeyOutcome(k1, "fixed", None, 2),
            KeyOutcome(k2, "gave-up", FAIL_BUILD, 5),
        ],
    )
    assert report.fixed == 1 and report.gave_up == 1
    assert not report.all_fixed
    assert report.failure_class() == FAIL_BUILD
    d = report.to_dict()
    assert d["outcomes"][1]["failure_class"] == "build"


def test_module_level_helper_matches_class_entry_point(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "bad\n"})
    checker = PatternChecker(ws.root, [LineRule("E1", "m", "bad")])
    backend = SequenceBackend([[fix_text("a.rs", 1, ["bad"], ["good"])]])
    report = fix_project(ws, checker, backend)
    assert report.all_fixed


def test_clean_project_short_circuits(tmp_path):
    ws = make_ws(tmp_path, {"a.rs": "all good\n"})
    report, log, checker, backend = run(ws, [LineRule("E1", "m", "never-matches")], [])
    assert report.initial_errors == 0 and report.all_fixed
    assert report.inner_iterations == 0
    assert backend.requests == []
    assert checker.checks == 1
    assert [r["event"] for r in log.records] == ["run_start", "run_end"]
