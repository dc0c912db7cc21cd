"""The fix loop.

Outer loop: run the checker, pick the first error in deterministic
order, seed an *error group* from it, and hand the group to the inner
loop; when the inner loop gives up, roll the workspace back to the
group-entry snapshot and never reseed that error key again.  The outer
loop is bounded by the number of distinct error keys the first checker
run reported.

Inner loop (per group): localize the group's first error, build the
prompt, fetch ``n`` completions, rank them by the residual error count
each would leave behind (applying each to the workspace in turn, checking,
and rolling back), apply the best for real, then recompute the group as
``check(project) minus the outer error set`` — newly-introduced errors
join the group, everything else stays the outer loop's business.  The
group gives up on blow-up (too many distinct keys over its lifetime), on
no-progress (key-set unchanged with nothing applied, or unchanged across
two consecutive applied iterations), on backend failure, or after
``max_unique_errors`` iterations outright (the two heuristics alone do
not rule out a key-set oscillation, and termination must not depend on
the model behaving).

Every iteration appends one structured record to the run log, which is
what the report, the benchmarks, and the tests read back.
"""

from __future__ import annotations

import json
import logging
import math
import shlex
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Dict, List, Optional, Protocol, Sequence, Set, Tuple

from .changelog import FormatError, parse_response, parse_snippet_response, validate
from .checker import Explanation
from .diagnostics import Diagnostic, ErrorKey, unique_keys
from .errors import BackendError, PatchError, ReplayError
from .llm import Backend, Completion, CompletionRequest, prompt_digest, request_from_defaults
from .localization import DEFAULT_MAX_SNIPPETS, DEFAULT_MAX_TOTAL_LINES, DEFAULT_WINDOW
from .patching import PatchPlan, apply, plan, plan_snippets, unified_diff, write_patch_file
from .prompting import DEFAULT_CHAR_BUDGET, Prompt, PromptVariant, build_prompt
from .workspace import Workspace

log = logging.getLogger(__name__)

OUTCOME_FIXED = "fixed"
OUTCOME_GAVE_UP = "gave-up"

FAIL_FORMAT = "format"
FAIL_BUILD = "build"
FAIL_TEST = "test"

GIVEUP_BLOWUP = "blow-up"
GIVEUP_NO_PROGRESS = "no-progress"
GIVEUP_BACKEND = "backend"
GIVEUP_ITERATION_LIMIT = "iteration-limit"


class Checker(Protocol):
    def check(self) -> List[Diagnostic]:
        ...

    def explain(self, d: Diagnostic) -> Explanation:
        ...


@dataclass
class RunConfig:
    n_completions: int = 1
    window: int = DEFAULT_WINDOW
    max_unique_errors: int = 100
    variant: PromptVariant = PromptVariant.P4
    grouping_enabled: bool = True
    test_command: Optional[str] = None
    checker_cmd: str = "cargo check"
    language: str = "Rust"
    extension: str = ".rs"
    max_snippets: int = DEFAULT_MAX_SNIPPETS
    max_snippet_lines: int = DEFAULT_MAX_TOTAL_LINES
    char_budget: int = DEFAULT_CHAR_BUDGET
    template: Optional[str] = None
    emit_patch_dir: Optional[Path] = None
    request_defaults: CompletionRequest = field(default_factory=CompletionRequest)


class RunLog:
    """Line-delimited JSON event sink; keeps records in memory too so
    callers can assert on them without re-reading the file."""

    def __init__(self, stream: Optional[IO[str]] = None):
        self.stream = stream
        self.records: List[dict] = []

    def emit(self, event: str, **fields) -> None:
        record = {"event": event, **fields}
        self.records.append(record)
        if self.stream is not None:
            json.dump(record, self.stream, default=str)
            self.stream.write("\n")
            self.stream.flush()

    def of(self, event: str) -> List[dict]:
        return [r for r in self.records if r["event"] == event]


def _key_fields(k: ErrorKey) -> dict:
    return {"code": k.code, "message": k.message, "file": k.file}


@dataclass
class KeyOutcome:
    key: ErrorKey
    outcome: str  # fixed | gave-up
    failure_class: Optional[str] = None  # format | build | test
    group_iterations: int = 0

    def to_dict(self) -> dict:
        return {
            **_key_fields(self.key),
            "outcome": self.outcome,
            "failure_class": self.failure_class,
            "group_iterations": self.group_iterations,
        }


@dataclass
class FixReport:
    initial_errors: int
    outcomes: List[KeyOutcome]
    iterations_histogram: Dict[int, int] = field(default_factory=dict)
    completions_consumed: int = 0
    inner_iterations: int = 0
    test_command_ran: bool = False
    test_exit: Optional[int] = None

    @property
    def fixed(self) -> int:
        return sum(1 for o in self.outcomes if o.outcome == OUTCOME_FIXED)

    @property
    def gave_up(self) -> int:
        return sum(1 for o in self.outcomes if o.outcome == OUTCOME_GAVE_UP)

    @property
    def all_fixed(self) -> bool:
        return self.fixed == self.initial_errors

    def failure_class(self) -> Optional[str]:
        """Dominant failure class: the first gave-up key's class."""
        for o in self.outcomes:
            if o.outcome == OUTCOME_GAVE_UP:
                return o.failure_class
        return None

    def to_dict(self) -> dict:
        return {
            "initial_errors": self.initial_errors,
            "fixed": self.fixed,
            "gave_up": self.gave_up,
            "inner_iterations": self.inner_iterations,
            "completions_consumed": self.completions_consumed,
            "iterations_histogram": {str(k): v for k, v in sorted(self.iterations_histogram.items())},
            "test_command_ran": self.test_command_ran,
            "test_exit": self.test_exit,
            "outcomes": [o.to_dict() for o in self.outcomes],
        }


@dataclass
class _GroupMeta:
    outcome: str
    reason: Optional[str]
    ever_applied: bool
    iterations: int


def _scores_for_log(scores: Sequence[float]) -> List[Optional[int]]:
    return [None if math.isinf(s) else int(s) for s in scores]


class Orchestrator:
    def __init__(
        self,
        ws: Workspace,
        checker: Checker,
        backend: Backend,
        cfg: Optional[RunConfig] = None,
        run_log: Optional[RunLog] = None,
    ):
        self.ws = ws
        self.checker = checker
        self.backend = backend
        self.cfg = cfg or RunConfig()
        self.log = run_log or RunLog()
        self._completions_consumed = 0
        self._inner_iterations = 0
        self._patch_seq = 0

    # ------------------------------------------------------------------
    # plumbing
    # ------------------------------------------------------------------

    def _check(self) -> List[Diagnostic]:
        self.ws.flush()
        return self.checker.check()

    def _complete(self, prompt: Prompt) -> List[Completion]:
        req = request_from_defaults(self.cfg.request_defaults, prompt.text, self.cfg.n_completions)
        completions = self.backend.complete(req)
        self._completions_consumed += len(completions)
        return completions

    def _build_prompt(self, target: Diagnostic) -> Tuple[Optional[Prompt], str]:
        explanation = self.checker.explain(target)
        prompt = build_prompt(
            self.ws,
            target,
            explanation.text,
            self.cfg.variant,
            self.cfg.checker_cmd,
            self.cfg.language,
            self.cfg.extension,
            self.cfg.window,
            self.cfg.max_snippets,
            self.cfg.max_snippet_lines,
            self.cfg.char_budget,
            self.cfg.template,
        )
        return prompt, explanation.source

    def _plan_completion(self, completion: Completion, prompt: Prompt, source: str) -> PatchPlan | FormatError:
        if prompt.variant is PromptVariant.P0:
            parsed = parse_snippet_response(completion.text, prompt.snippet_index)
            if isinstance(parsed, FormatError):
                return parsed
            return plan_snippets(parsed, source)
        parsed = parse_response(completion.text, prompt.variant)
        if isinstance(parsed, FormatError):
            return parsed
        for cl in parsed:
            problem = validate(cl, self.ws)
            if problem is not None:
                return problem
        return plan(parsed, source)

    # ------------------------------------------------------------------
    # ranking
    # ------------------------------------------------------------------

    def best_completion(
        self, completions: Sequence[Completion], prompt: Prompt, source: str = ""
    ) -> Tuple[Optional[int], List[float], Optional[List[Diagnostic]]]:
        """Apply each completion in turn to a scratch copy of the current
        state, score it by the checker's residual error count, restore,
        then apply the winner for real.

        Returns (chosen index or None, per-completion scores, and the
        winner's post-apply diagnostics).  Rejected/unappliable/failing
        completions score +inf; ties break to the lowest index.  When all
        completions are rejected nothing is applied."""
        pre = self.ws.snapshot()
        pre_contents = self.ws.tree_contents() if self.cfg.emit_patch_dir else None
        scores: List[float] = []
        rejections: List[Optional[str]] = []
        best_idx: Optional[int] = None
        best_count = math.inf
        best_diags: Optional[List[Diagnostic]] = None
        best_plan: Optional[PatchPlan] = None
        for pos, completion in enumerate(completions):
            planned = self._plan_completion(completion, prompt, f"{source}/c{pos}")
            if isinstance(planned, FormatError):
                scores.append(math.inf)
                rejections.append(str(planned))
                continue
            try:
                apply(self.ws, planned)
            except PatchError as exc:
                scores.append(math.inf)
                rejections.append(f"apply failed: {exc}")
                self.ws.restore(pre)
                self.ws.flush()
                continue
            diags = self.checker.check()
            count = float(len(diags))
            scores.append(count)
            rejections.append(None)
            if count < best_count:
                best_idx, best_count, best_diags, best_plan = pos, count, diags, planned
            self.ws.restore(pre)
            self.ws.flush()
        if best_idx is None or best_plan is None:
            self.log.emit("completions_rejected", reasons=rejections)
            return None, scores, None
        # The workspace is back at the probed state, so the stored plan
        # re-validates and re-applies identically.
        apply(self.ws, best_plan)
        if self.cfg.emit_patch_dir and pre_contents is not None:
            diff = unified_diff(pre_contents, self.ws.tree_contents(), label=best_plan.source)
            write_patch_file(self.cfg.emit_patch_dir, self._patch_seq, best_plan.source, diff)
            self._patch_seq += 1
        return best_idx, scores, best_diags

    # ------------------------------------------------------------------
    # one model iteration (shared by grouped and single modes)
    # ------------------------------------------------------------------

    def _iterate(self, target: Diagnostic, source: str) -> Tuple[bool, Optional[int], List[float], Optional[List[Diagnostic]], dict]:
        """Run one localize/prompt/complete/rank/apply cycle for ``target``.

        Returns (applied, chosen index, scores, post-apply diagnostics,
        log fields).  Raises BackendError upward for the caller's give-up
        handling."""
        self._inner_iterations += 1
        prompt, explanation_source = self._build_prompt(target)
        if prompt is None:
            return False, None, [], None, {
                "prompt_digest": None,
                "explanation_source": explanation_source,
                "note": "no indexed span location; nothing to show the model",
            }
        completions = self._complete(prompt)
        chosen, scores, diags = self.best_completion(completions, prompt, source)
        fields = {
            "prompt_digest": prompt_digest(prompt.text),
            "explanation_source": explanation_source,
            "completion_scores": _scores_for_log(scores),
            "chosen_index": chosen,
        }
        return chosen is not None, chosen, scores, diags, fields

    # ------------------------------------------------------------------
    # grouped mode
    # ------------------------------------------------------------------

    def _fix_group(self, seed: Diagnostic, errs: List[Diagnostic], attempt: int) -> _GroupMeta:
        cfg = self.cfg
        errs_keys: Set[ErrorKey] = {d.key for d in errs}
        seed_key = seed.key
        group: List[Diagnostic] = [seed]
        lifetime: Set[ErrorKey] = {seed_key}
        last_diags = errs
        iterations = 0
        ever_applied = False
        unchanged_applied_streak = 0
        self.log.emit("group_start", origin=_key_fields(seed_key), seed_line=seed.primary_span.line_start, attempt=attempt)

        def finish(outcome: str, reason: Optional[str]) -> _GroupMeta:
            self.log.emit(
                "group_end",
                origin=_key_fields(seed_key),
                outcome=outcome,
                reason=reason,
                iterations=iterations,
                lifetime_keys=len(lifetime),
            )
            return _GroupMeta(outcome, reason, ever_applied, iterations)

        while group:
            target = group[0]
            keys_before = {d.key for d in group}
            try:
                applied, chosen, scores, diags, fields = self._iterate(
                    target, f"a{attempt}.i{iterations + 1}"
                )
            except ReplayError:
                raise  # replay drift is a broken fixture, not a model failure
            except BackendError as exc:
                iterations += 1
                self.log.emit(
                    "iteration",
                    mode="grouped",
                    group_origin=_key_fields(seed_key),
                    target=_key_fields(target.key),
                    target_line=target.primary_span.line_start,
                    error="backend failure: %s" % exc,
                )
                return finish(OUTCOME_GAVE_UP, GIVEUP_BACKEND)
            iterations += 1
            if applied:
                ever_applied = True
                last_diags = diags if diags is not None else self._check()
            group = [d for d in last_diags if d.key not in errs_keys]
            keys_after = {d.key for d in group}
            lifetime |= keys_after
            seed_vanished_unfixed = not group and any(d.key == seed_key for d in last_diags)
            self.log.emit(
                "iteration",
                mode="grouped",
                group_origin=_key_fields(seed_key),
                target=_key_fields(target.key),
                target_line=target.primary_span.line_start,
                applied=applied,
                group_size_after=len(group),
                group_keys_after=sorted(k.brief() for k in keys_after),
                seed_vanished_unfixed=seed_vanished_unfixed,
                **fields,
            )
            if not group:
                return finish(OUTCOME_FIXED, None)
            if len(lifetime) >= cfg.max_unique_errors:
                return finish(OUTCOME_GAVE_UP, GIVEUP_BLOWUP)
            if keys_after == keys_before:
                if not applied:
                    return finish(OUTCOME_GAVE_UP, GIVEUP_NO_PROGRESS)
                unchanged_applied_streak += 1
                if unchanged_applied_streak >= 2:
                    return finish(OUTCOME_GAVE_UP, GIVEUP_NO_PROGRESS)
            else:
                unchanged_applied_streak = 0
            if iterations >= cfg.max_unique_errors:
                return finish(OUTCOME_GAVE_UP, GIVEUP_ITERATION_LIMIT)
        return finish(OUTCOME_FIXED, None)

    def _run_grouped(self) -> Tuple[List[Diagnostic], List[ErrorKey], Dict[ErrorKey, _GroupMeta]]:
        errs = self._check()
        initial_keys = unique_keys(errs)
        budget = len(initial_keys)
        given_up: Set[ErrorKey] = set()
        meta: Dict[ErrorKey, _GroupMeta] = {}
        attempts = 0
        while errs and attempts < budget:
            candidates = [d for d in errs if d.key not in given_up]
            if not candidates:
                break
            seed = candidates[0]
            attempts += 1
            entry_snapshot = self.ws.snapshot()
            group_meta = self._fix_group(seed, errs, attempts)
            meta[seed.key] = group_meta
            if group_meta.outcome == OUTCOME_GAVE_UP:
                self.ws.restore(entry_snapshot)
                self.ws.flush()
                given_up.add(seed.key)
                # the rollback restored the group-entry tree byte-exactly,
                # so the pre-group diagnostics in `errs` are still current
            else:
                errs = self._check()
        return errs, initial_keys, meta

    # ------------------------------------------------------------------
    # single-loop mode (grouping disabled)
    # ------------------------------------------------------------------

    def _run_single(self) -> Tuple[List[Diagnostic], List[ErrorKey], Dict[ErrorKey, _GroupMeta]]:
        cfg = self.cfg
        errs = self._check()
        initial_keys = unique_keys(errs)
        given_up: Set[ErrorKey] = set()
        meta: Dict[ErrorKey, _GroupMeta] = {}
        states: Dict[ErrorKey, dict] = {}
        total_cap = max(1, len(initial_keys)) * cfg.max_unique_errors
        loops = 0
        while errs and loops < total_cap:
            bag = [d for d in errs if d.key not in given_up]
            if not bag:
                break
            target = bag[0]
            k = target.key
            st = states.get(k)
            if st is None:
                st = {
                    "snapshot": self.ws.snapshot(),
                    "lifetime": {k},
                    "streak": 0,
                    "iterations": 0,
                    "ever_applied": False,
                    "last_keys": {d.key for d in bag},
                }
                states[k] = st
            loops += 1
            reason: Optional[str] = None
            try:
                applied, chosen, scores, diags, fields = self._iterate(target, f"s{loops}")
            except ReplayError:
                raise
            except BackendError:
                applied, diags, fields = False, None, {}
                reason = GIVEUP_BACKEND
            st["iterations"] += 1
            if applied:
                st["ever_applied"] = True
                errs = diags if diags is not None else self._check()
            bag_keys = {d.key for d in errs if d.key not in given_up}
            st["lifetime"] |= bag_keys
            self.log.emit(
                "iteration",
                mode="single",
                group_origin=None,
                target=_key_fields(k),
                target_line=target.primary_span.line_start,
                applied=applied,
                bag_size_after=len(bag_keys),
                **fields,
            )
            if k not in {d.key for d in errs}:
                meta[k] = _GroupMeta(OUTCOME_FIXED, None, st["ever_applied"], st["iterations"])
                states.pop(k, None)
                continue
            if reason is None:
                unchanged = bag_keys == st["last_keys"]
                if unchanged and not applied:
                    reason = GIVEUP_NO_PROGRESS
                elif unchanged and applied:
                    st["streak"] += 1
                    if st["streak"] >= 2:
                        reason = GIVEUP_NO_PROGRESS
                else:
                    st["streak"] = 0
                if reason is None and len(st["lifetime"]) >= cfg.max_unique_errors:
                    reason = GIVEUP_BLOWUP
                if reason is None and st["iterations"] >= cfg.max_unique_errors:
                    reason = GIVEUP_ITERATION_LIMIT
            st["last_keys"] = bag_keys
            if reason is not None:
                self.ws.restore(st["snapshot"])
                self.ws.flush()
                errs = self._check()
                given_up.add(k)
                meta[k] = _GroupMeta(OUTCOME_GAVE_UP, reason, st["ever_applied"], st["iterations"])
                self.log.emit("target_given_up", target=_key_fields(k), reason=reason)
                states.pop(k, None)
        return errs, initial_keys, meta

    # ------------------------------------------------------------------
    # entry point
    # ------------------------------------------------------------------

    def fix_project(self) -> FixReport:
        cfg = self.cfg
        self.log.emit(
            "run_start",
            root=str(self.ws.root),
            grouping=cfg.grouping_enabled,
            variant=cfg.variant.name,
            n=cfg.n_completions,
            window=cfg.window,
            max_unique_errors=cfg.max_unique_errors,
        )
        if cfg.grouping_enabled:
            final_errs, initial_keys, meta = self._run_grouped()
        else:
            final_errs, initial_keys, meta = self._run_single()

        test_ran = False
        test_exit: Optional[int] = None
        if not final_errs and cfg.test_command:
            test_ran = True
            test_exit = self._run_test_command(cfg.test_command)

        final_keys = {d.key for d in final_errs}
        outcomes: List[KeyOutcome] = []
        histogram: Dict[int, int] = {}
        for k in initial_keys:
            m = meta.get(k)
            iterations = m.iterations if m else 0
            if k in final_keys:
                failure = FAIL_FORMAT if (m and not m.ever_applied) else FAIL_BUILD
                outcomes.append(KeyOutcome(k, OUTCOME_GAVE_UP, failure, iterations))
            elif test_ran and test_exit != 0:
                outcomes.append(KeyOutcome(k, OUTCOME_GAVE_UP, FAIL_TEST, iterations))
            else:
                outcomes.append(KeyOutcome(k, OUTCOME_FIXED, None, iterations))
                if m is not None:
                    histogram[iterations] = histogram.get(iterations, 0) + 1

        report = FixReport(
            initial_errors=len(initial_keys),
            outcomes=outcomes,
            iterations_histogram=histogram,
            completions_consumed=self._completions_consumed,
            inner_iterations=self._inner_iterations,
            test_command_ran=test_ran,
            test_exit=test_exit,
        )
        self.log.emit("run_end", report=report.to_dict())
        return report

    def _run_test_command(self, command: str) -> int:
        argv = [
            a.replace("{python}", sys.executable).replace("{root}", str(self.ws.root))
            for a in shlex.split(command)
        ]
        try:
            proc = subprocess.run(
                argv, cwd=str(self.ws.root), capture_output=True, text=True, timeout=600
            )
            exit_code = proc.returncode
        except (OSError, subprocess.SubprocessError) as exc:
            log.warning("test command failed to run: %s", exc)
            exit_code = 127
        self.log.emit("test_command", argv=argv, exit_code=exit_code)
        return exit_code


def fix_project(
    ws: Workspace,
    checker: Checker,
    backend: Backend,
    cfg: Optional[RunConfig] = None,
    run_log: Optional[RunLog] = None,
) -> FixReport:
    return Orchestrator(ws, checker, backend, cfg, run_log).fix_project()
