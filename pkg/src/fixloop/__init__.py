"""Automatic repair of compiler and linter errors.

The pipeline runs a checker over a project, groups the reported errors,
asks an LLM backend for fixes in a line-addressed changelog format,
validates and ranks the candidate edits, and iterates until the project
is clean or a give-up heuristic fires.

Library entry points: :class:`Workspace` + a checker + a backend feed
:func:`fix_project`; the ``fixloop`` console script wraps the same call.
"""

from .changelog import ChangeLog, FormatError, parse_response, render_changelog, validate
from .checker import BUILTIN_PROFILES, CheckerProfile, SubprocessChecker, load_profile, run_checker
from .diagnostics import Diagnostic, ErrorKey, SourceSpan, parse_checker_output
from .errors import BackendError, ConfigError, EditError, FixloopError, PatchError, ReplayError
from .llm import (
    Completion,
    CompletionRequest,
    HttpBackend,
    RecordingBackend,
    ReplayBackend,
    ReplayStore,
)
from .localization import Snippet, extract_snippets
from .orchestrator import FixReport, KeyOutcome, Orchestrator, RunConfig, RunLog, fix_project
from .patching import PatchPlan, apply, plan
from .prompting import Prompt, PromptVariant, build_prompt
from .workspace import Workspace, load_project

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_PROFILES",
    "BackendError",
    "ChangeLog",
    "CheckerProfile",
    "Completion",
    "CompletionRequest",
    "ConfigError",
    "Diagnostic",
    "EditError",
    "ErrorKey",
    "FixReport",
    "FixloopError",
    "FormatError",
    "HttpBackend",
    "KeyOutcome",
    "Orchestrator",
    "PatchError",
    "PatchPlan",
    "Prompt",
    "PromptVariant",
    "RecordingBackend",
    "ReplayBackend",
    "ReplayError",
    "ReplayStore",
    "RunConfig",
    "RunLog",
    "Snippet",
    "SourceSpan",
    "SubprocessChecker",
    "Workspace",
    "apply",
    "build_prompt",
    "extract_snippets",
    "fix_project",
    "load_profile",
    "load_project",
    "parse_checker_output",
    "parse_response",
    "plan",
    "render_changelog",
    "run_checker",
    "validate",
    "__version__",
]
