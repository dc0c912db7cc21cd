"""Checker profiles and subprocess invocation.

A :class:`CheckerProfile` describes how to run the external checker (a
compiler front-end or a linter) and how to interpret what it prints:
argv, the flag that switches it to structured JSON output, which
diagnostic levels are fix targets, and — for linters — the explain
subcommand used to fetch long-form documentation for a lint code.
"""

from __future__ import annotations

import json
import logging
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .diagnostics import Diagnostic, dedup_and_sort, parse_checker_output
from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckerProfile:
    name: str
    command: Tuple[str, ...]
    structured_flag: Optional[str] = "--message-format=json"
    explain_command: Optional[Tuple[str, ...]] = None  # may contain "{code}"
    fix_levels: frozenset = frozenset({"error"})
    language: str = "Rust"
    extensions: Tuple[str, ...] = (".rs",)
    lint_code_allowlist: Tuple[str, ...] = ()  # code prefixes; empty = all
    env_allowlist: Optional[Tuple[str, ...]] = None  # None = inherit everything
    timeout_s: float = 600.0

    @property
    def mode(self) -> str:
        return "linter" if "warning" in self.fix_levels else "compiler"

    def display_command(self) -> str:
        """The command string shown to the model in the prompt."""
        return " ".join(self.command)


BUILTIN_PROFILES: Dict[str, CheckerProfile] = {
    "cargo": CheckerProfile(
        name="cargo",
        command=("cargo", "check"),
    ),
    "clippy": CheckerProfile(
        name="clippy",
        command=("cargo", "clippy"),
        explain_command=("cargo", "clippy", "--explain", "{code}"),
        fix_levels=frozenset({"error", "warning"}),
    ),
    # Rule-driven stand-in checker used by the shipped fixture corpus; it
    # reads {root}/checker_rules.json and prints rustc-style JSON records.
    "scripted": CheckerProfile(
        name="scripted",
        command=("{python}", "-m", "fixloop.scripted_checker", "{root}/checker_rules.json"),
        structured_flag=None,
        explain_command=None,
    ),
    "scripted-lint": CheckerProfile(
        name="scripted-lint",
        command=("{python}", "-m", "fixloop.scripted_checker", "{root}/checker_rules.json"),
        structured_flag=None,
        explain_command=(
            "{python}",
            "-m",
            "fixloop.scripted_checker",
            "{root}/checker_rules.json",
            "--explain",
            "{code}",
        ),
        fix_levels=frozenset({"error", "warning"}),
    ),
}


def load_profile(spec: str) -> CheckerProfile:
    """Resolve ``spec`` to a profile: a builtin name or a JSON file path."""
    if spec in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[spec]
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(
            f"unknown checker profile {spec!r} (builtins: {', '.join(sorted(BUILTIN_PROFILES))})"
        )
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checker profile {spec}: {exc}") from exc
    try:
        return CheckerProfile(
            name=data.get("name", path.stem),
            command=tuple(data["command"]),
            structured_flag=data.get("structured_flag"),
            explain_command=tuple(data["explain_command"]) if data.get("explain_command") else None,
            fix_levels=frozenset(data.get("fix_levels", ["error"])),
            language=data.get("language", "Rust"),
            extensions=tuple(data.get("extensions", [".rs"])),
            lint_code_allowlist=tuple(data.get("lint_code_allowlist", [])),
            env_allowlist=tuple(data["env_allowlist"]) if data.get("env_allowlist") else None,
            timeout_s=float(data.get("timeout_s", 600.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed checker profile {spec}: {exc}") from exc


def _expand(argv: Tuple[str, ...], root: Path, code: str = "") -> List[str]:
    out = []
    for a in argv:
        a = a.replace("{python}", sys.executable)
        a = a.replace("{root}", str(root))
        a = a.replace("{code}", code)
        out.append(a)
    return out


@dataclass
class Explanation:
    text: str
    source: str  # "rendered" | "explain-command"


def run_checker(profile: CheckerProfile, root: Path) -> List[Diagnostic]:
    """Run the checker once over the project at ``root`` and return its
    fix-target diagnostics, deduplicated and deterministically ordered.

    The caller must have flushed the workspace first.  The checker's exit
    status is ignored — errors are determined from the parsed records."""
    argv = _expand(profile.command, root)
    if profile.structured_flag:
        argv.append(profile.structured_flag)
    env = None
    if profile.env_allowlist is not None:
        import os

        env = {k: v for k, v in os.environ.items() if k in profile.env_allowlist}
        env.setdefault("PATH", os.environ.get("PATH", ""))
    try:
        proc = subprocess.run(
            argv,
            cwd=str(root),
            capture_output=True,
            text=True,
            env=env,
            timeout=profile.timeout_s,
        )
    except FileNotFoundError as exc:
        raise ConfigError(f"checker binary not found: {argv[0]}") from exc
    except subprocess.TimeoutExpired as exc:
        raise ConfigError(f"checker timed out after {profile.timeout_s}s: {argv}") from exc

    # cargo prints JSON on stdout, bare rustc on stderr; accept both.
    diags = parse_checker_output(proc.stdout, root) + parse_checker_output(proc.stderr, root)
    targets = [d for d in diags if d.level in profile.fix_levels]
    if profile.lint_code_allowlist:
        targets = [
            d
            for d in targets
            if d.level != "warning"
            or (d.code or "").startswith(tuple(profile.lint_code_allowlist))
        ]
    return dedup_and_sort(targets)


class SubprocessChecker:
    """The product checker: one subprocess per check, explain caching."""

    def __init__(self, profile: CheckerProfile, root: Path):
        self.profile = profile
        self.root = Path(root)
        self._explain_cache: Dict[str, Explanation] = {}

    def check(self) -> List[Diagnostic]:
        return run_checker(self.profile, self.root)

    def explain(self, d: Diagnostic) -> Explanation:
        """Long-form explanation for a diagnostic.

        Compiler mode (no explain command) returns the rendered error text;
        linter mode shells out to the explain subcommand, caching per code
        and falling back to the rendered text on any failure."""
        if self.profile.explain_command is None or not d.code:
            return Explanation(d.rendered, "rendered")
        cached = self._explain_cache.get(d.code)
        if cached is not None:
            return cached
        argv = _expand(self.profile.explain_command, self.root, code=d.code)
        try:
            proc = subprocess.run(
                argv,
                cwd=str(self.root),
                capture_output=True,
                text=True,
                timeout=self.profile.timeout_s,
            )
            text = proc.stdout.strip()
            if proc.returncode != 0 or not text:
                raise OSError(f"explain exited {proc.returncode}")
            result = Explanation(text, "explain-command")
        except (OSError, subprocess.SubprocessError) as exc:
            log.warning("explain %s failed (%s); falling back to rendered text", d.code, exc)
            result = Explanation(d.rendered, "rendered")
        self._explain_cache[d.code] = result
        return result


__all__ = [
    "CheckerProfile",
    "BUILTIN_PROFILES",
    "load_profile",
    "run_checker",
    "SubprocessChecker",
    "Explanation",
]
