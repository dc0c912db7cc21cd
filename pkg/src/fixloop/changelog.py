"""The line-addressed changelog wire format.

Model responses carry fixes as one or more *changelog groups*::

    ChangeLog:1@src/example.rs
    FixDescription: Change the return type of 'get'.
    OriginalCode@19-23:
    [19] impl Foo {
    [20]   pub fn get(&self, key: String) -> &Bar {
    ...
    FixedCode@19-24:
    [19] impl Foo {
    ...

Both plain section keywords (``OriginalCode@4-6:``) and the decorated
spelling models frequently echo back (``<@OriginalCode@>@19-23:``) are
accepted.  Parsing is deliberately defensive — the declared line numbers
must be consecutive and match their headers, pairs must start on the same
line, and (at validation time) every OriginalCode line must match the
workspace text exactly up to trailing whitespace.  A response that
violates structure inside a group is rejected whole; prose before the
first header, between complete groups, and after the last segment is
tolerated.

Parsing never raises on untrusted input: the result is either a list of
:class:`ChangeLog` values or a :class:`FormatError` value naming one
primary reason and the offending response line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .prompting import PromptVariant
from .workspace import Workspace

#: Every rejection reason this module can produce.
REASONS = (
    "bad-header",
    "non-consecutive-lines",
    "start-mismatch",
    "missing-section",
    "original-mismatch",
    "unknown-file",
    "overlap",
)


@dataclass
class FormatError:
    reason: str
    detail: str
    line_no: Optional[int] = None  # 1-based line in the response text

    def __post_init__(self) -> None:
        assert self.reason in REASONS, self.reason

    def __str__(self) -> str:
        where = f" (response line {self.line_no})" if self.line_no else ""
        return f"{self.reason}: {self.detail}{where}"


@dataclass
class CodeSegment:
    """One OriginalCode/FixedCode block: declared range plus (number, text)
    rows.  An empty FixedCode segment means deletion; an empty lines list
    on an OriginalCode side marks the implicit original of a P1/P2 pair."""

    declared_start: int
    declared_end: int
    lines: List[Tuple[int, str]] = field(default_factory=list)

    def texts(self) -> List[str]:
        return [t for _, t in self.lines]


@dataclass
class ChangeLog:
    id: int
    file: str
    fix_description: str = ""
    pairs: List[Tuple[CodeSegment, CodeSegment]] = field(default_factory=list)


_CHANGELOG_RE = re.compile(r"^\s*(?:<@)?ChangeLog(?:@>)?\s*:\s*(\d+)\s*@(\S+)\s*$")
_SEG_RE = re.compile(r"^\s*(?:<@)?(OriginalCode|FixedCode)(?:@>)?\s*@\s*(\d+)\s*-\s*(\d+)\s*:\s*$")
_FIXDESC_RE = re.compile(r"^\s*(?:<@)?FixDescription(?:@>)?\s*:\s?(.*)$")
_NUMLINE_RE = re.compile(r"^\s*\[(\d+)\]( ?)(.*)$")
_HEADERISH_RE = re.compile(r"^\s*(?:<@)?(ChangeLog|FixDescription|OriginalCode|FixedCode)\b")

ParseResult = Union[List[ChangeLog], FormatError]


def _is_blank(line: str) -> bool:
    return not line.strip()


def _parse_numbered_segment(
    lines: Sequence[str], i: int, variant: PromptVariant
) -> Tuple[Optional[CodeSegment], int, Optional[FormatError]]:
    """Parse one segment starting at the header on ``lines[i]``."""
    m = _SEG_RE.match(lines[i])
    header_no = i + 1
    a, b = int(m.group(2)), int(m.group(3))
    if a < 1 or b < a:
        return None, i, FormatError("bad-header", f"bad line range {a}-{b}", header_no)
    i += 1
    rows: List[Tuple[int, str]] = []
    if variant >= PromptVariant.P2:
        while i < len(lines):
            lm = _NUMLINE_RE.match(lines[i])
            if not lm:
                break
            rows.append((int(lm.group(1)), lm.group(3)))
            i += 1
        if rows:
            nums = [n for n, _ in rows]
            consecutive = all(nums[k + 1] == nums[k] + 1 for k in range(len(nums) - 1))
            if nums[0] != a or nums[-1] != b or not consecutive:
                return None, i, FormatError(
                    "non-consecutive-lines",
                    f"declared {a}-{b} but lines run {nums[0]}..{nums[-1]}"
                    + ("" if consecutive else " with gaps or repeats"),
                    header_no,
                )
    else:
        # P1: raw code lines, no prefixes to cross-check; numbers are
        # synthesized from the header so downstream rendering still works.
        while i < len(lines):
            ln = lines[i]
            if _is_blank(ln) or _SEG_RE.match(ln) or _CHANGELOG_RE.match(ln) or _HEADERISH_RE.match(ln):
                break
            rows.append((a + len(rows), ln))
            i += 1
    return CodeSegment(a, b, rows), i, None


def _skip_blanks(lines: Sequence[str], i: int) -> int:
    while i < len(lines) and _is_blank(lines[i]):
        i += 1
    return i


def _parse_group(
    lines: Sequence[str], i: int, variant: PromptVariant
) -> Tuple[Optional[ChangeLog], int, Optional[FormatError]]:
    m = _CHANGELOG_RE.match(lines[i])
    header_no = i + 1
    group_id = int(m.group(1))
    file = m.group(2)
    if group_id < 1:
        return None, i, FormatError("bad-header", f"changelog id must be positive, got {group_id}", header_no)
    i += 1

    desc_parts: List[str] = []
    i = _skip_blanks(lines, i)
    if i < len(lines):
        dm = _FIXDESC_RE.match(lines[i])
        if dm:
            desc_parts.append(dm.group(1).rstrip())
            i += 1
            # free text continues until something structured shows up
            while i < len(lines):
                ln = lines[i]
                if _SEG_RE.match(ln) or _CHANGELOG_RE.match(ln) or _HEADERISH_RE.match(ln) or _NUMLINE_RE.match(ln):
                    break
                if ln.strip():
                    desc_parts.append(ln.rstrip())
                i += 1

    pairs: List[Tuple[CodeSegment, CodeSegment]] = []
    while True:
        i = _skip_blanks(lines, i)
        if i >= len(lines):
            break
        ln = lines[i]
        if _CHANGELOG_RE.match(ln):
            break
        seg_match = _SEG_RE.match(ln)
        if seg_match is None:
            if _HEADERISH_RE.match(ln):
                return None, i, FormatError("bad-header", f"malformed section header: {ln.strip()!r}", i + 1)
            if _NUMLINE_RE.match(ln):
                return None, i, FormatError(
                    "missing-section", "numbered code line outside any section", i + 1
                )
            break  # prose: group is over, caller decides whether that is legal
        kind = seg_match.group(1)
        seg_line_no = i + 1
        if kind == "OriginalCode":
            original, i, err = _parse_numbered_segment(lines, i, variant)
            if err:
                return None, i, err
            if not original.lines:
                return None, i, FormatError("missing-section", "empty OriginalCode section", seg_line_no)
            i = _skip_blanks(lines, i)
            nxt = _SEG_RE.match(lines[i]) if i < len(lines) else None
            if nxt is None or nxt.group(1) != "FixedCode":
                return None, i, FormatError(
                    "missing-section", "OriginalCode without a matching FixedCode section", seg_line_no
                )
            fixed, i, err = _parse_numbered_segment(lines, i, variant)
            if err:
                return None, i, err
            if original.declared_start != fixed.declared_start:
                return None, i, FormatError(
                    "start-mismatch",
                    f"pair starts differ: OriginalCode@{original.declared_start} vs FixedCode@{fixed.declared_start}",
                    header_no,
                )
            pairs.append((original, fixed))
        else:
            if variant >= PromptVariant.P3:
                return None, i, FormatError(
                    "missing-section", "FixedCode without the required OriginalCode section", i + 1
                )
            fixed, i, err = _parse_numbered_segment(lines, i, variant)
            if err:
                return None, i, err
            implicit = CodeSegment(fixed.declared_start, fixed.declared_end, [])
            pairs.append((implicit, fixed))

    if not pairs:
        return None, i, FormatError("missing-section", "changelog group contains no fixes", header_no)
    return ChangeLog(group_id, file, "\n".join(desc_parts), pairs), i, None


def parse_response(text: str, variant: PromptVariant = PromptVariant.P4) -> ParseResult:
    """Parse a raw model response into changelog groups.

    Returns a non-empty list of groups in response order, or a
    :class:`FormatError`.  Never raises on untrusted ``text``."""
    if variant is PromptVariant.P0:
        raise ValueError("P0 responses are whole snippets; use parse_snippet_response")
    lines = text.splitlines()

    first = None
    first_bad = None
    for idx, ln in enumerate(lines):
        if _CHANGELOG_RE.match(ln):
            first = idx
            break
        hm = _HEADERISH_RE.match(ln)
        if hm and hm.group(1) == "ChangeLog" and first_bad is None:
            first_bad = idx
    if first is None:
        if first_bad is not None:
            return FormatError("bad-header", f"malformed ChangeLog header: {lines[first_bad].strip()!r}", first_bad + 1)
        return FormatError("missing-section", "response contains no ChangeLog header")

    groups: List[ChangeLog] = []
    i = first
    while i < len(lines):
        i = _skip_blanks(lines, i)
        if i >= len(lines):
            break
        if _CHANGELOG_RE.match(lines[i]):
            group, i, err = _parse_group(lines, i, variant)
            if err:
                return err
            groups.append(group)
            continue
        # Between complete groups (or after the last one): prose is skipped
        # up to the next well-formed ChangeLog header.  Header-shaped but
        # malformed lines are still structural violations.
        hm = _HEADERISH_RE.match(lines[i])
        if hm:
            if _SEG_RE.match(lines[i]) or _FIXDESC_RE.match(lines[i]):
                return FormatError(
                    "bad-header", f"section header outside any changelog group: {lines[i].strip()!r}", i + 1
                )
            return FormatError(
                "bad-header", f"malformed or misplaced header: {lines[i].strip()!r}", i + 1
            )
        i += 1

    if not groups:
        return FormatError("missing-section", "response contains no complete changelog group")
    return groups


# ----------------------------------------------------------------------
# validation against a workspace
# ----------------------------------------------------------------------


def validate(cl: ChangeLog, ws: Workspace) -> Optional[FormatError]:
    """Check one changelog against the current workspace.  Returns None
    when applicable, else the first failure.

    Rules: the target file must be indexed; every pair's original range
    must lie inside the file; every OriginalCode line must equal the
    workspace line (trailing whitespace ignored, indentation exact); the
    pairs' original ranges must not overlap each other."""
    if not ws.has(cl.file):
        return FormatError("unknown-file", f"changelog targets unindexed file {cl.file!r}")
    total = ws.line_count(cl.file)
    claimed: List[Tuple[int, int]] = []
    for original, _fixed in cl.pairs:
        a, b = original.declared_start, original.declared_end
        if a < 1 or b > total:
            return FormatError(
                "original-mismatch", f"lines {a}-{b} fall outside {cl.file} (1-{total})"
            )
        for num, text in original.lines:
            actual = ws.line(cl.file, num)
            if actual.rstrip() != text.rstrip():
                return FormatError(
                    "original-mismatch",
                    f"{cl.file}:{num} does not match: response has {text.rstrip()!r}, file has {actual.rstrip()!r}",
                )
        claimed.append((a, b))
    claimed.sort()
    for (a1, b1), (a2, b2) in zip(claimed, claimed[1:]):
        if a2 <= b1:
            return FormatError("overlap", f"pairs overlap on {cl.file}: {a1}-{b1} and {a2}-{b2}")
    return None


def render_changelog(cl: ChangeLog) -> str:
    """Inverse of parsing for well-formed groups (used by tests and docs)."""
    out = [f"ChangeLog:{cl.id}@{cl.file}"]
    if cl.fix_description:
        first, *rest = cl.fix_description.split("\n")
        out.append(f"FixDescription: {first}")
        out.extend(rest)
    for original, fixed in cl.pairs:
        if original.lines:
            out.append(f"OriginalCode@{original.declared_start}-{original.declared_end}:")
            out.extend(f"[{n}] {t}" for n, t in original.lines)
        out.append(f"FixedCode@{fixed.declared_start}-{fixed.declared_end}:")
        out.extend(f"[{n}] {t}" for n, t in fixed.lines)
    return "\n".join(out)


# ----------------------------------------------------------------------
# P0: whole revised snippets
# ----------------------------------------------------------------------


@dataclass
class SnippetReplacement:
    file: str
    start: int
    end: int
    lines: List[str]


_SNIPPET_HEADER_RE = re.compile(r"^(.+)@(\d+)-(\d+):\s*$")

P0Result = Union[List[SnippetReplacement], FormatError]


def parse_snippet_response(text: str, snippet_index: Dict[str, List[Tuple[int, int]]]) -> P0Result:
    """Parse a P0 response: revised snippets re-introduced by the exact
    header lines the prompt used.  Headers that don't correspond to a
    prompted snippet reject the response."""
    lines = text.splitlines()
    replacements: List[SnippetReplacement] = []
    seen: set = set()
    current: Optional[SnippetReplacement] = None
    for idx, ln in enumerate(lines):
        m = _SNIPPET_HEADER_RE.match(ln.strip())
        if m:
            file, a, b = m.group(1), int(m.group(2)), int(m.group(3))
            if (a, b) not in snippet_index.get(file, []):
                return FormatError(
                    "bad-header", f"snippet header not in prompt: {ln.strip()!r}", idx + 1
                )
            if (file, a, b) in seen:
                return FormatError("overlap", f"snippet {file}@{a}-{b} returned twice", idx + 1)
            seen.add((file, a, b))
            current = SnippetReplacement(file, a, b, [])
            replacements.append(current)
            continue
        if current is not None:
            current.lines.append(ln)
    if not replacements:
        return FormatError("missing-section", "response repeats no snippet header")
    for rep in replacements:
        while rep.lines and not rep.lines[-1].strip():
            rep.lines.pop()
    return replacements
