"""Snippet extraction around error locations.

Given a diagnostic, the relevant source context is every span location
(primary first, then related spans in report order) widened to a window
of +/- ``window`` lines (default 50).  Overlapping or adjacent windows in
the same file are merged so no source line is shown twice, and each line
is rendered with a ``[N] `` prefix carrying its true 1-indexed number —
the same numbers the changelog wire format uses on the way back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .diagnostics import Diagnostic
from .workspace import Workspace

DEFAULT_WINDOW = 50
DEFAULT_MAX_SNIPPETS = 8
DEFAULT_MAX_TOTAL_LINES = 1200

Location = Tuple[str, int]  # (project-relative file, 1-indexed line)


@dataclass
class Snippet:
    file: str
    window_start: int
    window_end: int
    numbered_lines: List[str]

    def header(self) -> str:
        return f"{self.file}@{self.window_start}-{self.window_end}:"

    def render(self) -> str:
        return "\n".join([self.header(), *self.numbered_lines])

    @property
    def line_count(self) -> int:
        return len(self.numbered_lines)


def number_lines(lines: Sequence[str], start: int) -> List[str]:
    return [f"[{start + i}] {text}" for i, text in enumerate(lines)]


def collect_locations(d: Diagnostic, ws: Workspace) -> List[Location]:
    """Primary location first, then related-span locations in order;
    deduplicated; locations in files the workspace did not index are
    dropped (nothing useful can be shown or fixed there)."""
    raw: List[Location] = [(d.primary_span.file, d.primary_span.line_start)]
    raw.extend((s.file, s.line_start) for s in d.related_spans if not s.external)
    out: List[Location] = []
    seen = set()
    for loc in raw:
        if loc in seen or not ws.has(loc[0]):
            continue
        seen.add(loc)
        out.append(loc)
    return out


def _merged_intervals(locs: Sequence[Location], ws: Workspace, window: int) -> Dict[str, List[Tuple[int, int]]]:
    per_file: Dict[str, List[Tuple[int, int]]] = {}
    for file, line in locs:
        total = ws.line_count(file)
        if total == 0:
            continue
        line = min(max(line, 1), total)  # clamp stale span lines into the file
        lo = max(1, line - window)
        hi = min(total, line + window)
        per_file.setdefault(file, []).append((lo, hi))
    merged: Dict[str, List[Tuple[int, int]]] = {}
    for file, ivals in per_file.items():
        ivals.sort()
        acc: List[Tuple[int, int]] = []
        for lo, hi in ivals:
            if acc and lo <= acc[-1][1] + 1:  # overlap or adjacency
                acc[-1] = (acc[-1][0], max(acc[-1][1], hi))
            else:
                acc.append((lo, hi))
        merged[file] = acc
    return merged


def _build(locs: Sequence[Location], ws: Workspace, window: int) -> List[Snippet]:
    snippets: List[Snippet] = []
    for file, ivals in sorted(_merged_intervals(locs, ws, window).items()):
        for lo, hi in ivals:
            lines = ws.read_lines(file, lo, hi)
            snippets.append(Snippet(file, lo, hi, number_lines(lines, lo)))
    return snippets


def extract_snippets(
    ws: Workspace,
    locations: Sequence[Location],
    window: int = DEFAULT_WINDOW,
    max_snippets: int = DEFAULT_MAX_SNIPPETS,
    max_total_lines: int = DEFAULT_MAX_TOTAL_LINES,
) -> List[Snippet]:
    """Merged, ordered snippets for ``locations``.

    The per-prompt budget (snippet count and total line count) is enforced
    by truncating the *location list* from the end, so the primary
    location always survives; a single over-budget primary snippet is
    still returned rather than showing nothing."""
    if not locations:
        return []
    for keep in range(len(locations), 0, -1):
        snippets = _build(locations[:keep], ws, window)
        if len(snippets) <= max_snippets and sum(s.line_count for s in snippets) <= max_total_lines:
            return snippets
    return _build(locations[:1], ws, window)
