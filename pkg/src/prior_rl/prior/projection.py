"""Rule-based projection of free-form model output onto an admissible action."""
from __future__ import annotations

import re
from typing import Optional, Sequence

from ..core import Action, normalize_text

_PREFIX = re.compile(r"^\s*(?:(?:\d+|[a-z])\s*[:.)\]-]|[-*•>]+|(?:action|answer)\s*:)\s*", re.IGNORECASE)
_TOKEN = re.compile(r"[a-z0-9]+")
MIN_OVERLAP = 2


def _strip_line(line: str) -> str:
    prev = None
    while prev != line:
        prev = line
        line = _PREFIX.sub("", line, count=1)
    line = normalize_text(line)
    return line.strip(" \t,.;:!?\"'`")


def _tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _contains(haystack: list[str], needle: list[str]) -> bool:
    n = len(needle)
    return n > 0 and any(haystack[i:i + n] == needle for i in range(len(haystack) - n + 1))


def _resolve_line(line: str, admissible: Sequence[Action]) -> Optional[Action]:
    if not line:
        return None
    for a in admissible:
        if a.text == line:
            return a
    line_toks = _tokens(line)
    if not line_toks:
        return None
    subs = [a for a in admissible
            if _contains(line_toks, _tokens(a.text)) or _contains(_tokens(a.text), line_toks)]
    if len(subs) == 1:
        return subs[0]
    if len(subs) > 1:
        # a longer action that contains a shorter one is the more specific reading
        longest = max(len(_tokens(a.text)) for a in subs)
        top = [a for a in subs if len(_tokens(a.text)) == longest]
        if len(top) == 1:
            return top[0]
    line_set = set(line_toks)
    best, best_overlap = None, MIN_OVERLAP - 1
    for a in admissible:
        overlap = len(line_set & set(_tokens(a.text)))
        if overlap > best_overlap:
            best, best_overlap = a, overlap
    return best


def project_output(raw: str, admissible: Sequence[Action]) -> Optional[Action]:
    """Map raw text to an admissible action, or ``None`` when no rule matches.

    Each non-empty line is stripped of numbering/markup and tried in order: exact
    normalized match, unique token-substring match, then the largest token overlap
    (at least two shared tokens, ties to the earlier admissible action). The first
    line that resolves wins.
    """
    if not admissible:
        raise ValueError("admissible must be non-empty")
    for raw_line in str(raw).splitlines():
        hit = _resolve_line(_strip_line(raw_line), admissible)
        if hit is not None:
            return hit
    return None
