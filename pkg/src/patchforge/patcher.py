"""Refill abstractions, filter candidates, and emit patched files.

``refill`` is the inverse of normalization: every placeholder found in
the pair's dictionary is replaced by its original lexeme; placeholders
the dictionary does not know are copied through verbatim.  Comments were
stripped at parse time and never come back; output text is the pretty-
printer's normal form (tokens joined by single spaces).

Candidate filtering runs two stages: the patched file must parse under
the subset grammar, then a checker (built-in grammar checker or an
external command) must not report diagnostics that were absent from the
baseline run on the unpatched file.
"""

import difflib
import logging
import os
import subprocess
import tempfile
from dataclasses import dataclass, field

from .ast_core import parse_source
from .errors import CheckerUnavailable, PatchforgeError, SpanOutOfDate
from .lexer import EMPTY_MARKER, lex, normalize

log = logging.getLogger(__name__)


@dataclass
class PatchCandidate:
    """One ranked prediction targeting a statement span in a file."""

    rank: int
    abstract_text: str
    concrete_text: str
    target: tuple  # (path, (start, end))
    status: str = "raw"
    original_text: str = None  # normalized statement the span held


def refill(abstract_text, dictionary):
    """Concretize an abstract text using the pair's dictionary.

    Unknown placeholders degrade to themselves; the result is re-indented
    by the pretty-printer (single-space token join).
    """
    tokens = [t.text for t in lex(abstract_text)[0]]
    out = []
    for token in tokens:
        original = dictionary.lookup(token)
        out.append(original if original is not None else token)
    return " ".join(out)


_STMT_START = frozenset({"if", "for", "do", "try", "return", "throw",
                         "break", "continue", EMPTY_MARKER})
_BLOCK_CONTINUATIONS = frozenset({"else", "catch", "finally", "while"})


def extract_focal_statement(tokens):
    """Last complete statement of a predicted chain.

    Statements end at ``;`` or at a ``}`` closing a top-level block (not
    followed by ``else``/``catch``/``finally``/do-while tails), and a
    statement keyword at depth 0 starts a fresh one, so an unterminated
    method signature before the focal statement splits off cleanly.
    """
    segments = []
    current = []
    depth = 0
    for i, token in enumerate(tokens):
        nxt = tokens[i + 1] if i + 1 < len(tokens) else None
        if (token in _STMT_START and depth == 0 and current
                and current[-1] != "else"):
            segments.append(current)
            current = []
        current.append(token)
        if token == "{":
            depth += 1
        elif token == "}":
            depth = max(0, depth - 1)
            if depth == 0 and nxt not in _BLOCK_CONTINUATIONS:
                segments.append(current)
                current = []
        elif token == ";" and depth == 0:
            segments.append(current)
            current = []
    if current:
        segments.append(current)
    return segments[-1] if segments else []


# --- checkers ---------------------------------------------------------------


class SubsetGrammarChecker:
    """Built-in checker: diagnostics are subset-grammar parse errors."""

    name = "subset-grammar"

    def diagnostics(self, text, path="<candidate>"):
        try:
            parse_source(text, path)
        except PatchforgeError as exc:
            return {("ERROR", str(exc))}
        return set()


class ExternalCommandChecker:
    """Adapter for an external checker command.

    The command is invoked with the candidate file path appended; it
    must print one diagnostic per line as ``SEVERITY:LINE:MESSAGE`` and
    exit 0.  Diagnostics are compared by (severity, message) so that
    line drift does not defeat baseline subtraction.
    """

    def __init__(self, command):
        self.command = list(command)
        self.name = " ".join(self.command)

    def diagnostics(self, text, path="<candidate>"):
        tmp = tempfile.NamedTemporaryFile(
            "w", suffix=".java", delete=False, encoding="utf-8")
        try:
            tmp.write(text)
            tmp.close()
            proc = subprocess.run(
                self.command + [tmp.name],
                capture_output=True, text=True, timeout=60)
        except (OSError, subprocess.SubprocessError) as exc:
            raise CheckerUnavailable(f"{self.name}: {exc}") from exc
        finally:
            tmp.close()
            os.unlink(tmp.name)
        if proc.returncode != 0:
            raise CheckerUnavailable(
                f"{self.name}: exit code {proc.returncode}")
        out = set()
        for line in proc.stdout.splitlines():
            severity, _, rest = line.partition(":")
            _, _, message = rest.partition(":")
            if severity and message:
                out.add((severity.strip(), message.strip()))
        return out


def _patched_text(file_text, span, concrete_text):
    start, end = span
    replacement = "" if concrete_text == EMPTY_MARKER else concrete_text
    return file_text[:start] + replacement + file_text[end:]


def baseline_diagnostics(unit, checker):
    """Checker diagnostics for the unpatched file."""
    return checker.diagnostics(unit.text, unit.path)


def check_candidates(candidates, baseline, unit, checker=None):
    """Drop malformed candidates and those adding checker diagnostics.

    Stage 1 re-parses the whole patched file; stage 2 subtracts the
    ``baseline`` diagnostics from the checker's report.  If the checker
    cannot run, candidates that pass stage 1 survive with a warning.
    Output order follows input order.
    """
    survivors = []
    for cand in candidates:
        _, span = cand.target
        patched = _patched_text(unit.text, span, cand.concrete_text)
        try:
            parse_source(patched, unit.path)
        except PatchforgeError:
            cand.status = "filtered"
            continue
        cand.status = "compilable"
        if checker is not None:
            try:
                added = checker.diagnostics(patched, unit.path) - set(baseline)
            except CheckerUnavailable as exc:
                log.warning("checker unavailable, keeping stage-1 result: %s",
                            exc)
                checker = None
                added = set()
            if added:
                cand.status = "filtered"
                continue
        survivors.append(cand)
    return survivors


def emit_patch(unit, candidate):
    """Patched file text plus a unified diff.

    Only the bytes of the target span change.  Raises SpanOutOfDate when
    the unit no longer holds the statement the candidate was built for.
    """
    if candidate.status != "compilable":
        raise ValueError("candidate has not passed checking")
    path, span = candidate.target
    start, end = span
    if not (0 <= start <= end <= len(unit.text)):
        raise SpanOutOfDate(f"span {span} out of bounds for {path}")
    current = normalize(unit.text[start:end])
    if candidate.original_text is not None and current != candidate.original_text:
        raise SpanOutOfDate(
            f"span {span} now holds {current!r}, "
            f"expected {candidate.original_text!r}")
    patched = _patched_text(unit.text, span, candidate.concrete_text)
    diff = "".join(difflib.unified_diff(
        unit.text.splitlines(keepends=True),
        patched.splitlines(keepends=True),
        fromfile=path, tofile=path + " (patched)"))
    return patched, diff
