"""Tokenizer for the Java-like subset language.

Token kinds:
  NAME  identifiers
  NUM   integer / floating / hex literals
  STR   double-quoted string literals (lexeme keeps the quotes)
  KW    reserved words
  OP    operators and punctuation (also the ``<empty>`` statement marker)

Comments (``//`` and ``/* */``) are skipped and their spans reported
separately so callers can record what was stripped.
"""

from dataclasses import dataclass

from .errors import ParseError

KEYWORDS = frozenset(
    """
    abstract boolean break byte case catch char class continue default do
    double else enum extends final finally float for if implements import
    instanceof int interface long native new package private protected
    public return short static super switch synchronized this throw throws
    transient try void volatile while true false null
    """.split()
)

# Statement marker used for the missing side of pure insertions/deletions.
# Lexed as a single OP token so chain texts containing it re-tokenize cleanly.
EMPTY_MARKER = "<empty>"

_MULTI_OPS = (
    ">>>=", ">>=", "<<=", ">>>", "==", "!=", "<=", ">=", "&&", "||",
    "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "<<", ">>", "->", "::",
)
_SINGLE_OPS = set("+-*/%=<>!&|^~?:;,.(){}[]@")

_HEX_DIGITS = set("0123456789abcdefABCDEF")


@dataclass
class Token:
    kind: str
    text: str
    start: int
    end: int


def _line_col(text, offset):
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _error(text, offset, message):
    line, col = _line_col(text, offset)
    return ParseError(message, line, col)


def lex(text):
    """Tokenize ``text``; returns ``(tokens, comment_spans)``.

    Raises ParseError (with line/column) on unterminated strings or
    comments and on characters outside the subset alphabet.
    """
    tokens = []
    comments = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n\f":
            i += 1
            continue
        if text.startswith("//", i):
            end = text.find("\n", i)
            end = n if end < 0 else end
            comments.append((i, end))
            i = end
            continue
        if text.startswith("/*", i):
            end = text.find("*/", i + 2)
            if end < 0:
                raise _error(text, i, "unterminated block comment")
            comments.append((i, end + 2))
            i = end + 2
            continue
        if text.startswith(EMPTY_MARKER, i):
            tokens.append(Token("OP", EMPTY_MARKER, i, i + len(EMPTY_MARKER)))
            i += len(EMPTY_MARKER)
            continue
        if c.isalpha() or c in "_$":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] in "_$"):
                j += 1
            word = text[i:j]
            kind = "KW" if word in KEYWORDS else "NAME"
            tokens.append(Token(kind, word, i, j))
            i = j
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = _scan_number(text, i)
            tokens.append(Token("NUM", text[i:j], i, j))
            i = j
            continue
        if c == '"':
            j = _scan_string(text, i)
            tokens.append(Token("STR", text[i:j], i, j))
            i = j
            continue
        matched = False
        for op in _MULTI_OPS:
            if text.startswith(op, i):
                tokens.append(Token("OP", op, i, i + len(op)))
                i += len(op)
                matched = True
                break
        if matched:
            continue
        if c in _SINGLE_OPS:
            tokens.append(Token("OP", c, i, i + 1))
            i += 1
            continue
        raise _error(text, i, f"unexpected character {c!r}")
    return tokens, comments


def _scan_number(text, i):
    n = len(text)
    if text.startswith(("0x", "0X"), i):
        j = i + 2
        while j < n and text[j] in _HEX_DIGITS:
            j += 1
        if j == i + 2:
            raise _error(text, i, "malformed hex literal")
        if j < n and text[j] in "lL":
            j += 1
        return j
    j = i
    while j < n and text[j].isdigit():
        j += 1
    if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
        j += 1
        while j < n and text[j].isdigit():
            j += 1
    if j < n and text[j] in "eE":
        k = j + 1
        if k < n and text[k] in "+-":
            k += 1
        if k < n and text[k].isdigit():
            j = k
            while j < n and text[j].isdigit():
                j += 1
    if j < n and text[j] in "fFdDlL":
        j += 1
    return j


def _scan_string(text, i):
    n = len(text)
    j = i + 1
    while j < n:
        c = text[j]
        if c == "\\":
            j += 2
            continue
        if c == '"':
            return j + 1
        if c == "\n":
            break
        j += 1
    raise _error(text, i, "unterminated string literal")


def token_texts(text):
    """Token lexemes of ``text`` in order (comments dropped)."""
    return [t.text for t in lex(text)[0]]


def normalize(text):
    """Whitespace-normalized form: token lexemes joined by single spaces."""
    return " ".join(token_texts(text))
