"""Normalization, tokenization, subword merges, and vocabularies.

Normalization rewrites a chain's tokens into placeholder form: variable
names become ``var1..varK``, numeric literals ``num1..numK``, string
literals ``liter1..literK``, numbered per category in first-occurrence
order over the source chain then the destination chain.  Keywords,
operators, called method names, annotation names, and type names pass
through.  A per-pair dictionary records every substitution so the
patcher can refill predictions.

Type/method classification works on the token stream (chains are flat
token text): a name followed by ``(`` is a call name; a name in a type
position (before another name, after ``new``/``instanceof``/``class``/
``extends``/``implements``, inside generic arguments, in a ``throws``
list, or before ``[ ] name``) is a type.  Dotted prefixes (``a.b.c``)
are treated as values, not packages.
"""

import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import TooLong
from .lexer import lex

TOKEN_LIMIT = 1500

_PLACEHOLDER_RE = re.compile(r"^(var|num|liter)\d+$")
_CATEGORY_PREFIX = {"var": "var", "num": "num", "liter": "liter"}


@dataclass
class AbstractionDictionary:
    """Ordered placeholder -> lexeme table scoped to one change pair."""

    entries: dict = field(default_factory=dict)
    _reverse: dict = field(default_factory=dict)
    _counts: Counter = field(default_factory=Counter)

    def placeholder_for(self, category, lexeme):
        key = (category, lexeme)
        if key in self._reverse:
            return self._reverse[key]
        self._counts[category] += 1
        placeholder = f"{_CATEGORY_PREFIX[category]}{self._counts[category]}"
        self.entries[placeholder] = lexeme
        self._reverse[key] = placeholder
        return placeholder

    def lookup(self, placeholder):
        return self.entries.get(placeholder)

    def to_pairs(self):
        return [[p, lexeme] for p, lexeme in self.entries.items()]

    @classmethod
    def from_pairs(cls, pairs):
        out = cls()
        for placeholder, lexeme in pairs:
            out.entries[placeholder] = lexeme
            match = _PLACEHOLDER_RE.match(placeholder)
            if match:
                category = match.group(1)
                out._reverse[(category, lexeme)] = placeholder
                index = int(placeholder[len(category):])
                out._counts[category] = max(out._counts[category], index)
        return out


@dataclass
class TokenSeq:
    """An ordered token list, optionally tagged with its origin."""

    tokens: list
    origin: tuple = None


def _matching_angle(tokens, i):
    """Index of the ``>`` closing a generic argument list opened at ``i``."""
    depth = 0
    for j in range(i, len(tokens)):
        text = tokens[j].text
        if text == "<":
            depth += 1
        elif text == ">":
            depth -= 1
            if depth == 0:
                return j
        elif text in ("(", ")", "{", "}", ";", "="):
            return None
    return None


def _classify(tokens):
    """Role per token: keep | var | num | liter."""
    roles = []
    generic_type_region = set()
    throws_region = set()
    for i, tok in enumerate(tokens):
        if tok.text == "throws":
            j = i + 1
            while j < len(tokens) and tokens[j].text not in ("{", ";"):
                throws_region.add(j)
                j += 1
    for i, tok in enumerate(tokens):
        if tok.kind == "NUM":
            roles.append("num")
            continue
        if tok.kind == "STR":
            roles.append("liter")
            continue
        if tok.kind != "NAME":
            roles.append("keep")
            continue
        prev = tokens[i - 1] if i > 0 else None
        nxt = tokens[i + 1] if i + 1 < len(tokens) else None
        role = "var"
        if i in generic_type_region or i in throws_region:
            role = "keep"
        elif nxt is not None and nxt.text == "(":
            role = "keep"  # call name
        elif prev is not None and prev.text in ("@", "new", "instanceof",
                                                "class", "extends",
                                                "implements"):
            role = "keep"
        elif nxt is not None and nxt.kind == "NAME":
            role = "keep"  # type before declared name
        elif nxt is not None and nxt.text == "<":
            close = _matching_angle(tokens, i + 1)
            after = tokens[close + 1] if close is not None and \
                close + 1 < len(tokens) else None
            if after is not None and (after.kind == "NAME" or after.text == "("):
                role = "keep"
                for j in range(i + 1, close):
                    if tokens[j].kind == "NAME":
                        generic_type_region.add(j)
        elif (nxt is not None and nxt.text == "["
              and i + 2 < len(tokens) and tokens[i + 2].text == "]"
              and i + 3 < len(tokens) and tokens[i + 3].kind == "NAME"):
            role = "keep"  # array type in a declaration
        # a kept name shaped like a placeholder would corrupt refill
        if role == "keep" and _PLACEHOLDER_RE.match(tok.text):
            role = "var"
        roles.append(role)
    return roles


def _abstract_tokens(text, dictionary):
    tokens, _ = lex(text)
    roles = _classify(tokens)
    out = []
    for tok, role in zip(tokens, roles):
        if role == "keep":
            out.append(tok.text)
        else:
            out.append(dictionary.placeholder_for(role, tok.text))
    return " ".join(out)


def abstract_text(text, dictionary):
    """Normalize one chain text, extending ``dictionary`` in place."""
    return _abstract_tokens(text, dictionary)


def abstract_pair(cp):
    """Normalize both chains of a change pair under one shared dictionary."""
    dictionary = AbstractionDictionary()
    src = _abstract_tokens(cp.src_chain.text(), dictionary)
    dst = _abstract_tokens(cp.dst_chain.text(), dictionary)
    return src, dst, dictionary


def tokenize(text, limit=TOKEN_LIMIT, origin=None):
    """Lexer tokens of an (abstract) chain text.

    Raises TooLong when the sequence exceeds ``limit`` tokens.
    """
    tokens = [t.text for t in lex(text)[0]]
    if limit is not None and len(tokens) > limit:
        raise TooLong(len(tokens), limit)
    return TokenSeq(tokens=tokens, origin=origin)


# --- byte-pair encoding ------------------------------------------------------

# End-of-token marker; source tokens never contain it (the lexer alphabet
# excludes it outside of pathological string literals).
WORD_END = "␞"


@dataclass
class MergeTable:
    merges: list = field(default_factory=list)

    def to_text(self):
        return "".join(f"{a}\t{b}\n" for a, b in self.merges)

    @classmethod
    def from_text(cls, text):
        merges = []
        for line in text.splitlines():
            if not line:
                continue
            a, sep, b = line.partition("\t")
            if not sep:
                raise ValueError(f"malformed merge line: {line!r}")
            merges.append((a, b))
        return cls(merges=merges)


def _symbols(token):
    return tuple(token) + (WORD_END,)


def _merge_word(word, pair, joined):
    out = []
    i = 0
    while i < len(word):
        if i + 1 < len(word) and (word[i], word[i + 1]) == pair:
            out.append(joined)
            i += 2
        else:
            out.append(word[i])
            i += 1
    return tuple(out)


def bpe_train(corpus, merge_count):
    """Learn ``merge_count`` merges from token frequencies.

    The most frequent adjacent symbol pair is merged at each step, ties
    broken by the lexicographically smallest pair.  Merging happens
    inside tokens over characters plus an end-of-token marker.
    """
    freq = Counter()
    for seq in corpus:
        freq.update(seq.tokens)
    words = {token: _symbols(token) for token in freq}
    merges = []
    for _ in range(merge_count):
        pair_counts = Counter()
        for token, word in words.items():
            weight = freq[token]
            for a, b in zip(word, word[1:]):
                pair_counts[(a, b)] += weight
        if not pair_counts:
            break
        best = min(pair_counts, key=lambda p: (-pair_counts[p], p))
        merges.append(best)
        joined = best[0] + best[1]
        words = {token: _merge_word(word, best, joined)
                 for token, word in words.items()}
    return MergeTable(merges=merges)


def bpe_segment(seq, table, direction):
    """Apply or undo subword segmentation.

    ``apply`` greedily replays the merge table over each token's
    characters; an empty table is the identity (matching the pipeline's
    BPE-disabled mode).  ``decode`` concatenates subwords up to each
    end-of-token marker and is a left inverse of ``apply``.
    """
    if direction == "apply":
        if not table.merges:
            return TokenSeq(tokens=list(seq.tokens), origin=seq.origin)
        out = []
        cache = {}
        for token in seq.tokens:
            word = cache.get(token)
            if word is None:
                word = _symbols(token)
                for pair in table.merges:
                    if len(word) == 1:
                        break
                    word = _merge_word(word, pair, pair[0] + pair[1])
                cache[token] = word
            out.extend(word)
        return TokenSeq(tokens=out, origin=seq.origin)
    if direction == "decode":
        out = []
        buffer = []
        for symbol in seq.tokens:
            if symbol.endswith(WORD_END):
                buffer.append(symbol[:-len(WORD_END)])
                out.append("".join(buffer))
                buffer = []
            else:
                buffer.append(symbol)
        if buffer:
            out.append("".join(buffer))
        return TokenSeq(tokens=out, origin=seq.origin)
    raise ValueError(f"unknown direction {direction!r}")


# --- vocabulary ---------------------------------------------------------------

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
_RESERVED = (PAD, BOS, EOS, UNK)


@dataclass
class Vocabulary:
    id_to_token: list
    token_to_id: dict

    def __len__(self):
        return len(self.id_to_token)

    def encode(self, tokens):
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids):
        return [self.id_to_token[i] for i in ids]

    def to_text(self):
        return "".join(f"{t}\n" for t in self.id_to_token)

    @classmethod
    def from_text(cls, text):
        id_to_token = text.splitlines()
        if list(id_to_token[:4]) != list(_RESERVED):
            raise ValueError("vocabulary file lacks reserved symbols")
        return cls(id_to_token=id_to_token,
                   token_to_id={t: i for i, t in enumerate(id_to_token)})


def build_vocab(corpus, cap=8000):
    """Most frequent ``cap - 4`` tokens plus the four reserved symbols.

    Frequency ties are broken lexicographically; everything else encodes
    to ``<unk>``.
    """
    freq = Counter()
    for seq in corpus:
        freq.update(seq.tokens)
    ranked = sorted(freq, key=lambda t: (-freq[t], t))[:max(0, cap - 4)]
    id_to_token = list(_RESERVED) + ranked
    return Vocabulary(id_to_token=id_to_token,
                      token_to_id={t: i for i, t in enumerate(id_to_token)})
