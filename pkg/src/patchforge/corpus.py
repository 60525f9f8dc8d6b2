"""Corpus records, line-delimited persistence, and synthetic corpora.

A corpus file holds one JSON object per line.  Records move through
stages: ``raw`` (full before/after file texts), ``chained`` (def-use
chain texts), ``abstracted`` (placeholder form plus dictionary),
``tokenized`` (token lists); each stage only adds fields.

The synthetic generator produces small class files plus an edited twin
under parameterized edit rules, split into disjoint ``general`` and
``specific`` rule mixtures.  The specific rules rewrite the focal
statement in a way that depends on a definition (the variable's declared
type or the method's return type), so context ablations measurably hurt.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import FormatError

STAGES = ("raw", "chained", "abstracted", "tokenized")

GENERAL_RULES = ("call_rename", "param_swap", "param_add", "literal_bump",
                 "throw_rename")
SPECIFIC_RULES = ("sanitize_arg", "wrap_return", "wrap_throw_arg")
ALL_RULES = GENERAL_RULES + SPECIFIC_RULES + ("guard_insert",)

_RULE_TAG = {rule: f"CWE-9{i:02d}" for i, rule in enumerate(ALL_RULES)}


@dataclass
class CorpusRecord:
    meta: dict
    stage: str = "raw"
    src_text: str = None
    dst_text: str = None
    path: str = None
    src_chain: dict = None      # {"defs": [...], "stmt": "..."}
    dst_chain: dict = None
    src_span: tuple = None
    dst_span: tuple = None
    abstract_src: str = None
    abstract_dst: str = None
    dictionary: list = None     # [[placeholder, lexeme], ...]
    src_tokens: list = None
    dst_tokens: list = None

    def to_json(self):
        data = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(data, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("record is not an object")
        record = cls(**data)
        validate_record(record)
        return record


_STAGE_FIELDS = {
    "raw": ("src_text", "dst_text"),
    "chained": ("src_chain", "dst_chain"),
    "abstracted": ("src_chain", "dst_chain", "abstract_src", "abstract_dst",
                   "dictionary"),
    "tokenized": ("abstract_src", "abstract_dst", "dictionary",
                  "src_tokens", "dst_tokens"),
}


def validate_record(record):
    if record.stage not in STAGES:
        raise ValueError(f"unknown stage {record.stage!r}")
    if not isinstance(record.meta, dict):
        raise ValueError("meta must be an object")
    for name in _STAGE_FIELDS[record.stage]:
        if getattr(record, name) is None:
            raise ValueError(f"stage {record.stage!r} requires field {name!r}")
    for side in ("src_chain", "dst_chain"):
        chain = getattr(record, side)
        if chain is not None and (not isinstance(chain, dict)
                                  or "defs" not in chain
                                  or "stmt" not in chain):
            raise ValueError(f"{side} must carry 'defs' and 'stmt'")


def load_corpus(path):
    """Parse a corpus file; malformed lines become diagnostics, not errors.

    Returns ``(records, diagnostics)``; IO errors propagate.
    """
    records = []
    diagnostics = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(CorpusRecord.from_json(line))
            except (ValueError, TypeError) as exc:
                diagnostics.append(f"line {lineno}: {exc}")
    return records, diagnostics


def save_corpus(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")


# --- synthetic corpus ---------------------------------------------------------


@dataclass
class GeneratorSpec:
    """Seeded recipe for a synthetic corpus."""

    seed: int
    size: int
    rules: tuple = GENERAL_RULES
    name_pool: int = 500
    project: str = "synth"


_CALL_RENAMES = {"sink": "send", "store": "persist", "log": "trace"}
_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class _ProgramSketch:
    """One random class file with a designated focal statement."""

    def __init__(self, rng, names, rule):
        self.rng = rng
        self.rule = rule
        self.names = names
        self.typed = {}
        self.fields = []
        self.params = []
        self.decls = []
        self.trailing = []
        self.return_type = "void"
        self.class_name = f"C{int(rng.integers(1000))}"

    def fresh(self, var_type):
        name = self.names.pop()
        self.typed[name] = var_type
        return name

    def pick(self, var_type=None):
        pool = [n for n, t in self.typed.items()
                if var_type is None or t == var_type]
        return pool[int(self.rng.integers(len(pool)))]

    def literal(self, var_type):
        if var_type == "String":
            return f'"s{int(self.rng.integers(100))}"'
        return str(int(self.rng.integers(64)))

    def initializer(self, var_type):
        # sometimes wrap the literal so the sanitizer helpers belong to
        # the shared sub-grammar of every rule mixture
        lit = self.literal(var_type)
        if self.rng.random() < 0.3:
            wrapper = "escape" if var_type == "String" else "clamp"
            return f"{wrapper} ( {lit} )"
        return lit

    def build(self):
        rng = self.rng
        for _ in range(int(rng.integers(0, 4))):
            t = "int" if rng.random() < 0.5 else "String"
            self.fields.append(f"{t} {self.fresh(t)} = {self.literal(t)} ;")
        for _ in range(int(rng.integers(0, 4))):
            t = "int" if rng.random() < 0.5 else "String"
            self.params.append((t, self.fresh(t)))
        for _ in range(int(rng.integers(2, 7))):
            t = "int" if rng.random() < 0.5 else "String"
            self.decls.append(f"{t} {self.fresh(t)} = {self.initializer(t)} ;")
        # guarantee one variable of each type for the def-dependent rules
        for t in ("int", "String"):
            if not any(tt == t for tt in self.typed.values()):
                self.decls.append(f"{t} {self.fresh(t)} = {self.literal(t)} ;")
        for _ in range(int(rng.integers(0, 3))):
            self.trailing.append(f"log ( {self.pick()} ) ;")
        return self

    def render(self, focal):
        params = " , ".join(f"{t} {n}" for t, n in self.params)
        body = self.decls + [focal] + self.trailing
        lines = [f"class {self.class_name} {{"]
        lines += [f"    {f}" for f in self.fields]
        lines.append(f"    {self.return_type} run ( {params} ) {{")
        lines += [f"        {s}" for s in body]
        lines.append("    }")
        lines.append("}")
        return "\n".join(lines)


def _apply_rule(sketch, rule, rng):
    """Focal statement before/after under one edit rule."""
    if rule == "call_rename":
        old = ["sink", "store", "log"][int(rng.integers(3))]
        a, b = sketch.pick(), sketch.pick()
        before = f"{old} ( {a} , {b} ) ;"
        after = f"{_CALL_RENAMES[old]} ( {a} , {b} ) ;"
    elif rule == "param_swap":
        a = sketch.pick()
        b = sketch.pick()
        while b == a and len(sketch.typed) > 1:
            b = sketch.pick()
        before = f"sink ( {a} , {b} ) ;"
        after = f"sink ( {b} , {a} ) ;"
    elif rule == "param_add":
        a = sketch.pick()
        before = f"sink ( {a} ) ;"
        after = f"sink ( {a} , 0 ) ;"
    elif rule == "literal_bump":
        a = sketch.pick()
        n = int(rng.integers(32))
        before = f"store ( {a} , {n} ) ;"
        after = f"store ( {a} , {n + 1} ) ;"
    elif rule == "throw_rename":
        v = sketch.pick()
        before = f"throw new Err ( {v} ) ;"
        after = f"throw new Fault ( {v} ) ;"
    elif rule == "sanitize_arg":
        v = sketch.pick("String" if rng.random() < 0.5 else "int")
        w = sketch.pick()
        wrapper = "escape" if sketch.typed[v] == "String" else "clamp"
        before = f"sink ( {v} , {w} ) ;"
        after = f"sink ( {wrapper} ( {v} ) , {w} ) ;"
    elif rule == "wrap_return":
        rtype = "String" if rng.random() < 0.5 else "int"
        sketch.return_type = rtype
        v = sketch.pick(rtype)
        wrapper = "escape" if rtype == "String" else "clamp"
        before = f"return {v} ;"
        after = f"return {wrapper} ( {v} ) ;"
    elif rule == "wrap_throw_arg":
        v = sketch.pick("String" if rng.random() < 0.5 else "int")
        wrapper = "escape" if sketch.typed[v] == "String" else "clamp"
        before = f"throw new Err ( {v} ) ;"
        after = f"throw new Err ( {wrapper} ( {v} ) ) ;"
    elif rule == "guard_insert":
        v = sketch.pick("String")
        before = f"sink ( {v} ) ;"
        after = f"if ( {v} == null ) {{ return ; }} sink ( {v} ) ;"
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return before, after


def synth_corpus(spec):
    """Deterministic synthetic corpus of raw before/after records."""
    if spec.size < 1:
        raise ValueError("size must be >= 1")
    rng = np.random.default_rng(spec.seed)
    all_names = [f"{_LETTERS[i % 26]}{_LETTERS[(i // 26) % 26]}{i % 97}"
                 for i in range(spec.name_pool)]
    records = []
    for i in range(spec.size):
        rule = spec.rules[int(rng.integers(len(spec.rules)))]
        names = [all_names[int(j)]
                 for j in rng.choice(len(all_names), size=12, replace=False)]
        sketch = _ProgramSketch(rng, names, rule).build()
        before, after = _apply_rule(sketch, rule, rng)
        src_text = sketch.render(before)
        dst_text = sketch.render(after)
        year = 2008 + (i * 12) // max(1, spec.size)
        meta = {
            "project": spec.project,
            "commit": f"c{spec.seed:03d}{i:05d}",
            "vuln_id": f"SYN-{spec.seed}-{i:05d}",
            "cwe_tags": [_RULE_TAG[rule]],
            "timestamp": f"{min(year, 2019)}-{(i % 12) + 1:02d}-01",
            "rule": rule,
        }
        records.append(CorpusRecord(meta=meta, stage="raw",
                                    src_text=src_text, dst_text=dst_text,
                                    path=f"synth/C{i}.java"))
    return records
