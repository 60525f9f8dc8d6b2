"""Pipeline configuration: one flat ``key = value`` file.

Lines are ``key = value``; ``#`` starts a comment; unknown keys are
errors.  Every ablation flag corresponds to one factor-analysis group:
``use_defuse`` (context chains vs bare statement), ``use_normalization``
(placeholder abstraction), ``use_bpe`` (subword merges), ``mix_general``
(mixed fine-tuning data), ``use_finetune`` (pre-train + fine-tune vs
training from scratch on the specific corpus).
"""

import dataclasses
from dataclasses import dataclass

from .errors import FormatError
from .model import ModelConfig


@dataclass
class PipelineConfig:
    # tree diffing
    min_height: int = 2
    sim_threshold: float = 0.5
    # slicing
    transitive_defs: bool = True
    # abstraction
    token_limit: int = 1500
    vocab_cap: int = 8000
    merge_count: int = 8000
    # model (defaults are the desk-scale tiny preset; preset=paper switches
    # to the full 6-layer, d_model-512 geometry)
    preset: str = "tiny"
    layers: int = None
    d_model: int = None
    heads: int = None
    d_ff: int = None
    max_len: int = 256
    dropout: float = 0.0
    # training
    steps: int = 1000
    batch_size: int = 32
    learning_rate: float = 0.1
    checkpoint_every: int = 5000
    finetune_steps: int = None
    finetune_lr: float = 0.01
    val_fraction: float = 0.1
    seed: int = 0
    # decoding
    beam: int = 5
    # checker
    checker_cmd: str = None
    # auxiliary inputs for finetune/predict/patch/eval
    general_corpus: str = None
    base_model: str = None
    model_dir: str = None
    # ablation flags (factor-analysis groups)
    use_defuse: bool = True
    use_normalization: bool = True
    use_bpe: bool = True
    mix_general: bool = True
    use_finetune: bool = True

    def model_config(self, src_vocab, dst_vocab):
        presets = {
            "tiny": dict(layers=2, d_model=64, heads=4, d_ff=128),
            "paper": dict(layers=6, d_model=512, heads=8, d_ff=2048),
        }
        if self.preset not in presets:
            raise FormatError(f"unknown preset {self.preset!r}")
        geo = presets[self.preset]
        for name in geo:
            override = getattr(self, name)
            if override is not None:
                geo[name] = override
        return ModelConfig(src_vocab=src_vocab, dst_vocab=dst_vocab,
                           max_len=self.max_len, dropout=self.dropout, **geo)


_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _coerce(name, kind, raw):
    if raw.lower() in ("none", ""):
        return None
    if kind is bool:
        if raw.lower() not in _BOOL_WORDS:
            raise ValueError(f"{name}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[raw.lower()]
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_config(text):
    """Parse ``key = value`` lines into a PipelineConfig."""
    kinds = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}
    types = {"int": int, "float": float, "str": str, "bool": bool}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, raw = body.partition("=")
        key = key.strip()
        raw = raw.strip()
        if not sep or not key:
            raise FormatError(f"line {lineno}: expected 'key = value'")
        if key not in kinds:
            raise FormatError(f"line {lineno}: unknown key {key!r}")
        kind = kinds[key]
        if isinstance(kind, str):
            kind = types.get(kind, str)
        try:
            values[key] = _coerce(key, kind, raw)
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
    return PipelineConfig(**values)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(config):
    lines = []
    for f in dataclasses.fields(PipelineConfig):
        value = getattr(config, f.name)
        lines.append(f"{f.name} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
