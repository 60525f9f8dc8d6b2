"""Stage orchestration: extract, abstract, train, predict, patch, eval.

Every command consumes records at one stage and writes stage-tagged
outputs; re-running a stage on unchanged inputs is bit-identical (fixed
seeds).  Model artifacts live in a directory holding ``vocab.txt``,
``merges.txt`` (when subword merges are enabled), ``best.sqtr`` plus
per-step checkpoints, and ``train_meta.json``.
"""

import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from .abstraction import (
    AbstractionDictionary, MergeTable, TokenSeq, Vocabulary, abstract_text,
    bpe_segment, bpe_train, build_vocab, tokenize,
)
from .ast_core import parse_source
from .beam import beam_search, hypothesis_output
from .corpus import CorpusRecord, load_corpus, save_corpus
from .errors import PatchforgeError, StageMismatch, TooLong
from .evaluator import (
    exact_match, format_ratio, group_report, record_level, topk_match,
)
from .lexer import EMPTY_MARKER
from .model import init_params, load_params, save_params
from .patcher import (
    ExternalCommandChecker, PatchCandidate, SubsetGrammarChecker,
    baseline_diagnostics, check_candidates, emit_patch,
    extract_focal_statement, refill,
)
from .slicer import DefUseChain, assemble_change_pair, build_defuse_chain
from .training import (
    Checkpoint, TrainPlan, best_checkpoint, finetune_model, train_model,
)
from .tree_diff import extract_change_pairs

log = logging.getLogger(__name__)

RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")


def _expect_stage(records, stage, command):
    for record in records:
        if record.stage != stage:
            raise StageMismatch(
                f"{command} expects stage {stage!r}, got {record.stage!r}")


# --- extract -----------------------------------------------------------------


def stage_extract(config, records):
    """Raw file pairs -> one chained record per statement diff."""
    _expect_stage(records, "raw", "extract")
    out = []
    diagnostics = []
    for i, record in enumerate(records):
        try:
            src = parse_source(record.src_text, record.path or f"record-{i}")
            dst = parse_source(record.dst_text, record.path or f"record-{i}")
            diffs = extract_change_pairs(src, dst, config.min_height,
                                         config.sim_threshold)
        except PatchforgeError as exc:
            diagnostics.append(f"record {i}: {exc}")
            continue
        for diff in diffs:
            if config.use_defuse:
                pair = assemble_change_pair(src, dst, diff, record.meta,
                                            config.transitive_defs)
                src_chain, dst_chain = pair.src_chain, pair.dst_chain
            else:
                # factor-analysis group "without def-use chains":
                # the bare statement is the whole sequence
                src_chain = DefUseChain(
                    defs=[], stmt=diff.st_src if diff.st_src is not None
                    else EMPTY_MARKER)
                dst_chain = DefUseChain(
                    defs=[], stmt=diff.st_dst if diff.st_dst is not None
                    else EMPTY_MARKER)
            out.append(CorpusRecord(
                meta=dict(record.meta),
                stage="chained",
                path=record.path,
                src_text=record.src_text,
                src_chain={"defs": src_chain.defs, "stmt": src_chain.stmt},
                dst_chain={"defs": dst_chain.defs, "stmt": dst_chain.stmt},
                src_span=list(diff.src_span) if diff.src_span else None,
                dst_span=list(diff.dst_span) if diff.dst_span else None,
            ))
    return out, diagnostics


# --- abstract ----------------------------------------------------------------


def _chain_text(chain):
    return DefUseChain(defs=list(chain["defs"]), stmt=chain["stmt"]).text()


def stage_abstract(config, records):
    """Chained records -> abstracted records (placeholder form + dictionary).

    Pairs longer than the token limit are rejected here, at training-set
    construction time, and exact duplicates on (abstract source, abstract
    destination) are dropped (the corpus dedup rule).
    """
    _expect_stage(records, "chained", "abstract")
    out = []
    diagnostics = []
    seen_pairs = set()
    for i, record in enumerate(records):
        src_text = _chain_text(record.src_chain)
        dst_text = _chain_text(record.dst_chain)
        if config.use_normalization:
            dictionary = AbstractionDictionary()
            abstract_src = abstract_text(src_text, dictionary)
            abstract_dst = abstract_text(dst_text, dictionary)
        else:
            # factor-analysis group "without code normalization"
            dictionary = AbstractionDictionary()
            abstract_src, abstract_dst = src_text, dst_text
        try:
            tokenize(abstract_src, config.token_limit)
            tokenize(abstract_dst, config.token_limit)
        except TooLong as exc:
            diagnostics.append(f"record {i}: {exc}")
            continue
        if (abstract_src, abstract_dst) in seen_pairs:
            diagnostics.append(f"record {i}: duplicate (src, dst) pair dropped")
            continue
        seen_pairs.add((abstract_src, abstract_dst))
        out.append(CorpusRecord(
            meta=dict(record.meta),
            stage="abstracted",
            path=record.path,
            src_text=record.src_text,
            src_chain=record.src_chain,
            dst_chain=record.dst_chain,
            src_span=record.src_span,
            dst_span=record.dst_span,
            abstract_src=abstract_src,
            abstract_dst=abstract_dst,
            dictionary=dictionary.to_pairs(),
        ))
    return out, diagnostics


# --- token codec --------------------------------------------------------------


@dataclass
class Codec:
    """Token <-> id translation: optional subword merges, then vocabulary."""

    vocab: Vocabulary
    merges: MergeTable = None

    def segment(self, tokens):
        seq = TokenSeq(list(tokens))
        if self.merges is not None:
            seq = bpe_segment(seq, self.merges, "apply")
        return seq.tokens

    def encode(self, tokens):
        return self.vocab.encode(self.segment(tokens))

    def decode(self, ids):
        tokens = self.vocab.decode(ids)
        if self.merges is None:
            return tokens
        out = []
        pending = []
        for token in tokens:
            if token in RESERVED_TOKENS:
                if pending:
                    out.extend(bpe_segment(TokenSeq(pending), self.merges,
                                           "decode").tokens)
                    pending = []
                out.append(token)
            else:
                pending.append(token)
        if pending:
            out.extend(bpe_segment(TokenSeq(pending), self.merges,
                                   "decode").tokens)
        return out


def _record_token_seqs(config, records):
    pairs = []
    for record in records:
        src = tokenize(record.abstract_src, config.token_limit)
        dst = tokenize(record.abstract_dst, config.token_limit)
        pairs.append((src, dst))
    return pairs


def build_codec(config, records):
    seqs = []
    for src, dst in _record_token_seqs(config, records):
        seqs.extend((src, dst))
    merges = None
    if config.use_bpe:
        merges = bpe_train(seqs, config.merge_count)
        seqs = [bpe_segment(s, merges, "apply") for s in seqs]
    vocab = build_vocab(seqs, config.vocab_cap)
    return Codec(vocab=vocab, merges=merges)


def encode_records(config, records, codec):
    return [(codec.encode(src.tokens), codec.encode(dst.tokens))
            for src, dst in _record_token_seqs(config, records)]


def extend_model_vocab(codec, params, token_seqs, seed):
    """Grow the vocabulary (and embeddings) for unseen fine-tune tokens.

    Fine-tuning corpora can introduce symbols the pre-training corpus
    never produced; their embedding rows and output-projection columns
    are appended with seeded fresh values so ids of existing tokens (and
    all trained weights) are untouched.
    """
    import math

    from .model import ModelConfig, TransformerParams

    known = set(codec.vocab.token_to_id)
    new_tokens = []
    for seq in token_seqs:
        for token in codec.segment(seq.tokens):
            if token not in known:
                known.add(token)
                new_tokens.append(token)
    if not new_tokens:
        return codec, params
    id_to_token = list(codec.vocab.id_to_token) + new_tokens
    vocab = Vocabulary(id_to_token=id_to_token,
                       token_to_id={t: i for i, t in enumerate(id_to_token)})
    old_cfg = params.config
    cfg = ModelConfig(layers=old_cfg.layers, d_model=old_cfg.d_model,
                      heads=old_cfg.heads, d_ff=old_cfg.d_ff,
                      d_k=old_cfg.d_k, d_v=old_cfg.d_v,
                      src_vocab=len(vocab), dst_vocab=len(vocab),
                      max_len=old_cfg.max_len, dropout=old_cfg.dropout)
    rng = np.random.default_rng(seed + 31_337)
    d = cfg.d_model
    n = len(new_tokens)
    tensors = dict(params.tensors)
    for name in ("src_embed", "dst_embed"):
        fresh = rng.normal(0.0, d ** -0.5, (n, d))
        tensors[name] = np.vstack([tensors[name], fresh])
    bound = math.sqrt(6.0 / (d + len(vocab)))
    tensors["out.w"] = np.hstack(
        [tensors["out.w"], rng.uniform(-bound, bound, (d, n))])
    tensors["out.b"] = np.concatenate([tensors["out.b"], np.zeros(n)])
    return (Codec(vocab=vocab, merges=codec.merges),
            TransformerParams(cfg, tensors))


def _train_val_split(pairs, fraction, seed):
    if fraction <= 0 or len(pairs) < 2:
        return pairs, pairs
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    n_val = max(1, int(len(pairs) * fraction))
    val_idx = set(int(i) for i in order[:n_val])
    train = [p for i, p in enumerate(pairs) if i not in val_idx]
    val = [pairs[i] for i in sorted(val_idx)]
    return (train, val) if train else (pairs, pairs)


# --- model directories ---------------------------------------------------------


def save_model_dir(out_dir, codec, checkpoints, plan_steps):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "vocab.txt"), "w", encoding="utf-8") as fh:
        fh.write(codec.vocab.to_text())
    if codec.merges is not None:
        with open(os.path.join(out_dir, "merges.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(codec.merges.to_text())
    for ckpt in checkpoints:
        name = f"checkpoint-{ckpt.step:06d}.sqtr"
        with open(os.path.join(out_dir, name), "wb") as fh:
            save_params(ckpt.params, fh)
    best = best_checkpoint(checkpoints)
    with open(os.path.join(out_dir, "best.sqtr"), "wb") as fh:
        save_params(best.params, fh)
    meta = {
        "steps": plan_steps,
        "best_step": best.step,
        "best_val_accuracy": best.val_accuracy,
        "checkpoints": [
            {"step": c.step, "val_accuracy": c.val_accuracy,
             "train_loss": c.train_loss} for c in checkpoints],
    }
    with open(os.path.join(out_dir, "train_meta.json"), "w",
              encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return meta


def load_model_dir(model_dir):
    with open(os.path.join(model_dir, "vocab.txt"), encoding="utf-8") as fh:
        vocab = Vocabulary.from_text(fh.read())
    merges = None
    merges_path = os.path.join(model_dir, "merges.txt")
    if os.path.exists(merges_path):
        with open(merges_path, encoding="utf-8") as fh:
            merges = MergeTable.from_text(fh.read())
    with open(os.path.join(model_dir, "best.sqtr"), "rb") as fh:
        params = load_params(fh)
    with open(os.path.join(model_dir, "train_meta.json"),
              encoding="utf-8") as fh:
        meta = json.load(fh)
    return Codec(vocab=vocab, merges=merges), params, meta


# --- training stages ------------------------------------------------------------


def stage_pretrain(config, records, out_dir, seed=None):
    _expect_stage(records, "abstracted", "pretrain")
    seed = config.seed if seed is None else seed
    codec = build_codec(config, records)
    pairs = encode_records(config, records, codec)
    train, val = _train_val_split(pairs, config.val_fraction, seed)
    model_cfg = config.model_config(len(codec.vocab), len(codec.vocab))
    params = init_params(model_cfg, seed=seed)
    plan = TrainPlan(steps=config.steps, batch_size=config.batch_size,
                     learning_rate=config.learning_rate,
                     checkpoint_every=config.checkpoint_every)
    checkpoints = train_model(params, train, plan, val_corpus=val, seed=seed)
    return save_model_dir(out_dir, codec, checkpoints, config.steps)


def stage_finetune(config, records, out_dir, seed=None):
    """Fine-tune the base model on the specific corpus.

    With ``use_finetune`` off (factor-analysis group "without
    fine-tuning strategy") a fresh model trains from scratch on the
    specific corpus instead, under the pre-training plan.
    """
    _expect_stage(records, "abstracted", "finetune")
    seed = config.seed if seed is None else seed
    if not config.base_model:
        raise PatchforgeError("finetune requires config.base_model")
    codec, base_params, base_meta = load_model_dir(config.base_model)

    general_records = []
    if config.mix_general and config.general_corpus:
        general_records, diags = load_corpus(config.general_corpus)
        for diag in diags:
            log.warning("general corpus: %s", diag)
        _expect_stage(general_records, "abstracted", "finetune (general)")

    # the fine-tuning corpus may carry tokens the base never saw
    scan = []
    for src, dst in _record_token_seqs(config, list(records) + general_records):
        scan.extend((src, dst))
    codec, base_params = extend_model_vocab(codec, base_params, scan, seed)

    pairs = encode_records(config, records, codec)
    train, val = _train_val_split(pairs, config.val_fraction, seed)
    general_pairs = encode_records(config, general_records, codec)

    if config.use_finetune:
        base = Checkpoint(step=base_meta["steps"], params=base_params,
                          val_accuracy=base_meta.get("best_val_accuracy", 0.0),
                          train_loss=0.0)
        plan = TrainPlan(steps=config.finetune_steps,
                         batch_size=config.batch_size,
                         learning_rate=config.finetune_lr,
                         checkpoint_every=config.checkpoint_every,
                         mix_general=config.mix_general)
        checkpoints = finetune_model(base, train, general_pairs, plan,
                                     val_corpus=val, seed=seed)
        steps = checkpoints[-1].step
    else:
        model_cfg = config.model_config(len(codec.vocab), len(codec.vocab))
        params = init_params(model_cfg, seed=seed)
        plan = TrainPlan(steps=config.steps, batch_size=config.batch_size,
                         learning_rate=config.learning_rate,
                         checkpoint_every=config.checkpoint_every)
        checkpoints = train_model(params, train, plan, val_corpus=val,
                                  seed=seed)
        steps = config.steps
    return save_model_dir(out_dir, codec, checkpoints, steps)


# --- prediction -----------------------------------------------------------------


def stage_predict(config, records, beam=None):
    """Beam-decode candidates for each abstracted record."""
    _expect_stage(records, "abstracted", "predict")
    if not config.model_dir:
        raise PatchforgeError("predict requires config.model_dir")
    codec, params, _ = load_model_dir(config.model_dir)
    width = beam or config.beam
    max_out = params.config.max_len - 1
    predictions = []
    diagnostics = []
    for i, record in enumerate(records):
        try:
            src_tokens = tokenize(record.abstract_src, config.token_limit)
        except TooLong as exc:
            diagnostics.append(f"record {i}: flagged at inference: {exc}")
            continue
        src_ids = codec.encode(src_tokens.tokens)
        hyps = beam_search(params, src_ids, k=width, max_len=max_out)
        candidates = []
        for rank, hyp in enumerate(hyps, start=1):
            tokens = codec.decode(hypothesis_output(hyp))
            candidates.append({
                "rank": rank,
                "logprob": hyp.logprob,
                "tokens": tokens,
                "text": " ".join(tokens),
            })
        data = json.loads(record.to_json())
        data["candidates"] = candidates
        predictions.append(data)
    return predictions, diagnostics


def save_predictions(predictions, path):
    with open(path, "w", encoding="utf-8") as fh:
        for item in predictions:
            fh.write(json.dumps(item, sort_keys=True) + "\n")


def load_predictions(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# --- patching -------------------------------------------------------------------


def make_checker(config):
    if config.checker_cmd:
        return ExternalCommandChecker(config.checker_cmd.split())
    return SubsetGrammarChecker()


def stage_patch(config, predictions, out_dir):
    """Refill, check, and emit unified diffs for prediction candidates."""
    os.makedirs(out_dir, exist_ok=True)
    checker = make_checker(config)
    summaries = []
    diagnostics = []
    for i, item in enumerate(predictions):
        if not item.get("src_text") or not item.get("src_span"):
            diagnostics.append(
                f"record {i}: no patch target (pure insertion or missing "
                f"source); skipped")
            continue
        unit = parse_source(item["src_text"], item.get("path") or f"record-{i}")
        dictionary = AbstractionDictionary.from_pairs(item["dictionary"])
        span = tuple(item["src_span"])
        original = item["src_chain"]["stmt"]
        candidates = []
        for cand in item["candidates"]:
            concrete_chain = refill(cand["text"], dictionary)
            stmt_tokens = extract_focal_statement(concrete_chain.split())
            candidates.append(PatchCandidate(
                rank=cand["rank"],
                abstract_text=cand["text"],
                concrete_text=" ".join(stmt_tokens),
                target=(unit.path, span),
                original_text=original,
            ))
        baseline = baseline_diagnostics(unit, checker)
        survivors = check_candidates(candidates, baseline, unit, checker)
        emitted = []
        for cand in survivors:
            patched, diff = emit_patch(unit, cand)
            stem = f"{i:04d}-rank{cand.rank}"
            with open(os.path.join(out_dir, f"{stem}.diff"), "w",
                      encoding="utf-8") as fh:
                fh.write(diff)
            with open(os.path.join(out_dir, f"{stem}.patched"), "w",
                      encoding="utf-8") as fh:
                fh.write(patched)
            emitted.append({"rank": cand.rank, "diff": f"{stem}.diff",
                            "statement": cand.concrete_text})
        summaries.append({
            "record": i,
            "vuln_id": item["meta"].get("vuln_id"),
            "candidates": len(candidates),
            "compilable": len(survivors),
            "emitted": emitted,
        })
    with open(os.path.join(out_dir, "summary.jsonl"), "w",
              encoding="utf-8") as fh:
        for summary in summaries:
            fh.write(json.dumps(summary, sort_keys=True) + "\n")
    return summaries, diagnostics


# --- evaluation -----------------------------------------------------------------


def _refilled_tokens(text, dictionary):
    return refill(text, dictionary).split()


def stage_eval(config, predictions, beam=None):
    """Exact-match / top-k / per-tag / record-level report after refill."""
    width = beam or config.beam
    ks = [k for k in (1, 5, 10, 50) if k <= width]
    if width not in ks:
        ks.append(width)
    refs = []
    beams = []
    tags = []
    record_ids = []
    for item in predictions:
        dictionary = AbstractionDictionary.from_pairs(item["dictionary"])
        refs.append(_refilled_tokens(item["abstract_dst"], dictionary))
        beams.append([_refilled_tokens(c["text"], dictionary)
                      for c in item["candidates"]])
        tags.append(item["meta"].get("cwe_tags") or [])
        record_ids.append(item["meta"].get("vuln_id"))
    top1 = [cands[0] if cands else [] for cands in beams]
    report = exact_match(top1, refs)
    report.per_beam = topk_match(beams, refs, ks=tuple(sorted(ks))).per_beam
    report.per_tag = group_report(
        [p == r for p, r in zip(top1, refs)], tags).per_tag
    best_k = max(ks)
    record_hits = [any(list(c) == list(r) for c in cands[:best_k])
                   for cands, r in zip(beams, refs)]
    cve = record_level(record_hits, record_ids)
    lines = [report.render(), f"record-level {format_ratio(cve.correct, cve.total)}"]
    return report, cve, "\n".join(lines) + "\n"


# --- command dispatch -------------------------------------------------------------


def run_pipeline(config, command, in_path=None, out_path=None, beam=None,
                 seed=None):
    """Run one pipeline command; returns a result summary dict."""
    if command == "extract":
        records, diags = load_corpus(in_path)
        out, more = stage_extract(config, records)
        save_corpus(out, out_path)
        return {"command": command, "records": len(out),
                "diagnostics": diags + more, "out": out_path}
    if command == "abstract":
        records, diags = load_corpus(in_path)
        out, more = stage_abstract(config, records)
        save_corpus(out, out_path)
        return {"command": command, "records": len(out),
                "diagnostics": diags + more, "out": out_path}
    if command == "pretrain":
        records, diags = load_corpus(in_path)
        meta = stage_pretrain(config, records, out_path, seed)
        return {"command": command, "diagnostics": diags, "out": out_path,
                **meta}
    if command == "finetune":
        records, diags = load_corpus(in_path)
        meta = stage_finetune(config, records, out_path, seed)
        return {"command": command, "diagnostics": diags, "out": out_path,
                **meta}
    if command == "predict":
        records, diags = load_corpus(in_path)
        predictions, more = stage_predict(config, records, beam)
        save_predictions(predictions, out_path)
        return {"command": command, "records": len(predictions),
                "diagnostics": diags + more, "out": out_path}
    if command == "patch":
        predictions = load_predictions(in_path)
        summaries, diags = stage_patch(config, predictions, out_path)
        return {"command": command, "records": len(summaries),
                "diagnostics": diags, "out": out_path}
    if command == "eval":
        predictions = load_predictions(in_path)
        report, cve, text = stage_eval(config, predictions, beam)
        if out_path:
            with open(out_path, "w", encoding="utf-8") as fh:
                fh.write(text)
                for item in report.records():
                    fh.write(json.dumps(item, sort_keys=True) + "\n")
        return {"command": command, "report": report, "cve": cve,
                "text": text, "out": out_path}
    raise StageMismatch(f"unknown command {command!r}")
