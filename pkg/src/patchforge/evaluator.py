"""Accuracy protocols: exact match, top-k, corpus splits, tag breakdowns.

Reports render ratios in the ``correct/total(pp.p%)`` style with
percentages rounded half-up to one decimal place and per-tag accuracy
ratios to two decimals.  Records carrying several tags count once per
tag, so per-tag totals may exceed the overall total; untagged records
count only in the overall total.
"""

from dataclasses import dataclass, field
from datetime import date
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import LengthMismatch, MissingTimestamp


def percent_half_up(correct, total, places=1):
    """Percentage rounded half-up, as a string without the sign."""
    if total == 0:
        return "0.0"
    q = Decimal(correct) * 100 / Decimal(total)
    places = Decimal(1).scaleb(-places)
    return str(q.quantize(places, rounding=ROUND_HALF_UP))


def ratio_half_up(correct, total, places=2):
    if total == 0:
        return "0.00"
    q = Decimal(correct) / Decimal(total)
    return str(q.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


def format_ratio(correct, total):
    """The paper-table cell format, e.g. ``301/2130(14.1%)``."""
    return f"{correct}/{total}({percent_half_up(correct, total)}%)"


@dataclass
class EvalReport:
    total: int = 0
    correct: int = 0
    per_tag: dict = field(default_factory=dict)   # tag -> (correct, total)
    per_beam: dict = field(default_factory=dict)  # k -> (correct, total)

    @property
    def accuracy(self):
        return self.correct / self.total if self.total else 0.0

    def summary(self):
        return format_ratio(self.correct, self.total)

    def render(self):
        """Human-readable table."""
        lines = [f"total {self.summary()}"]
        if self.per_beam:
            for k in sorted(self.per_beam):
                c, t = self.per_beam[k]
                lines.append(f"beam={k} {format_ratio(c, t)}")
        for tag, (c, t) in self.per_tag.items():
            lines.append(f"{tag} {c}/{t} {ratio_half_up(c, t)}")
        return "\n".join(lines)

    def records(self):
        """Machine-readable line-delimited records."""
        out = [{"kind": "total", "correct": self.correct, "total": self.total,
                "accuracy": self.accuracy}]
        for k in sorted(self.per_beam):
            c, t = self.per_beam[k]
            out.append({"kind": "beam", "k": k, "correct": c, "total": t})
        for tag, (c, t) in self.per_tag.items():
            out.append({"kind": "tag", "tag": tag, "correct": c, "total": t})
        return out


def exact_match(preds, refs):
    """Exact token-sequence equality; no partial credit."""
    if len(preds) != len(refs):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(refs)} references")
    correct = sum(1 for p, r in zip(preds, refs) if list(p) == list(r))
    return EvalReport(total=len(refs), correct=correct)


def topk_match(beams, refs, ks=(1, 5, 10, 50)):
    """Hit at k iff any of the first k ranked candidates matches exactly."""
    if len(beams) != len(refs):
        raise LengthMismatch(f"{len(beams)} beams vs {len(refs)} references")
    report = EvalReport(total=len(refs))
    for k in ks:
        hits = 0
        for cands, ref in zip(beams, refs):
            ref = list(ref)
            if any(list(c) == ref for c in cands[:k]):
                hits += 1
        report.per_beam[k] = (hits, len(refs))
    if ks:
        report.correct = report.per_beam[max(ks)][0]
    return report


@dataclass
class KFold:
    n: int = 10
    seed: int = 0


@dataclass
class TimeSplit:
    train_end: date
    val_end: date


def _as_date(value):
    if isinstance(value, date):
        return value
    return date.fromisoformat(str(value))


def split_corpus(corpus, mode):
    """Partition a corpus for evaluation.

    KFold: ``n`` disjoint subsets covering the corpus, sizes within 1 of
    each other, shuffled by the seed; each serves once as the test fold.
    TimeSplit: train <= train_end < validation <= val_end < test, by each
    record's ``meta['timestamp']``.
    """
    corpus = list(corpus)
    if isinstance(mode, KFold):
        if len(corpus) < mode.n:
            raise ValueError(f"need at least {mode.n} records, got {len(corpus)}")
        rng = np.random.default_rng(mode.seed)
        order = rng.permutation(len(corpus))
        folds = [[] for _ in range(mode.n)]
        for i, idx in enumerate(order):
            folds[i % mode.n].append(corpus[int(idx)])
        return folds
    if isinstance(mode, TimeSplit):
        train, val, test = [], [], []
        for record in corpus:
            meta = record.meta if hasattr(record, "meta") else record["meta"]
            stamp = meta.get("timestamp") if isinstance(meta, dict) else None
            if not stamp:
                raise MissingTimestamp(f"record lacks timestamp: {record!r}")
            when = _as_date(stamp)
            if when <= mode.train_end:
                train.append(record)
            elif when <= mode.val_end:
                val.append(record)
            else:
                test.append(record)
        return train, val, test
    raise TypeError(f"unknown split mode {mode!r}")


def group_report(outcomes, tags):
    """Per-tag breakdown of boolean outcomes.

    ``tags[i]`` lists the tags of record ``i``; multi-tagged records
    count once per tag.  The per-tag map is ordered by accuracy
    descending, ties by tag name.
    """
    if len(outcomes) != len(tags):
        raise LengthMismatch(f"{len(outcomes)} outcomes vs {len(tags)} tag lists")
    counts = {}
    for ok, record_tags in zip(outcomes, tags):
        for tag in record_tags:
            c, t = counts.get(tag, (0, 0))
            counts[tag] = (c + int(bool(ok)), t + 1)
    ordered = sorted(counts.items(),
                     key=lambda item: (-(item[1][0] / item[1][1]), item[0]))
    report = EvalReport(total=len(outcomes),
                        correct=sum(1 for ok in outcomes if ok))
    report.per_tag = dict(ordered)
    return report


def record_level(outcomes, record_ids):
    """Record-level accuracy: every statement of a record must be correct.

    Statements are predicted independently; a record counts as fixed only
    when all of its change pairs matched exactly.
    """
    if len(outcomes) != len(record_ids):
        raise LengthMismatch(
            f"{len(outcomes)} outcomes vs {len(record_ids)} record ids")
    per_record = {}
    for ok, rid in zip(outcomes, record_ids):
        per_record[rid] = per_record.get(rid, True) and bool(ok)
    return EvalReport(total=len(per_record),
                      correct=sum(1 for ok in per_record.values() if ok))
