"""The accuracy protocols: exact match, top-k, k-fold, time split, and
per-tag breakdowns, shown on hand-shaped fixtures.

Run:  python3 demos/05_evaluation_protocols.py
"""

from datetime import date

from patchforge import (
    GeneratorSpec, KFold, TimeSplit, exact_match, group_report, split_corpus,
    synth_corpus, topk_match,
)
from patchforge.evaluator import format_ratio, ratio_half_up, record_level


def main():
    print("== exact match ==")
    report = exact_match([["a"], ["b"], ["c"]], [["a"], ["x"], ["c"]])
    print(f"  {report.summary()}")

    print("\n== top-k over ranked candidate lists ==")
    beams = [[["fix"], ["other"]], [["miss"], ["fix"]], [["miss"], ["miss"]]]
    refs = [["fix"], ["fix"], ["fix"]]
    report = topk_match(beams, refs, ks=(1, 2))
    for k in sorted(report.per_beam):
        c, t = report.per_beam[k]
        print(f"  k={k}: {format_ratio(c, t)}")

    print("\n== the paper-style table cells ==")
    print(f"  {format_ratio(301, 2130)}  {format_ratio(35, 150)}  "
          f"{format_ratio(38, 150)}  CWE ratio {ratio_half_up(45, 84)}")

    print("\n== 10-fold split of a synthetic corpus ==")
    corpus = synth_corpus(GeneratorSpec(seed=3, size=40))
    folds = split_corpus(corpus, KFold(n=10, seed=0))
    print(f"  fold sizes: {[len(f) for f in folds]}")

    print("\n== time split (train through 2017, validate 2018, test 2019) ==")
    train, val, test = split_corpus(
        corpus, TimeSplit(train_end=date(2017, 12, 31),
                          val_end=date(2018, 12, 31)))
    print(f"  train/val/test sizes: {len(train)}/{len(val)}/{len(test)}")

    print("\n== per-tag breakdown (multi-tagged records count per tag) ==")
    outcomes = [True, True, False, True, False]
    tags = [["CWE-287"], ["CWE-287", "CWE-863"], ["CWE-863"], ["CWE-22"], []]
    report = group_report(outcomes, tags)
    for tag, (c, t) in report.per_tag.items():
        print(f"  {tag}: {c}/{t} = {ratio_half_up(c, t)}")

    print("\n== record-level accuracy (every statement must match) ==")
    statement_hits = [True, True, False, True]
    vuln_ids = ["CVE-1", "CVE-1", "CVE-2", "CVE-2"]
    report = record_level(statement_hits, vuln_ids)
    print(f"  {report.summary()}")


if __name__ == "__main__":
    main()
