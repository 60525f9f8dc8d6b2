import itertools

import numpy as np
import pytest

from patchforge.abstraction import EOS_ID
from patchforge.beam import (
    BeamHypothesis, beam_search, greedy_decode, hypothesis_output,
)
from patchforge.model import ModelConfig, forward, init_params


def small_params(seed, vocab=5, layers=1, d_model=8, heads=2, d_ff=12):
    cfg = ModelConfig(layers=layers, d_model=d_model, heads=heads, d_ff=d_ff,
                      src_vocab=vocab, dst_vocab=vocab, max_len=16,
                      dropout=0.0)
    return init_params(cfg, seed=seed)


def enumerate_finished(params, src, max_len):
    """All finished sequences (EOS-terminated or at max_len), exactly scored."""
    vocab = params.config.dst_vocab
    finished = []

    def expand(prefix, logprob):
        logp = forward(params, src, list(prefix))[len(prefix)]
        for token in range(vocab):
            seq = prefix + (token,)
            score = logprob + float(logp[token])
            if token == EOS_ID or len(seq) == max_len:
                finished.append(BeamHypothesis(seq, score, True))
            else:
                expand(seq, score)

    expand((), 0.0)
    finished.sort(key=BeamHypothesis.sort_key)
    return finished


def test_beam_equals_exhaustive_enumeration():
    for seed in range(6):
        params = small_params(seed)
        src = [4, 3, 4]
        want = enumerate_finished(params, src, max_len=3)
        got = beam_search(params, src, k=125, max_len=3)
        assert len(got) == min(125, len(want))
        for g, w in zip(got, want):
            assert g.tokens == w.tokens
            assert abs(g.logprob - w.logprob) < 1e-12


def test_beam_top1_matches_enumeration_argmax():
    params = small_params(99)
    src = [4, 4]
    best = enumerate_finished(params, src, max_len=3)[0]
    got = beam_search(params, src, k=125, max_len=3)[0]
    assert got.tokens == best.tokens


def test_beam_sorted_and_bounded():
    params = small_params(7, vocab=8)
    results = beam_search(params, [4, 5], k=4, max_len=5)
    assert len(results) <= 4
    scores = [h.logprob for h in results]
    assert scores == sorted(scores, reverse=True)
    assert all(h.finished for h in results)
    assert all(h.tokens[-1] == EOS_ID or len(h.tokens) == 5 for h in results)


def test_beam_width_one_equals_greedy():
    for seed in (0, 1, 2, 3):
        params = small_params(seed, vocab=9)
        src = [4, 6, 8]
        hyp = beam_search(params, src, k=1, max_len=8)[0]
        greedy = greedy_decode(params, [src], max_len=8)[0]
        assert hypothesis_output(hyp) == greedy


def test_score_consistency_with_forward():
    params = small_params(11, vocab=7)
    src = [4, 5, 6]
    for hyp in beam_search(params, src, k=3, max_len=4):
        logp = 0.0
        for i, token in enumerate(hyp.tokens):
            row = forward(params, src, list(hyp.tokens[:i]))[i]
            logp += float(row[token])
        assert abs(logp - hyp.logprob) < 1e-9


def test_beam_determinism():
    params = small_params(13)
    a = beam_search(params, [4, 4, 3], k=5, max_len=4)
    b = beam_search(params, [4, 4, 3], k=5, max_len=4)
    assert [(h.tokens, h.logprob) for h in a] == \
        [(h.tokens, h.logprob) for h in b]


def test_larger_beam_contains_smaller_beam_hits():
    params = small_params(21, vocab=6)
    src = [4, 5]
    small = beam_search(params, src, k=2, max_len=3)
    large = beam_search(params, src, k=10, max_len=3)
    large_tokens = {h.tokens for h in large}
    assert {h.tokens for h in small} <= large_tokens


def test_beam_rejects_bad_width():
    params = small_params(1)
    with pytest.raises(ValueError):
        beam_search(params, [4], k=0, max_len=3)


def test_hypothesis_output_strips_eos():
    assert hypothesis_output(BeamHypothesis((5, 6, EOS_ID), -1.0, True)) == [5, 6]
    assert hypothesis_output(BeamHypothesis((5, 6), -1.0, True)) == [5, 6]
