"""Beam-search and greedy decoding over a trained translator.

Hypotheses accumulate per-step log-probabilities; there is no length
penalty.  Finished hypotheses (those emitting the end symbol, or hitting
``max_len``) are set aside and do not consume beam slots, so short
candidates cannot starve longer ones.  Ranking ties break on the
lexicographically smallest token-id sequence.
"""

from dataclasses import dataclass, field

import numpy as np

from .abstraction import BOS_ID, EOS_ID
from .model import _log_softmax, decode, encode


@dataclass
class BeamHypothesis:
    """A decoded token sequence with its cumulative log-probability."""

    tokens: tuple
    logprob: float
    finished: bool = False

    def sort_key(self):
        return (-self.logprob, self.tokens)


def _next_logprobs(params, memory, src_pad_mask, prefixes):
    """Log-probabilities of the next token for each prefix (one forward)."""
    width = max(len(p) for p in prefixes) + 1
    dst_in = np.zeros((len(prefixes), width), dtype=np.int64)
    for i, prefix in enumerate(prefixes):
        dst_in[i, 0] = BOS_ID
        dst_in[i, 1:len(prefix) + 1] = prefix
    logits, _ = decode(params, dst_in, memory, src_pad_mask)
    rows = np.array([logits[i, len(p)] for i, p in enumerate(prefixes)])
    return _log_softmax(rows)


def beam_search(params, src_ids, k, max_len):
    """Up to ``k`` finished hypotheses, best first.

    Each step expands every live hypothesis over the whole vocabulary,
    keeps the ``k`` best unfinished expansions as the next beam, and
    sets aside end-of-sequence expansions that rank within the overall
    top ``k``.
    """
    if k < 1:
        raise ValueError("beam width must be >= 1")
    src = np.asarray([src_ids], dtype=np.int64)
    memory_one, _ = encode(params, src)
    live = [BeamHypothesis(tokens=(), logprob=0.0)]
    finished = []

    for step in range(max_len):
        logp = _next_logprobs(params,
                              np.repeat(memory_one, len(live), axis=0),
                              None,
                              [h.tokens for h in live])
        scored = []
        for i, hyp in enumerate(live):
            for token in range(logp.shape[1]):
                scored.append(BeamHypothesis(
                    tokens=hyp.tokens + (token,),
                    logprob=hyp.logprob + float(logp[i, token])))
        scored.sort(key=BeamHypothesis.sort_key)
        top = scored[:k]
        at_limit = step + 1 >= max_len
        for hyp in top:
            if hyp.tokens[-1] == EOS_ID or at_limit:
                finished.append(BeamHypothesis(hyp.tokens, hyp.logprob, True))
        if at_limit:
            break
        live = [h for h in scored if h.tokens[-1] != EOS_ID][:k]
        if not live:
            break
        if len(finished) >= k:
            worst_kept = sorted(finished, key=BeamHypothesis.sort_key)[k - 1]
            if live[0].logprob < worst_kept.logprob:
                break  # scores only decrease; nothing live can place

    finished.sort(key=BeamHypothesis.sort_key)
    return finished[:k]


def greedy_decode(params, src_seqs, max_len):
    """Batched argmax decoding; returns one id list per source sequence.

    Emitted sequences stop at (and exclude) the end symbol.
    """
    batch = len(src_seqs)
    width = max(len(s) for s in src_seqs)
    src = np.zeros((batch, width), dtype=np.int64)
    for i, s in enumerate(src_seqs):
        src[i, :len(s)] = s
    pad = src == 0
    for i, s in enumerate(src_seqs):  # genuine pad ids only past each length
        pad[i, :len(s)] = False
    memory, _ = encode(params, src, pad)
    dst_in = np.full((batch, 1), BOS_ID, dtype=np.int64)
    done = np.zeros(batch, dtype=bool)
    outputs = [[] for _ in range(batch)]
    for _ in range(max_len):
        logits, _ = decode(params, dst_in, memory, pad)
        nxt = logits[:, -1].argmax(axis=-1)
        for i in range(batch):
            if done[i]:
                continue
            if int(nxt[i]) == EOS_ID:
                done[i] = True
            else:
                outputs[i].append(int(nxt[i]))
        if done.all():
            break
        dst_in = np.concatenate([dst_in, nxt[:, None]], axis=1)
    return outputs


def hypothesis_output(hyp):
    """Hypothesis tokens without the trailing end symbol."""
    tokens = list(hyp.tokens)
    if tokens and tokens[-1] == EOS_ID:
        tokens.pop()
    return tokens
