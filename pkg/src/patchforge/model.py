"""Encoder-decoder transformer in numpy with hand-written gradients.

Architecture: token embeddings scaled by sqrt(d_model) plus fixed
sinusoidal positional encodings; N encoder blocks of (multi-head
self-attention, feed-forward), N decoder blocks of (masked self-
attention, cross-attention, feed-forward); every sublayer is wrapped as
``layernorm(x + sublayer(x))``; a final linear projection produces
next-token logits.  Attention uses ``softmax(Q Kᵀ / sqrt(d_k))``.

All math is float64.  ``loss_and_grads`` backpropagates token-level
cross-entropy; ``grad_check`` validates it against central finite
differences.  Masked attention rows that are fully blocked fall back to
a uniform distribution (with zero gradient into the scores), so padded
positions never produce NaNs.
"""

import io
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import LengthExceeded, ShapeMismatch

_NEG_INF = -1e30  # finite stand-in for -inf keeps exp() warnings away


@dataclass
class ModelConfig:
    layers: int = 6
    d_model: int = 512
    heads: int = 8
    d_ff: int = 2048
    d_k: int = None
    d_v: int = None
    src_vocab: int = 8000
    dst_vocab: int = 8000
    max_len: int = 1500
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ShapeMismatch("d_model must be divisible by heads")
        if self.d_k is None:
            self.d_k = self.d_model // self.heads
        if self.d_v is None:
            self.d_v = self.d_model // self.heads

    @classmethod
    def tiny(cls, src_vocab, dst_vocab, max_len=256):
        """CI-sized preset: 2 layers, d_model 64, 4 heads."""
        return cls(layers=2, d_model=64, heads=4, d_ff=128,
                   src_vocab=src_vocab, dst_vocab=dst_vocab,
                   max_len=max_len, dropout=0.0)

    @classmethod
    def paper(cls, src_vocab=8000, dst_vocab=8000):
        """Full-scale preset: 6 layers, d_model 512."""
        return cls(src_vocab=src_vocab, dst_vocab=dst_vocab)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def _attn_names(prefix):
    return [f"{prefix}.{n}" for n in
            ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")]


def param_names(config):
    """Tensor names in declaration (checkpoint) order."""
    names = ["src_embed", "dst_embed"]
    for i in range(config.layers):
        names += _attn_names(f"enc{i}.attn")
        names += [f"enc{i}.ln1.g", f"enc{i}.ln1.b"]
        names += [f"enc{i}.ff.w1", f"enc{i}.ff.b1",
                  f"enc{i}.ff.w2", f"enc{i}.ff.b2"]
        names += [f"enc{i}.ln2.g", f"enc{i}.ln2.b"]
    for i in range(config.layers):
        names += _attn_names(f"dec{i}.self")
        names += [f"dec{i}.ln1.g", f"dec{i}.ln1.b"]
        names += _attn_names(f"dec{i}.cross")
        names += [f"dec{i}.ln2.g", f"dec{i}.ln2.b"]
        names += [f"dec{i}.ff.w1", f"dec{i}.ff.b1",
                  f"dec{i}.ff.w2", f"dec{i}.ff.b2"]
        names += [f"dec{i}.ln3.g", f"dec{i}.ln3.b"]
    names += ["out.w", "out.b"]
    return names


def _param_shape(config, name):
    d, dk, dv, h = config.d_model, config.d_k, config.d_v, config.heads
    if name == "src_embed":
        return (config.src_vocab, d)
    if name == "dst_embed":
        return (config.dst_vocab, d)
    if name == "out.w":
        return (d, config.dst_vocab)
    if name == "out.b":
        return (config.dst_vocab,)
    leaf = name.rsplit(".", 1)[1]
    if leaf in ("g", "b") and (".ln" in name):
        return (d,)
    if leaf == "wq" or leaf == "wk":
        return (d, h * dk)
    if leaf == "wv":
        return (d, h * dv)
    if leaf == "wo":
        return (h * dv, d)
    if leaf == "bq" or leaf == "bk":
        return (h * dk,)
    if leaf == "bv":
        return (h * dv,)
    if leaf == "bo":
        return (d,)
    if leaf == "w1":
        return (d, config.d_ff)
    if leaf == "b1":
        return (config.d_ff,)
    if leaf == "w2":
        return (config.d_ff, d)
    if leaf == "b2":
        return (d,)
    raise KeyError(name)


@dataclass
class TransformerParams:
    """Model configuration plus all weight tensors, keyed by name."""

    config: ModelConfig
    tensors: dict = field(default_factory=dict)

    def copy(self):
        return TransformerParams(self.config,
                                 {k: v.copy() for k, v in self.tensors.items()})


def init_params(config, seed=0, dtype=np.float64):
    """Seeded initialization; ``dtype=np.float32`` halves training cost,
    float64 is the mode gradient checking runs in."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name in param_names(config):
        shape = _param_shape(config, name)
        if name in ("src_embed", "dst_embed"):
            tensor = rng.normal(0.0, config.d_model ** -0.5, shape)
        elif ".ln" in name:
            tensor = (np.ones(shape) if name.endswith(".g")
                      else np.zeros(shape))
        elif len(shape) == 1:
            tensor = np.zeros(shape)
        else:
            fan_in, fan_out = shape
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            tensor = rng.uniform(-bound, bound, shape)
        tensors[name] = tensor.astype(dtype)
    return TransformerParams(config, tensors)


def positional_encoding(length, d_model):
    pos = np.arange(length)[:, None].astype(float)
    dim = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (dim // 2)) / d_model)
    enc = np.zeros((length, d_model))
    enc[:, 0::2] = np.sin(angle[:, 0::2])
    enc[:, 1::2] = np.cos(angle[:, 1::2])
    return enc


# --- primitive layers -------------------------------------------------------


def _linear(x, w, b):
    return x @ w + b


def _linear_back(dout, x, w):
    dx = dout @ w.T
    dw = x.reshape(-1, x.shape[-1]).T @ dout.reshape(-1, dout.shape[-1])
    db = dout.reshape(-1, dout.shape[-1]).sum(axis=0)
    return dx, dw, db


_LN_EPS = 1e-12


def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv
    return g * xhat + b, (xhat, inv, g)


def _layernorm_back(dout, cache):
    xhat, inv, g = cache
    d = xhat.shape[-1]
    dxhat = dout * g
    dg = (dout * xhat).reshape(-1, d).sum(axis=0)
    db = dout.reshape(-1, d).sum(axis=0)
    dx = (inv / d) * (d * dxhat
                      - dxhat.sum(axis=-1, keepdims=True)
                      - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
    return dx, dg, db


def _masked_softmax(scores, mask):
    """Softmax over the last axis; mask=True blocks a position.

    Rows with every position blocked become uniform distributions and
    contribute no gradient to the scores (degenerate-input rule).
    """
    if mask is not None:
        scores = np.where(mask, _NEG_INF, scores)
    m = scores.max(axis=-1, keepdims=True)
    degenerate = m <= _NEG_INF
    e = np.exp(scores - np.where(degenerate, 0.0, m))
    if mask is not None:
        e = np.where(mask, 0.0, e)
    s = e.sum(axis=-1, keepdims=True)
    attn = np.where(degenerate,
                    1.0 / scores.shape[-1],
                    e / np.where(s == 0.0, 1.0, s))
    return attn, degenerate


def _softmax_back(dattn, attn, degenerate):
    ds = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    if degenerate is not None:
        ds = np.where(degenerate, 0.0, ds)
    return ds


def attention(q, k, v, mask=None):
    """Scaled dot-product attention over 2-D matrices (one head).

    ``q``: (n_q, d_k), ``k``: (n_k, d_k), ``v``: (n_k, d_v); ``mask`` is
    boolean (n_q, n_k), True meaning "do not attend".  Each output row
    is a convex combination of rows of ``v``.
    """
    q, k, v = np.asarray(q, float), np.asarray(k, float), np.asarray(v, float)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeMismatch("attention expects 2-D matrices")
    if q.shape[1] != k.shape[1]:
        raise ShapeMismatch("query/key dimension mismatch")
    if v.shape[0] != k.shape[0]:
        raise ShapeMismatch("key/value row count mismatch")
    if mask is not None:
        mask = np.asarray(mask, bool)
        if mask.shape != (q.shape[0], k.shape[0]):
            raise ShapeMismatch("mask shape mismatch")
    scores = q @ k.T / math.sqrt(q.shape[1])
    attn, _ = _masked_softmax(scores, mask)
    return attn @ v


def _split_heads(x, heads):
    b, l, hd = x.shape
    return x.reshape(b, l, heads, hd // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, l, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dk)


def _mha_forward(params, prefix, x_q, x_kv, mask, config):
    t = params.tensors
    q = _linear(x_q, t[f"{prefix}.wq"], t[f"{prefix}.bq"])
    k = _linear(x_kv, t[f"{prefix}.wk"], t[f"{prefix}.bk"])
    v = _linear(x_kv, t[f"{prefix}.wv"], t[f"{prefix}.bv"])
    qh = _split_heads(q, config.heads)
    kh = _split_heads(k, config.heads)
    vh = _split_heads(v, config.heads)
    scores = qh @ kh.transpose(0, 1, 3, 2) / math.sqrt(config.d_k)
    attn, degenerate = _masked_softmax(scores, mask)
    ctx = attn @ vh
    merged = _merge_heads(ctx)
    out = _linear(merged, t[f"{prefix}.wo"], t[f"{prefix}.bo"])
    cache = (x_q, x_kv, qh, kh, vh, attn, degenerate, merged)
    return out, cache


def _mha_backward(dout, params, prefix, cache, config, grads):
    t = params.tensors
    x_q, x_kv, qh, kh, vh, attn, degenerate, merged = cache
    dmerged, dwo, dbo = _linear_back(dout, merged, t[f"{prefix}.wo"])
    grads[f"{prefix}.wo"] += dwo
    grads[f"{prefix}.bo"] += dbo
    dctx = _split_heads(dmerged, config.heads)
    dattn = dctx @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = _softmax_back(dattn, attn, degenerate) / math.sqrt(config.d_k)
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh
    dq = _merge_heads(dqh)
    dk = _merge_heads(dkh)
    dv = _merge_heads(dvh)
    dx_q, dwq, dbq = _linear_back(dq, x_q, t[f"{prefix}.wq"])
    dx_k, dwk, dbk = _linear_back(dk, x_kv, t[f"{prefix}.wk"])
    dx_v, dwv, dbv = _linear_back(dv, x_kv, t[f"{prefix}.wv"])
    grads[f"{prefix}.wq"] += dwq
    grads[f"{prefix}.bq"] += dbq
    grads[f"{prefix}.wk"] += dwk
    grads[f"{prefix}.bk"] += dbk
    grads[f"{prefix}.wv"] += dwv
    grads[f"{prefix}.bv"] += dbv
    return dx_q, dx_k + dx_v


def _ff_forward(params, prefix, x):
    t = params.tensors
    h = _linear(x, t[f"{prefix}.w1"], t[f"{prefix}.b1"])
    a = np.maximum(h, 0.0)
    out = _linear(a, t[f"{prefix}.w2"], t[f"{prefix}.b2"])
    return out, (x, h, a)


def _ff_backward(dout, params, prefix, cache, grads):
    t = params.tensors
    x, h, a = cache
    da, dw2, db2 = _linear_back(dout, a, t[f"{prefix}.w2"])
    grads[f"{prefix}.w2"] += dw2
    grads[f"{prefix}.b2"] += db2
    dh = da * (h > 0.0)
    dx, dw1, db1 = _linear_back(dh, x, t[f"{prefix}.w1"])
    grads[f"{prefix}.w1"] += dw1
    grads[f"{prefix}.b1"] += db1
    return dx


def _dropout(x, rate, rng):
    if rng is None or rate <= 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    return x * keep * scale, keep * scale


def _dropout_back(dout, mask):
    return dout if mask is None else dout * mask


def _sublayer(params, name, x, sub_out, sub_cache, rng, config):
    """Residual + layernorm wrapper: layernorm(x + dropout(sub(x)))."""
    dropped, dmask = _dropout(sub_out, config.dropout, rng)
    out, ln_cache = _layernorm(x + dropped,
                               params.tensors[f"{name}.g"],
                               params.tensors[f"{name}.b"])
    return out, (ln_cache, dmask, sub_cache)


def _sublayer_back(dout, params, name, cache, grads):
    ln_cache, dmask, sub_cache = cache
    dsum, dg, db = _layernorm_back(dout, ln_cache)
    grads[f"{name}.g"] += dg
    grads[f"{name}.b"] += db
    dsub = _dropout_back(dsum, dmask)
    return dsum, dsub, sub_cache


# --- full model --------------------------------------------------------------


def _check_ids(ids, vocab, max_len, what):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 2:
        raise ShapeMismatch(f"{what} ids must be 2-D (batch, length)")
    if ids.shape[1] > max_len:
        raise LengthExceeded(
            f"{what} length {ids.shape[1]} exceeds max_len {max_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise ShapeMismatch(f"{what} ids out of vocabulary range")
    return ids


def _embed(table, ids, d_model, pe):
    return table[ids] * math.sqrt(d_model) + pe[:ids.shape[1]].astype(table.dtype)


def encode(params, src_ids, src_pad_mask=None, rng=None):
    """Encoder stack; returns (memory, cache)."""
    cfg = params.config
    src_ids = _check_ids(src_ids, cfg.src_vocab, cfg.max_len, "source")
    pe = positional_encoding(src_ids.shape[1], cfg.d_model)
    x = _embed(params.tensors["src_embed"], src_ids, cfg.d_model, pe)
    attn_mask = None
    if src_pad_mask is not None:
        attn_mask = src_pad_mask[:, None, None, :]
    caches = []
    for i in range(cfg.layers):
        sub, attn_cache = _mha_forward(params, f"enc{i}.attn", x, x,
                                       attn_mask, cfg)
        x1, c1 = _sublayer(params, f"enc{i}.ln1", x, sub, attn_cache, rng, cfg)
        sub, ff_cache = _ff_forward(params, f"enc{i}.ff", x1)
        x2, c2 = _sublayer(params, f"enc{i}.ln2", x1, sub, ff_cache, rng, cfg)
        caches.append((c1, c2))
        x = x2
    return x, (src_ids, attn_mask, caches)


def decode(params, dst_ids, memory, src_pad_mask=None, rng=None):
    """Decoder stack over a (batched) target prefix; returns (logits, cache)."""
    cfg = params.config
    dst_ids = _check_ids(dst_ids, cfg.dst_vocab, cfg.max_len, "target")
    b, lt = dst_ids.shape
    pe = positional_encoding(lt, cfg.d_model)
    x = _embed(params.tensors["dst_embed"], dst_ids, cfg.d_model, pe)
    causal = np.triu(np.ones((lt, lt), dtype=bool), k=1)[None, None]
    cross_mask = None
    if src_pad_mask is not None:
        cross_mask = src_pad_mask[:, None, None, :]
    caches = []
    for i in range(cfg.layers):
        sub, self_cache = _mha_forward(params, f"dec{i}.self", x, x,
                                       causal, cfg)
        x1, c1 = _sublayer(params, f"dec{i}.ln1", x, sub, self_cache, rng, cfg)
        sub, cross_cache = _mha_forward(params, f"dec{i}.cross", x1, memory,
                                        cross_mask, cfg)
        x2, c2 = _sublayer(params, f"dec{i}.ln2", x1, sub, cross_cache, rng, cfg)
        sub, ff_cache = _ff_forward(params, f"dec{i}.ff", x2)
        x3, c3 = _sublayer(params, f"dec{i}.ln3", x2, sub, ff_cache, rng, cfg)
        caches.append((c1, c2, c3))
        x = x3
    logits = _linear(x, params.tensors["out.w"], params.tensors["out.b"])
    return logits, (dst_ids, caches, x)


def _log_softmax(logits):
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(params, src_ids, dst_prefix):
    """Next-token log-probabilities for one sequence pair.

    Feeds ``<bos> + dst_prefix``; row ``i`` of the result conditions on
    the source and the first ``i`` prefix tokens.  Rows exponentiate to
    distributions summing to 1.
    """
    from .abstraction import BOS_ID

    src = np.asarray([src_ids], dtype=np.int64)
    dst_in = np.asarray([[BOS_ID, *dst_prefix]], dtype=np.int64)
    memory, _ = encode(params, src)
    logits, _ = decode(params, dst_in, memory)
    return _log_softmax(logits[0])


def batched_logits(params, src_ids, dst_in, src_pad_mask=None, rng=None):
    """Logits over batched inputs, with encoder/decoder caches for backward."""
    memory, enc_cache = encode(params, src_ids, src_pad_mask, rng)
    logits, dec_cache = decode(params, dst_in, memory, src_pad_mask, rng)
    return logits, (memory, enc_cache, dec_cache, src_pad_mask)


def zero_grads(params):
    return {name: np.zeros_like(t) for name, t in params.tensors.items()}


def loss_and_grads(params, src_ids, dst_in, dst_target, target_weight,
                   src_pad_mask=None, rng=None):
    """Mean token cross-entropy and gradients for every parameter.

    ``target_weight`` zeroes padded target positions; the loss averages
    over the remaining tokens.
    """
    cfg = params.config
    logits, (memory, enc_cache, dec_cache, _) = batched_logits(
        params, src_ids, dst_in, src_pad_mask, rng)
    logp = _log_softmax(logits)
    b, lt, v = logits.shape
    onehot_idx = (np.arange(b)[:, None], np.arange(lt)[None, :], dst_target)
    total = target_weight.sum()
    if total <= 0:
        raise ValueError("no unweighted target tokens")
    loss = -(logp[onehot_idx] * target_weight).sum() / total

    grads = zero_grads(params)
    probs = np.exp(logp)
    dlogits = probs * target_weight[..., None]
    dlogits[onehot_idx] -= target_weight  # index triples unique per position
    dlogits /= total

    dst_ids, dec_caches, dec_top = dec_cache
    dx, dwout, dbout = _linear_back(dlogits, dec_top, params.tensors["out.w"])
    grads["out.w"] += dwout
    grads["out.b"] += dbout

    dmemory = np.zeros_like(memory)
    for i in range(cfg.layers - 1, -1, -1):
        c1, c2, c3 = dec_caches[i]
        dsum, dsub, ff_cache = _sublayer_back(dx, params, f"dec{i}.ln3", c3, grads)
        dx = dsum + _ff_backward(dsub, params, f"dec{i}.ff", ff_cache, grads)
        dsum, dsub, cross_cache = _sublayer_back(dx, params, f"dec{i}.ln2",
                                                 c2, grads)
        dq, dkv = _mha_backward(dsub, params, f"dec{i}.cross", cross_cache,
                                cfg, grads)
        dmemory += dkv
        dx = dsum + dq
        dsum, dsub, self_cache = _sublayer_back(dx, params, f"dec{i}.ln1",
                                                c1, grads)
        dq, dkv = _mha_backward(dsub, params, f"dec{i}.self", self_cache,
                                cfg, grads)
        dx = dsum + dq + dkv
    np.add.at(grads["dst_embed"], dst_ids, dx * math.sqrt(cfg.d_model))

    src_ids_arr, _, enc_caches = enc_cache
    dx = dmemory
    for i in range(cfg.layers - 1, -1, -1):
        c1, c2 = enc_caches[i]
        dsum, dsub, ff_cache = _sublayer_back(dx, params, f"enc{i}.ln2", c2, grads)
        dx = dsum + _ff_backward(dsub, params, f"enc{i}.ff", ff_cache, grads)
        dsum, dsub, attn_cache = _sublayer_back(dx, params, f"enc{i}.ln1",
                                                c1, grads)
        dq, dkv = _mha_backward(dsub, params, f"enc{i}.attn", attn_cache,
                                cfg, grads)
        dx = dsum + dq + dkv
    np.add.at(grads["src_embed"], src_ids_arr, dx * math.sqrt(cfg.d_model))

    return loss, grads


def pair_batch(src_seqs, dst_seqs, pad_id, bos_id, eos_id):
    """Pad id sequences into (src, dst_in, dst_target, weight, src_pad)."""
    b = len(src_seqs)
    ls = max(len(s) for s in src_seqs)
    lt = max(len(d) for d in dst_seqs) + 1
    src = np.full((b, ls), pad_id, dtype=np.int64)
    dst_in = np.full((b, lt), pad_id, dtype=np.int64)
    dst_target = np.full((b, lt), pad_id, dtype=np.int64)
    weight = np.zeros((b, lt))
    for i, (s, d) in enumerate(zip(src_seqs, dst_seqs)):
        src[i, :len(s)] = s
        dst_in[i, 0] = bos_id
        dst_in[i, 1:len(d) + 1] = d
        dst_target[i, :len(d)] = d
        dst_target[i, len(d)] = eos_id
        weight[i, :len(d) + 1] = 1.0
    src_pad = src == pad_id
    return src, dst_in, dst_target, weight, src_pad


def grad_check(config, sample_pair, n_samples=200, step=1e-5, seed=0,
               grad_fn=None):
    """Max relative error between analytic and finite-difference gradients.

    Runs in evaluation mode (no dropout) on one (src_ids, dst_ids) pair,
    probing ``n_samples`` randomly chosen parameter entries.
    """
    from .abstraction import BOS_ID, EOS_ID, PAD_ID

    src_seq, dst_seq = sample_pair
    params = init_params(config, seed=seed)
    batch = pair_batch([list(src_seq)], [list(dst_seq)], PAD_ID, BOS_ID, EOS_ID)
    src, dst_in, dst_target, weight, src_pad = batch

    def loss_only():
        logits, _ = batched_logits(params, src, dst_in, src_pad)
        logp = _log_softmax(logits)
        idx = (np.arange(1)[:, None], np.arange(dst_in.shape[1])[None, :],
               dst_target)
        return -(logp[idx] * weight).sum() / weight.sum()

    fn = grad_fn or loss_and_grads
    _, grads = fn(params, src, dst_in, dst_target, weight, src_pad)

    rng = np.random.default_rng(seed)
    names = param_names(config)
    worst = 0.0
    for _ in range(n_samples):
        name = names[rng.integers(len(names))]
        tensor = params.tensors[name]
        flat_index = int(rng.integers(tensor.size))
        idx = np.unravel_index(flat_index, tensor.shape)
        original = tensor[idx]
        tensor[idx] = original + step
        up = loss_only()
        tensor[idx] = original - step
        down = loss_only()
        tensor[idx] = original
        numeric = (up - down) / (2 * step)
        analytic = grads[name][idx]
        denom = max(abs(numeric), abs(analytic), 1e-6)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst


# --- checkpoint serialization ------------------------------------------------

CHECKPOINT_MAGIC = b"SQTR"
CHECKPOINT_VERSION = 1


def save_params(params, fileobj):
    """Binary checkpoint: magic, version, config JSON, named f32 tensors."""
    def write_u32(value):
        fileobj.write(int(value).to_bytes(4, "little"))

    fileobj.write(CHECKPOINT_MAGIC)
    write_u32(CHECKPOINT_VERSION)
    config_blob = json.dumps(params.config.to_dict(), sort_keys=True).encode()
    write_u32(len(config_blob))
    fileobj.write(config_blob)
    names = param_names(params.config)
    write_u32(len(names))
    for name in names:
        tensor = np.ascontiguousarray(params.tensors[name], dtype="<f4")
        blob = name.encode()
        write_u32(len(blob))
        fileobj.write(blob)
        write_u32(tensor.ndim)
        for dim in tensor.shape:
            write_u32(dim)
        fileobj.write(tensor.tobytes())


def load_params(fileobj):
    def read_u32():
        return int.from_bytes(fileobj.read(4), "little")

    magic = fileobj.read(4)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    version = read_u32()
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    config = ModelConfig.from_dict(json.loads(fileobj.read(read_u32())))
    tensors = {}
    for _ in range(read_u32()):
        name = fileobj.read(read_u32()).decode()
        ndim = read_u32()
        shape = tuple(read_u32() for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(fileobj.read(4 * count), dtype="<f4")
        tensors[name] = data.reshape(shape).astype(float)
    return TransformerParams(config, tensors)


def params_to_bytes(params):
    buf = io.BytesIO()
    save_params(params, buf)
    return buf.getvalue()


def params_from_bytes(blob):
    return load_params(io.BytesIO(blob))
