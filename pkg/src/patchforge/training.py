"""Training, fine-tuning, and checkpoint selection.

The optimizer is plain mini-batch gradient descent with a fixed learning
rate (pre-train default 0.1, fine-tune default 0.01).  A checkpoint is
snapshotted every ``checkpoint_every`` steps and scored by exact-match
accuracy of greedy decoding on the validation pairs; the best checkpoint
wins (earliest step on ties).

Fine-tuning starts from a base checkpoint, freezes everything outside a
trainable-prefix mask (default: the last decoder block plus the output
projection), runs a tenth of the pre-training steps unless overridden,
and can mix an equal-sized sample of general-domain pairs into the
specific-domain training set to blunt catastrophic forgetting.
"""

from dataclasses import dataclass, field

import numpy as np

from .beam import greedy_decode
from .errors import ConfigMismatch, DivergenceDetected
from .model import loss_and_grads, pair_batch, param_names
from .abstraction import BOS_ID, EOS_ID, PAD_ID

PRETRAIN_LR = 0.1
FINETUNE_LR = 0.01
FINETUNE_STEP_DIVISOR = 10


@dataclass
class TrainPlan:
    """Hyperparameters of one training run.

    ``freeze`` lists the trainable parameter-name prefixes; ``None``
    trains everything during pre-training and the default last-layer
    mask during fine-tuning.  ``steps=None`` in a fine-tune plan derives
    the budget from the base checkpoint's step count.
    """

    steps: int = None
    batch_size: int = 32
    learning_rate: float = PRETRAIN_LR
    checkpoint_every: int = 5000
    freeze: tuple = None
    mix_general: bool = True


@dataclass
class Checkpoint:
    step: int
    params: object
    val_accuracy: float
    train_loss: float


def default_finetune_mask(config):
    """Trainable prefixes for "tune only the last layer"."""
    return (f"dec{config.layers - 1}.", "out.")


def mixed_corpus(specific, general, seed):
    """Specific pairs plus an equal-sized uniform sample of general pairs.

    Doubles the training set; samples without replacement when the
    general corpus is large enough, with replacement otherwise.
    """
    out = list(specific)
    if general:
        rng = np.random.default_rng(seed + 7_777)
        want = len(specific)
        replace = len(general) < want
        picks = rng.choice(len(general), size=want, replace=replace)
        out.extend(general[int(i)] for i in picks)
    return out


def _trainable(name, mask):
    return mask is None or any(name.startswith(p) for p in mask)


def evaluate_exact(params, pairs, max_len=None):
    """Greedy-decode exact-match accuracy over (src, dst) id pairs."""
    if not pairs:
        return 0.0
    limit = max(len(d) for _, d in pairs) + 2
    if max_len is not None:
        limit = min(limit, max_len)
    limit = min(limit, params.config.max_len)
    outputs = greedy_decode(params, [list(s) for s, _ in pairs], limit)
    hits = sum(1 for out, (_, ref) in zip(outputs, pairs)
               if out == list(ref))
    return hits / len(pairs)


def _run_sgd(params, corpus, plan, val_corpus, seed, mask):
    if not corpus:
        raise ValueError("training corpus is empty")
    if plan.steps is None:
        raise ValueError("plan.steps is not set")
    rng = np.random.default_rng(seed)
    order = []
    checkpoints = []
    recent_losses = []
    val_pairs = val_corpus if val_corpus is not None else corpus
    trainable = [n for n in param_names(params.config) if _trainable(n, mask)]

    for step in range(1, plan.steps + 1):
        if len(order) < plan.batch_size:
            refill = list(rng.permutation(len(corpus)))
            order.extend(refill)
        take, order = order[:plan.batch_size], order[plan.batch_size:]
        batch_pairs = [corpus[i] for i in take]
        src, dst_in, dst_target, weight, pad = pair_batch(
            [list(s) for s, _ in batch_pairs],
            [list(d) for _, d in batch_pairs],
            PAD_ID, BOS_ID, EOS_ID)
        drop_rng = (np.random.default_rng(seed * 1_000_003 + step)
                    if params.config.dropout > 0 else None)
        loss, grads = loss_and_grads(params, src, dst_in, dst_target, weight,
                                     pad, rng=drop_rng)
        if not np.isfinite(loss):
            raise DivergenceDetected(f"loss became {loss} at step {step}")
        for name in trainable:
            params.tensors[name] -= plan.learning_rate * grads[name]
        recent_losses.append(loss)
        if step % plan.checkpoint_every == 0 or step == plan.steps:
            acc = evaluate_exact(params, val_pairs)
            checkpoints.append(Checkpoint(
                step=step,
                params=params.copy(),
                val_accuracy=acc,
                train_loss=float(np.mean(recent_losses)),
            ))
            recent_losses = []
    return checkpoints


def train_model(params, corpus, plan, val_corpus=None, seed=0):
    """Pre-train from the given (fresh) parameters; returns checkpoints.

    ``corpus`` and ``val_corpus`` are lists of (src_ids, dst_ids).  A
    checkpoint is emitted every ``plan.checkpoint_every`` steps and at
    the final step.
    """
    return _run_sgd(params, corpus, plan, val_corpus, seed, plan.freeze)


def finetune_model(base, specific_corpus, general_corpus, plan,
                   val_corpus=None, seed=0, config=None):
    """Continue training from a base checkpoint on the specific corpus.

    Everything outside the trainable mask stays bit-identical.  With
    ``plan.mix_general`` the training set becomes the specific corpus
    plus an equal-sized random sample of the general corpus (the
    validation set stays specific-only).
    """
    base_params = base.params if isinstance(base, Checkpoint) else base
    if config is not None and config != base_params.config:
        raise ConfigMismatch("base checkpoint does not match requested config")
    params = base_params.copy()

    plan_steps = plan.steps
    if plan_steps is None:
        if not isinstance(base, Checkpoint):
            raise ValueError("steps not set and base carries no step count")
        plan_steps = max(1, base.step // FINETUNE_STEP_DIVISOR)
    mask = plan.freeze if plan.freeze is not None \
        else default_finetune_mask(params.config)

    if plan.mix_general:
        corpus = mixed_corpus(specific_corpus, general_corpus, seed)
    else:
        corpus = list(specific_corpus)

    run_plan = TrainPlan(steps=plan_steps, batch_size=plan.batch_size,
                         learning_rate=plan.learning_rate,
                         checkpoint_every=plan.checkpoint_every,
                         freeze=mask, mix_general=plan.mix_general)
    return _run_sgd(params, corpus, run_plan,
                    val_corpus if val_corpus is not None else specific_corpus,
                    seed, mask)


def best_checkpoint(checkpoints):
    """Highest validation accuracy; earliest step wins ties."""
    if not checkpoints:
        raise ValueError("no checkpoints")
    return max(checkpoints, key=lambda c: (c.val_accuracy, -c.step))


def token_accuracy(params, corpus):
    """Teacher-forced next-token accuracy over a corpus (overfit gauge)."""
    from .model import batched_logits

    src, dst_in, dst_target, weight, pad = pair_batch(
        [list(s) for s, _ in corpus], [list(d) for _, d in corpus],
        PAD_ID, BOS_ID, EOS_ID)
    logits, _ = batched_logits(params, src, dst_in, pad)
    pred = logits.argmax(axis=-1)
    hits = ((pred == dst_target) * weight).sum()
    return float(hits / weight.sum())
