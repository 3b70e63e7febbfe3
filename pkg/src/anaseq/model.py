"""Recurrent token scorer and its training loop.

One bidirectional LSTM layer reads the token sequence; a shared linear
head with a sigmoid squashes each position to an independent antecedent
score.  Scores are independent per token (not a distribution over the
sequence) because an antecedent may span several tokens which should all
score high.  The loss sums binary cross-entropy over each sequence and
averages the sums over the batch.

Everything is plain numpy in float64: the hot dimensions here (dozens of
tokens, a few hundred hidden units) are small enough that framework
overhead would dominate, and an explicit backward pass is what makes the
gradient check in the test suite meaningful.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoding import EncodedExample, VariantFlags

# Scores of non-candidate tokens are replaced by this floor, not zero, so
# downstream ranking never sees a hard 0 that would tie every filtered
# token with a genuinely zero-scored candidate.
MASK_EPSILON = 1e-16

# Probability clamp inside the cross-entropy; keeps log() finite.
BCE_CLAMP = 1e-7


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(
            f"non-finite loss or gradient at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Parameters

@dataclass
class LstmWeights:
    wx: np.ndarray    # (4H, D) gates packed input, forget, cell, output
    wh: np.ndarray    # (4H, H)
    b: np.ndarray     # (4H,)


@dataclass
class ModelParameters:
    fwd: LstmWeights
    bwd: LstmWeights
    w_out: np.ndarray    # (2H,)
    b_out: np.ndarray    # (1,)

    @property
    def hidden(self) -> int:
        return self.fwd.wh.shape[1]

    @property
    def input_dim(self) -> int:
        return self.fwd.wx.shape[1]

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {
            "fwd.wx": self.fwd.wx, "fwd.wh": self.fwd.wh, "fwd.b": self.fwd.b,
            "bwd.wx": self.bwd.wx, "bwd.wh": self.bwd.wh, "bwd.b": self.bwd.b,
            "w_out": self.w_out, "b_out": self.b_out,
        }

    def clone(self) -> "ModelParameters":
        return copy.deepcopy(self)

    @classmethod
    def init(cls, input_dim: int, hidden: int, seed: int,
             ) -> "ModelParameters":
        """Uniform +-1/sqrt(hidden) weights; forget-gate bias starts at 1
        so memory survives the first updates."""
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(hidden)

        def direction():
            b = np.zeros(4 * hidden)
            b[hidden:2 * hidden] = 1.0
            return LstmWeights(
                wx=rng.uniform(-scale, scale, (4 * hidden, input_dim)),
                wh=rng.uniform(-scale, scale, (4 * hidden, hidden)),
                b=b,
            )

        return cls(
            fwd=direction(),
            bwd=direction(),
            w_out=rng.uniform(-scale, scale, 2 * hidden),
            b_out=np.zeros(1),
        )


# ---------------------------------------------------------------------------
# Forward / backward passes

def _direction_forward(weights: LstmWeights, x: np.ndarray, mask: np.ndarray):
    """One LSTM direction over a padded batch.

    x: (B, T, D); mask: (B, T) with 1.0 on real tokens.  Masked steps
    zero the carried state, which is exact for contiguous padding (right
    padding here, or a reversed copy of it).
    """
    batch, steps, _ = x.shape
    hidden = weights.wh.shape[1]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    outputs = np.empty((batch, steps, hidden))
    cache = []
    for t in range(steps):
        xt = x[:, t]
        m = mask[:, t][:, None]
        a = xt @ weights.wx.T + h @ weights.wh.T + weights.b
        gi = sigmoid(a[:, :hidden])
        gf = sigmoid(a[:, hidden:2 * hidden])
        gg = np.tanh(a[:, 2 * hidden:3 * hidden])
        go = sigmoid(a[:, 3 * hidden:])
        c_raw = gf * c + gi * gg
        tc = np.tanh(c_raw)
        h_raw = go * tc
        cache.append((xt, h, c, gi, gf, gg, go, tc, m))
        c = m * c_raw
        h = m * h_raw
        outputs[:, t] = h
    return outputs, cache


def _direction_backward(weights: LstmWeights, cache, d_out: np.ndarray):
    """Backpropagate through one direction; returns gradients and dL/dx."""
    batch, steps, hidden = d_out.shape
    g_wx = np.zeros_like(weights.wx)
    g_wh = np.zeros_like(weights.wh)
    g_b = np.zeros_like(weights.b)
    dx = np.empty((batch, steps, weights.wx.shape[1]))
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in range(steps - 1, -1, -1):
        xt, h_prev, c_prev, gi, gf, gg, go, tc, m = cache[t]
        dh_raw = m * (d_out[:, t] + dh_next)
        dc_raw = m * dc_next + dh_raw * go * (1.0 - tc * tc)
        da = np.concatenate([
            dc_raw * gg * gi * (1.0 - gi),
            dc_raw * c_prev * gf * (1.0 - gf),
            dc_raw * gi * (1.0 - gg * gg),
            dh_raw * tc * go * (1.0 - go),
        ], axis=1)
        g_wx += da.T @ xt
        g_wh += da.T @ h_prev
        g_b += da.sum(axis=0)
        dh_next = da @ weights.wh
        dc_next = dc_raw * gf
        dx[:, t] = da @ weights.wx
    return LstmWeights(wx=g_wx, wh=g_wh, b=g_b), dx


def bilstm_forward(params: ModelParameters, x: np.ndarray, mask: np.ndarray):
    """Concatenated forward/backward hidden states, (B, T, 2H), + caches."""
    h_fwd, cache_fwd = _direction_forward(params.fwd, x, mask)
    h_bwd_rev, cache_bwd = _direction_forward(
        params.bwd, x[:, ::-1], mask[:, ::-1])
    h_bwd = h_bwd_rev[:, ::-1]
    states = np.concatenate([h_fwd, h_bwd], axis=2)
    return states, (cache_fwd, cache_bwd)


def score(params: ModelParameters, x: np.ndarray, mask: np.ndarray,
          ) -> np.ndarray:
    """Per-token antecedent scores, (B, T), in (0, 1)."""
    states, _ = bilstm_forward(params, x, mask)
    return sigmoid(states @ params.w_out + params.b_out[0])


def apply_candidate_mask(scores: np.ndarray,
                         candidate_mask: np.ndarray) -> np.ndarray:
    """Zero out non-candidates, then lift everything off exact zero."""
    return scores * candidate_mask + MASK_EPSILON


def sequence_bce(probs: np.ndarray, targets: np.ndarray,
                 valid: np.ndarray) -> float:
    """Sum BCE over each sequence, average the sums over the batch."""
    p = np.clip(probs, BCE_CLAMP, 1.0 - BCE_CLAMP)
    token_loss = -(targets * np.log(p) + (1.0 - targets) * np.log1p(-p))
    return float((token_loss * valid).sum(axis=1).mean())


def batch_forward(params: ModelParameters, x: np.ndarray, mask: np.ndarray,
                  candidate_mask: np.ndarray | None):
    """Scores plus everything the backward pass needs."""
    states, caches = bilstm_forward(params, x, mask)
    logits = states @ params.w_out + params.b_out[0]
    s = sigmoid(logits)
    effective = s if candidate_mask is None \
        else apply_candidate_mask(s, candidate_mask)
    return s, effective, states, caches


def batch_loss_and_grads(params: ModelParameters,
                         x: np.ndarray,
                         targets: np.ndarray,
                         valid: np.ndarray,
                         candidate_mask: np.ndarray | None,
                         ) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and analytic gradients for one padded batch.

    candidate_mask=None trains without the masking stage; passing the
    mask reproduces the masked variants exactly, including the clamp
    flattening the gradient on masked-out tokens.
    """
    batch = x.shape[0]
    s, effective, states, (cache_fwd, cache_bwd) = batch_forward(
        params, x, mask=valid, candidate_mask=candidate_mask)

    p = np.clip(effective, BCE_CLAMP, 1.0 - BCE_CLAMP)
    token_loss = -(targets * np.log(p) + (1.0 - targets) * np.log1p(-p))
    loss = float((token_loss * valid).sum(axis=1).mean())

    d_p = (valid / batch) * (-targets / p + (1.0 - targets) / (1.0 - p))
    inside = (effective > BCE_CLAMP) & (effective < 1.0 - BCE_CLAMP)
    d_eff = d_p * inside
    d_s = d_eff if candidate_mask is None else d_eff * candidate_mask
    d_logits = d_s * s * (1.0 - s)

    hidden = params.hidden
    g_w_out = np.einsum("bt,bth->h", d_logits, states)
    g_b_out = np.array([d_logits.sum()])
    d_states = d_logits[:, :, None] * params.w_out
    g_fwd, _ = _direction_backward(params.fwd, cache_fwd,
                                   d_states[:, :, :hidden])
    g_bwd, _ = _direction_backward(params.bwd, cache_bwd,
                                   d_states[:, ::-1, hidden:])
    return loss, {
        "fwd.wx": g_fwd.wx, "fwd.wh": g_fwd.wh, "fwd.b": g_fwd.b,
        "bwd.wx": g_bwd.wx, "bwd.wh": g_bwd.wh, "bwd.b": g_bwd.b,
        "w_out": g_w_out, "b_out": g_b_out,
    }


# ---------------------------------------------------------------------------
# Gradient checking support

def numerical_gradients(params: ModelParameters, loss_fn,
                        step: float = 1e-5) -> dict[str, np.ndarray]:
    """Central-difference gradients of loss_fn(params) per parameter."""
    grads = {}
    arrays = params.named_arrays()
    for name, array in arrays.items():
        grad = np.zeros_like(array)
        flat = array.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            hi = loss_fn(params)
            flat[i] = saved - step
            lo = loss_fn(params)
            flat[i] = saved
            gflat[i] = (hi - lo) / (2.0 * step)
        grads[name] = grad
    return grads


def max_relative_error(analytic: dict[str, np.ndarray],
                       numeric: dict[str, np.ndarray],
                       floor: float = 1e-5) -> float:
    """Worst elementwise |a-n| / max(|a|+|n|, floor).

    The floor keeps gradients below it from being judged on a relative
    scale: central differences on a loss of order 1 carry ~1e-10 of
    absolute noise, so entries that small cannot be verified relatively
    — but a genuinely wrong entry (sign flip, dropped term) still trips
    the floored ratio.
    """
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        err = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)
        worst = max(worst, float(err.max()))
    return worst


# ---------------------------------------------------------------------------
# Optimizer

class Adam:
    def __init__(self, params: ModelParameters, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v)
                  for k, v in params.named_arrays().items()}
        self.v = {k: np.zeros_like(v)
                  for k, v in params.named_arrays().items()}

    def step(self, params: ModelParameters,
             grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        arrays = params.named_arrays()
        for key, grad in grads.items():
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * grad
            self.v[key] = self.beta2 * self.v[key] \
                + (1 - self.beta2) * grad * grad
            m_hat = self.m[key] / (1 - self.beta1 ** self.t)
            v_hat = self.v[key] / (1 - self.beta2 ** self.t)
            arrays[key] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# Training

@dataclass
class TrainingConfig:
    learning_rate: float = 0.005
    batch_size: int = 16
    max_epochs: int = 20
    patience: int = 5
    hidden: int = 256
    seed: int = 0
    dev_fraction: float = 0.1
    variant: VariantFlags = field(default_factory=VariantFlags)

    def to_json(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "hidden": self.hidden,
            "seed": self.seed,
            "dev_fraction": self.dev_fraction,
            "variant": self.variant.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainingConfig":
        obj = dict(obj)
        obj["variant"] = VariantFlags.from_json(obj["variant"])
        return cls(**obj)


def pack_batch(examples: list[EncodedExample]) -> tuple[
        np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Right-pad a batch to its longest sequence.

    Returns inputs (B, T, D), targets (B, T), valid (B, T), candidate
    mask (B, T).  Padding positions have valid 0 and contribute nothing
    to loss or state.
    """
    longest = max(e.n_tokens for e in examples)
    dim = examples[0].inputs.shape[1]
    x = np.zeros((len(examples), longest, dim))
    y = np.zeros((len(examples), longest))
    valid = np.zeros((len(examples), longest))
    cmask = np.zeros((len(examples), longest))
    for row, example in enumerate(examples):
        n = example.n_tokens
        x[row, :n] = example.inputs
        y[row, :n] = example.targets
        valid[row, :n] = 1.0
        cmask[row, :n] = example.candidate_mask
    return x, y, valid, cmask


def dataset_loss(params: ModelParameters, examples: list[EncodedExample],
                 batch_size: int, use_mask: bool) -> float:
    """Mean per-sequence summed BCE over a whole example list."""
    total = 0.0
    for lo in range(0, len(examples), batch_size):
        chunk = examples[lo:lo + batch_size]
        x, y, valid, cmask = pack_batch(chunk)
        s = score(params, x, valid)
        effective = apply_candidate_mask(s, cmask) if use_mask else s
        total += sequence_bce(effective, y, valid) * len(chunk)
    return total / len(examples)


def train(examples: list[EncodedExample],
          config: TrainingConfig,
          dev_examples: list[EncodedExample] | None = None,
          ) -> tuple[ModelParameters, list[dict]]:
    """Fit the scorer with early stopping on dev loss.

    When no dev set is supplied one is carved off the tail of a seeded
    shuffle of the training examples (dev_fraction of them); with
    dev_fraction 0 the training set doubles as dev, which turns early
    stopping into plain loss monitoring — useful for overfitting runs.

    Returns the parameters from the best dev epoch and a per-epoch log:
    {"epoch", "train_loss", "dev_loss", "dev_mrr"}.
    """
    if not examples:
        raise ValueError("no training examples")
    from .evaluation import dataset_mrr  # deferred: evaluation imports us

    rng = np.random.default_rng(config.seed)
    train_set = list(examples)
    if dev_examples is None:
        n_dev = int(round(config.dev_fraction * len(train_set)))
        if n_dev > 0:
            order = rng.permutation(len(train_set))
            dev_examples = [train_set[i] for i in order[:n_dev]]
            train_set = [train_set[i] for i in order[n_dev:]]
        else:
            dev_examples = train_set

    use_mask = config.variant.candidate_mask
    params = ModelParameters.init(
        input_dim=train_set[0].inputs.shape[1],
        hidden=config.hidden,
        seed=config.seed,
    )
    optimizer = Adam(params, config.learning_rate)
    best = params.clone()
    best_dev = np.inf
    bad_epochs = 0
    log: list[dict] = []

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        for batch_index, lo in enumerate(
                range(0, len(train_set), config.batch_size)):
            chunk = [train_set[i] for i in order[lo:lo + config.batch_size]]
            x, y, valid, cmask = pack_batch(chunk)
            loss, grads = batch_loss_and_grads(
                params, x, y, valid, cmask if use_mask else None)
            if not np.isfinite(loss) or any(
                    not np.isfinite(g).all() for g in grads.values()):
                raise TrainingDivergedError(epoch, batch_index)
            optimizer.step(params, grads)
            epoch_loss += loss * len(chunk)
        epoch_loss /= len(train_set)

        dev_loss = dataset_loss(params, dev_examples,
                                config.batch_size, use_mask)
        dev_mrr = dataset_mrr(params, dev_examples, config.variant)
        log.append({"epoch": epoch, "train_loss": epoch_loss,
                    "dev_loss": dev_loss, "dev_mrr": dev_mrr})

        if dev_loss < best_dev:
            best_dev = dev_loss
            best = params.clone()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break
    return best, log


def predict(params: ModelParameters, example: EncodedExample,
            variant: VariantFlags) -> np.ndarray:
    """Token scores for one example under the given variant.

    Appended anaphor copies always score the mask floor: they exist to
    inform the recurrence, never to be ranked.
    """
    x = example.inputs[None, :, :]
    valid = np.ones((1, example.n_tokens))
    s = score(params, x, valid)[0]
    if variant.candidate_mask:
        s = apply_candidate_mask(s, example.candidate_mask)
    if example.appended_span is not None:
        s[example.appended_span[0]:example.appended_span[1]] = MASK_EPSILON
    return s


def write_training_log(log: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for entry in log:
            handle.write(json.dumps(entry) + "\n")


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(params: ModelParameters, path: str | Path,
                    config: TrainingConfig | None = None,
                    provider: dict | None = None) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "hidden": params.hidden,
        "input_dim": params.input_dim,
        "config": config.to_json() if config is not None else None,
        "provider": provider,
    }
    np.savez(
        path,
        meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        **params.named_arrays(),
    )


def load_checkpoint(path: str | Path) -> tuple[ModelParameters, dict]:
    with np.load(path) as payload:
        meta = json.loads(payload["meta"].tobytes().decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {meta.get('version')}")
        params = ModelParameters(
            fwd=LstmWeights(wx=payload["fwd.wx"], wh=payload["fwd.wh"],
                            b=payload["fwd.b"]),
            bwd=LstmWeights(wx=payload["bwd.wx"], wh=payload["bwd.wh"],
                            b=payload["bwd.b"]),
            w_out=payload["w_out"],
            b_out=payload["b_out"],
        )
    return params, meta
