"""Pretraining and supervised fine-tuning loops.

Batches are random windows over a packed token stream (targets are inputs
shifted left by one). The optimizer is AdamW (0.9/0.95, weight decay 0.1 on
matrix-shaped tensors) under linear warmup followed by cosine decay, with
global-norm gradient clipping. A validation pass runs every
``eval_interval_k`` steps and checkpoints are written periodically plus at
every new best validation loss. Checkpoints carry the optimizer moments and
PRNG state so a resumed run reproduces the uninterrupted loss trajectory.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as M

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.95
ADAM_EPS = 1e-8
WEIGHT_DECAY = 0.1
MIN_LR_FRACTION = 0.1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    warmup_steps: int = 100
    max_steps: int = 1000
    batch_size: int = 8
    seq_len: int = 128
    eval_interval_k: int = 1000
    eval_batches: int = 8
    checkpoint_every: int = 1000
    grad_clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.grad_clip <= 0:
            raise ValueError("learning_rate and grad_clip must be positive")
        if min(self.max_steps, self.batch_size, self.seq_len, self.eval_interval_k,
               self.eval_batches, self.checkpoint_every) < 1:
            raise ValueError("all step/size fields must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.eval_interval_k > self.max_steps:
            raise ValueError("eval_interval_k must not exceed max_steps")


@dataclass
class TrainState:
    step: int = 0
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    best_val_loss: float = float("inf")
    rng_state: dict | None = None


def learning_rate_at(step: int, config: TrainConfig) -> float:
    """1-based step; linear warmup then cosine decay to a 10% floor."""
    lr = config.learning_rate
    if config.warmup_steps and step <= config.warmup_steps:
        return lr * step / config.warmup_steps
    min_lr = lr * MIN_LR_FRACTION
    span = max(config.max_steps - config.warmup_steps, 1)
    progress = min((step - config.warmup_steps) / span, 1.0)
    return min_lr + 0.5 * (lr - min_lr) * (1.0 + np.cos(np.pi * progress))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values())))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


def adamw_step(params: M.Parameters, grads, state: TrainState, lr: float) -> None:
    t = state.step
    for name, g in grads.items():
        p = params.tensors[name]
        if name not in state.adam_m:
            state.adam_m[name] = np.zeros_like(p)
            state.adam_v[name] = np.zeros_like(p)
        m = state.adam_m[name]
        v = state.adam_v[name]
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * g * g
        mhat = m / (1 - ADAM_BETA1**t)
        vhat = v / (1 - ADAM_BETA2**t)
        update = mhat / (np.sqrt(vhat) + ADAM_EPS)
        if p.ndim >= 2:
            update = update + WEIGHT_DECAY * p
        p -= lr * update


def make_batches(token_stream, seq_len: int, batch_size: int, seed: int):
    """Endless iterator of (inputs, targets) int64 batches; windows are
    uniform random offsets into the stream, deterministic under the seed."""
    rng = np.random.default_rng(seed)
    return _batches(np.asarray(token_stream, np.int64), seq_len, batch_size, rng)


def _batches(stream: np.ndarray, seq_len: int, batch_size: int, rng):
    n_legal = stream.size - seq_len
    if n_legal < 1:
        raise ValueError(
            f"token stream of length {stream.size} is too short for seq_len {seq_len}"
        )
    while True:
        offsets = rng.integers(0, n_legal, batch_size)
        inputs = np.stack([stream[o : o + seq_len] for o in offsets])
        targets = np.stack([stream[o + 1 : o + seq_len + 1] for o in offsets])
        yield inputs, targets


def _val_batches(stream: np.ndarray, seq_len: int, limit: int):
    """Deterministic, non-overlapping validation windows."""
    out = []
    for start in range(0, stream.size - seq_len, seq_len):
        out.append((stream[start : start + seq_len], stream[start + 1 : start + seq_len + 1]))
        if len(out) >= limit:
            break
    if not out:
        raise ValueError("validation stream shorter than seq_len + 1")
    return out


def evaluate(params: M.Parameters, val_stream, config: TrainConfig) -> float:
    stream = np.asarray(val_stream, np.int64)
    losses = []
    for inputs, targets in _val_batches(stream, config.seq_len, config.eval_batches):
        loss, _ = _batch_loss(params, inputs[None, :], targets[None, :])
        losses.append(loss)
    return float(np.mean(losses))


def _batch_loss(params, inputs, targets, mask=None):
    logits, _ = M._forward_batch(params, np.asarray(inputs, np.int64), keep=False)
    weight = M._position_weights(np.asarray(targets, np.int64), mask, params.dtype)
    loss, _ = M._loss_from_logits(logits, np.asarray(targets, np.int64), weight)
    return loss, logits


class MetricsLog:
    """Append-only metrics: one JSON record per line plus an in-memory list."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        self._t0 = time.monotonic()

    def emit(self, step: int, split: str, loss: float, lr: float) -> dict:
        record = {
            "step": step,
            "split": split,
            "loss": float(loss),
            "perplexity": M.perplexity(max(loss, 0.0)),
            "lr": float(lr),
            "elapsed_s": round(time.monotonic() - self._t0, 3),
        }
        self.records.append(record)
        if self.path:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
        return record

    def entries(self, split: str) -> list[dict]:
        return [r for r in self.records if r["split"] == split]


def _abort_if_not_finite(loss, params, grads, step):
    if np.isfinite(loss):
        return
    for name, p in params.tensors.items():
        if not np.isfinite(p).all():
            raise FloatingPointError(
                f"non-finite loss at step {step}; first non-finite parameter tensor: {name!r}"
            )
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise FloatingPointError(
                f"non-finite loss at step {step}; first non-finite gradient tensor: {name!r}"
            )
    raise FloatingPointError(f"non-finite loss at step {step}")


def _run_loop(params, next_batch, val_stream, config, state, metrics, checkpoint_path):
    while state.step < config.max_steps:
        state.step += 1
        inputs, targets, mask = next_batch(state)
        loss, grads = M.loss_and_grads(params, inputs, targets, mask)
        _abort_if_not_finite(loss, params, grads, state.step)
        clip_gradients(grads, config.grad_clip)
        lr = learning_rate_at(state.step, config)
        adamw_step(params, grads, state, lr)
        params.check_finite()
        metrics.emit(state.step, "train", loss, lr)

        if val_stream is not None and state.step % config.eval_interval_k == 0:
            val_loss = evaluate(params, val_stream, config)
            metrics.emit(state.step, "val", val_loss, lr)
            if val_loss < state.best_val_loss:
                state.best_val_loss = val_loss
                if checkpoint_path:
                    save_checkpoint(params, state, Path(checkpoint_path).with_suffix(".best"))
        if checkpoint_path and state.step % config.checkpoint_every == 0:
            save_checkpoint(params, state, checkpoint_path)
    return params, metrics


def pretrain(
    params: M.Parameters,
    corpus: dict,
    config: TrainConfig,
    metrics_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    state: TrainState | None = None,
):
    """Next-token training over packed streams ``corpus = {train, val}``.

    Emits a train record every step and a val record every
    ``eval_interval_k`` steps; returns (params, metrics).
    """
    if config.seq_len > params.config.context_len:
        raise ValueError("seq_len exceeds the model context length")
    train_stream = np.asarray(corpus["train"], np.int64)
    val_stream = np.asarray(corpus["val"], np.int64) if corpus.get("val") is not None else None

    state = state or TrainState()
    rng = np.random.default_rng(config.seed)
    if state.rng_state is not None:
        rng.bit_generator.state = state.rng_state
    batches = _batches(train_stream, config.seq_len, config.batch_size, rng)
    metrics = MetricsLog(metrics_path)

    def next_batch(st: TrainState):
        inputs, targets = next(batches)
        st.rng_state = rng.bit_generator.state
        return inputs, targets, None

    return _run_loop(params, next_batch, val_stream, config, state, metrics, checkpoint_path)


@dataclass
class SftSequence:
    """Token ids with a response mask aligned to the shifted targets."""

    ids: np.ndarray
    target_mask: np.ndarray

    @property
    def inputs(self) -> np.ndarray:
        return self.ids[:-1]

    @property
    def targets(self) -> np.ndarray:
        return self.ids[1:]


def build_sft_sequence(tokenizer_encode, prompt_text: str, response_text: str,
                       bos_id: int, eos_id: int, context_len: int) -> SftSequence | None:
    """Tokenize an instruction example into ids plus a response-only mask.

    Over-long sequences are truncated from the left of the prompt, never the
    response. Returns None when no response position survives.
    """
    prompt_ids = list(tokenizer_encode(prompt_text))
    response_ids = list(tokenizer_encode(response_text))
    if not response_ids:
        return None
    budget = context_len - 2 - len(response_ids)
    if budget < 0:
        return None
    prompt_ids = prompt_ids[len(prompt_ids) - budget :] if budget < len(prompt_ids) else prompt_ids
    ids = np.asarray([bos_id] + prompt_ids + response_ids + [eos_id], np.int64)
    mask = np.zeros(ids.size - 1, np.float32)
    mask[len(prompt_ids) :] = 1.0
    return SftSequence(ids, mask)


def finetune_sft(
    params: M.Parameters,
    dataset: list[SftSequence],
    config: TrainConfig,
    pad_id: int = 0,
    metrics_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
):
    """SFT with loss averaged over response-mask positions only.

    Returns (params, metrics, skipped) where skipped counts sequences whose
    mask selects nothing.
    """
    usable = [s for s in dataset if s is not None and s.target_mask.sum() > 0]
    skipped = len(dataset) - len(usable)
    if not usable:
        raise ValueError("SFT dataset is empty after dropping fully masked sequences")
    max_len = min(max(s.ids.size for s in usable), params.config.context_len)

    rng = np.random.default_rng(config.seed)
    state = TrainState()
    metrics = MetricsLog(metrics_path)

    def next_batch(st: TrainState):
        picks = rng.integers(0, len(usable), config.batch_size)
        t = max(usable[i].ids.size for i in picks) - 1
        t = min(t, max_len - 1)
        inputs = np.full((config.batch_size, t), pad_id, np.int64)
        targets = np.full((config.batch_size, t), pad_id, np.int64)
        mask = np.zeros((config.batch_size, t), np.float32)
        for row, i in enumerate(picks):
            seq = usable[i]
            n = min(seq.inputs.size, t)
            inputs[row, :n] = seq.inputs[:n]
            targets[row, :n] = seq.targets[:n]
            mask[row, :n] = seq.target_mask[:n]
        st.rng_state = rng.bit_generator.state
        return inputs, targets, mask

    params, metrics = _run_loop(params, next_batch, None, config, state, metrics, checkpoint_path)
    return params, metrics, skipped


def masked_loss(params: M.Parameters, seq: SftSequence) -> float:
    loss, _ = _batch_loss(params, seq.inputs[None, :], seq.targets[None, :],
                          seq.target_mask[None, :])
    return loss


# ---------------------------------------------------------------------------
# checkpointing: the model checkpoint followed by an optimizer-state section,
# so the same file also loads as a plain parameters checkpoint


def save_checkpoint(params: M.Parameters, state: TrainState, path: str | Path) -> None:
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(M.CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", M.CHECKPOINT_VERSION))
        cfg_b = params.config.to_json().encode("utf-8")
        fh.write(struct.pack("<I", len(cfg_b)))
        fh.write(cfg_b)
        names = list(M.tensor_shapes(params.config))
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            M._write_tensor(fh, name, params.tensors[name])
        meta = json.dumps(
            {"step": state.step, "best_val_loss": state.best_val_loss,
             "rng_state": state.rng_state}
        ).encode("utf-8")
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        moments = [("adam_m." + n, state.adam_m[n]) for n in sorted(state.adam_m)]
        moments += [("adam_v." + n, state.adam_v[n]) for n in sorted(state.adam_v)]
        fh.write(struct.pack("<I", len(moments)))
        for name, tensor in moments:
            M._write_tensor(fh, name, tensor)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[M.Parameters, TrainState]:
    params = M.load_params(path)
    with Path(path).open("rb") as fh:
        config, n_tensors = M._read_header(fh)
        for _ in range(n_tensors):
            M._read_tensor(fh)
        (meta_len,) = struct.unpack("<I", M._read_exact(fh, 4))
        meta = json.loads(M._read_exact(fh, meta_len).decode("utf-8"))
        state = TrainState(step=meta["step"], best_val_loss=meta["best_val_loss"],
                           rng_state=meta["rng_state"])
        (n_moments,) = struct.unpack("<I", M._read_exact(fh, 4))
        for _ in range(n_moments):
            name, tensor, _ = M._read_tensor(fh)
            kind, tensor_name = name.split(".", 1)
            target = state.adam_m if kind == "adam_m" else state.adam_v
            target[tensor_name] = tensor
    return params, state
