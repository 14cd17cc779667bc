"""Decoder-only transformer in plain numpy: forward, backward, checkpoints.

Architecture: pre-norm blocks with RMS normalization (gain only), rotary
position encoding, tanh-GELU feed-forward, and an output head that is tied
to the token embedding unless the config unties it. Everything runs in the
dtype of the parameters (float32 in production; casting parameters to
float64 yields a high-precision path used by the gradient checks).

The training forward stashes intermediates for a hand-written backward; a
separate inference path with a per-sequence KV cache serves generation and
accepts a pluggable matmul so the int8 engine can reuse it.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"PLMF"
CHECKPOINT_VERSION = 1
_DTYPE_F32 = 0
_DTYPE_INT8 = 1

_NORM_EPS = 1e-5
_MASK_VALUE = -1e9
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int
    n_layers: int
    n_heads: int
    context_len: int = 1024
    ff_mult: int = 4
    tied_head: bool = True
    seed: int = 0

    def __post_init__(self):
        if min(self.vocab_size, self.d_model, self.n_layers, self.n_heads, self.ff_mult) < 1:
            raise ValueError("all size fields must be positive")
        if self.context_len < 1:
            raise ValueError("context_len must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def ff_dim(self) -> int:
        return self.ff_mult * self.d_model

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @classmethod
    def from_json(cls, payload: str) -> "ModelConfig":
        return cls(**json.loads(payload))


def tensor_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Named tensor inventory in canonical (checkpoint) order."""
    d, ff, v = config.d_model, config.ff_dim, config.vocab_size
    shapes: dict[str, tuple[int, ...]] = {"tok_emb": (v, d)}
    for i in range(config.n_layers):
        p = f"layers.{i}."
        shapes[p + "attn_norm_g"] = (d,)
        shapes[p + "wq"] = (d, d)
        shapes[p + "wk"] = (d, d)
        shapes[p + "wv"] = (d, d)
        shapes[p + "wo"] = (d, d)
        shapes[p + "ff_norm_g"] = (d,)
        shapes[p + "w1"] = (d, ff)
        shapes[p + "w2"] = (ff, d)
    shapes["final_norm_g"] = (d,)
    if not config.tied_head:
        shapes["head_w"] = (d, v)
    return shapes


def count_params(config: ModelConfig) -> int:
    """Closed-form parameter count; matches the allocated inventory exactly.

    embed V*d + L*(4*d^2 + 2*d*ff + 2*d) + d, plus d*V when the head is
    untied.
    """
    d, ff, v, layers = config.d_model, config.ff_dim, config.vocab_size, config.n_layers
    total = v * d + layers * (4 * d * d + 2 * d * ff + 2 * d) + d
    if not config.tied_head:
        total += d * v
    return total


@dataclass
class Parameters:
    config: ModelConfig
    tensors: dict[str, np.ndarray]

    @property
    def dtype(self):
        return self.tensors["tok_emb"].dtype

    def astype(self, dtype) -> "Parameters":
        return Parameters(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def head_weight(self) -> np.ndarray:
        if self.config.tied_head:
            return self.tensors["tok_emb"].T
        return self.tensors["head_w"]

    def check_finite(self) -> None:
        for name, tensor in self.tensors.items():
            if not np.isfinite(tensor).all():
                raise FloatingPointError(f"non-finite values in tensor {name!r}")


@dataclass
class ForwardOutput:
    logits: np.ndarray
    loss: float | None = None


def init_model(config: ModelConfig) -> Parameters:
    """Scaled-normal init (std 0.02, residual projections shrunk by
    1/sqrt(2*n_layers)), gains at one. Deterministic for a given seed."""
    rng = np.random.default_rng(config.seed)
    residual_std = 0.02 / math.sqrt(2.0 * config.n_layers)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in tensor_shapes(config).items():
        if name.endswith("_g"):
            tensors[name] = np.ones(shape, np.float32)
        else:
            std = residual_std if name.endswith(("wo", "w2")) else 0.02
            tensors[name] = rng.normal(0.0, std, shape).astype(np.float32)
    return Parameters(config, tensors)


def zero_grads(params: Parameters) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.tensors.items()}


# ---------------------------------------------------------------------------
# primitive ops (dtype follows the inputs)


def _rmsnorm(x, g):
    r = 1.0 / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + _NORM_EPS)
    return x * r * g, r


def _rmsnorm_backward(dy, x, g, r):
    d = x.shape[-1]
    dg = np.sum(dy * x * r, axis=tuple(range(x.ndim - 1)))
    gdy = dy * g
    dx = gdy * r - x * (r**3 / d) * np.sum(gdy * x, axis=-1, keepdims=True)
    return dx, dg


def _gelu(x):
    u = _GELU_C * (x + 0.044715 * x**3)
    return 0.5 * x * (1.0 + np.tanh(u))


def _gelu_backward(dy, x):
    u = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def _softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _rope_tables(positions, head_dim, dtype):
    half = head_dim // 2
    inv_freq = 1.0 / (10000.0 ** (np.arange(half, dtype=np.float64) / half))
    angles = np.asarray(positions, np.float64)[:, None] * inv_freq[None, :]
    return np.cos(angles).astype(dtype), np.sin(angles).astype(dtype)


def _rope_apply(x, cos, sin):
    # x: [..., T, head_dim]; rotate the two halves of the head dimension
    half = x.shape[-1] // 2
    x1, x2 = x[..., :half], x[..., half:]
    return np.concatenate((x1 * cos - x2 * sin, x1 * sin + x2 * cos), axis=-1)


def _rope_backward(dy, cos, sin):
    half = dy.shape[-1] // 2
    g1, g2 = dy[..., :half], dy[..., half:]
    return np.concatenate((g1 * cos + g2 * sin, -g1 * sin + g2 * cos), axis=-1)


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _join_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


# ---------------------------------------------------------------------------
# training path: full forward with stashed intermediates, manual backward


def _forward_batch(params: Parameters, ids: np.ndarray, keep: bool):
    cfg = params.config
    P = params.tensors
    dtype = params.dtype
    b, t = ids.shape
    cos, sin = _rope_tables(np.arange(t), cfg.head_dim, dtype)
    mask = np.triu(np.full((t, t), _MASK_VALUE, dtype), k=1)

    h = P["tok_emb"][ids]
    stash = {"ids": ids, "cos": cos, "sin": sin, "layers": []} if keep else None
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        x_attn = h
        a, r_attn = _rmsnorm(h, P[p + "attn_norm_g"])
        q = _rope_apply(_split_heads(a @ P[p + "wq"], cfg.n_heads), cos, sin)
        k = _rope_apply(_split_heads(a @ P[p + "wk"], cfg.n_heads), cos, sin)
        v = _split_heads(a @ P[p + "wv"], cfg.n_heads)
        scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(cfg.head_dim) + mask
        attn = _softmax(scores)
        ctx = _join_heads(attn @ v)
        h = h + ctx @ P[p + "wo"]

        x_ff = h
        f, r_ff = _rmsnorm(h, P[p + "ff_norm_g"])
        pre = f @ P[p + "w1"]
        act = _gelu(pre)
        h = h + act @ P[p + "w2"]
        if keep:
            stash["layers"].append(
                dict(x_attn=x_attn, a=a, r_attn=r_attn, q=q, k=k, v=v, attn=attn,
                     ctx=ctx, x_ff=x_ff, f=f, r_ff=r_ff, pre=pre, act=act)
            )

    final, r_final = _rmsnorm(h, P["final_norm_g"])
    logits = final @ params.head_weight()
    if keep:
        stash.update(h_last=h, final=final, r_final=r_final)
    return logits, stash


def _loss_from_logits(logits, targets, weight):
    probs = _softmax(logits)
    n = np.arange(targets.size)
    tgt_probs = probs.reshape(-1, probs.shape[-1])[n, targets.reshape(-1)]
    nll = -np.log(np.maximum(tgt_probs, np.finfo(probs.dtype).tiny))
    loss = float((nll * weight.reshape(-1)).sum())
    dlogits = probs
    flat = dlogits.reshape(-1, dlogits.shape[-1])
    flat[n, targets.reshape(-1)] -= 1.0
    dlogits = flat.reshape(logits.shape) * weight[..., None]
    return loss, dlogits


def _position_weights(targets: np.ndarray, loss_mask, dtype):
    if loss_mask is None:
        w = np.ones(targets.shape, dtype)
    else:
        w = np.asarray(loss_mask, dtype)
    total = w.sum()
    if total <= 0:
        raise ValueError("loss mask selects no positions")
    return w / total


def forward(
    params: Parameters,
    ids,
    targets=None,
    loss_mask=None,
) -> ForwardOutput:
    """Logits for one sequence; mean NLL over (masked) positions if targets
    are given. Sequences longer than the context or ids outside the
    vocabulary are rejected."""
    ids = np.asarray(ids, np.int64)
    if ids.ndim != 1:
        raise ValueError("forward takes a single id sequence")
    _validate_ids(params.config, ids)
    logits, _ = _forward_batch(params, ids[None, :], keep=False)
    loss = None
    if targets is not None:
        targets = np.asarray(targets, np.int64)
        if targets.shape != ids.shape:
            raise ValueError("targets must match ids in length")
        _validate_ids(params.config, targets)
        mask = None if loss_mask is None else np.asarray(loss_mask)[None, :]
        weight = _position_weights(targets[None, :], mask, params.dtype)
        loss, _ = _loss_from_logits(logits, targets[None, :], weight)
    return ForwardOutput(logits[0], loss)


def _validate_ids(config: ModelConfig, ids: np.ndarray) -> None:
    if ids.shape[-1] > config.context_len:
        raise ValueError(
            f"sequence length {ids.shape[-1]} exceeds context {config.context_len}"
        )
    if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_size):
        raise ValueError("token id out of range")


def loss_and_grads(params: Parameters, inputs, targets, loss_mask=None):
    """Mean masked NLL and gradients for a [B, T] batch."""
    cfg = params.config
    P = params.tensors
    inputs = np.atleast_2d(np.asarray(inputs, np.int64))
    targets = np.atleast_2d(np.asarray(targets, np.int64))
    _validate_ids(cfg, inputs)
    _validate_ids(cfg, targets)
    if loss_mask is not None:
        loss_mask = np.atleast_2d(np.asarray(loss_mask))

    logits, stash = _forward_batch(params, inputs, keep=True)
    weight = _position_weights(targets, loss_mask, params.dtype)
    loss, dlogits = _loss_from_logits(logits, targets, weight)

    grads = zero_grads(params)
    head = params.head_weight()
    dfinal = dlogits @ head.T
    flat_final = stash["final"].reshape(-1, cfg.d_model)
    dhead = flat_final.T @ dlogits.reshape(-1, cfg.vocab_size)
    if cfg.tied_head:
        grads["tok_emb"] += dhead.T
    else:
        grads["head_w"] += dhead

    dh, dg = _rmsnorm_backward(dfinal, stash["h_last"], P["final_norm_g"], stash["r_final"])
    grads["final_norm_g"] += dg

    cos, sin = stash["cos"], stash["sin"]
    scale = 1.0 / math.sqrt(cfg.head_dim)
    for i in reversed(range(cfg.n_layers)):
        p = f"layers.{i}."
        s = stash["layers"][i]

        # feed-forward block: h = x_ff + gelu(rmsnorm(x_ff) @ w1) @ w2
        dact = dh @ P[p + "w2"].T
        grads[p + "w2"] += s["act"].reshape(-1, cfg.ff_dim).T @ dh.reshape(-1, cfg.d_model)
        dpre = _gelu_backward(dact, s["pre"])
        df = dpre @ P[p + "w1"].T
        grads[p + "w1"] += s["f"].reshape(-1, cfg.d_model).T @ dpre.reshape(-1, cfg.ff_dim)
        dx_ff, dg = _rmsnorm_backward(df, s["x_ff"], P[p + "ff_norm_g"], s["r_ff"])
        grads[p + "ff_norm_g"] += dg
        dh = dh + dx_ff

        # attention block: h = x_attn + attn(rmsnorm(x_attn)) @ wo
        dctx = dh @ P[p + "wo"].T
        grads[p + "wo"] += s["ctx"].reshape(-1, cfg.d_model).T @ dh.reshape(-1, cfg.d_model)
        dctx_h = _split_heads(dctx, cfg.n_heads)
        dattn = dctx_h @ s["v"].transpose(0, 1, 3, 2)
        dv = s["attn"].transpose(0, 1, 3, 2) @ dctx_h
        dscores = s["attn"] * (dattn - np.sum(dattn * s["attn"], axis=-1, keepdims=True))
        dscores *= scale
        dq = dscores @ s["k"]
        dk = dscores.transpose(0, 1, 3, 2) @ s["q"]
        dq = _rope_backward(dq, cos, sin)
        dk = _rope_backward(dk, cos, sin)
        da = np.zeros_like(s["a"])
        for name, dmat in (("wq", dq), ("wk", dk), ("wv", dv)):
            flat = _join_heads(dmat).reshape(-1, cfg.d_model)
            grads[p + name] += s["a"].reshape(-1, cfg.d_model).T @ flat
            da += (flat @ P[p + name].T).reshape(s["a"].shape)
        dx_attn, dg = _rmsnorm_backward(da, s["x_attn"], P[p + "attn_norm_g"], s["r_attn"])
        grads[p + "attn_norm_g"] += dg
        dh = dh + dx_attn

    np.add.at(grads["tok_emb"], inputs, dh)
    return loss, grads


def backward(params: Parameters, ids, targets, loss_mask=None):
    """Gradients of the mean-NLL loss for a single sequence."""
    _, grads = loss_and_grads(params, ids, targets, loss_mask)
    return grads


def perplexity(avg_loss: float) -> float:
    """exp of the average per-token loss."""
    if not np.isfinite(avg_loss) or avg_loss < 0:
        raise ValueError(f"average loss must be finite and >= 0, got {avg_loss}")
    return float(np.exp(avg_loss))


# ---------------------------------------------------------------------------
# inference path: pluggable matmul + per-sequence KV cache


def fp32_matmul(params: Parameters):
    tensors = params.tensors

    def mm(name: str, x: np.ndarray) -> np.ndarray:
        return x @ tensors[name]

    return mm


class KVCache:
    """Grown per generated token; one (k, v) pair per layer of shape
    [n_heads, t, head_dim]."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.keys = [np.empty((config.n_heads, 0, config.head_dim), np.float32)
                     for _ in range(config.n_layers)]
        self.values = [np.empty((config.n_heads, 0, config.head_dim), np.float32)
                       for _ in range(config.n_layers)]
        self.length = 0


def infer_step(params, mm, cache: KVCache, ids) -> np.ndarray:
    """Run ``ids`` (the next chunk of a sequence) through the model,
    appending to the cache. Returns logits [len(ids), vocab]."""
    cfg = params.config
    get = params.tensors
    ids = np.asarray(ids, np.int64)
    t_new = ids.shape[0]
    pos = np.arange(cache.length, cache.length + t_new)
    if cache.length + t_new > cfg.context_len:
        raise ValueError("sequence exceeds context length")
    cos, sin = _rope_tables(pos, cfg.head_dim, np.float32)

    h = get["tok_emb"][ids].astype(np.float32)
    scale = 1.0 / math.sqrt(cfg.head_dim)
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        a, _ = _rmsnorm(h, get[p + "attn_norm_g"])
        q = _rope_apply(_split_heads(mm(p + "wq", a)[None], cfg.n_heads)[0], cos, sin)
        k = _rope_apply(_split_heads(mm(p + "wk", a)[None], cfg.n_heads)[0], cos, sin)
        v = _split_heads(mm(p + "wv", a)[None], cfg.n_heads)[0]
        cache.keys[i] = np.concatenate((cache.keys[i], k), axis=1)
        cache.values[i] = np.concatenate((cache.values[i], v), axis=1)
        scores = q @ cache.keys[i].transpose(0, 2, 1) * scale
        # causal mask: new position j may attend to absolute positions <= pos[j]
        total = cache.length + t_new
        col = np.arange(total)[None, :]
        allowed = col <= pos[:, None]
        scores = np.where(allowed[None, :, :], scores, np.float32(_MASK_VALUE))
        attn = _softmax(scores)
        ctx = _join_heads((attn @ cache.values[i])[None])[0]
        h = h + mm(p + "wo", ctx)
        f, _ = _rmsnorm(h, get[p + "ff_norm_g"])
        h = h + mm(p + "w2", _gelu(mm(p + "w1", f)))

    final, _ = _rmsnorm(h, get["final_norm_g"])
    if cfg.tied_head:
        logits = final @ get["tok_emb"].T
    else:
        logits = mm("head_w", final)
    cache.length += t_new
    return logits


# ---------------------------------------------------------------------------
# checkpoint format: magic "PLMF", version, config JSON, tagged tensors


def _write_tensor(fh, name: str, array: np.ndarray, scales: np.ndarray | None = None):
    tag = _DTYPE_INT8 if array.dtype == np.int8 else _DTYPE_F32
    name_b = name.encode("utf-8")
    fh.write(struct.pack("<H", len(name_b)))
    fh.write(name_b)
    fh.write(struct.pack("<BB", tag, array.ndim))
    fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
    if tag == _DTYPE_F32:
        fh.write(np.ascontiguousarray(array, "<f4").tobytes())
    else:
        fh.write(np.ascontiguousarray(array).tobytes())
        fh.write(struct.pack("<I", scales.size))
        fh.write(np.ascontiguousarray(scales, "<f4").tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValueError("truncated checkpoint file")
    return data


def _read_tensor(fh):
    (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
    name = _read_exact(fh, name_len).decode("utf-8")
    tag, ndim = struct.unpack("<BB", _read_exact(fh, 2))
    shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    if tag == _DTYPE_F32:
        array = np.frombuffer(_read_exact(fh, 4 * count), "<f4").reshape(shape).copy()
        return name, array, None
    array = np.frombuffer(_read_exact(fh, count), np.int8).reshape(shape).copy()
    (n_scales,) = struct.unpack("<I", _read_exact(fh, 4))
    scales = np.frombuffer(_read_exact(fh, 4 * n_scales), "<f4").copy()
    return name, array, scales


def save_params(params: Parameters, path: str | Path) -> None:
    with Path(path).open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        cfg_b = params.config.to_json().encode("utf-8")
        fh.write(struct.pack("<I", len(cfg_b)))
        fh.write(cfg_b)
        names = list(tensor_shapes(params.config))
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            _write_tensor(fh, name, params.tensors[name])


def _read_header(fh):
    if _read_exact(fh, 4) != CHECKPOINT_MAGIC:
        raise ValueError("not a model checkpoint (bad magic)")
    (version,) = struct.unpack("<I", _read_exact(fh, 4))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4))
    config = ModelConfig.from_json(_read_exact(fh, cfg_len).decode("utf-8"))
    (n_tensors,) = struct.unpack("<I", _read_exact(fh, 4))
    return config, n_tensors


def load_params(path: str | Path) -> Parameters:
    with Path(path).open("rb") as fh:
        config, n_tensors = _read_header(fh)
        expected = tensor_shapes(config)
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            name, array, scales = _read_tensor(fh)
            if scales is not None:
                raise ValueError(f"tensor {name!r} is quantized; use the int8 loader")
            if name not in expected:
                raise ValueError(f"unexpected tensor {name!r} in checkpoint")
            if array.shape != expected[name]:
                raise ValueError(
                    f"tensor {name!r} has shape {array.shape}, expected {expected[name]}"
                )
            tensors[name] = array
    missing = set(expected) - set(tensors)
    if missing:
        raise ValueError(f"checkpoint is missing tensors: {sorted(missing)}")
    return Parameters(config, tensors)
