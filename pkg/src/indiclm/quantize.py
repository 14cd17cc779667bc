"""Symmetric int8 weight quantization and CPU inference benchmarking.

Weight matrices are quantized per output channel (scale = max-abs / 127);
norm gains and the token embedding stay FP32, so a tied output head also
runs in FP32 while an untied head is quantized like any other matrix. At
inference the int8 payload is multiplied against FP32 activations with FP32
accumulation and the per-channel scale applied to the result, which keeps
the exactly-representable case bit-close to the reference path.

Checkpoints reuse the FP32 container: quantized tensors carry an int8
precision tag plus their scale vector.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from . import model as M
from .tokenizer import TokenizerModel, encode as tok_encode


def _is_weight_matrix(name: str) -> bool:
    return name != "tok_emb" and not name.endswith("_g")


@dataclass
class QuantizedParameters:
    """Int8 weight payloads + FP32 scales; non-weight tensors kept FP32.

    Exposes the same (config, tensors) surface the inference path needs,
    with ``tensors`` holding only the retained FP32 tensors.
    """

    config: M.ModelConfig
    tensors: dict[str, np.ndarray]
    qweights: dict[str, tuple[np.ndarray, np.ndarray]]

    def matmul(self, name: str, x: np.ndarray) -> np.ndarray:
        payload, scales = self.qweights[name]
        flat = x.reshape(-1, x.shape[-1])
        out = kernels.matmul_int8(flat, payload, scales)
        return out.reshape(x.shape[:-1] + (payload.shape[1],))

    def dequantize(self) -> M.Parameters:
        tensors = dict(self.tensors)
        for name, (payload, scales) in self.qweights.items():
            tensors[name] = (payload.astype(np.float32) * scales).astype(np.float32)
        return M.Parameters(self.config, tensors)


def quantize_tensor(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-output-channel symmetric quantization of a [in, out] matrix."""
    max_abs = np.abs(w).max(axis=0)
    scales = (max_abs / 127.0).astype(np.float32)
    safe = np.where(scales > 0, scales, 1.0)
    payload = np.clip(np.rint(w / safe), -127, 127).astype(np.int8)
    payload[:, scales == 0] = 0
    return payload, scales


def quantize_int8(params: M.Parameters) -> QuantizedParameters:
    params.check_finite()
    tensors: dict[str, np.ndarray] = {}
    qweights: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for name, tensor in params.tensors.items():
        if _is_weight_matrix(name):
            qweights[name] = quantize_tensor(tensor)
        else:
            tensors[name] = tensor.copy()
    return QuantizedParameters(params.config, tensors, qweights)


def quantized_matmul_fn(qparams: QuantizedParameters):
    def mm(name: str, x: np.ndarray) -> np.ndarray:
        return qparams.matmul(name, x)

    return mm


def forward_quantized(qparams: QuantizedParameters, ids) -> np.ndarray:
    """Full-sequence logits [T, vocab] through the int8 path."""
    ids = np.asarray(ids, np.int64)
    cache = M.KVCache(qparams.config)
    return M.infer_step(qparams, quantized_matmul_fn(qparams), cache, ids)


# ---------------------------------------------------------------------------
# int8 checkpoint: FP32 container + precision tags and scale vectors


def save_quantized(qparams: QuantizedParameters, path: str | Path) -> None:
    with Path(path).open("wb") as fh:
        fh.write(M.CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", M.CHECKPOINT_VERSION))
        cfg_b = qparams.config.to_json().encode("utf-8")
        fh.write(struct.pack("<I", len(cfg_b)))
        fh.write(cfg_b)
        names = list(M.tensor_shapes(qparams.config))
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            if name in qparams.qweights:
                payload, scales = qparams.qweights[name]
                M._write_tensor(fh, name, payload, scales)
            else:
                M._write_tensor(fh, name, qparams.tensors[name])


def load_quantized(path: str | Path) -> QuantizedParameters:
    with Path(path).open("rb") as fh:
        config, n_tensors = M._read_header(fh)
        expected = M.tensor_shapes(config)
        tensors: dict[str, np.ndarray] = {}
        qweights: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for _ in range(n_tensors):
            name, array, scales = M._read_tensor(fh)
            if name not in expected:
                raise ValueError(f"unexpected tensor {name!r} in checkpoint")
            if tuple(array.shape) != expected[name]:
                raise ValueError(
                    f"tensor {name!r} has shape {array.shape}, expected {expected[name]}"
                )
            if scales is None:
                tensors[name] = array
            else:
                qweights[name] = (array, scales)
    return QuantizedParameters(config, tensors, qweights)


def load_any_checkpoint(path: str | Path):
    """Returns (params_or_qparams, precision) for fp32 or int8 checkpoints."""
    try:
        return M.load_params(path), "fp32"
    except ValueError as exc:
        if "quantized" not in str(exc):
            raise
        return load_quantized(path), "int8"


# ---------------------------------------------------------------------------
# benchmarking


@dataclass(frozen=True)
class BenchResult:
    model_id: str
    precision: str
    prompt_tokens: int
    generated_tokens: int
    elapsed_seconds: float
    tokens_per_second: float
    threads: int | None = None

    def __post_init__(self):
        if self.elapsed_seconds <= 0:
            raise ValueError("elapsed_seconds must be positive")
        expected = self.generated_tokens / self.elapsed_seconds
        if abs(self.tokens_per_second - expected) > 1e-9 * max(1.0, expected):
            raise ValueError("tokens_per_second does not match the timing fields")


def bench_inference(
    model,
    tokenizer: TokenizerModel,
    prompt: str,
    n_tokens: int,
    precision: str = "fp32",
    model_id: str = "model",
    threads: int | None = None,
    stop_tokens: set[int] | None = None,
) -> BenchResult:
    """Greedy-decode ``n_tokens`` and time the token loop only.

    Prompt encoding and prefill are excluded from the timed region; a stop
    token ends generation early and the result reports the actual count.
    """
    if n_tokens < 1:
        raise ValueError("n_tokens must be >= 1")
    if precision == "int8":
        if not isinstance(model, QuantizedParameters):
            model = quantize_int8(model)
        mm = quantized_matmul_fn(model)
    elif precision == "fp32":
        mm = M.fp32_matmul(model)
    else:
        raise ValueError(f"unknown precision {precision!r}")
    stop = stop_tokens if stop_tokens is not None else {tokenizer.eos_id}

    prompt_ids = [tokenizer.bos_id] + tok_encode(tokenizer, prompt)
    cache = M.KVCache(model.config)
    logits = M.infer_step(model, mm, cache, prompt_ids)[-1]

    generated = 0
    t0 = time.perf_counter()
    for _ in range(n_tokens):
        token = int(np.argmax(logits))
        if token in stop or cache.length >= model.config.context_len:
            break
        generated += 1
        logits = M.infer_step(model, mm, cache, [token])[-1]
    elapsed = time.perf_counter() - t0
    elapsed = max(elapsed, 1e-9)
    return BenchResult(
        model_id=model_id,
        precision=precision,
        prompt_tokens=len(prompt_ids),
        generated_tokens=generated,
        elapsed_seconds=elapsed,
        tokens_per_second=generated / elapsed,
        threads=threads,
    )
