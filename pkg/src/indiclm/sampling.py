"""Decoding: temperature rebalancing, top-k / top-p filtering, generation.

The per-step pipeline is logits -> temperature softmax -> top-k (if set) ->
top-p (if set) -> inverse-CDF sampling. Temperature 0 is a greedy sentinel:
filters and sampling are bypassed and every sample is the argmax path.
Each of the n requested samples draws from its own PRNG substream
(seed xor splitmix64(sample_index)) so the set of samples is reproducible
while the samples differ.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .model import KVCache, Parameters, fp32_matmul, infer_step
from .tokenizer import TokenizerModel, decode as tok_decode, encode as tok_encode

_M64 = (1 << 64) - 1


@dataclass(frozen=True)
class SamplerConfig:
    temperature: float = 1.0
    top_k: int | None = None
    top_p: float | None = 0.9
    max_new_tokens: int = 64
    n_samples: int = 3
    stop_tokens: tuple[int, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0 (0 selects greedy)")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be a positive integer")
        if self.top_p is not None and not (0.0 < self.top_p <= 1.0):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_new_tokens < 1 or self.n_samples < 1:
            raise ValueError("max_new_tokens and n_samples must be positive")


def apply_temperature(logits, temperature: float) -> np.ndarray:
    """softmax(logits / temperature); higher temperature flattens."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0 here; greedy is handled in generate")
    logits = np.asarray(logits, np.float64)
    if not np.isfinite(logits).all():
        raise ValueError("logits must be finite")
    z = logits / temperature
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def top_k_filter(probs, k: int) -> np.ndarray:
    """Keep the k most probable tokens (ties -> smaller id), renormalize."""
    if k < 1:
        raise ValueError("k must be >= 1")
    probs = np.asarray(probs, np.float64)
    if k >= probs.size:
        return probs.copy()
    order = np.argsort(-probs, kind="stable")
    out = np.zeros_like(probs)
    keep = order[:k]
    out[keep] = probs[keep]
    return out / out.sum()


def top_p_filter(probs, p: float) -> np.ndarray:
    """Keep the smallest probability-descending prefix with cumulative mass
    >= p, including the crossing token (ties -> smaller id), renormalize."""
    if not (0.0 < p <= 1.0):
        raise ValueError("p must be in (0, 1]")
    probs = np.asarray(probs, np.float64)
    if p >= 1.0:
        return probs.copy()
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    cut = int(np.searchsorted(cumulative, p, side="left"))
    cut = min(cut, probs.size - 1)
    out = np.zeros_like(probs)
    keep = order[: cut + 1]
    out[keep] = probs[keep]
    return out / out.sum()


def sample_next(probs, rng) -> int:
    """Inverse-CDF draw over ascending token ids."""
    probs = np.asarray(probs, np.float64)
    total = probs.sum()
    if total <= 0:
        raise ValueError("cannot sample from an all-zero distribution")
    cumulative = np.cumsum(probs)
    u = rng.random() * cumulative[-1]
    return int(np.searchsorted(cumulative, u, side="right"))


def entropy(probs) -> float:
    probs = np.asarray(probs, np.float64)
    nz = probs[probs > 0]
    return float(-(nz * np.log(nz)).sum())


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return (x ^ (x >> 31)) & _M64


@dataclass
class GeneratedSample:
    index: int
    text: str
    token_ids: list[int] = field(repr=False, default_factory=list)
    seconds: float = 0.0

    @property
    def token_count(self) -> int:
        return len(self.token_ids)


def _next_token(logits, config: SamplerConfig, rng) -> int:
    if config.temperature == 0:
        return int(np.argmax(logits))
    probs = apply_temperature(logits, config.temperature)
    if config.top_k is not None:
        probs = top_k_filter(probs, config.top_k)
    if config.top_p is not None:
        probs = top_p_filter(probs, config.top_p)
    return sample_next(probs, rng)


def _generate_one(params, mm, prompt_ids, config, stop, sample_index):
    cfg = params.config
    cache = KVCache(cfg)
    logits = infer_step(params, mm, cache, prompt_ids)[-1]
    rng = np.random.default_rng((config.seed ^ splitmix64(sample_index)) & _M64)
    out: list[int] = []
    for _ in range(config.max_new_tokens):
        token = _next_token(logits, config, rng)
        if token in stop:
            break
        out.append(token)
        if cache.length >= cfg.context_len:
            break
        logits = infer_step(params, mm, cache, [token])[-1]
    return out


def generate(
    params: Parameters,
    tokenizer: TokenizerModel,
    prompt: str,
    config: SamplerConfig = SamplerConfig(),
    mm=None,
) -> list[GeneratedSample]:
    """n_samples independent continuations of ``prompt``.

    The prompt is encoded with a leading bos; generation stops at a stop
    token (the tokenizer eos unless config names others), at
    max_new_tokens, or at the context limit.
    """
    prompt_ids = [tokenizer.bos_id] + tok_encode(tokenizer, prompt)
    if len(prompt_ids) >= params.config.context_len:
        raise ValueError(
            f"prompt encodes to {len(prompt_ids)} tokens; context is "
            f"{params.config.context_len}"
        )
    stop = set(config.stop_tokens) if config.stop_tokens else {tokenizer.eos_id}
    if mm is None:
        # quantized parameter sets carry their own matmul
        mm = params.matmul if hasattr(params, "matmul") else fp32_matmul(params)
    samples = []
    for i in range(config.n_samples):
        t0 = time.perf_counter()
        ids = _generate_one(params, mm, prompt_ids, config, stop, i)
        seconds = time.perf_counter() - t0
        samples.append(GeneratedSample(i, tok_decode(tokenizer, ids), ids, seconds))
    return samples
