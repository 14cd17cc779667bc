"""Small autoregressive language models for Indic scripts.

Corpus cleaning, script-aware BPE tokenization, decoder-only transformer
pretraining and instruction tuning, sampling-based decoding, evaluation
workflows, and int8 CPU inference behind an HTTP service.
"""

__version__ = "0.1.0"

from .corpus import CleanConfig, RawDocument, SplitSpec, clean_text, deduplicate, split_train_val
from .model import ModelConfig, Parameters, count_params, forward, init_model, perplexity
from .sampling import SamplerConfig, generate
from .scripts import ScriptProfile, detect_script
from .tokenizer import TokenizerModel, decode, encode, fertility, merge_tokenizers, train_bpe

__all__ = [
    "CleanConfig",
    "ModelConfig",
    "Parameters",
    "RawDocument",
    "SamplerConfig",
    "ScriptProfile",
    "SplitSpec",
    "TokenizerModel",
    "clean_text",
    "count_params",
    "decode",
    "deduplicate",
    "detect_script",
    "encode",
    "fertility",
    "forward",
    "generate",
    "init_model",
    "merge_tokenizers",
    "perplexity",
    "split_train_val",
    "train_bpe",
]
