import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthetic import DEVANAGARI_FIXTURE

from indiclm import model as M
from indiclm import tokenizer as T
from indiclm import train as TR


def fixture_1kb() -> str:
    """Prefix of the Devanagari fixture closest to 1 KB, cut at a danda."""
    text = DEVANAGARI_FIXTURE
    best = text
    for i, ch in enumerate(text):
        if ch == "।":
            candidate = text[: i + 1]
            if len(candidate.encode("utf-8")) >= 1024:
                best = candidate
                break
    return best


@pytest.fixture(scope="session")
def fixture_text() -> str:
    return fixture_1kb()


@pytest.fixture(scope="session")
def fixture_tokenizer(fixture_text):
    return T.train_bpe([DEVANAGARI_FIXTURE], 384)


@pytest.fixture(scope="session")
def overfit_run(fixture_text, fixture_tokenizer):
    """Tiny model memorizing the repeated 1 KB fixture; shared by the
    decode-echo, quantization-agreement, and overfit acceptance tests."""
    tok = fixture_tokenizer
    doc_ids = [tok.bos_id] + T.encode(tok, fixture_text)
    stream = np.tile(np.asarray(doc_ids, np.int64), 40)
    cfg = M.ModelConfig(
        vocab_size=tok.vocab_size, d_model=64, n_layers=2, n_heads=4,
        context_len=128, tied_head=True, seed=11,
    )
    assert M.count_params(cfg) < 500_000
    params = M.init_model(cfg)
    tconf = TR.TrainConfig(
        learning_rate=3e-3, warmup_steps=30, max_steps=500, batch_size=8,
        seq_len=64, eval_interval_k=500, eval_batches=2, checkpoint_every=10_000,
        seed=3,
    )
    t0 = time.monotonic()
    params, metrics = TR.pretrain(params, {"train": stream, "val": stream}, tconf)
    elapsed = time.monotonic() - t0
    return {
        "params": params,
        "tokenizer": tok,
        "stream": stream,
        "doc_ids": doc_ids,
        "config": cfg,
        "train_config": tconf,
        "final_loss": metrics.entries("train")[-1]["loss"],
        "elapsed_s": elapsed,
        "fixture_text": fixture_text,
    }
