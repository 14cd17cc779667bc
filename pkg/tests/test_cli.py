import json

import pytest

from indiclm.cli import main
from synthetic import generate_documents

from indiclm import corpus as C


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Run the full CLI chain once: clean -> split -> tok-train -> pretrain."""
    root = tmp_path_factory.mktemp("cli")
    raw = root / "raw.jsonl"
    C.write_documents(generate_documents(60, sentences_per_doc=6, seed=3), raw)

    cleaned = root / "cleaned.jsonl"
    assert main(["clean", "--in", str(raw), "--out", str(cleaned),
                 "--scripts", "Devanagari"]) == 0

    assert main(["split", "--in", str(cleaned), "--fraction", "0.9", "--seed", "1",
                 "--out-train", str(root / "train.jsonl"),
                 "--out-val", str(root / "val.jsonl")]) == 0

    tok = root / "model.tok"
    assert main(["tok-train", "--vocab-size", "300", "--in", str(cleaned),
                 "--out", str(tok)]) == 0

    model_cfg = root / "model.json"
    model_cfg.write_text(json.dumps({
        "vocab_size": 300, "d_model": 32, "n_layers": 1, "n_heads": 2,
        "context_len": 64, "tied_head": True, "seed": 0}))
    ckpt = root / "model.ckpt"
    assert main(["pretrain", "--model-config", str(model_cfg), "--tok", str(tok),
                 "--corpus", str(cleaned), "--out", str(ckpt),
                 "--steps", "20", "--batch-size", "2", "--seq-len", "32",
                 "--eval-every", "10", "--eval-batches", "1", "--warmup", "5",
                 "--metrics", str(root / "metrics.jsonl")]) == 0
    return root


def test_pipeline_artifacts(pipeline):
    assert (pipeline / "cleaned.jsonl").exists()
    assert (pipeline / "model.tok").exists()
    assert (pipeline / "model.ckpt").exists()
    metrics = [json.loads(l) for l in (pipeline / "metrics.jsonl").read_text().splitlines()]
    assert sum(1 for m in metrics if m["split"] == "val") == 2


def test_split_counts(pipeline):
    train = (pipeline / "train.jsonl").read_text().count("\n")
    val = (pipeline / "val.jsonl").read_text().count("\n")
    assert train == 54 and val == 6


def test_tok_encode_and_fertility(pipeline, tmp_path, capsys):
    sample = tmp_path / "sample.txt"
    sample.write_text("राम नदी पर", encoding="utf-8")
    assert main(["tok-encode", "--tok", str(pipeline / "model.tok"),
                 "--text", "राम नदी"]) == 0
    out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert out["tokens"] == len(out["ids"]) > 0

    assert main(["tok-fertility", "--tok", str(pipeline / "model.tok"),
                 "--in", str(sample)]) == 0
    out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert out["fertility"] > 0


def test_generate_outputs_records(pipeline, capsys):
    assert main(["generate", "--model", str(pipeline / "model.ckpt"),
                 "--tok", str(pipeline / "model.tok"), "--prompt", "राम",
                 "--max-new-tokens", "6", "--n", "2", "--seed", "4"]) == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()]
    assert len(lines) == 2
    assert {"prompt", "sample_index", "text", "token_count", "seconds"} <= set(lines[0])


def test_quantize_and_bench(pipeline, capsys):
    int8 = pipeline / "model.int8.ckpt"
    assert main(["quantize", "--model", str(pipeline / "model.ckpt"),
                 "--out", str(int8)]) == 0
    ratio = json.loads(capsys.readouterr().out.strip().splitlines()[-1])["ratio"]
    assert ratio < 1.0

    assert main(["bench", "--model", str(int8), "--tok", str(pipeline / "model.tok"),
                 "--prompt", "राम", "--n-tokens", "5"]) == 0
    result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert result["precision"] == "int8"
    assert result["generated_tokens"] <= 5


def test_sft_smoke(pipeline, tmp_path, capsys):
    from indiclm import instruct as I

    dataset = tmp_path / "instr.jsonl"
    examples = [I.InstructionExample(f"प्रश्न {i} लिखो", None, f"उत्तर {i}", "hi")
                for i in range(4)]
    I.save_dataset(examples, dataset)
    out_ckpt = tmp_path / "sft.ckpt"
    assert main(["sft", "--dataset", str(dataset), "--template", "hindi",
                 "--tok", str(pipeline / "model.tok"),
                 "--model", str(pipeline / "model.ckpt"),
                 "--out", str(out_ckpt), "--steps", "5", "--batch-size", "2",
                 "--warmup", "1"]) == 0
    body = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert body["sequences"] == 4
    assert out_ckpt.exists()


def test_clean_with_config_file(tmp_path, capsys):
    raw = tmp_path / "raw.jsonl"
    C.write_documents(
        [C.RawDocument("a", "hi", "Devanagari", "नमस्ते hello दुनिया"),
         C.RawDocument("b", "hi", "Devanagari", "नमस्ते hello दुनिया")], raw)
    config = tmp_path / "clean.json"
    config.write_text(json.dumps({
        "scripts": ["Devanagari"],
        "rules": ["unicode_normalize", "links_pii", "emoji_symbols",
                  "foreign_literals", "whitespace"],
        "dedup_lines": False,
    }))
    out = tmp_path / "out.jsonl"
    stats_path = tmp_path / "stats.json"
    assert main(["clean", "--config", str(config), "--in", str(raw),
                 "--out", str(out), "--stats", str(stats_path)]) == 0
    docs = C.read_documents(out)
    assert len(docs) == 1
    assert docs[0].text == "नमस्ते दुनिया"
    stats = json.loads(stats_path.read_text())
    assert stats["documents"] == 1
    assert stats["dropped_duplicates"] == 1
    assert "codepoint_histogram" in stats and "dedup_ratio" in stats
