import csv
import io
import json

import pytest
from fastapi.testclient import TestClient

from indiclm import evalkit as E
from indiclm.server import ServedModel, build_app


@pytest.fixture()
def client(overfit_run, tmp_path):
    registry = {
        "tiny-hi": ServedModel(
            "tiny-hi", overfit_run["params"], overfit_run["tokenizer"],
            precision="fp32", language="hi",
        )
    }
    app = build_app(registry, score_store_path=tmp_path / "scores.jsonl")
    with TestClient(app) as c:
        yield c


def test_models_endpoint(client):
    body = client.get("/v1/models").json()
    assert len(body["models"]) == 1
    entry = body["models"][0]
    assert entry["id"] == "tiny-hi"
    assert entry["precision"] == "fp32"
    assert entry["config"]["context_len"] == 128
    assert entry["params"] > 0


class TestGenerate:
    def test_defaults_three_samples(self, client):
        resp = client.post("/v1/generate", json={
            "model": "tiny-hi", "prompt": "सुबह की", "max_new_tokens": 8, "seed": 9})
        assert resp.status_code == 200
        body = resp.json()
        assert len(body["samples"]) == 3
        assert [s["index"] for s in body["samples"]] == [0, 1, 2]
        for sample in body["samples"]:
            assert sample["tokens"] >= 0
            assert sample["seconds"] >= 0

    def test_seeded_repeat_identical(self, client):
        payload = {"model": "tiny-hi", "prompt": "नदी के", "max_new_tokens": 10, "seed": 123}
        first = client.post("/v1/generate", json=payload)
        second = client.post("/v1/generate", json=payload)
        a, b = first.json(), second.json()
        assert [s["text"] for s in a["samples"]] == [s["text"] for s in b["samples"]]
        assert a["seed"] == b["seed"] == 123

    def test_unknown_model_404(self, client):
        resp = client.post("/v1/generate", json={"model": "nope", "prompt": "x"})
        assert resp.status_code == 404
        assert resp.json()["detail"]["code"] == "model_not_found"

    def test_invalid_params_rejected_with_field_info(self, client):
        resp = client.post("/v1/generate", json={
            "model": "tiny-hi", "prompt": "x", "top_p": 1.5})
        assert resp.status_code == 422
        assert any("top_p" in str(item.get("loc")) for item in resp.json()["detail"])

    def test_empty_prompt_rejected(self, client):
        resp = client.post("/v1/generate", json={"model": "tiny-hi", "prompt": ""})
        assert resp.status_code == 422

    def test_unseeded_requests_return_seed(self, client):
        resp = client.post("/v1/generate", json={
            "model": "tiny-hi", "prompt": "सुबह", "max_new_tokens": 4, "n": 1})
        assert "seed" in resp.json()


class TestScores:
    VALID = {"prompt_id": "p1", "model_id": "tiny-hi", "sample_index": 0,
             "grammar": 5, "coherence": 5, "creativity": 4, "factuality": 3.5}

    def test_append_and_list(self, client):
        resp = client.post("/v1/scores", json=self.VALID)
        assert resp.status_code == 200
        assert resp.json()["score_id"] == 0
        listed = client.get("/v1/scores").json()["scores"]
        assert len(listed) == 1
        assert listed[0]["grammar"] == 5.0

    def test_out_of_range_rejected(self, client):
        resp = client.post("/v1/scores", json={**self.VALID, "grammar": 6})
        assert resp.status_code == 422
        assert any("grammar" in str(item.get("loc")) for item in resp.json()["detail"])
        resp = client.post("/v1/scores", json={**self.VALID, "factuality": -1})
        assert resp.status_code == 422

    def test_factuality_zero_allowed(self, client):
        resp = client.post("/v1/scores", json={**self.VALID, "factuality": 0})
        assert resp.status_code == 200

    def test_aggregate_and_export_match_evalkit(self, client, tmp_path):
        for sample, grammar in enumerate([4, 5, 3]):
            client.post("/v1/scores", json={
                **self.VALID, "sample_index": sample, "grammar": grammar})
        agg = client.get("/v1/scores/aggregate", params={"n": 3}).json()
        assert agg["models"]["tiny-hi"]["grammar"] == pytest.approx(4.0)

        exported = client.get("/v1/scores/export", params={"n": 3})
        assert exported.headers["content-type"].startswith("text/csv")
        rows = list(csv.reader(io.StringIO(exported.text)))
        assert rows[0] == ["model"] + list(E.METRICS)
        scores = [E.HumanScore("p1", "tiny-hi", i, g, 5, 4, 3.5)
                  for i, g in enumerate([4, 5, 3])]
        table = E.aggregate_scores(scores, 3)
        expected = [f"{table.aggregates['tiny-hi'][m]:.5f}" for m in E.METRICS]
        assert rows[1] == ["tiny-hi"] + expected

    def test_incomplete_aggregate_conflict(self, client):
        client.post("/v1/scores", json=self.VALID)
        resp = client.get("/v1/scores/aggregate", params={"n": 3})
        assert resp.status_code == 409


class TestReference:
    def test_tables_served_verbatim(self, client):
        for table in ("table2", "table4", "table11"):
            body = client.get(f"/v1/reference/{table}").json()
            assert body == E.load_reference(table)

    def test_index(self, client):
        body = client.get("/v1/reference").json()
        assert "table2" in body["tables"]

    def test_unknown_table_404(self, client):
        resp = client.get("/v1/reference/table99")
        assert resp.status_code == 404
        assert resp.json()["detail"]["code"] == "reference_not_found"


def test_auth_token(overfit_run, tmp_path, monkeypatch):
    registry = {"m": ServedModel("m", overfit_run["params"], overfit_run["tokenizer"])}
    monkeypatch.setenv("INDICLM_API_TOKEN", "sekrit")
    app = build_app(registry, score_store_path=tmp_path / "s.jsonl")
    with TestClient(app) as client:
        assert client.get("/v1/models").status_code == 401
        ok = client.get("/v1/models", headers={"Authorization": "Bearer sekrit"})
        assert ok.status_code == 200


def test_empty_registry_rejected(tmp_path):
    with pytest.raises(ValueError):
        build_app({}, score_store_path=tmp_path / "s.jsonl")


def test_models_dir_loading(overfit_run, tmp_path):
    from indiclm import model as M
    from indiclm import tokenizer as T
    from indiclm.server import load_models_dir

    M.save_params(overfit_run["params"], tmp_path / "tiny.ckpt")
    T.save_tokenizer(overfit_run["tokenizer"], tmp_path / "tiny.tok")
    (tmp_path / "tiny.json").write_text(json.dumps({"language": "hi"}))
    registry = load_models_dir(tmp_path)
    assert set(registry) == {"tiny"}
    assert registry["tiny"].language == "hi"
    assert registry["tiny"].precision == "fp32"


def test_static_ui_mount(overfit_run, tmp_path):
    ui = tmp_path / "ui"
    ui.mkdir()
    (ui / "index.html").write_text("<html><body>playground</body></html>")
    registry = {"m": ServedModel("m", overfit_run["params"], overfit_run["tokenizer"])}
    app = build_app(registry, score_store_path=tmp_path / "s.jsonl", ui_dir=ui)
    with TestClient(app) as client:
        resp = client.get("/app/")
        assert resp.status_code == 200
        assert "playground" in resp.text
