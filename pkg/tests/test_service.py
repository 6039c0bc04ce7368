import base64
import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from adlens.data import generate_synthetic, save_dataset, split_dataset, tiny_spec
from adlens.imaging import to_png_bytes
from adlens.service.app import create_app
from adlens.service.cli import main as cli_main
from adlens.service.pipeline import run_evaluation, run_insights, run_training
from adlens.service.registry import Registry


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    """A tiny end-to-end artifact tree: data, model, insights, evals."""
    root = tmp_path_factory.mktemp("artifacts")
    dataset = generate_synthetic(tiny_spec(), n_items=90, n_pairs=18, seed=5)
    dataset = split_dataset(dataset, seed=5)
    save_dataset(dataset, root / "data")
    model = run_training(
        dataset, root, seed=5,
        model_overrides=dict(image_size=16, image_filters=8, text_hidden=16,
                             text_heads=2, text_layers=1, text_max_len=8,
                             mlp_widths=(16, 32, 32, 16), head_widths=(16, 32, 32)),
        train_overrides={
            "image": {"epochs": 1}, "text": {"epochs": 1},
            "domain": {"epochs": 2, "batch_size": 64},
            "features": {"epochs": 2, "batch_size": 64},
            "joint": {"epochs": 3},
        },
    )
    run_insights(dataset, model, root, seed=5, patch_size=4, cluster_range=(2, 4))
    run_evaluation(dataset, model, root, seed=5, attributor="model:feature_ablation",
                   per_domain=False)
    return root, dataset, model


@pytest.fixture(scope="module")
def client(artifacts):
    root, _, _ = artifacts
    registry = Registry.from_artifacts(root)
    return TestClient(create_app(registry))


def _fixture_payload(dataset, need_image=False):
    for cid in dataset.ids():
        content = dataset.contents[cid]
        if content.has_text and (content.has_image or not need_image):
            payload = {
                "id": cid,
                "text": " ".join(dataset.vocab[t] for t in content.tokens),
                "domain": content.domain,
            }
            if content.features is not None:
                payload["features"] = [float(v) for v in content.features]
            if content.has_image:
                payload["image_png_base64"] = base64.b64encode(to_png_bytes(content.image)).decode()
            return payload
    raise AssertionError("no usable fixture content")


def test_score_returns_probability(client, artifacts):
    _, dataset, _ = artifacts
    response = client.post("/score", json=_fixture_payload(dataset))
    assert response.status_code == 200
    body = response.json()
    assert 0.0 < body["score"] < 1.0
    assert body["presence"]["text"] is True
    assert body["request_id"]


def test_score_empty_payload_rejected(client):
    response = client.post("/score", json={})
    assert response.status_code == 400
    assert response.json()["error"]["code"] == "invalid_content"


def test_score_unknown_word_rejected(client):
    response = client.post("/score", json={"text": "zorblatt prime"})
    assert response.status_code == 400
    assert "zorblatt" in response.json()["error"]["detail"]


def test_score_is_deterministic(client, artifacts):
    _, dataset, _ = artifacts
    payload = _fixture_payload(dataset)
    a = client.post("/score", json=payload).json()
    b = client.post("/score", json=payload).json()
    assert a["score"] == b["score"]
    assert a["request_id"] == b["request_id"]


def test_attribute_rescaled_map_sums_to_prediction(client, artifacts):
    _, dataset, _ = artifacts
    payload = _fixture_payload(dataset)
    response = client.post("/attribute", json={"content": payload, "method": "feature_ablation"})
    assert response.status_code == 200
    body = response.json()
    score = client.post("/score", json=payload).json()["score"]
    total = 0.0
    for part in ("image", "text", "features"):
        if body["map"][part] is not None:
            total += float(np.asarray(body["map"][part]).sum())
    if body["map"]["domain"] is not None:
        total += body["map"]["domain"]
    assert total == pytest.approx(score, rel=1e-5)
    # signed split reconstructs the map
    if body["map"]["text"] is not None:
        diff = np.asarray(body["positive"]["text"]) - np.asarray(body["negative"]["text"])
        np.testing.assert_allclose(diff, np.asarray(body["map"]["text"]), atol=1e-9)


def test_attribute_unknown_method_lists_valid(client, artifacts):
    _, dataset, _ = artifacts
    response = client.post("/attribute", json={"content": _fixture_payload(dataset), "method": "magic"})
    assert response.status_code == 400
    assert "integrated_gradients" in response.json()["error"]["detail"]


def test_attribute_pca_needs_method_list(client, artifacts):
    _, dataset, _ = artifacts
    response = client.post(
        "/attribute",
        json={"content": _fixture_payload(dataset), "method": "pca",
              "options": {"methods": ["integrated_gradients"]}},
    )
    assert response.status_code == 400


def test_recommendations_known_domain(client, artifacts):
    _, dataset, _ = artifacts
    domain = dataset.domains[0]
    response = client.get("/recommendations", params={"domain": domain, "modality": "text", "k": 5})
    assert response.status_code == 200
    body = response.json()
    assert len(body["words"]["positive"]) <= 5
    assert body["words"]["positive"][0]["score"] >= body["words"]["positive"][-1]["score"]


def test_recommendations_unknown_domain_404(client):
    assert client.get("/recommendations", params={"domain": "nope"}).status_code == 404


def test_patch_recommendations_serve_pngs(client, artifacts):
    _, dataset, _ = artifacts
    domain = dataset.domains[0]
    response = client.get("/recommendations", params={"domain": domain, "modality": "image", "k": 3})
    assert response.status_code == 200
    patches = response.json()["positive"]
    assert patches
    png = client.get(patches[0]["url"])
    assert png.status_code == 200
    assert png.content[:8] == b"\x89PNG\r\n\x1a\n"


def test_trust_matches_cli_report_exactly(client, artifacts):
    root, _, _ = artifacts
    path = root / "evals" / "all__text.json"
    stored = json.loads(path.read_text())
    response = client.get("/trust", params={"domain": "all", "modality": "text"})
    assert response.status_code == 200
    body = response.json()
    assert body["rho"] == stored["rho"]
    assert body["trust"] == stored["trust"]
    assert body["n_pairs"] == stored["n_pairs"]


def test_trust_missing_report_hints(client):
    response = client.get("/trust", params={"domain": "nope", "modality": "text"})
    assert response.status_code == 404
    assert "evaluate" in response.json()["error"]["detail"]


def test_health_and_meta(client):
    assert client.get("/health").json()["status"] == "ok"
    meta = client.get("/meta").json()
    assert meta["domains"] and meta["vocab"]


# ---------------------------------------------------------------------------
# CLI


def test_cli_unknown_flag_exits_2():
    runner = CliRunner()
    result = runner.invoke(cli_main, ["synth-gen", "--no-such-flag"])
    assert result.exit_code == 2
    assert "no-such-flag" in result.output


def test_cli_synth_gen_deterministic(tmp_path):
    runner = CliRunner()
    for sub in ("one", "two"):
        result = runner.invoke(cli_main, [
            "synth-gen", "--seed", "7", "--variant", "tiny",
            "--items", "30", "--pairs", "5", "--out", str(tmp_path / sub)])
        assert result.exit_code == 0, result.output
    a = (tmp_path / "one" / "data" / "manifest.jsonl").read_bytes()
    b = (tmp_path / "two" / "data" / "manifest.jsonl").read_bytes()
    assert a == b
    gt_a = (tmp_path / "one" / "data" / "ground_truth.npz").read_bytes()
    gt_b = (tmp_path / "two" / "data" / "ground_truth.npz").read_bytes()
    assert gt_a == gt_b
    images_a = sorted((tmp_path / "one" / "data" / "images").glob("*.png"))
    images_b = sorted((tmp_path / "two" / "data" / "images").glob("*.png"))
    assert [p.name for p in images_a] == [p.name for p in images_b]
    for pa, pb in zip(images_a, images_b):
        assert pa.read_bytes() == pb.read_bytes()


def test_cli_evaluate_without_pairs_fails_helpfully(tmp_path):
    from adlens.data import Dataset, Content, Outcome

    ds = Dataset(contents={"x": Content(id="x", domain="d", tokens=(0,))},
                 outcomes={"x": Outcome(n_total=10, n_clicks=1)}, pairs=[],
                 vocab=("w",), vocab_tags=("NOUN",), domains=("d",), feature_dim=0)
    save_dataset(ds, tmp_path / "data")
    runner = CliRunner()
    result = runner.invoke(cli_main, [
        "evaluate", "--data", str(tmp_path / "data"), "--attributor", "random",
        "--out", str(tmp_path / "out")])
    assert result.exit_code != 0
    assert "pairs" in result.output


def test_cli_score_against_dataset(tmp_path, artifacts):
    root, dataset, _ = artifacts
    runner = CliRunner()
    cid = dataset.ids()[0]
    result = runner.invoke(cli_main, [
        "score", "--model", str(root / "model"), "--data", str(root / "data"),
        "--id", cid, "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    doc = json.loads((tmp_path / "score.json").read_text())
    assert 0.0 < doc["score"] < 1.0


def test_attribute_golden_fixture_response():
    # captured after the first verified build; floats compared with tolerance
    # since BLAS rounding may differ in the last ulp across machines
    from pathlib import Path

    from adlens.model import ContentScorer, ModelConfig
    from adlens.service.registry import Registry

    fixture = json.loads((Path(__file__).parent / "fixtures" / "golden_attribute.json").read_text())
    config = ModelConfig(vocab=("free", "trial", "now", "gift"), domains=("shop", "travel"),
                         feature_dim=3, image_size=16, image_filters=8, text_hidden=16,
                         text_heads=2, text_layers=1, text_max_len=6,
                         mlp_widths=(8, 16, 16, 8), head_widths=(8, 16, 16))
    registry = Registry()
    registry.activate(ContentScorer(config, seed=41), config, None)
    golden_client = TestClient(create_app(registry))
    response = golden_client.post("/attribute", json=fixture["request"])
    assert response.status_code == 200
    body = response.json()
    want = fixture["response"]
    assert body["request_id"] == want["request_id"]
    for part in ("map", "positive", "negative"):
        for field in ("text", "features"):
            np.testing.assert_allclose(body[part][field], want[part][field], rtol=1e-5, atol=1e-7)
        assert body[part]["domain"] == pytest.approx(want[part]["domain"], abs=1e-7)
        assert body[part]["rescaled"] == want[part]["rescaled"]
    assert body["map"]["prediction"] == pytest.approx(want["map"]["prediction"], abs=1e-6)
