"""The acceptance gate.

Every exit criterion runs here at its stated tolerance and prints one
PASS line (with the measured value) or fails the suite. The expensive
fixtures - the stock synthetic dataset and the fully trained model - are
built once per session and shared.

Run just this gate with:  pytest tests/test_acceptance.py -v -s
"""

import json
import time
from dataclasses import replace

import numpy as np
import pytest
import scipy.stats
from click.testing import CliRunner

from adlens.attribution import BaselineSpec, pca_aggregate
from adlens.data import Content, default_spec, generate_synthetic, nonlinear_spec, split_dataset
from adlens.evaluation import (
    LinearBagModel,
    ModelAttributor,
    eval_image,
    eval_text,
    model_feature_extractor,
    oracle_attributor,
    pairs_differing,
    pairwise_accuracy,
    random_attributor,
)
from adlens.insights import cluster_patches, extract_patches, rank_scores, word_extractor
from adlens.model import ModelConfig, TrainConfig, evaluate_model, train_full
from adlens.nn import Graph, Tensor, backward, finite_diff_grad, max_relative_error, ops
from adlens.service.cli import main as cli_main

from helpers import LinearFeatureModel, pre_at
from test_attribution import exact_shapley

pytestmark = pytest.mark.acceptance

SEED = 7


def _announce(name: str, detail: str) -> None:
    print(f"\nACCEPTANCE {name}: PASS ({detail})")


@pytest.fixture(scope="module")
def stock_data():
    dataset = generate_synthetic(default_spec(), n_items=2400, n_pairs=500, seed=SEED)
    return split_dataset(dataset, seed=SEED)


@pytest.fixture(scope="module")
def trained(stock_data):
    started = time.time()
    model = train_full(stock_data, ModelConfig.from_dataset(stock_data), TrainConfig(), seed=SEED)
    return model, time.time() - started


# ---------------------------------------------------------------------------
# 1. gradient correctness


def test_gradient_correctness():
    started = time.time()
    rng = np.random.default_rng(100)

    def check(name, build, x0):
        def f(arr):
            with Graph() as g:
                xt = Tensor(arr, dtype=np.float64)
                g.register_input("x", xt)
                out = build(xt)
            return out.item()

        with Graph() as g:
            xt = Tensor(x0, dtype=np.float64)
            g.register_input("x", xt)
            out = build(xt)
        got = backward(g, out).for_input("x")
        want = finite_diff_grad(f, x0, h=1e-3)
        err = max_relative_error(got, want)
        assert err < 1e-4, f"{name}: max relative error {err:.2e}"
        return err

    w = Tensor(rng.standard_normal((4, 3)), dtype=np.float64)
    conv_w = Tensor(rng.standard_normal((2, 3, 3, 3)), dtype=np.float64)
    gamma = Tensor(rng.uniform(0.5, 1.5, 3), dtype=np.float64)
    beta = Tensor(rng.standard_normal(3), dtype=np.float64)
    probe2 = Tensor(rng.standard_normal((4, 3)), dtype=np.float64)
    probe4 = Tensor(rng.standard_normal((2, 2, 4, 4)), dtype=np.float64)
    probe_sm = Tensor(rng.standard_normal((3, 5)), dtype=np.float64)
    probe_emb = Tensor(rng.standard_normal((4, 3)), dtype=np.float64)
    relu_in = rng.standard_normal((4, 3))
    relu_in[np.abs(relu_in) < 0.1] = 0.3

    def bn_case(t):
        state = ops.BatchNormState(3)
        return ops.total(ops.mul(ops.batch_norm(t, gamma, beta, state, training=True), probe2))

    cases = {
        "matmul": (lambda t: ops.total(ops.matmul(t, w)), rng.standard_normal((2, 4))),
        "conv2d": (lambda t: ops.total(ops.conv2d(t, conv_w, stride=2, padding=1)), rng.standard_normal((2, 3, 5, 5))),
        "relu": (lambda t: ops.total(ops.mul(ops.relu(t), ops.relu(t))), relu_in),
        "elu": (lambda t: ops.total(ops.elu(t)), rng.standard_normal((4, 3))),
        "sigmoid": (lambda t: ops.total(ops.sigmoid(t)), rng.standard_normal((4, 3))),
        "softmax": (lambda t: ops.total(ops.mul(ops.softmax(t, axis=-1), probe_sm)), rng.standard_normal((3, 5))),
        "batch_norm": (bn_case, rng.standard_normal((4, 3))),
        "layer_norm": (lambda t: ops.total(ops.mul(ops.layer_norm(t, gamma, beta), probe2)), rng.standard_normal((4, 3))),
        "global_avg_pool": (lambda t: ops.total(ops.mul(ops.global_avg_pool(t), Tensor(rng.standard_normal((2, 2)), dtype=np.float64))), rng.standard_normal((2, 2, 3, 3))),
        "concat": (lambda t: ops.total(ops.mul(ops.concat([t, probe2], axis=1), Tensor(rng.standard_normal((4, 6)), dtype=np.float64))), rng.standard_normal((4, 3))),
        "add": (lambda t: ops.total(ops.mul(ops.add(t, probe2), t)), rng.standard_normal((4, 3))),
        "mul": (lambda t: ops.total(ops.mul(ops.mul(t, probe2), t)), rng.standard_normal((4, 3))),
        "mse": (lambda t: ops.mse(t, probe2), rng.standard_normal((4, 3))),
        "mean": (lambda t: ops.total(ops.mul(ops.mean(t, axis=1), Tensor(rng.standard_normal(4), dtype=np.float64))), rng.standard_normal((4, 3))),
        "total": (lambda t: ops.total(ops.mul(ops.total(t, axis=0), Tensor(rng.standard_normal(3), dtype=np.float64))), rng.standard_normal((4, 3))),
        "reshape": (lambda t: ops.total(ops.mul(ops.reshape(t, (2, 2, 4)), probe4[0])), rng.standard_normal((4, 4))),
        "transpose": (lambda t: ops.total(ops.mul(ops.transpose(t, (1, 0)), Tensor(rng.standard_normal((3, 4)), dtype=np.float64))), rng.standard_normal((4, 3))),
        "embedding": (lambda t: ops.total(ops.mul(ops.embedding(t, np.array([0, 2, 2, 1])), probe_emb)), rng.standard_normal((4, 3))),
    }
    worst = 0.0
    for name, (build, x0) in cases.items():
        worst = max(worst, check(name, build, x0))
    elapsed = time.time() - started
    assert elapsed < 60
    _announce("gradient-correctness",
              f"{len(cases)} op kinds, worst relative error {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. attribution exactness


def test_attribution_exactness():
    from adlens.attribution import feature_ablation, integrated_gradients, kernel_shap

    started = time.time()
    rng = np.random.default_rng(101)
    w = rng.standard_normal(6)
    x = rng.standard_normal(6)
    linear = LinearFeatureModel(w, b=0.2)
    content = Content(id="lin", features=x.astype(np.float32))

    ig = integrated_gradients(linear, content, steps=16)
    ig_err = float(np.abs(ig.features - w * x.astype(np.float32)).max())
    assert ig_err <= 1e-6

    ab = feature_ablation(linear, content)
    ab_err = float(np.abs(ab.features - w * x.astype(np.float32)).max())
    assert ab_err <= 1e-6

    # sampled kernel SHAP against full-enumeration Shapley on an 8-group MLP
    from adlens.model import ContentScorer

    spec = default_spec()
    config = ModelConfig(vocab=tuple(t.word for t in spec.tokens), domains=("d",),
                         feature_dim=8, image_size=16, image_filters=8, text_hidden=16,
                         text_heads=2, text_layers=1, text_max_len=8,
                         mlp_widths=(8, 16, 16, 8), head_widths=(8, 16, 16))
    mlp = ContentScorer(config, seed=3)
    features = (rng.random(8) > 0.4).astype(np.float32)
    target = Content(id="shap", features=features)

    def value(subset):
        masked = np.zeros_like(features)
        for i in subset:
            masked[i] = features[i]
        return mlp.predict_pre(Content(id="v", features=masked))

    want = exact_shapley(value, 8)
    got = kernel_shap(mlp, target, BaselineSpec.scoped("features"), n_samples=2048, seed=SEED)
    shap_err = float(np.abs(got.features - want).max())
    assert shap_err <= 0.02

    # completeness of the path integral at 256 steps on a small MLP
    ds = generate_synthetic(replace(spec, image_size=16, grid=2), n_items=6, n_pairs=0, seed=3)
    mm_config = ModelConfig.from_dataset(ds, image_size=16, image_filters=8, text_hidden=16,
                                         text_heads=2, text_layers=1, text_max_len=8,
                                         mlp_widths=(8, 16, 16, 8), head_widths=(8, 16, 16))
    mm = ContentScorer(mm_config, seed=4)
    cid = next(c for c in ds.ids() if ds.contents[c].has_image and ds.contents[c].has_text)
    item = ds.contents[cid]
    baseline = BaselineSpec()
    amap = integrated_gradients(mm, item, baseline, steps=256)
    natural = mm.input_arrays(item)
    gap = pre_at(mm, item, natural) - pre_at(mm, item, baseline.arrays_for(natural))
    residual = abs(amap.total() - gap) / max(abs(gap), 1e-12)
    assert residual <= 1e-2

    elapsed = time.time() - started
    assert elapsed < 120
    _announce("attribution-exactness",
              f"linear IG {ig_err:.1e}, ablation {ab_err:.1e}, shap vs enumeration {shap_err:.4f}, "
              f"IG completeness {residual:.4%}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 3. scorer learns the synthetic signal


def test_scorer_learns_synthetic_signal(stock_data, trained):
    model, train_seconds = trained
    report = evaluate_model(model, stock_data, "test_in")
    assert report["rmse"] <= 0.05, f"held-out RMSE {report['rmse']:.4f}"

    pairs = stock_data.best_treatment_pairs("test_in")
    assert len(pairs) >= 100
    ids = sorted({cid for pair in pairs for cid in pair})
    index = {cid: i for i, cid in enumerate(ids)}
    preds = model.predict_batch([stock_data.contents[c] for c in ids])
    truth = np.array([stock_data.rate(c) for c in ids])
    accuracy = pairwise_accuracy(preds, truth, pairs=[(index[a], index[b]) for a, b in pairs])
    assert accuracy >= 0.90, f"pairwise accuracy {accuracy:.4f}"
    _announce("scorer-quality",
              f"held-out RMSE {report['rmse']:.4f} <= 0.05, pairwise accuracy {accuracy:.4f} >= 0.90 "
              f"on {len(pairs)} pairs, trained in {train_seconds:.0f}s")


def test_multimodal_beats_linear_on_interactions():
    started = time.time()
    dataset = generate_synthetic(nonlinear_spec(), n_items=1200, n_pairs=150, seed=SEED)
    dataset = split_dataset(dataset, seed=SEED)
    linear = LinearBagModel(dataset).fit(dataset, split="train")
    linear_rmse = linear.evaluate(dataset, "test_in")["rmse"]

    config = ModelConfig.from_dataset(dataset, mlp_widths=(32, 64, 64, 32), head_widths=(32, 64, 64))
    cfg = TrainConfig.from_dict({
        "domain": {"epochs": 40, "batch_size": 256, "lr": 1e-3},
        "features": {"epochs": 40, "batch_size": 256, "lr": 1e-3},
        "joint": {"epochs": 80, "batch_size": 64, "lr": 2e-3},
    })
    model = train_full(dataset, config, cfg, seed=SEED, modalities=("domain", "features"))
    mm_rmse = evaluate_model(model, dataset, "test_in")["rmse"]
    assert mm_rmse < linear_rmse, f"multimodal {mm_rmse:.4f} vs linear {linear_rmse:.4f}"
    _announce("beats-linear-baseline",
              f"interaction data: multimodal RMSE {mm_rmse:.4f} < linear {linear_rmse:.4f}, "
              f"{time.time() - started:.0f}s")


# ---------------------------------------------------------------------------
# 4. evaluation harness calibration


def test_evaluation_harness_calibration(stock_data, trained):
    model, _ = trained
    started = time.time()
    ds = stock_data
    text_pairs = pairs_differing(ds, "text")
    image_pairs = pairs_differing(ds, "image")
    assert len(text_pairs) >= 200 and len(image_pairs) >= 200

    def text_report(maps):
        ids = sorted({c for p in text_pairs for c in p})
        return eval_text(text_pairs, {c: ds.contents[c].tokens for c in ids},
                         {c: ds.rate(c) for c in ids}, {c: maps(c) for c in ids})

    feature_fn = model_feature_extractor(model)

    def image_report(maps):
        ids = sorted({c for p in image_pairs for c in p})
        return eval_image(image_pairs, {c: ds.contents[c].image for c in ids},
                          {c: ds.rate(c) for c in ids}, {c: maps(c) for c in ids}, feature_fn)

    oracle = oracle_attributor(ds)
    oracle_text = text_report(lambda c: oracle(ds.contents[c])).rho
    assert oracle_text >= 0.95, f"oracle text rho {oracle_text:.4f}"
    oracle_image = image_report(lambda c: oracle(ds.contents[c])).rho
    assert oracle_image >= 0.90, f"oracle image rho {oracle_image:.4f}"

    rand = random_attributor(ds, seed=0)
    rand_text = text_report(lambda c: rand(ds.contents[c])).rho
    rand_image = image_report(lambda c: rand(ds.contents[c])).rho
    assert abs(rand_text) <= 0.1 and abs(rand_image) <= 0.1

    # trained-model attributions: PCA against the four individual methods
    image_ids = sorted({c for p in image_pairs for c in p})
    per_method = {}
    rhos = {}
    for method in ("activation", "integrated_gradients", "feature_ablation", "kernel_shap"):
        attr = ModelAttributor(model, method, BaselineSpec.scoped("image"), steps=16,
                               image_tile=16 if method == "kernel_shap" else 8, seed=SEED)
        per_method[method] = {c: attr(ds.contents[c]) for c in image_ids}
        rhos[method] = image_report(lambda c, m=method: per_method[m][c]).rho
    aggregated = {c: pca_aggregate([per_method[m][c] for m in per_method]) for c in image_ids}
    pca_rho = image_report(lambda c: aggregated[c]).rho
    median_rho = float(np.median(list(rhos.values())))
    assert pca_rho >= median_rho - 1e-12, f"pca {pca_rho:.4f} vs median {median_rho:.4f}"

    elapsed = time.time() - started
    assert elapsed < 600
    _announce("evaluation-harness",
              f"oracle text {oracle_text:.3f}>=0.95 image {oracle_image:.3f}>=0.90 over "
              f"{len(text_pairs)}/{len(image_pairs)} pairs; random |rho| "
              f"{max(abs(rand_text), abs(rand_image)):.3f}<=0.1; pca {pca_rho:.3f} >= "
              f"median({', '.join(f'{m}={v:.3f}' for m, v in rhos.items())}) = {median_rho:.3f}; "
              f"{elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 5. replacement ordering property, operationalized on the trained model


def test_feature_replacement_raises_true_rate(stock_data, trained):
    model, _ = trained
    ds = stock_data
    spec = default_spec()
    planted = {t.word: t.contribution for t in spec.tokens}

    attributor = ModelAttributor(model, "feature_ablation", BaselineSpec.scoped("text"))
    tables = {
        domain: rank_scores(ds, domain, attributor, word_extractor(ds), kind="word")
        for domain in ds.domains
    }
    table_scores = {d: {e.key: e.score for e in t.entries} for d, t in tables.items()}

    rng = np.random.default_rng(SEED)
    with_text = [cid for cid in ds.ids() if ds.contents[cid].has_text]
    wins = 0
    trials = 0
    while trials < 500:
        cid = with_text[int(rng.integers(len(with_text)))]
        content = ds.contents[cid]
        scores = table_scores[content.domain]
        pos = int(rng.integers(len(content.tokens)))
        current = ds.vocab[content.tokens[pos]]
        if current not in scores:
            continue
        present = {ds.vocab[t] for t in content.tokens}
        better = [w for w, s in scores.items() if w not in present and s > scores[current]]
        if not better:
            continue
        pick = better[int(rng.integers(len(better)))]
        trials += 1
        if planted[pick] > planted[current]:
            wins += 1
    rate = wins / trials
    assert rate >= 0.90, f"true rate rose in {rate:.1%} of trials"
    _announce("replacement-ordering", f"true rate rose in {rate:.1%} of 500 seeded swaps (>= 90%)")


# ---------------------------------------------------------------------------
# 6. insight fidelity


def test_rank_table_matches_planted_ordering(stock_data, trained):
    model, _ = trained
    ds = stock_data
    planted = {t.word: t.contribution for t in default_spec().tokens}
    attributor = ModelAttributor(model, "feature_ablation", BaselineSpec.scoped("text"))
    worst = 1.0
    for domain in ds.domains:
        table = rank_scores(ds, domain, attributor, word_extractor(ds), kind="word")
        got = [e.score for e in table.entries]
        want = [planted[e.key] for e in table.entries]
        rho, _ = scipy.stats.spearmanr(got, want)
        worst = min(worst, float(rho))
    assert worst >= 0.8, f"worst domain Spearman {worst:.4f}"
    _announce("rank-table-fidelity", f"Spearman vs planted scores >= {worst:.3f} across {len(ds.domains)} domains")


def test_patch_cluster_purity(trained):
    model, _ = trained
    spec = default_spec()
    three = replace(spec, motifs=(spec.motifs[2], spec.motifs[6], spec.motifs[11]),
                    motifs_per_item=(2, 3), mutation_weights=(1.0, 0.0, 0.0))
    ds = generate_synthetic(three, n_items=30, n_pairs=0, seed=SEED)
    crops = []
    labels = []
    cell = three.cell
    for cid in ds.ids():
        gt = ds.ground_truth[cid]
        image = ds.contents[cid].image
        for row, col, midx in gt.cells:
            crop = image[row * cell : (row + 1) * cell, col * cell : (col + 1) * cell]
            crops.append(crop.transpose(2, 0, 1).astype(np.float32))
            labels.append(midx)
    assert len(crops) >= 60
    embeddings = model.embed_modality_batch("image", np.stack(crops))
    assignments, chosen_k, _ = cluster_patches(embeddings, k_range=(2, 6), seed=SEED)
    labels = np.asarray(labels)
    agreeing = 0
    for cluster in np.unique(assignments):
        members = labels[assignments == cluster]
        agreeing += np.bincount(members).max()
    purity = agreeing / len(labels)
    assert purity >= 0.9, f"purity {purity:.3f}"
    _announce("patch-cluster-purity", f"purity {purity:.3f} >= 0.9 over {len(labels)} crops (k={chosen_k})")


def test_nms_matches_bruteforce_on_100_maps():
    from test_insights import brute_force_patches

    rng = np.random.default_rng(SEED)
    for _ in range(100):
        attr_map = rng.standard_normal((24, 24))
        got = extract_patches(attr_map, k=5, patch_size=6, overlap_threshold=0.3)
        want = brute_force_patches(attr_map, k=5, size=6, threshold=0.3)
        assert [(p.row, p.col) for p in got] == [(r, c) for r, c, _ in want]
    _announce("nms-oracle", "greedy NMS identical to brute force on 100 random maps")


# ---------------------------------------------------------------------------
# 7. CLI determinism


def test_cli_reruns_are_bit_identical(tmp_path):
    runner = CliRunner()
    roots = [tmp_path / "one", tmp_path / "two"]
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "model": {"image_size": 16, "image_filters": 8, "text_hidden": 16, "text_heads": 2,
                   "text_layers": 1, "text_max_len": 8,
                   "mlp_widths": [16, 32, 32, 16], "head_widths": [16, 32, 32]},
        "train": {"image": {"epochs": 2}, "text": {"epochs": 2},
                   "domain": {"epochs": 2, "batch_size": 64},
                   "features": {"epochs": 2, "batch_size": 64},
                   "joint": {"epochs": 3}},
    }))

    for root in roots:
        for args in (
            ["synth-gen", "--seed", "11", "--variant", "tiny", "--items", "60", "--pairs", "12", "--out", str(root)],
            ["train", "--seed", "11", "--data", str(root / "data"), "--config", str(config), "--out", str(root)],
            ["score", "--seed", "11", "--model", str(root / "model"), "--data", str(root / "data"),
             "--id", "c000001", "--out", str(root)],
            ["attribute", "--seed", "11", "--model", str(root / "model"), "--data", str(root / "data"),
             "--id", "c000001", "--method", "integrated_gradients", "--out", str(root)],
            ["insights", "--seed", "11", "--model", str(root / "model"), "--data", str(root / "data"),
             "--out", str(root)],
            ["evaluate", "--seed", "11", "--model", str(root / "model"), "--data", str(root / "data"),
             "--attributor", "model:feature_ablation", "--out", str(root)],
        ):
            result = runner.invoke(cli_main, args)
            assert result.exit_code == 0, f"{args[0]} failed:\n{result.output}"

    compared = 0
    for path in sorted(roots[0].rglob("*")):
        if not path.is_file() or path.name == "config.json":
            continue
        twin = roots[1] / path.relative_to(roots[0])
        assert twin.is_file(), f"missing twin for {path}"
        assert path.read_bytes() == twin.read_bytes(), f"artifact differs: {path.relative_to(roots[0])}"
        compared += 1
    assert compared > 10
    _announce("cli-determinism", f"{compared} artifacts bit-identical across two seeded runs "
                                 "of synth-gen/train/score/attribute/insights/evaluate")
