from itertools import combinations
from math import factorial

import numpy as np
import pytest

from adlens.attribution import (
    AttributionError,
    AttributionMap,
    BaselineSpec,
    Group,
    activation_attribution,
    default_groups,
    feature_ablation,
    integrated_gradients,
    kernel_shap,
    pca_aggregate,
    rescale_to_prediction,
    split_signed,
    validate_groups,
)
from adlens.data import Content, generate_synthetic, tiny_spec
from adlens.model import ContentScorer, ModelConfig

from helpers import LinearFeatureModel, pre_at


# ---------------------------------------------------------------------------
# independent oracles


def exact_shapley(value_fn, m):
    """Textbook Shapley values by full subset enumeration."""
    cache = {}

    def v(subset):
        key = frozenset(subset)
        if key not in cache:
            cache[key] = value_fn(key)
        return cache[key]

    phi = np.zeros(m)
    for i in range(m):
        others = [j for j in range(m) if j != i]
        for size in range(m):
            for subset in combinations(others, size):
                weight = factorial(size) * factorial(m - size - 1) / factorial(m)
                phi[i] += weight * (v(set(subset) | {i}) - v(set(subset)))
    return phi


# ---------------------------------------------------------------------------
# fixtures


def _feature_content(values, cid="x"):
    return Content(id=cid, features=np.asarray(values, dtype=np.float32))


@pytest.fixture(scope="module")
def small_scorer():
    ds = generate_synthetic(tiny_spec(), n_items=4, n_pairs=0, seed=0)
    config = ModelConfig.from_dataset(
        ds, image_size=16, image_filters=8, text_hidden=16, text_heads=2,
        text_layers=1, text_max_len=8, mlp_widths=(8, 16, 16, 8), head_widths=(8, 16, 16))
    return ContentScorer(config, seed=1), ds


# ---------------------------------------------------------------------------
# integrated gradients


def test_ig_zero_on_constant_model(small_scorer):
    model, ds = small_scorer
    model2 = ContentScorer(model.config, seed=1)
    model2.store.set("head.out.w", np.zeros_like(model2.store.get("head.out.w")))
    model2.store.set("head.out.b", np.zeros_like(model2.store.get("head.out.b")))
    cid = ds.ids()[0]
    amap = integrated_gradients(model2, ds.contents[cid], steps=8)
    assert abs(amap.total()) < 1e-8


def test_ig_exact_on_linear_model():
    rng = np.random.default_rng(0)
    w = rng.standard_normal(6)
    x = rng.standard_normal(6)
    model = LinearFeatureModel(w, b=0.3)
    amap = integrated_gradients(model, _feature_content(x), steps=16)
    np.testing.assert_allclose(amap.features, w * x, atol=1e-6)


def test_ig_rejects_too_few_steps():
    model = LinearFeatureModel(np.ones(2))
    with pytest.raises(AttributionError):
        integrated_gradients(model, _feature_content([1.0, 2.0]), steps=4)


def test_ig_completeness_on_mlp(small_scorer):
    model, ds = small_scorer
    cid = next(c for c in ds.ids() if ds.contents[c].has_image and ds.contents[c].has_text)
    content = ds.contents[cid]
    baseline = BaselineSpec()
    amap = integrated_gradients(model, content, baseline, steps=256)
    natural = model.input_arrays(content)
    base = baseline.arrays_for(natural)
    gap = pre_at(model, content, natural) - pre_at(model, content, base)
    residual = abs(amap.total() - gap) / max(abs(gap), 1e-9)
    assert residual <= 1e-2


def test_ig_kept_domain_scores_zero(small_scorer):
    model, ds = small_scorer
    cid = ds.ids()[0]
    amap = integrated_gradients(model, ds.contents[cid], BaselineSpec(), steps=8)
    assert amap.domain == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# feature ablation


def test_ablation_exact_on_linear_model():
    rng = np.random.default_rng(1)
    w = rng.standard_normal(5)
    x = rng.standard_normal(5)
    model = LinearFeatureModel(w, b=-0.2)
    amap = feature_ablation(model, _feature_content(x))
    np.testing.assert_allclose(amap.features, w * x, atol=1e-6)


def test_ablation_zero_when_group_equals_baseline():
    model = LinearFeatureModel(np.array([1.0, 2.0, 3.0]))
    amap = feature_ablation(model, _feature_content([0.5, 0.0, 1.0]))
    assert amap.features[1] == pytest.approx(0.0, abs=1e-7)


def test_ablation_matches_definitional_oracle(small_scorer):
    # recompute pre(x) - pre(x with group zeroed) through the graph path
    model, ds = small_scorer
    cid = next(c for c in ds.ids() if ds.contents[c].has_features)
    content = ds.contents[cid]
    baseline = BaselineSpec.scoped("features")
    amap = feature_ablation(model, content, baseline)
    natural = model.input_arrays(content)
    full = pre_at(model, content, natural)
    for dim in range(content.features.shape[0]):
        arrays = {k: v.copy() for k, v in natural.items()}
        arrays["features"][dim] = 0.0
        want = full - pre_at(model, content, arrays)
        assert amap.features[dim] == pytest.approx(want, abs=1e-5)


def test_ablation_rejects_non_partition(small_scorer):
    model, ds = small_scorer
    cid = next(c for c in ds.ids() if ds.contents[c].has_features)
    content = ds.contents[cid]
    bad = [Group("features", (0,), "f0")]  # misses the other dims
    with pytest.raises(AttributionError):
        feature_ablation(model, content, BaselineSpec.scoped("features"), groups=bad)


# ---------------------------------------------------------------------------
# kernel SHAP


def test_shap_exact_on_linear_model():
    rng = np.random.default_rng(2)
    w = rng.standard_normal(5)
    x = rng.standard_normal(5)
    model = LinearFeatureModel(w, b=0.1)
    amap = kernel_shap(model, _feature_content(x), n_samples=64, seed=3)
    np.testing.assert_allclose(amap.features, w * x, atol=1e-6)


def test_shap_single_group_is_efficiency():
    model = LinearFeatureModel(np.array([0.5, -1.5]))
    content = _feature_content([2.0, 1.0])
    groups = [Group("features", (0, 1), "all")]
    amap = kernel_shap(model, content, groups=groups, n_samples=8)
    gap = model.predict_pre(content) - 0.0
    assert amap.features.sum() == pytest.approx(gap, abs=1e-6)


def test_shap_matches_enumeration_oracle_on_mlp(small_scorer):
    base_model, ds = small_scorer
    config = ModelConfig(
        vocab=ds.vocab, domains=ds.domains, feature_dim=8, image_size=16,
        image_filters=8, text_hidden=16, text_heads=2, text_layers=1,
        text_max_len=8, mlp_widths=(8, 16, 16, 8), head_widths=(8, 16, 16))
    model = ContentScorer(config, seed=2)
    rng = np.random.default_rng(4)
    x = (rng.random(8) > 0.4).astype(np.float32)
    content = Content(id="shap", features=x)

    def value(subset):
        masked = np.zeros_like(x)
        for i in subset:
            masked[i] = x[i]
        return model.predict_pre(Content(id="v", features=masked))

    want = exact_shapley(value, 8)
    amap = kernel_shap(model, content, BaselineSpec.scoped("features"), n_samples=2048, seed=5)
    assert np.abs(amap.features - want).max() <= 0.02
    # efficiency holds exactly by construction
    gap = model.predict_pre(content) - model.predict_pre(Content(id="e", features=np.zeros_like(x)))
    assert amap.features.sum() == pytest.approx(gap, abs=1e-5)


def test_shap_seeded_determinism(small_scorer):
    model, ds = small_scorer
    cid = next(c for c in ds.ids() if ds.contents[c].has_text)
    content = ds.contents[cid]
    a = kernel_shap(model, content, n_samples=2 * 30 + 2, seed=11, image_tile=8)
    b = kernel_shap(model, content, n_samples=2 * 30 + 2, seed=11, image_tile=8)
    assert a.flatten().tobytes() == b.flatten().tobytes()


def test_shap_insufficient_samples_rejected():
    model = LinearFeatureModel(np.ones(4))
    with pytest.raises(AttributionError):
        kernel_shap(model, _feature_content([1, 1, 1, 1]), n_samples=4)


# ---------------------------------------------------------------------------
# activation attribution


def test_activation_zero_on_constant_model(small_scorer):
    model, ds = small_scorer
    model2 = ContentScorer(model.config, seed=1)
    model2.store.set("head.out.w", np.zeros_like(model2.store.get("head.out.w")))
    cid = next(c for c in ds.ids() if ds.contents[c].has_image)
    amap = activation_attribution(model2, ds.contents[cid])
    np.testing.assert_allclose(amap.image, 0.0, atol=1e-9)


def test_activation_map_has_image_shape(small_scorer):
    model, ds = small_scorer
    cid = next(c for c in ds.ids() if ds.contents[c].has_image)
    content = ds.contents[cid]
    for layer in model.conv_layer_names():
        amap = activation_attribution(model, content, layer=layer)
        assert amap.image.shape == content.image.shape[:2]
        assert amap.text is None and amap.features is None


def test_activation_unknown_layer(small_scorer):
    model, ds = small_scorer
    cid = next(c for c in ds.ids() if ds.contents[c].has_image)
    with pytest.raises(AttributionError) as err:
        activation_attribution(model, ds.contents[cid], layer="text.block1")
    assert "image.final" in str(err.value)


# ---------------------------------------------------------------------------
# PCA aggregation


def _arbitrary_map(vec, cid="p", method="m"):
    return AttributionMap(content_id=cid, method=method, features=np.asarray(vec, dtype=np.float64))


def test_pca_identical_maps_returns_standardized_input():
    rng = np.random.default_rng(6)
    v = rng.standard_normal(12)
    out = pca_aggregate([_arbitrary_map(v, method="a"), _arbitrary_map(v, method="b")])
    standardized = (v - v.mean()) / v.std()
    ratio = out.features / standardized
    assert np.allclose(ratio, ratio[0]) and ratio[0] > 0


def test_pca_negation_uses_tie_rule():
    rng = np.random.default_rng(7)
    v = rng.standard_normal(9)
    out = pca_aggregate([_arbitrary_map(v, method="a"), _arbitrary_map(-v, method="b")])
    # mean map is zero; the largest-magnitude coordinate must come out positive
    assert out.features[np.argmax(np.abs(out.features))] > 0


def test_pca_matches_svd_oracle():
    rng = np.random.default_rng(8)
    maps = [_arbitrary_map(rng.standard_normal(40), method=f"m{i}") for i in range(3)]
    out = pca_aggregate(maps)
    matrix = np.stack([m.flatten() for m in maps])
    matrix = (matrix - matrix.mean(axis=1, keepdims=True)) / matrix.std(axis=1, keepdims=True)
    _, _, vt = np.linalg.svd(matrix, full_matrices=False)
    want = vt[0]
    if want @ matrix.mean(axis=0) < 0:
        want = -want
    np.testing.assert_allclose(np.abs(out.features), np.abs(want), atol=1e-6)
    np.testing.assert_allclose(out.features, want, atol=1e-6)


def test_pca_rejects_constant_map():
    with pytest.raises(AttributionError):
        pca_aggregate([_arbitrary_map(np.ones(5)), _arbitrary_map(np.arange(5.0))])


def test_pca_rejects_mismatched_modalities():
    a = _arbitrary_map(np.arange(4.0))
    b = AttributionMap(content_id="p", method="x", image=np.zeros((2, 2)))
    with pytest.raises(AttributionError):
        pca_aggregate([a, b])


# ---------------------------------------------------------------------------
# rescaling and the signed split


def test_rescale_no_op_when_total_matches():
    model = LinearFeatureModel(np.array([1.0, 1.0]))
    content = _feature_content([0.25, 0.25])
    amap = feature_ablation(model, content)
    target = model.predict(content)
    scaled = rescale_to_prediction(amap, model, content)
    assert scaled.rescaled and scaled.total() == pytest.approx(target, rel=1e-6)


def test_rescale_halves_doubled_map():
    model = LinearFeatureModel(np.array([2.0]))
    content = _feature_content([0.5])
    raw = AttributionMap(content_id="x", method="m", features=np.array([2.0 * model.predict(content)]))
    scaled = rescale_to_prediction(raw, model, content)
    assert scaled.features[0] == pytest.approx(model.predict(content))


def test_rescale_degenerate_uniform_spread():
    model = LinearFeatureModel(np.array([1.0, -1.0]))
    content = _feature_content([0.0, 0.0])
    raw = AttributionMap(content_id="x", method="m", features=np.zeros(2))
    scaled = rescale_to_prediction(raw, model, content)
    want = model.predict(content) / 2
    np.testing.assert_allclose(scaled.features, [want, want])


def test_split_signed_reconstructs():
    rng = np.random.default_rng(9)
    amap = AttributionMap(content_id="s", method="m",
                          image=rng.standard_normal((4, 4)),
                          text=rng.standard_normal(3),
                          features=rng.standard_normal(2),
                          domain=-0.2)
    pos, neg = split_signed(amap)
    np.testing.assert_array_equal(pos.image - neg.image, amap.image)
    np.testing.assert_array_equal(pos.text - neg.text, amap.text)
    assert (pos.image >= 0).all() and (neg.image >= 0).all()
    assert neg.domain == pytest.approx(0.2) and pos.domain == 0.0


def test_positive_scaling_preserves_ranking():
    rng = np.random.default_rng(10)
    scores = rng.standard_normal(20)
    amap = AttributionMap(content_id="r", method="m", features=scores)
    scaled = amap.scaled(7.3)
    assert list(np.argsort(amap.features)) == list(np.argsort(scaled.features))


def test_validate_groups_overlap_rejected(small_scorer):
    model, ds = small_scorer
    cid = next(c for c in ds.ids() if ds.contents[c].has_image)
    content = ds.contents[cid]
    h, w = content.image.shape[:2]
    overlapping = [Group("image", (0, 0, h, w), "a"), Group("image", (0, 0, 1, 1), "b")]
    with pytest.raises(AttributionError):
        validate_groups(overlapping, content)


def test_default_groups_cover_everything(small_scorer):
    model, ds = small_scorer
    cid = next(
        c for c in ds.ids()
        if ds.contents[c].has_image and ds.contents[c].has_text and ds.contents[c].has_features
    )
    content = ds.contents[cid]
    groups = default_groups(content, BaselineSpec(), image_tile=8,
                            text_length=model.text_length(content))
    validate_groups(groups, content, text_length=model.text_length(content))
    modalities = {g.modality for g in groups}
    assert modalities == {"image", "text", "features"}  # domain kept by default baseline
