"""The multimodal success-rate model.

Four encoders feed a concatenation fusion and a sigmoid regression head:

    image    conv stem + 4 residual blocks + global average pool
    text     token + position embeddings, transformer blocks, masked mean pool
    domain   one-hot through a 4-layer fc stack
    features 4-layer fc stack

A missing modality contributes an exact zero vector to the fusion (done by
multiplying the encoder output with a per-item presence flag, which equals
substituting the zero embedding bit for bit). The head output is pre-sigmoid;
``predict`` applies the sigmoid so scores live in (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data.types import Content, DataError
from ..nn import Graph, ParamStore, Tensor, ops, serial
from ..util import rng_for
from .config import ModelConfig
from .layers import BatchNorm, Conv, Linear, MlpStack, ResBlock, TransformerBlock

MODALITIES = ("image", "text", "domain", "features")

NEG_BIAS = np.float32(-1e9)


@dataclass
class Batch:
    ids: list
    images: np.ndarray  # (B, 3, H, W)
    img_present: np.ndarray  # (B, 1)
    token_ids: np.ndarray  # (B, L) int64, PAD-filled
    text_mask: np.ndarray  # (B, L) float32
    text_present: np.ndarray
    domains: np.ndarray  # (B, D) one-hot
    dom_present: np.ndarray
    features: np.ndarray  # (B, F)
    feat_present: np.ndarray

    @property
    def size(self) -> int:
        return len(self.ids)


class ContentScorer:
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.store = ParamStore()
        rng = rng_for(seed, "model-init")
        c = config

        self.stem = Conv(self.store, "image.stem", 3, c.image_filters, 3, 1, 1, rng)
        self.blocks = [
            ResBlock(self.store, "image.block1", c.image_filters, c.image_filters, 1, rng, c.bn_momentum, c.bn_eps),
            ResBlock(self.store, "image.block2", c.image_filters, c.image_filters, 2, rng, c.bn_momentum, c.bn_eps),
            ResBlock(self.store, "image.block3", c.image_filters, c.image_filters, 2, rng, c.bn_momentum, c.bn_eps),
            ResBlock(self.store, "image.block4", c.image_filters, c.image_filters, 2, rng, c.bn_momentum, c.bn_eps),
        ]
        self.final_bn = BatchNorm(self.store, "image.final_bn", c.image_filters, c.bn_momentum, c.bn_eps)

        bound = 1.0 / np.sqrt(c.text_hidden)
        self.store.create("text.tokens", rng.uniform(-bound, bound, (c.vocab_size + 1, c.text_hidden)).astype(np.float32))
        self.store.create("text.positions", rng.uniform(-bound, bound, (c.text_max_len, c.text_hidden)).astype(np.float32))
        self.text_blocks = [
            TransformerBlock(self.store, f"text.block{i + 1}", c.text_hidden, c.text_heads, rng)
            for i in range(c.text_layers)
        ]

        self.domain_mlp = MlpStack(self.store, "domain", c.n_domains, c.mlp_widths, rng, c.bn_momentum, c.bn_eps, c.elu_alpha)
        self.feature_mlp = MlpStack(self.store, "features", c.feature_dim, c.mlp_widths, rng, c.bn_momentum, c.bn_eps, c.elu_alpha)
        self.head_mlp = MlpStack(self.store, "head", c.fusion_width, c.head_widths, rng, c.bn_momentum, c.bn_eps, c.elu_alpha)
        self.head_out = Linear(self.store, "head.out", c.head_widths[-1], 1, rng)

    # -- encoder forwards -------------------------------------------------------

    def image_forward(self, x: Tensor, training: bool, collect: dict | None = None):
        h = ops.relu(self.stem(x))
        if collect is not None:
            collect["image.stem"] = h
        for i, block in enumerate(self.blocks, start=1):
            h = block(h, training)
            if collect is not None:
                collect[f"image.block{i}"] = h
        h = ops.relu(self.final_bn(h, training))
        if collect is not None:
            collect["image.final"] = h
        return ops.global_avg_pool(h)

    def conv_layer_names(self) -> list:
        return ["image.stem"] + [f"image.block{i}" for i in range(1, 5)] + ["image.final"]

    def text_forward(self, emb: Tensor, mask: np.ndarray | None, collect: dict | None = None):
        """Encode token embeddings (B, L, H); mask rows mark real tokens."""
        b, length, hidden = emb.shape
        positions = ops.embedding(self.store.tensor("text.positions"), np.arange(length))
        x = ops.add(emb, positions)
        bias = None
        if mask is not None and (mask < 0.5).any():
            # masked keys get -1e9 so softmax ignores PAD positions
            bias = Tensor(((mask - 1.0) * -float(NEG_BIAS))[:, None, None, :], _check=False)
        for i, block in enumerate(self.text_blocks, start=1):
            x = block(x, bias)
            if collect is not None:
                collect[f"text.block{i}"] = x
        if mask is None:
            return ops.mean(x, axis=1)
        counts = np.maximum(mask.sum(axis=1, keepdims=True), 1.0).astype(np.float32)
        pooled = ops.total(ops.mul(x, Tensor(mask[:, :, None], _check=False)), axis=1)
        return ops.mul(pooled, Tensor(1.0 / counts, _check=False))

    # -- batched scoring ---------------------------------------------------------

    def prepare_batch(self, contents) -> Batch:
        c = self.config
        b = len(contents)
        problems = []
        longest = 1
        for item in contents:
            if item.tokens:
                if max(item.tokens) >= c.vocab_size or min(item.tokens) < 0:
                    problems.append(f"{item.id}: token id outside vocabulary of size {c.vocab_size}")
                longest = max(longest, min(len(item.tokens), c.text_max_len))
            if item.features is not None and item.features.shape != (c.feature_dim,):
                problems.append(f"{item.id}: feature vector must have length {c.feature_dim}")
            if item.image is not None and (item.image.ndim != 3 or item.image.shape[2] != 3):
                problems.append(f"{item.id}: image must be (H, W, 3)")
        if problems:
            raise DataError("cannot score:\n  " + "\n  ".join(problems))

        shapes = {item.image.shape for item in contents if item.image is not None}
        if len(shapes) > 1:
            raise DataError(f"one batch cannot mix image shapes: {sorted(shapes)}")
        hw = next(iter(shapes))[:2] if shapes else (c.image_size, c.image_size)

        images = np.zeros((b, 3, *hw), dtype=np.float32)
        img_present = np.zeros((b, 1), dtype=np.float32)
        token_ids = np.full((b, longest), c.pad_id, dtype=np.int64)
        text_mask = np.zeros((b, longest), dtype=np.float32)
        text_present = np.zeros((b, 1), dtype=np.float32)
        domains = np.zeros((b, c.n_domains), dtype=np.float32)
        dom_present = np.zeros((b, 1), dtype=np.float32)
        features = np.zeros((b, c.feature_dim), dtype=np.float32)
        feat_present = np.zeros((b, 1), dtype=np.float32)
        for i, item in enumerate(contents):
            if item.image is not None:
                images[i] = item.image.transpose(2, 0, 1)
                img_present[i] = 1.0
            if item.tokens:
                ids = list(item.tokens[: c.text_max_len])
                token_ids[i, : len(ids)] = ids
                text_mask[i, : len(ids)] = 1.0
                text_present[i] = 1.0
            if item.domain is not None and item.domain in c.domains:
                domains[i, c.domains.index(item.domain)] = 1.0
                dom_present[i] = 1.0
            if item.features is not None:
                features[i] = item.features
                feat_present[i] = 1.0
        return Batch([item.id for item in contents], images, img_present, token_ids,
                     text_mask, text_present, domains, dom_present, features, feat_present)

    def forward_batch(self, batch: Batch, training: bool = False,
                      image_embeddings: np.ndarray | None = None) -> Tensor:
        """Pre-sigmoid predictions (B, 1); pass cached image embeddings to skip
        (and thereby freeze) the image encoder."""
        if image_embeddings is not None:
            img_emb = Tensor(image_embeddings.astype(np.float32, copy=False), _check=False)
        else:
            img_emb = self.image_forward(Tensor(batch.images, _check=False), training)
        img_emb = ops.mul(img_emb, Tensor(batch.img_present, _check=False))
        emb = ops.embedding(self.store.tensor("text.tokens"), batch.token_ids)
        t_emb = self.text_forward(emb, batch.text_mask)
        t_emb = ops.mul(t_emb, Tensor(batch.text_present, _check=False))
        d_emb = ops.mul(self.domain_mlp(Tensor(batch.domains, _check=False), training),
                        Tensor(batch.dom_present, _check=False))
        f_emb = ops.mul(self.feature_mlp(Tensor(batch.features, _check=False), training),
                        Tensor(batch.feat_present, _check=False))
        fused = ops.concat([img_emb, t_emb, d_emb, f_emb], axis=1)
        return self.head_out(self.head_mlp(fused, training))

    def predict_pre_batch(self, contents) -> np.ndarray:
        pre = self.forward_batch(self.prepare_batch(contents), training=False)
        return pre.data[:, 0].copy()

    def predict_batch(self, contents) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.predict_pre_batch(contents)))

    def predict(self, content: Content) -> float:
        return float(self.predict_batch([content])[0])

    def predict_pre(self, content: Content) -> float:
        return float(self.predict_pre_batch([content])[0])

    def encode(self, content: Content) -> dict:
        """Per-modality embeddings; absent modalities give exact zero vectors."""
        batch = self.prepare_batch([content])
        c = self.config
        out = {}
        if content.has_image:
            out["image"] = self.image_forward(Tensor(batch.images, _check=False), False).data[0].copy()
        else:
            out["image"] = np.zeros(c.image_width, dtype=np.float32)
        if content.has_text:
            emb = ops.embedding(self.store.tensor("text.tokens"), batch.token_ids)
            out["text"] = self.text_forward(emb, batch.text_mask).data[0].copy()
        else:
            out["text"] = np.zeros(c.text_width, dtype=np.float32)
        if batch.dom_present[0, 0] > 0:
            out["domain"] = self.domain_mlp(Tensor(batch.domains, _check=False), False).data[0].copy()
        else:
            out["domain"] = np.zeros(c.domain_width, dtype=np.float32)
        if content.has_features:
            out["features"] = self.feature_mlp(Tensor(batch.features, _check=False), False).data[0].copy()
        else:
            out["features"] = np.zeros(c.feature_width, dtype=np.float32)
        return out

    # -- attribution support -----------------------------------------------------

    def text_length(self, content: Content) -> int:
        return min(len(content.tokens or ()), self.config.text_max_len)

    def input_arrays(self, content: Content) -> dict:
        """The raw per-modality inputs attribution methods perturb."""
        arrays = {}
        if content.has_image:
            arrays["image"] = content.image.transpose(2, 0, 1).astype(np.float32)
        if content.has_text:
            ids = np.asarray(content.tokens[: self.config.text_max_len], dtype=np.int64)
            arrays["text_emb"] = self.store.get("text.tokens")[ids].copy()
        if content.has_domain and content.domain in self.config.domains:
            onehot = np.zeros(self.config.n_domains, dtype=np.float32)
            onehot[self.config.domains.index(content.domain)] = 1.0
            arrays["domain"] = onehot
        if content.has_features:
            arrays["features"] = content.features.astype(np.float32)
        return arrays

    def attribution_forward(self, content: Content, overrides: dict | None = None,
                            fixed_embeddings: dict | None = None,
                            want_activations: bool = False):
        """Forward with raw inputs exposed as named graph leaves.

        Override arrays may carry a leading batch axis; every other input is
        tiled to match. ``fixed_embeddings`` short-circuits whole encoders with
        constant vectors (used to hold clamped modalities out of the path).
        Returns (graph, pre, leaves, activations).
        """
        overrides = overrides or {}
        fixed_embeddings = fixed_embeddings or {}
        natural = self.input_arrays(content)
        c = self.config

        batch = 1
        for mod, arr in overrides.items():
            if mod not in natural:
                raise DataError(f"override for absent modality {mod!r}")
            if arr.ndim == natural[mod].ndim + 1:
                batch = max(batch, arr.shape[0])

        def staged(mod):
            arr = np.asarray(overrides.get(mod, natural[mod]), dtype=np.float32)
            if arr.ndim == natural[mod].ndim:
                arr = np.broadcast_to(arr, (batch, *arr.shape))
            return np.ascontiguousarray(arr)

        collect: dict | None = {} if want_activations else None
        leaves = {}
        with Graph() as g:
            if "image" in fixed_embeddings:
                img_emb = Tensor(np.broadcast_to(fixed_embeddings["image"], (batch, c.image_width)).copy(), _check=False)
            elif "image" in natural:
                leaf = Tensor(staged("image"), _check=False)
                g.register_input("image", leaf)
                leaves["image"] = leaf
                img_emb = self.image_forward(leaf, False, collect)
            else:
                img_emb = Tensor(np.zeros((batch, c.image_width), dtype=np.float32), _check=False)
            if "text" in fixed_embeddings:
                t_emb = Tensor(np.broadcast_to(fixed_embeddings["text"], (batch, c.text_width)).copy(), _check=False)
            elif "text_emb" in natural:
                leaf = Tensor(staged("text_emb"), _check=False)
                g.register_input("text_emb", leaf)
                leaves["text_emb"] = leaf
                t_emb = self.text_forward(leaf, None, collect)
            else:
                t_emb = Tensor(np.zeros((batch, c.text_width), dtype=np.float32), _check=False)
            if "domain" in fixed_embeddings:
                d_emb = Tensor(np.broadcast_to(fixed_embeddings["domain"], (batch, c.domain_width)).copy(), _check=False)
            elif "domain" in natural:
                leaf = Tensor(staged("domain"), _check=False)
                g.register_input("domain", leaf)
                leaves["domain"] = leaf
                d_emb = self.domain_mlp(leaf, False)
            else:
                d_emb = Tensor(np.zeros((batch, c.domain_width), dtype=np.float32), _check=False)
            if "features" in fixed_embeddings:
                f_emb = Tensor(np.broadcast_to(fixed_embeddings["features"], (batch, c.feature_width)).copy(), _check=False)
            elif "features" in natural:
                leaf = Tensor(staged("features"), _check=False)
                g.register_input("features", leaf)
                leaves["features"] = leaf
                f_emb = self.feature_mlp(leaf, False)
            else:
                f_emb = Tensor(np.zeros((batch, c.feature_width), dtype=np.float32), _check=False)
            fused = ops.concat([img_emb, t_emb, d_emb, f_emb], axis=1)
            pre = self.head_out(self.head_mlp(fused, False))
        return g, pre, leaves, (collect or {})

    def embed_modality_batch(self, modality: str, arrays: np.ndarray) -> np.ndarray:
        """Eager batched encoder run on raw input arrays (attribution reuse)."""
        arrays = np.ascontiguousarray(arrays, dtype=np.float32)
        if modality == "image":
            return self.image_forward(Tensor(arrays, _check=False), False).data
        if modality == "text_emb":
            return self.text_forward(Tensor(arrays, _check=False), None).data
        if modality == "domain":
            return self.domain_mlp(Tensor(arrays, _check=False), False).data
        if modality == "features":
            return self.feature_mlp(Tensor(arrays, _check=False), False).data
        raise DataError(f"unknown modality {modality!r}")

    def head_pre_from_embeddings(self, embeddings: dict, batch: int) -> np.ndarray:
        """Pre-sigmoid scores from per-modality embedding arrays (B, width)."""
        c = self.config
        parts = []
        for mod, width in (("image", c.image_width), ("text", c.text_width),
                           ("domain", c.domain_width), ("features", c.feature_width)):
            arr = embeddings.get(mod)
            if arr is None:
                arr = np.zeros((batch, width), dtype=np.float32)
            elif arr.ndim == 1:
                arr = np.broadcast_to(arr, (batch, width))
            parts.append(np.ascontiguousarray(arr, dtype=np.float32))
        fused = Tensor(np.concatenate(parts, axis=1), _check=False)
        return self.head_out(self.head_mlp(fused, False)).data[:, 0].copy()

    # -- persistence ---------------------------------------------------------------

    def save(self, path) -> None:
        serial.save_arrays(path, self.config.digest(), self.store.state_arrays())

    @classmethod
    def load(cls, path, config: ModelConfig) -> "ContentScorer":
        model = cls(config, seed=0)
        digest, arrays = serial.load_arrays(path, expect_digest=config.digest())
        model.store.load_state_arrays(arrays)
        return model
