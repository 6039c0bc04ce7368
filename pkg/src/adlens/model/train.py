"""Two-stage training: per-modality pretraining, then joint training.

Pretraining attaches a throwaway linear head to one encoder, fits it on the
modality-only view of the training split with MSE against the sigmoid of the
head output, and returns just the encoder weights. Joint training initializes
encoders from those weights; the image encoder can be frozen, in which case
its embeddings are computed once and reused (its weights and running stats
stay bit-identical). The checkpoint kept is the best-validation-loss epoch.
"""

from __future__ import annotations

import numpy as np

from ..data.types import DataError, Dataset
from ..nn import Graph, Tensor, backward, ops
from ..nn.optim import Adam
from ..util import rng_for
from .config import ModelConfig, StageConfig, TrainConfig
from .scorer import ContentScorer

_MODALITY_FLAG = {"image": "has_image", "text": "has_text", "domain": "has_domain", "features": "has_features"}


def _batches(ids, batch_size, rng):
    order = rng.permutation(len(ids))
    for start in range(0, len(ids), batch_size):
        chunk = order[start : start + batch_size]
        if len(chunk) >= 2:  # batch-norm needs at least two rows in train mode
            yield [ids[int(i)] for i in chunk]


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def pretrain_modality(modality: str, dataset: Dataset, config: ModelConfig,
                      stage: StageConfig, seed: int, crop: int = 0,
                      min_items: int = 8, log: list | None = None) -> dict:
    """Train one encoder against the success rate; returns its weight arrays."""
    if modality not in _MODALITY_FLAG:
        raise DataError(f"unknown modality {modality!r}")
    flag = _MODALITY_FLAG[modality]
    train_ids = [cid for cid in dataset.ids("train") if getattr(dataset.contents[cid], flag)]
    val_ids = [cid for cid in dataset.ids("val") if getattr(dataset.contents[cid], flag)]
    if len(train_ids) < min_items:
        raise DataError(f"modality {modality!r} present on only {len(train_ids)} training items (need {min_items})")

    model = ContentScorer(config, seed=seed)
    store = model.store
    width = {"image": config.image_width, "text": config.text_width,
             "domain": config.domain_width, "features": config.feature_width}[modality]
    head_rng = rng_for(seed, "pretrain-head", modality)
    bound = 1.0 / np.sqrt(width)
    store.create("pre_head.w", head_rng.uniform(-bound, bound, (width, 1)).astype(np.float32))
    store.create("pre_head.b", np.zeros(1, dtype=np.float32))

    prefix = {"image": "image.", "text": "text.", "domain": "domain.", "features": "features."}[modality]
    trainable = store.names(prefix) + ["pre_head.w", "pre_head.b"]
    opt = Adam(store, trainable, lr=stage.lr, beta1=stage.beta1, beta2=stage.beta2)
    order_rng = rng_for(seed, "pretrain-order", modality)
    crop_rng = rng_for(seed, "pretrain-crop", modality)

    def encoder_pre(batch_ids, training, use_crop):
        contents = [dataset.contents[cid] for cid in batch_ids]
        batch = model.prepare_batch(contents)
        if modality == "image":
            images = batch.images
            if use_crop and crop and crop < images.shape[2]:
                span = images.shape[2] - crop
                out = np.empty((len(contents), 3, crop, crop), dtype=np.float32)
                for i in range(len(contents)):
                    r = int(crop_rng.integers(span + 1))
                    cc = int(crop_rng.integers(span + 1))
                    out[i] = images[i, :, r : r + crop, cc : cc + crop]
                images = out
            emb = model.image_forward(Tensor(images, _check=False), training)
        elif modality == "text":
            tokens = ops.embedding(store.tensor("text.tokens"), batch.token_ids)
            emb = model.text_forward(tokens, batch.text_mask)
        elif modality == "domain":
            emb = model.domain_mlp(Tensor(batch.domains, _check=False), training)
        else:
            emb = model.feature_mlp(Tensor(batch.features, _check=False), training)
        return ops.add(ops.matmul(emb, store.tensor("pre_head.w")), store.tensor("pre_head.b"))

    def targets(batch_ids):
        return np.array([[dataset.rate(cid)] for cid in batch_ids], dtype=np.float32)

    for epoch in range(stage.epochs):
        epoch_loss = 0.0
        seen = 0
        for batch_ids in _batches(train_ids, stage.batch_size, order_rng):
            with Graph() as g:
                pre = encoder_pre(batch_ids, True, use_crop=True)
                loss = ops.mse(ops.sigmoid(pre), Tensor(targets(batch_ids), _check=False))
            opt.step(backward(g, loss))
            epoch_loss += loss.item() * len(batch_ids)
            seen += len(batch_ids)
        entry = {"stage": modality, "epoch": epoch, "split": "train",
                 "loss": epoch_loss / max(seen, 1)}
        if log is not None:
            log.append(entry)
        if val_ids:
            preds = _sigmoid(encoder_pre(val_ids, False, use_crop=False).data[:, 0])
            truth = targets(val_ids)[:, 0]
            if log is not None:
                log.append({"stage": modality, "epoch": epoch, "split": "val",
                            "loss": float(((preds - truth) ** 2).mean()),
                            "rmse": float(np.sqrt(((preds - truth) ** 2).mean())),
                            "mae": float(np.abs(preds - truth).mean())})
    return {k: v for k, v in store.state_arrays(prefix).items()}


def precompute_image_embeddings(model: ContentScorer, dataset: Dataset, batch_size: int = 64) -> dict:
    """Eval-mode image embeddings per content id (zero rows for no image)."""
    cache = {}
    ids = dataset.ids()
    for start in range(0, len(ids), batch_size):
        chunk = ids[start : start + batch_size]
        contents = [dataset.contents[cid] for cid in chunk]
        batch = model.prepare_batch(contents)
        emb = model.image_forward(Tensor(batch.images, _check=False), False).data
        emb = emb * batch.img_present
        for i, cid in enumerate(chunk):
            cache[cid] = emb[i].copy()
    return cache


def train_joint(dataset: Dataset, config: ModelConfig, train_cfg: TrainConfig,
                pretrained: dict | None, seed: int, log: list | None = None) -> ContentScorer:
    """Fuse pretrained encoders and fit the whole network end to end."""
    model = ContentScorer(config, seed=seed)
    for arrays in (pretrained or {}).values():
        model.store.load_state_arrays(arrays)

    stage = train_cfg.joint
    train_ids = dataset.ids("train")
    val_ids = dataset.ids("val")
    if not train_ids:
        raise DataError("no training items (did you split the dataset?)")

    image_cache = None
    if train_cfg.freeze_image:
        image_cache = precompute_image_embeddings(model, dataset)

    trainable = [n for n in model.store.names() if not (train_cfg.freeze_image and n.startswith("image."))]
    opt = Adam(model.store, trainable, lr=stage.lr, beta1=stage.beta1, beta2=stage.beta2)
    order_rng = rng_for(seed, "joint-order")

    def run(batch_ids, training):
        contents = [dataset.contents[cid] for cid in batch_ids]
        batch = model.prepare_batch(contents)
        emb = None
        if image_cache is not None:
            emb = np.stack([image_cache[cid] for cid in batch_ids])
        pre = model.forward_batch(batch, training=training, image_embeddings=emb)
        y = np.array([[dataset.rate(cid)] for cid in batch_ids], dtype=np.float32)
        return pre, y

    best_val = np.inf
    best_state = model.store.clone_arrays()
    for epoch in range(stage.epochs):
        epoch_loss = 0.0
        seen = 0
        for batch_ids in _batches(train_ids, stage.batch_size, order_rng):
            with Graph() as g:
                pre, y = run(batch_ids, True)
                loss = ops.mse(ops.sigmoid(pre), Tensor(y, _check=False))
            if not np.isfinite(loss.item()):
                raise DataError(f"joint training diverged at epoch {epoch}")
            opt.step(backward(g, loss))
            epoch_loss += loss.item() * len(batch_ids)
            seen += len(batch_ids)
        if log is not None:
            log.append({"stage": "joint", "epoch": epoch, "split": "train",
                        "loss": epoch_loss / max(seen, 1)})
        if val_ids:
            pre, y = run(val_ids, False)
            preds = _sigmoid(pre.data[:, 0])
            val_loss = float(((preds - y[:, 0]) ** 2).mean())
            if log is not None:
                log.append({"stage": "joint", "epoch": epoch, "split": "val",
                            "loss": val_loss,
                            "rmse": float(np.sqrt(val_loss)),
                            "mae": float(np.abs(preds - y[:, 0]).mean())})
            if val_loss < best_val:
                best_val = val_loss
                best_state = model.store.clone_arrays()
    if val_ids and stage.epochs > 0:
        model.store.load_state_arrays(best_state)
    return model


def train_full(dataset: Dataset, config: ModelConfig, train_cfg: TrainConfig,
               seed: int, log: list | None = None,
               modalities=("image", "text", "domain", "features")) -> ContentScorer:
    """The whole protocol: pretrain each available encoder, then train jointly."""
    pretrained = {}
    for modality in modalities:
        flag = _MODALITY_FLAG[modality]
        available = sum(1 for cid in dataset.ids("train") if getattr(dataset.contents[cid], flag))
        if available < train_cfg.min_modality_items:
            continue
        pretrained[modality] = pretrain_modality(
            modality, dataset, config, train_cfg.stage(modality), seed,
            crop=train_cfg.image_crop if modality == "image" else 0,
            min_items=train_cfg.min_modality_items, log=log,
        )
    return train_joint(dataset, config, train_cfg, pretrained, seed, log=log)


def evaluate_model(model: ContentScorer, dataset: Dataset, split: str | None = None,
                   batch_size: int = 256) -> dict:
    """RMSE and MAE against observed success rates, overall and per domain."""
    ids = dataset.ids(split)
    if not ids:
        raise DataError(f"split {split!r} holds no items")
    preds = np.empty(len(ids), dtype=np.float64)
    for start in range(0, len(ids), batch_size):
        chunk = ids[start : start + batch_size]
        preds[start : start + len(chunk)] = model.predict_batch([dataset.contents[c] for c in chunk])
    truth = np.array([dataset.rate(cid) for cid in ids], dtype=np.float64)
    err = preds - truth
    report = {
        "n": len(ids),
        "rmse": float(np.sqrt((err**2).mean())),
        "mae": float(np.abs(err).mean()),
        "per_domain": {},
    }
    domains = sorted({dataset.contents[cid].domain for cid in ids if dataset.contents[cid].domain})
    for domain in domains:
        mask = np.array([dataset.contents[cid].domain == domain for cid in ids])
        if mask.any():
            report["per_domain"][domain] = {
                "n": int(mask.sum()),
                "rmse": float(np.sqrt((err[mask] ** 2).mean())),
                "mae": float(np.abs(err[mask]).mean()),
            }
    return report
