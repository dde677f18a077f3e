"""Few-shot training loop over the frozen backbone.

Only prompts, Meta-Net, codebook, decoder, and (optionally) the backbone
layer norms receive Adam updates. Every epoch appends one JSON line of
loss terms and accuracies to the training log and, on schedule, writes a
checkpoint. Runs are deterministic per seed on the toy backbone.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .backbone import BackboneBundle
from .checkpoint import save_checkpoint
from .common import DivergenceError
from .config import TrainConfig
from .datasets import DatasetSplit, LabeledSample
from .model import (Batch, ModelState, build_model, make_batch, predict,
                    total_loss, trainable_parameters)

LOSS_TERMS = ("classification", "sketch2vec", "codebook", "mixup")


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    history: list[dict]
    model: ModelState


def train(samples: Sequence[LabeledSample], split: DatasetSplit,
          config: TrainConfig, backbone: BackboneBundle,
          out_dir: str | Path) -> TrainResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoints = out_dir / "checkpoints"
    checkpoints.mkdir(exist_ok=True)
    log_path = out_dir / "train_log.jsonl"

    torch.manual_seed(config.seed)
    model = build_model(backbone, config)
    params = trainable_parameters(model)
    optimizer = torch.optim.Adam(params.values(), lr=config.learning_rate)

    by_id = {s.source_id: s for s in samples}
    missing = [i for i in split.train_samples if i not in by_id]
    if missing:
        raise ValueError(f"split references unknown sample ids, e.g. {missing[:3]}")
    train_samples = [by_id[i] for i in split.train_samples]
    category_names = list(split.seen_categories)
    words = backbone.text.embeddings_for(category_names)

    # One tensor pass over the training set, re-batched each epoch.
    full = make_batch(train_samples, backbone, category_names)
    order_rng = np.random.default_rng(config.seed)
    mix_rng = np.random.default_rng(config.seed + 1)

    history: list[dict] = []
    checkpoint_path = checkpoints / "checkpoint_last.pt"
    with log_path.open("w", encoding="utf-8") as log:
        for epoch in range(1, config.epochs + 1):
            t0 = time.time()
            order = order_rng.permutation(len(train_samples))
            sums = {term: 0.0 for term in LOSS_TERMS}
            sums["total"] = 0.0
            steps = 0
            mixup_skipped = 0
            for start in range(0, len(order), config.batch_size):
                idx = torch.from_numpy(order[start:start + config.batch_size])
                batch = _slice_batch(full, idx)
                loss, breakdown, skipped = total_loss(model, batch, words, mix_rng)
                for term, value in breakdown.items():
                    if not math.isfinite(value):
                        raise DivergenceError(term, value, epoch, steps)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                for term in sums:
                    sums[term] += breakdown[term]
                mixup_skipped += skipped
                steps += 1

            train_acc, abstraction_acc = _training_accuracy(model, full, words)
            entry = {
                "epoch": epoch,
                **{term: sums[term] / steps for term in LOSS_TERMS},
                "total": sums["total"] / steps,
                "lr": config.learning_rate,
                "train_accuracy": train_acc,
                "abstraction_accuracy": abstraction_acc,
                "mixup_skipped": mixup_skipped,
                "seconds": round(time.time() - t0, 3),
            }
            history.append(entry)
            log.write(json.dumps(entry, sort_keys=True) + "\n")
            log.flush()

            if epoch % config.checkpoint_every == 0 or epoch == config.epochs:
                rng_state = {"order": order_rng.bit_generator.state,
                             "mix": mix_rng.bit_generator.state}
                save_checkpoint(checkpoints / f"checkpoint_ep{epoch:04d}.pt",
                                model, epoch, rng_state)
                save_checkpoint(checkpoint_path, model, epoch, rng_state)

    return TrainResult(checkpoint_path, log_path, history, model)


def _slice_batch(full: Batch, idx: torch.Tensor) -> Batch:
    return Batch(
        images=full.images[idx],
        category_index=full.category_index[idx],
        abstraction=full.abstraction[idx],
        vectors=None if full.vectors is None else full.vectors[idx],
        vector_mask=None if full.vector_mask is None else full.vector_mask[idx],
        has_vector=full.has_vector[idx],
    )


def _training_accuracy(model: ModelState, full: Batch,
                       words: torch.Tensor) -> tuple[float, float]:
    with torch.no_grad():
        hits = 0
        abstraction_hits = 0
        n = len(full)
        for start in range(0, n, model.config.batch_size):
            idx = torch.arange(start, min(start + model.config.batch_size, n))
            batch = _slice_batch(full, idx)
            probs, dist = predict(model, batch.images, words)
            hits += int((probs.argmax(dim=1) == batch.category_index).sum())
            if dist is not None:
                abstraction_hits += int((dist.argmax(dim=1) == batch.abstraction).sum())
    return 100.0 * hits / n, 100.0 * abstraction_hits / n
