"""Model assembly: frozen backbone + trainable heads, and the loss stack.

The classification path recomputes text features per sketch because the
text prompts carry instance-specific shifts; category word embeddings are
cached per category list since they are the only prompt-independent part
of the text stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .backbone import BackboneBundle, classify
from .codebook import (AbstractionCodebook, codebook_loss, mixup_feature,
                       mixup_loss, sample_mix_coefficients)
from .common import AbstractionLevel, ConfigError
from .config import TrainConfig
from .datasets import LabeledSample
from .decoder import StrokeDecoder, sketch2vec_loss
from .prompts import PromptState, init_prompts


@dataclass
class ModelState:
    backbone: BackboneBundle
    prompts: PromptState
    codebook: AbstractionCodebook
    decoder: StrokeDecoder
    config: TrainConfig
    ln_baseline: dict[str, list[torch.Tensor]] = field(default_factory=dict)


def build_model(backbone: BackboneBundle, config: TrainConfig) -> ModelState:
    config.validate()
    spec = backbone.spec
    if config.prompt_depth > backbone.vision.layer_count:
        raise ConfigError(
            f"prompt_depth {config.prompt_depth} exceeds the backbone's "
            f"{backbone.vision.layer_count} layers")
    prompts = init_prompts(
        seed=config.seed,
        depth=config.prompt_depth,
        prompt_len=config.context_tokens,
        patch_dim=spec.patch_dim,
        token_dim=spec.token_dim,
        feature_dim=spec.output_dim,
        init_text=config.init_text,
        text_embedder=backbone.text.category_embedding,
    )
    codebook = AbstractionCodebook(config.context_tokens, spec.token_dim, spec.output_dim)
    codebook.initialize(config.seed + 1)
    decoder = StrokeDecoder(spec.output_dim, hidden_dim=config.decoder_hidden)
    decoder.initialize(config.seed + 2)
    baseline = {
        "vision": [p.detach().clone() for p in backbone.layernorm_parameters("vision")],
        "text": [p.detach().clone() for p in backbone.layernorm_parameters("text")],
    }
    return ModelState(backbone, prompts, codebook, decoder, config, baseline)


def trainable_parameters(model: ModelState) -> dict[str, nn.Parameter]:
    """Exactly the parameters the active configuration declares trainable."""
    cfg = model.config
    params: dict[str, nn.Parameter] = {
        "prompts.vision_prompts": model.prompts.vision_prompts,
        "prompts.text_prompts": model.prompts.text_prompts,
    }
    if cfg.meta_net:
        for name, p in model.prompts.meta_net.named_parameters():
            params[f"prompts.meta_net.{name}"] = p
    if cfg.codebook:
        for name, p in model.codebook.named_parameters():
            params[f"codebook.{name}"] = p
    if cfg.sketch2vec:
        for name, p in model.decoder.named_parameters():
            params[f"decoder.{name}"] = p
    for encoder in ("vision", "text"):
        if cfg.tune_layernorm(encoder):
            for i, p in enumerate(model.backbone.layernorm_parameters(encoder)):
                p.requires_grad_(True)
                params[f"backbone.{encoder}.layernorm.{i}"] = p
    return params


@dataclass
class Batch:
    images: torch.Tensor           # (b, 3, r, r)
    category_index: torch.Tensor   # (b,) indices into the batch's category list
    abstraction: torch.Tensor      # (b,) AbstractionLevel values
    vectors: torch.Tensor | None   # (b, t, 5) padded stroke-5 targets
    vector_mask: torch.Tensor | None
    has_vector: torch.Tensor       # (b,) bool

    def __len__(self) -> int:
        return self.images.shape[0]


def make_batch(samples: Sequence[LabeledSample], backbone: BackboneBundle,
               category_names: Sequence[str]) -> Batch:
    if not samples:
        raise ValueError("cannot build an empty batch")
    index = {name: i for i, name in enumerate(category_names)}
    images = torch.stack([backbone.preprocess(s.raster) for s in samples])
    labels = torch.tensor([index[s.category] for s in samples], dtype=torch.long)
    levels = torch.tensor([s.abstraction_label.value for s in samples], dtype=torch.long)
    has_vector = torch.tensor([s.vector is not None for s in samples])
    vectors = mask = None
    if has_vector.any():
        longest = max(len(s.vector) for s in samples if s.vector is not None)
        vectors = torch.zeros(len(samples), longest, 5)
        mask = torch.zeros(len(samples), longest)
        for i, s in enumerate(samples):
            if s.vector is None:
                continue
            pts = torch.from_numpy(s.vector.points)
            vectors[i, : len(pts)] = pts
            mask[i, : len(pts)] = 1.0
    return Batch(images, labels, levels, vectors, mask, has_vector)


def encode_batch(model: ModelState, images: torch.Tensor) -> torch.Tensor:
    return model.backbone.vision.encode(images, model.prompts.vision_prompts)


def abstraction_distribution(model: ModelState, features: torch.Tensor) -> torch.Tensor | None:
    if not model.config.codebook:
        return None
    return model.codebook.predict(features)


def text_features(model: ModelState, features: torch.Tensor,
                  word_embeddings: torch.Tensor,
                  distribution: torch.Tensor | None) -> torch.Tensor:
    """Per-sample, per-category text features (b, k, d)."""
    b = features.shape[0]
    k = word_embeddings.shape[0]
    context = model.prompts.conditional_context(features) if model.config.meta_net else None
    shift = model.codebook.prompt(distribution) if distribution is not None else None
    stacks = model.prompts.compose_text_prompts(context, shift)
    text = model.backbone.text
    if stacks.dim() == 3:  # no instance-specific part; one pass over categories
        feats = text.encode(word_embeddings, stacks)
        return feats.unsqueeze(0).expand(b, -1, -1)
    per_pair = stacks.unsqueeze(1).expand(-1, k, -1, -1, -1).reshape(b * k, *stacks.shape[1:])
    words = word_embeddings.unsqueeze(0).expand(b, -1, -1).reshape(b * k, -1)
    feats = text.encode(words, per_pair)
    return feats.view(b, k, -1)


def predict(model: ModelState, images: torch.Tensor,
            word_embeddings: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor | None]:
    """Inference pipeline: encode, condition, shift, classify.

    Returns (probabilities (b, k), abstraction distribution (b, 3) or None).
    """
    features = encode_batch(model, images)
    dist = abstraction_distribution(model, features)
    feats_t = text_features(model, features, word_embeddings, dist)
    probs = classify(features, feats_t, model.backbone.similarity.temperature)
    return probs, dist


def classification_loss(model: ModelState, features: torch.Tensor,
                        category_index: torch.Tensor, word_embeddings: torch.Tensor,
                        distribution: torch.Tensor | None) -> torch.Tensor:
    """Negative log probability of the true category under shifted prompts."""
    feats_t = text_features(model, features, word_embeddings, distribution)
    probs = classify(features, feats_t, model.backbone.similarity.temperature)
    if probs.dim() == 1:
        probs = probs.unsqueeze(0)
    picked = probs[torch.arange(len(category_index)), category_index]
    return -torch.log(torch.clamp(picked, min=1e-12)).mean()


def total_loss(model: ModelState, batch: Batch, word_embeddings: torch.Tensor,
               rng: np.random.Generator) -> tuple[torch.Tensor, dict[str, float], int]:
    """Composite training loss; returns (loss, per-term breakdown, mixup skips).

    Disabled switches contribute an exact zero term and leave their
    parameters out of the graph entirely. The mixup term needs at least one
    sample from each abstraction source in the batch, otherwise it is
    skipped and counted.
    """
    cfg = model.config
    if len(batch) == 0:
        raise ValueError("empty batch")
    zero = torch.zeros(())
    features = encode_batch(model, batch.images)
    dist = abstraction_distribution(model, features)

    if cfg.codebook and cfg.teacher_force_abstraction:
        guide = F.one_hot(batch.abstraction, 3).to(features.dtype)
    else:
        guide = dist
    ce = classification_loss(model, features, batch.category_index, word_embeddings, guide)

    s2v = zero
    if cfg.sketch2vec and bool(batch.has_vector.any()):
        sel = batch.has_vector
        targets = batch.vectors[sel]
        decoded = model.decoder.decode(features[sel], targets.shape[1], teacher_points=targets)
        s2v = sketch2vec_loss(decoded, targets, batch.vector_mask[sel])

    cb = codebook_loss(dist, batch.abstraction) if cfg.codebook else zero

    mix = zero
    skipped = 0
    if cfg.mixup:
        pools = [torch.nonzero(batch.abstraction == lvl.value).flatten()
                 for lvl in AbstractionLevel]
        if all(len(p) for p in pools):
            picks = [int(p[rng.integers(len(p))]) for p in pools]
            coeffs = sample_mix_coefficients(cfg.alpha, rng)
            source = features.detach() if cfg.mixup_stop_gradient else features
            mixed = mixup_feature(source[picks[0]], source[picks[1]], source[picks[2]], coeffs)
            mix = mixup_loss(model.codebook.predict(mixed), coeffs)
        else:
            skipped = 1

    total = ce + cfg.beta1 * s2v + cfg.beta2 * cb + cfg.beta3 * mix
    breakdown = {
        "classification": float(ce.detach()),
        "sketch2vec": float((cfg.beta1 * s2v).detach()),
        "codebook": float((cfg.beta2 * cb).detach()),
        "mixup": float((cfg.beta3 * mix).detach()),
        "total": float(total.detach()),
    }
    return total, breakdown, skipped
