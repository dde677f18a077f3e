"""Frozen dual-encoder contract with per-layer prompt injection.

Both encoders follow the same injection rule: for the first ``depth``
transformer layers, the layer input's prompt slots hold a fresh learnable
prompt and the layer's prompt outputs are discarded, except at the last
injected layer whose prompt outputs are kept and then propagate (and keep
updating) through the remaining layers. Vision prompts sit after the
class/patch tokens; text prompts sit before the category token.

Adapters are registered by name. The "toy" adapter is a tiny seeded
transformer pair used throughout the tests; real backbones plug in behind
the same handles.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .common import BackboneLoadError, ShapeMismatchError
from .rasterize import RasterSketch


def _seeded_normal(shape, std, generator, dtype=torch.float32):
    out = torch.empty(*shape, dtype=torch.float64)
    out.normal_(0.0, std, generator=generator)
    return out.to(dtype)


class TransformerLayer(nn.Module):
    """Pre-norm multi-head attention + MLP block."""

    def __init__(self, width: int, heads: int, mlp_ratio: int = 2):
        super().__init__()
        self.width = width
        self.heads = heads
        self.ln1 = nn.LayerNorm(width)
        self.q_proj = nn.Linear(width, width)
        self.k_proj = nn.Linear(width, width)
        self.v_proj = nn.Linear(width, width)
        self.out_proj = nn.Linear(width, width)
        self.ln2 = nn.LayerNorm(width)
        self.fc1 = nn.Linear(width, width * mlp_ratio)
        self.fc2 = nn.Linear(width * mlp_ratio, width)

    def attention(self, x: torch.Tensor) -> torch.Tensor:
        b, t, w = x.shape
        head_dim = w // self.heads
        q = self.q_proj(x).view(b, t, self.heads, head_dim).transpose(1, 2)
        k = self.k_proj(x).view(b, t, self.heads, head_dim).transpose(1, 2)
        v = self.v_proj(x).view(b, t, self.heads, head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(head_dim)
        out = torch.softmax(scores, dim=-1) @ v
        out = out.transpose(1, 2).reshape(b, t, w)
        return self.out_proj(out)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attention(self.ln1(x))
        x = x + self.fc2(F.gelu(self.fc1(self.ln2(x))))
        return x


def _run_with_prompts(layers, tokens, prompts, prompts_first):
    """Shared deep-injection loop; ``tokens`` is the non-prompt stream."""
    batch = tokens.shape[0]
    depth = 0 if prompts is None else prompts.shape[-3] if prompts.dim() == 4 else prompts.shape[0]
    if depth > len(layers):
        raise ShapeMismatchError(
            f"prompt depth {depth} exceeds {len(layers)} transformer layers")
    n_tokens = tokens.shape[1]
    carried = None
    for i, layer in enumerate(layers):
        if i < depth:
            slot = prompts[:, i] if prompts.dim() == 4 else prompts[i].expand(batch, -1, -1)
        else:
            slot = carried
        if slot is None or slot.shape[1] == 0:
            x = tokens
        elif prompts_first:
            x = torch.cat([slot, tokens], dim=1)
        else:
            x = torch.cat([tokens, slot], dim=1)
        y = layer(x)
        if slot is None or slot.shape[1] == 0:
            tokens, carried = y, None
        elif prompts_first:
            carried, tokens = y[:, : slot.shape[1]], y[:, slot.shape[1]:]
        else:
            tokens, carried = y[:, :n_tokens], y[:, n_tokens:]
    return tokens


class ToyVisionEncoder(nn.Module):
    """Seeded miniature vision transformer; every weight is frozen at load."""

    def __init__(self, resolution=16, patch=4, width=16, layers=2, heads=2,
                 output_dim=8, seed=0):
        super().__init__()
        self.resolution = resolution
        self.patch = patch
        self.patch_count = (resolution // patch) ** 2
        self.patch_dim = width
        self.layer_count = layers
        self.output_dim = output_dim
        g = torch.Generator().manual_seed(seed)
        self.class_token = nn.Parameter(_seeded_normal((width,), 0.5, g))
        self.pos_embed = nn.Parameter(_seeded_normal((1 + self.patch_count, width), 0.5, g))
        self.patch_embed = nn.Linear(3 * patch * patch, width)
        self.layers = nn.ModuleList(TransformerLayer(width, heads) for _ in range(layers))
        self.ln_post = nn.LayerNorm(width)
        # gain keeps cross-sample feature variation O(1) so the small heads
        # that consume features (codebook classifier, Meta-Net) train quickly
        self.proj = nn.Parameter(_seeded_normal((width, output_dim), 8.0 * width ** -0.5, g))
        _init_module(self, g)

    def _embed(self, images: torch.Tensor) -> torch.Tensor:
        b = images.shape[0]
        p = self.patch
        patches = images.unfold(2, p, p).unfold(3, p, p)           # (b,3,gy,gx,p,p)
        patches = patches.permute(0, 2, 3, 1, 4, 5).reshape(b, self.patch_count, -1)
        tokens = self.patch_embed(patches)
        cls = self.class_token.expand(b, 1, -1)
        return torch.cat([cls, tokens], dim=1) + self.pos_embed

    def encode(self, images: torch.Tensor, prompts: torch.Tensor | None = None) -> torch.Tensor:
        """(b, 3, r, r) images -> (b, output_dim) features.

        ``prompts`` is a (depth, length, width) stack of learnable tokens,
        or None for the plain forward pass.
        """
        if images.dim() == 3:
            images = images.unsqueeze(0)
        if prompts is not None and prompts.shape[-1] != self.patch_dim:
            raise ShapeMismatchError(
                f"vision prompts have width {prompts.shape[-1]}, encoder expects "
                f"{self.patch_dim} (layer 0)")
        tokens = self._embed(images.to(self.proj.dtype))
        tokens = _run_with_prompts(self.layers, tokens, prompts, prompts_first=False)
        return self.ln_post(tokens[:, 0]) @ self.proj

    def layernorm_parameters(self) -> list[nn.Parameter]:
        return [p for m in self.modules() if isinstance(m, nn.LayerNorm)
                for p in m.parameters()]


class ToyTextEncoder(nn.Module):
    """Seeded miniature text transformer over [prompts..., category] streams."""

    MAX_PROMPT_LEN = 32

    def __init__(self, width=12, layers=2, heads=2, output_dim=8, seed=0):
        super().__init__()
        self.token_dim = width
        self.layer_count = layers
        self.output_dim = output_dim
        g = torch.Generator().manual_seed(seed + 1)
        self.pos_embed = nn.Parameter(_seeded_normal((self.MAX_PROMPT_LEN + 1, width), 0.5, g))
        self.layers = nn.ModuleList(TransformerLayer(width, heads) for _ in range(layers))
        self.ln_final = nn.LayerNorm(width)
        self.proj = nn.Parameter(_seeded_normal((width, output_dim), 8.0 * width ** -0.5, g))
        _init_module(self, g)

    def category_embedding(self, name: str) -> torch.Tensor:
        """Deterministic per-name token embedding.

        The leading dimensions encode the name's bytes directly, so distinct
        names give distinct embeddings; the tail is hash-seeded noise.
        """
        data = name.encode("utf-8")
        digest = hashlib.sha256(data).digest()
        g = torch.Generator().manual_seed(int.from_bytes(digest[:8], "little"))
        vec = _seeded_normal((self.token_dim,), 0.3, g, dtype=torch.float64)
        ramp = min(len(data), self.token_dim // 2)
        for i in range(ramp):
            vec[i] += (data[i] / 255.0 - 0.5)
        return vec.to(self.proj.dtype)

    def encode(self, word_tokens: torch.Tensor, prompts: torch.Tensor | None = None) -> torch.Tensor:
        """(m, width) category embeddings -> (m, output_dim) features.

        ``prompts`` is (depth, length, width) shared across the m streams or
        (m, depth, length, width) per stream.
        """
        if word_tokens.dim() == 1:
            word_tokens = word_tokens.unsqueeze(0)
        word_tokens = word_tokens.to(self.proj.dtype)
        if prompts is not None and prompts.shape[-1] != self.token_dim:
            raise ShapeMismatchError(
                f"text prompts have width {prompts.shape[-1]}, encoder expects "
                f"{self.token_dim} (layer 0)")
        length = 0 if prompts is None else prompts.shape[-2]
        if length > self.MAX_PROMPT_LEN:
            raise ShapeMismatchError(f"prompt length {length} exceeds {self.MAX_PROMPT_LEN}")
        word = word_tokens.unsqueeze(1) + self.pos_embed[length]
        if prompts is None or length == 0:
            tokens = word
            stack = None
        else:
            if prompts.dim() == 3:
                prompts = prompts.unsqueeze(0).expand(word_tokens.shape[0], -1, -1, -1)
            prompts = prompts.to(self.proj.dtype)
            stack = prompts.clone()
            stack[:, 0] = stack[:, 0] + self.pos_embed[:length]
            tokens = word
        tokens = _run_with_prompts(self.layers, tokens, stack, prompts_first=True)
        return self.ln_final(tokens[:, -1]) @ self.proj

    def embeddings_for(self, names: Sequence[str]) -> torch.Tensor:
        return torch.stack([self.category_embedding(n) for n in names])

    def layernorm_parameters(self) -> list[nn.Parameter]:
        return [p for m in self.modules() if isinstance(m, nn.LayerNorm)
                for p in m.parameters()]


def _init_module(module: nn.Module, generator: torch.Generator) -> None:
    """Deterministic init for linear layers; layer norms keep (1, 0).

    Query/key projections start small so attention is broad rather than
    peaky: with random frozen weights, near-saturated softmax attention
    would let the class token read only a patch or two.
    """
    for sub in module.modules():
        if isinstance(sub, nn.Linear):
            bound = 1.0 / math.sqrt(sub.in_features)
            w = torch.empty(sub.weight.shape, dtype=torch.float64)
            w.uniform_(-bound, bound, generator=generator)
            sub.weight.data.copy_(w)
            b = torch.empty(sub.bias.shape, dtype=torch.float64)
            b.uniform_(-bound, bound, generator=generator)
            sub.bias.data.copy_(b)
    for sub in module.modules():
        if isinstance(sub, TransformerLayer):
            for proj in (sub.q_proj, sub.k_proj):
                proj.weight.data.mul_(0.4)
                proj.bias.data.mul_(0.4)


@dataclass
class SimilarityHead:
    """Temperature-scaled cosine-similarity classifier head."""

    temperature: float

    def classify(self, features: torch.Tensor, text_features: torch.Tensor) -> torch.Tensor:
        return classify(features, text_features, self.temperature)


def classify(features: torch.Tensor, text_features: torch.Tensor,
             temperature: float) -> torch.Tensor:
    """Softmax over cosine similarities divided by the temperature.

    features: (d,) or (b, d); text_features: (k, d) or (b, k, d).
    Returns a probability vector per feature row.
    """
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    squeeze = features.dim() == 1
    if squeeze:
        features = features.unsqueeze(0)
    f_norm = features.norm(dim=-1, keepdim=True)
    t_norm = text_features.norm(dim=-1, keepdim=True)
    if (f_norm == 0).any() or (t_norm == 0).any():
        raise ValueError("cosine similarity undefined for zero-norm features")
    f = features / f_norm
    t = text_features / t_norm
    if text_features.dim() == 3:
        logits = torch.einsum("bd,bkd->bk", f, t) / temperature
    else:
        logits = f @ t.T / temperature
    probs = torch.softmax(logits, dim=-1)
    return probs.squeeze(0) if squeeze else probs


@dataclass
class AdapterSpec:
    """Published dimensions and input normalization of a registered adapter."""

    name: str
    patch_dim: int
    token_dim: int
    output_dim: int
    default_prompt_len: int
    resolution: int
    pixel_mean: float = 0.0   # preprocess maps x -> (x - mean) / scale
    pixel_scale: float = 1.0


@dataclass
class BackboneBundle:
    """Loaded encoder pair plus similarity head; weights frozen."""

    vision: nn.Module
    text: nn.Module
    similarity: SimilarityHead
    spec: AdapterSpec
    adapter_args: dict | None = None  # kwargs that reproduce this load

    def preprocess(self, raster: RasterSketch) -> torch.Tensor:
        """Map a rendered raster onto the encoder's input grid and range."""
        px = torch.from_numpy(raster.pixels)
        r = self.spec.resolution
        if px.shape[-1] != r:
            px = F.adaptive_avg_pool2d(px.unsqueeze(0), r).squeeze(0)
        return (px - self.spec.pixel_mean) / self.spec.pixel_scale

    def parameters(self):
        yield from self.vision.parameters()
        yield from self.text.parameters()

    def layernorm_parameters(self, encoder: str) -> list[nn.Parameter]:
        module = {"vision": self.vision, "text": self.text}[encoder]
        return module.layernorm_parameters()


_ADAPTERS: dict[str, Callable[..., BackboneBundle]] = {}
ADAPTER_SPECS: dict[str, AdapterSpec] = {}


def register_adapter(spec: AdapterSpec):
    def wrap(fn):
        _ADAPTERS[spec.name] = fn
        ADAPTER_SPECS[spec.name] = spec
        return fn
    return wrap


# toy inputs are centered on the white background so ink carries the signal
TOY_SPEC = AdapterSpec(name="toy", patch_dim=16, token_dim=12, output_dim=8,
                       default_prompt_len=5, resolution=16,
                       pixel_mean=1.0, pixel_scale=-1.0)
CLIP_SPEC = AdapterSpec(name="clip-vit-b16", patch_dim=768, token_dim=512,
                        output_dim=512, default_prompt_len=5, resolution=224)


@register_adapter(TOY_SPEC)
def _load_toy(weights_path=None, *, seed: int = 0, dtype=torch.float32) -> BackboneBundle:
    vision = ToyVisionEncoder(seed=seed).to(dtype)
    text = ToyTextEncoder(seed=seed).to(dtype)
    for p in vision.parameters():
        p.requires_grad_(False)
    for p in text.parameters():
        p.requires_grad_(False)
    return BackboneBundle(vision, text, SimilarityHead(temperature=0.07), TOY_SPEC,
                          adapter_args={"seed": seed})


@register_adapter(CLIP_SPEC)
def _load_clip(weights_path=None, **_kw) -> BackboneBundle:
    from .common import cache_dir

    if weights_path is None:
        weights_path = cache_dir() / f"{CLIP_SPEC.name}.pt"
    if not Path(weights_path).exists():
        raise BackboneLoadError(
            f"pretrained weights not found at {weights_path!r}; the "
            f"{CLIP_SPEC.name} adapter needs a local checkpoint "
            f"(expected dims: patch {CLIP_SPEC.patch_dim}, token {CLIP_SPEC.token_dim}, "
            f"output {CLIP_SPEC.output_dim})")
    raise BackboneLoadError(
        "loading real pretrained weights requires the optional 'clip' or "
        "'open_clip' package; install one and point weights_path at its "
        "checkpoint, or use the 'toy' adapter")


def load_pretrained(adapter_name: str, weights_path=None, **kwargs) -> BackboneBundle:
    """Instantiate a registered backbone adapter by name."""
    if adapter_name not in _ADAPTERS:
        raise BackboneLoadError(
            f"unknown adapter {adapter_name!r}; registered: {sorted(_ADAPTERS)}")
    return _ADAPTERS[adapter_name](weights_path, **kwargs)


def make_zero_shot_scorer(bundle: BackboneBundle):
    """Prompt-free classifier handle: (raster, category names) -> probabilities.

    Used to rank edge-map images by how recognizable their own category is.
    """
    import numpy as np

    cache: dict[tuple[str, ...], torch.Tensor] = {}

    def scorer(raster: RasterSketch, category_names) -> np.ndarray:
        names = tuple(category_names)
        with torch.no_grad():
            if names not in cache:
                words = bundle.text.embeddings_for(names)
                cache[names] = bundle.text.encode(words)
            feats = bundle.vision.encode(bundle.preprocess(raster).unsqueeze(0))
            probs = classify(feats, cache[names], bundle.similarity.temperature)
        return probs.squeeze(0).numpy()

    return scorer
