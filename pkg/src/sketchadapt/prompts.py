"""Learnable prompt state: vision/text prompt stacks and the Meta-Net.

The Meta-Net maps a sketch feature to an instance-specific bias added to
every depth of the text prompt stack; the abstraction prompt from the
codebook is added the same way. Vision prompts are never shifted.
"""

from __future__ import annotations

from typing import Callable

import torch
from torch import nn

from .common import ShapeMismatchError

PROMPT_INIT_STD = 0.02


class PromptState(nn.Module):
    def __init__(self, depth: int, prompt_len: int, patch_dim: int, token_dim: int,
                 feature_dim: int, meta_hidden: int | None = None):
        super().__init__()
        if depth < 1:
            raise ValueError("prompt depth must be >= 1")
        self.depth = depth
        self.prompt_len = prompt_len
        self.patch_dim = patch_dim
        self.token_dim = token_dim
        self.feature_dim = feature_dim
        hidden = meta_hidden or max(1, feature_dim // 16)
        self.vision_prompts = nn.Parameter(torch.zeros(depth, prompt_len, patch_dim))
        self.text_prompts = nn.Parameter(torch.zeros(depth, prompt_len, token_dim))
        self.meta_net = nn.Sequential(
            nn.Linear(feature_dim, hidden),
            nn.ReLU(),
            nn.Linear(hidden, prompt_len * token_dim),
        )

    def conditional_context(self, features: torch.Tensor) -> torch.Tensor:
        """Instance-specific text-prompt bias: (b, prompt_len, token_dim)."""
        squeeze = features.dim() == 1
        if squeeze:
            features = features.unsqueeze(0)
        out = self.meta_net(features).view(-1, self.prompt_len, self.token_dim)
        return out.squeeze(0) if squeeze else out

    def compose_text_prompts(self, context_bias: torch.Tensor | None,
                             abstraction_prompt: torch.Tensor | None) -> torch.Tensor:
        """Shift every depth of the text stack by the two biases.

        Biases are (prompt_len, token_dim) or (b, prompt_len, token_dim);
        the result is (depth, L, d) or (b, depth, L, d). Exactly linear in
        each argument.
        """
        shift = None
        for bias in (context_bias, abstraction_prompt):
            if bias is None:
                continue
            if bias.shape[-2:] != (self.prompt_len, self.token_dim):
                raise ShapeMismatchError(
                    f"bias shape {tuple(bias.shape)} does not match prompts "
                    f"({self.prompt_len}, {self.token_dim})")
            shift = bias if shift is None else shift + bias
        if shift is None:
            return self.text_prompts
        if shift.dim() == 2:
            return self.text_prompts + shift
        return self.text_prompts.unsqueeze(0) + shift.unsqueeze(1)


def meta_context(state: PromptState, features: torch.Tensor) -> torch.Tensor:
    return state.conditional_context(features)


def compose_text_prompts(state: PromptState, context_bias, abstraction_prompt) -> torch.Tensor:
    return state.compose_text_prompts(context_bias, abstraction_prompt)


def init_prompts(
    seed: int,
    depth: int,
    prompt_len: int,
    patch_dim: int,
    token_dim: int,
    feature_dim: int,
    init_text: str | None = None,
    text_embedder: Callable[[str], torch.Tensor] | None = None,
    meta_hidden: int | None = None,
) -> PromptState:
    """Deterministically initialized prompt state.

    All prompts draw from N(0, 0.02^2). When ``init_text`` is given, the
    shallow (depth-0) text prompts are replaced by the phrase's token
    embeddings, one word per slot, produced by ``text_embedder``.
    """
    state = PromptState(depth, prompt_len, patch_dim, token_dim, feature_dim,
                        meta_hidden=meta_hidden)
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        _normal_into(state.vision_prompts, PROMPT_INIT_STD, g)
        _normal_into(state.text_prompts, PROMPT_INIT_STD, g)
        for layer in state.meta_net:
            if isinstance(layer, nn.Linear):
                _normal_into(layer.weight, PROMPT_INIT_STD, g)
                layer.bias.zero_()
        if init_text is not None:
            words = init_text.split()
            if len(words) > prompt_len:
                raise ValueError(
                    f"init phrase has {len(words)} words but only {prompt_len} "
                    f"prompt slots")
            if text_embedder is None:
                raise ValueError("init_text requires a text_embedder")
            for i, word in enumerate(words):
                state.text_prompts[0, i] = text_embedder(word).to(state.text_prompts.dtype)
    return state


def _normal_into(param: torch.Tensor, std: float, generator: torch.Generator) -> None:
    sample = torch.empty(param.shape, dtype=torch.float64)
    sample.normal_(0.0, std, generator=generator)
    param.copy_(sample.to(param.dtype))


def prompt_parameters(state: PromptState, include_meta: bool) -> list[nn.Parameter]:
    params = [state.vision_prompts, state.text_prompts]
    if include_meta:
        params.extend(state.meta_net.parameters())
    return params
