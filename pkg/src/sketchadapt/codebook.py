"""Three-level abstraction codebook, its classifier, and Dirichlet mixup.

The codebook holds one prompt-shaped code per coarse abstraction level.
A linear classifier over the sketch feature yields a softmax distribution
across the levels; mixing the codes by that distribution produces the
continuous abstraction prompt. Mixup draws simplex weights from a
symmetric Dirichlet and supervises the classifier on feature mixtures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .common import AbstractionLevel

LOG_CLAMP = 1e-12  # floor inside every cross-entropy log


class AbstractionCodebook(nn.Module):
    def __init__(self, prompt_len: int, token_dim: int, feature_dim: int,
                 two_layer_classifier: bool = False):
        super().__init__()
        self.prompt_len = prompt_len
        self.token_dim = token_dim
        self.codes = nn.Parameter(torch.zeros(3, prompt_len, token_dim))
        if two_layer_classifier:
            hidden = max(4, feature_dim // 2)
            self.classifier = nn.Sequential(
                nn.Linear(feature_dim, hidden), nn.ReLU(), nn.Linear(hidden, 3))
        else:
            self.classifier = nn.Linear(feature_dim, 3)

    def predict(self, features: torch.Tensor) -> torch.Tensor:
        """Softmax distribution over (low, medium, high): (..., 3)."""
        return torch.softmax(self.classifier(features), dim=-1)

    def prompt(self, distribution: torch.Tensor) -> torch.Tensor:
        """Code mixture weighted by the distribution: (..., prompt_len, token_dim)."""
        return torch.einsum("...i,ild->...ld", distribution, self.codes)

    def initialize(self, seed: int, std: float = 0.02) -> None:
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            sample = torch.empty(self.codes.shape, dtype=torch.float64)
            sample.normal_(0.0, std, generator=g)
            self.codes.copy_(sample.to(self.codes.dtype))
            for m in self.modules():
                if isinstance(m, nn.Linear):
                    w = torch.empty(m.weight.shape, dtype=torch.float64)
                    w.normal_(0.0, std, generator=g)
                    m.weight.data.copy_(w.to(m.weight.dtype))
                    m.bias.data.zero_()


def predict_abstraction(features: torch.Tensor, codebook: AbstractionCodebook) -> torch.Tensor:
    return codebook.predict(features)


def abstraction_prompt(distribution: torch.Tensor, codebook: AbstractionCodebook) -> torch.Tensor:
    return codebook.prompt(distribution)


def weighted_nll(distribution: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Soft cross-entropy -sum_i w_i log p_i with logs clamped at 1e-12.

    Used by both the hard codebook loss (one-hot weights) and the mixup
    loss, so the one-hot reduction is bit-exact by construction.
    """
    logs = torch.log(torch.clamp(distribution, min=LOG_CLAMP))
    per_row = -(weights * logs).sum(dim=-1)
    return per_row.mean()


def codebook_loss(distribution: torch.Tensor,
                  label: AbstractionLevel | torch.Tensor) -> torch.Tensor:
    """Cross-entropy of the predicted distribution against the coarse label."""
    if isinstance(label, AbstractionLevel):
        idx = torch.tensor([label.value])
    else:
        idx = label.reshape(-1)
    if distribution.dim() == 1:
        distribution = distribution.unsqueeze(0)
    one_hot = torch.zeros_like(distribution)
    one_hot[torch.arange(len(idx)), idx] = 1.0
    return weighted_nll(distribution, one_hot)


@dataclass(frozen=True)
class MixCoefficients:
    """Normalized simplex weights drawn from Dir(alpha, alpha, alpha)."""

    weights: np.ndarray  # (3,) float64, nonnegative, sums to 1
    alpha: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.shape != (3,) or (w < 0).any():
            raise ValueError("mix weights must be three nonnegative reals")

    def as_tensor(self, like: torch.Tensor) -> torch.Tensor:
        return torch.as_tensor(self.weights, dtype=like.dtype, device=like.device)


def sample_mix_coefficients(alpha: float, rng: np.random.Generator) -> MixCoefficients:
    """Three Gamma(alpha, 1) draws, explicitly renormalized onto the simplex."""
    if alpha <= 0.0:
        raise ValueError(f"Dirichlet concentration must be positive, got {alpha}")
    raw = rng.standard_gamma(alpha, size=3)
    total = raw.sum()
    if total == 0.0:  # all-underflow corner at tiny alpha
        raw = np.ones(3)
        total = 3.0
    return MixCoefficients(weights=raw / total, alpha=alpha)


def mixup_feature(f_low: torch.Tensor, f_mid: torch.Tensor, f_high: torch.Tensor,
                  coeffs: MixCoefficients) -> torch.Tensor:
    """Convex combination of one feature per abstraction source."""
    w = coeffs.as_tensor(f_low)
    return w[0] * f_low + w[1] * f_mid + w[2] * f_high


def mixup_loss(dist_alpha: torch.Tensor, coeffs: MixCoefficients) -> torch.Tensor:
    """Soft cross-entropy between the mix weights and the predicted distribution."""
    if dist_alpha.dim() == 1:
        dist_alpha = dist_alpha.unsqueeze(0)
    w = coeffs.as_tensor(dist_alpha).expand_as(dist_alpha)
    return weighted_nll(dist_alpha, w)


def dirichlet_density(weights: np.ndarray, alpha: float) -> float:
    """Symmetric 3-dim Dirichlet density at a simplex point (test oracle)."""
    import math
    w = np.asarray(weights, dtype=np.float64)
    norm = math.gamma(3 * alpha) / math.gamma(alpha) ** 3
    return float(norm * np.prod(w ** (alpha - 1.0)))
