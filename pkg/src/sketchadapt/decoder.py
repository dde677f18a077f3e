"""Recurrent stroke decoder: sketch feature -> stroke-5 point sequence.

A gated recurrent cell consumes the sketch feature concatenated with the
previous point at every step and emits (x, y, pen-logits[3]). Training uses
teacher forcing; free-running decoding feeds back the prediction with pen
logits collapsed to one-hot. The reconstruction loss is the per-point mean
of squared coordinate errors plus the per-point mean pen cross-entropy.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

START_TOKEN = (0.0, 0.0, 1.0, 0.0, 0.0)

DEFAULT_HIDDEN = 256


class StrokeDecoder(nn.Module):
    def __init__(self, feature_dim: int, hidden_dim: int = DEFAULT_HIDDEN):
        super().__init__()
        self.feature_dim = feature_dim
        self.hidden_dim = hidden_dim
        self.init_map = nn.Linear(feature_dim, hidden_dim)
        self.cell = nn.GRUCell(feature_dim + 5, hidden_dim)
        self.out_map = nn.Linear(hidden_dim, 5)

    def initialize(self, seed: int, std: float = 0.05) -> None:
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for p in self.parameters():
                sample = torch.empty(p.shape, dtype=torch.float64)
                sample.normal_(0.0, std, generator=g)
                p.copy_(sample.to(p.dtype))

    def decode(self, features: torch.Tensor, steps: int,
               teacher_points: torch.Tensor | None = None) -> torch.Tensor:
        """Roll the cell for ``steps`` steps; (b, steps, 5) outputs.

        With ``teacher_points`` (b, >=steps, 5) the previous input point is
        the ground truth; otherwise the previous prediction is fed back with
        its pen logits collapsed to a one-hot state.
        """
        if steps < 1:
            raise ValueError("steps must be >= 1")
        squeeze = features.dim() == 1
        if squeeze:
            features = features.unsqueeze(0)
        if teacher_points is not None:
            if teacher_points.dim() == 2:
                teacher_points = teacher_points.unsqueeze(0)
            if teacher_points.shape[1] < steps:
                raise ValueError(
                    f"teacher sequence length {teacher_points.shape[1]} < steps {steps}")
        b = features.shape[0]
        hidden = self.init_map(features)
        prev = torch.tensor(START_TOKEN, dtype=features.dtype,
                            device=features.device).expand(b, -1)
        outputs = []
        for t in range(steps):
            hidden = self.cell(torch.cat([features, prev], dim=1), hidden)
            point = self.out_map(hidden)
            outputs.append(point)
            if t + 1 < steps:
                if teacher_points is not None:
                    prev = teacher_points[:, t]
                else:
                    pen = F.one_hot(point[:, 2:].argmax(dim=1), 3).to(point.dtype)
                    prev = torch.cat([point[:, :2], pen], dim=1)
        return torch.stack(outputs, dim=1)


def sketch2vec_loss(pred: torch.Tensor, target: torch.Tensor,
                    mask: torch.Tensor | None = None) -> torch.Tensor:
    """Coordinate MSE plus pen-state cross-entropy, averaged per point.

    pred: (b, t, 5) decoded points with raw pen logits.
    target: (b, t, 5) stroke-5 ground truth (one-hot pen states).
    mask: (b, t) with 1 on real points, 0 on padding. Samples are averaged
    after their own per-point normalization.
    """
    if pred.dim() == 2:
        pred = pred.unsqueeze(0)
    if target.dim() == 2:
        target = target.unsqueeze(0)
    if pred.shape != target.shape:
        raise ValueError(f"pred shape {tuple(pred.shape)} != target {tuple(target.shape)}")
    if mask is None:
        mask = torch.ones(pred.shape[:2], dtype=pred.dtype, device=pred.device)
    mask = mask.to(pred.dtype)
    lengths = mask.sum(dim=1)
    if (lengths == 0).any():
        raise ValueError("every sequence needs at least one unmasked point")

    coord_err = ((pred[..., :2] - target[..., :2]) ** 2).sum(dim=-1)
    log_probs = torch.log_softmax(pred[..., 2:], dim=-1)
    pen_err = -(target[..., 2:] * log_probs).sum(dim=-1)
    per_sample = ((coord_err + pen_err) * mask).sum(dim=1) / lengths
    return per_sample.mean()


def sequence_to_stroke5_json(points: torch.Tensor) -> list[list[float]]:
    """Decoded (t, 5) outputs -> stroke-5 rows with one-hot pen states."""
    pen = points[:, 2:].argmax(dim=1)
    rows = []
    for i in range(points.shape[0]):
        state = [0.0, 0.0, 0.0]
        state[int(pen[i])] = 1.0
        rows.append([float(points[i, 0]), float(points[i, 1]), *state])
    return rows
