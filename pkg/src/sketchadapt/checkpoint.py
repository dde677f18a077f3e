"""Single-archive run checkpoints with a versioned header.

Sections: prompts, codebook, decoder, layernorm-deltas, config, epoch,
rng-state. Layer norms are stored as deltas against the pristine backbone
so a checkpoint re-applies cleanly onto a freshly loaded adapter.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .backbone import BackboneBundle
from .common import CheckpointError
from .config import TrainConfig
from .model import ModelState, build_model

FORMAT_NAME = "sketchadapt-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, model: ModelState, epoch: int,
                    rng_state: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    deltas = {}
    for encoder, baseline in model.ln_baseline.items():
        live = model.backbone.layernorm_parameters(encoder)
        deltas[encoder] = [p.detach() - base for p, base in zip(live, baseline)]
    payload = {
        "header": {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "adapter": model.backbone.spec.name,
            "adapter_args": model.backbone.adapter_args or {},
            "feature_dim": model.backbone.spec.output_dim,
        },
        "prompts": model.prompts.state_dict(),
        "codebook": model.codebook.state_dict(),
        "decoder": model.decoder.state_dict(),
        "layernorm-deltas": deltas,
        "config": model.config.to_dict(),
        "epoch": epoch,
        "rng-state": rng_state or {},
    }
    torch.save(payload, path)
    return path


def read_header(path: str | Path) -> dict:
    """Checkpoint header only (adapter name/args), for reloading backbones."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    header = payload.get("header", {})
    if header.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path} is not a {FORMAT_NAME} file")
    return header


def load_checkpoint(path: str | Path, backbone: BackboneBundle) -> tuple[ModelState, int, dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    header = payload.get("header", {})
    if header.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path} is not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint version {header.get('version')} unsupported "
            f"(expected {FORMAT_VERSION})")
    if header.get("adapter") != backbone.spec.name:
        raise CheckpointError(
            f"checkpoint was trained on adapter {header.get('adapter')!r} but "
            f"{backbone.spec.name!r} is loaded")
    if header.get("feature_dim") != backbone.spec.output_dim:
        raise CheckpointError(
            f"feature dim mismatch: checkpoint {header.get('feature_dim')} vs "
            f"backbone {backbone.spec.output_dim}")

    if getattr(backbone, "_checkpoint_applied", False):
        raise CheckpointError(
            "this backbone already carries layer-norm deltas from a previous "
            "checkpoint; load a fresh adapter instance first")

    config = TrainConfig.from_dict(payload["config"])
    model = build_model(backbone, config)
    model.prompts.load_state_dict(payload["prompts"])
    model.codebook.load_state_dict(payload["codebook"])
    model.decoder.load_state_dict(payload["decoder"])
    with torch.no_grad():
        for encoder, deltas in payload["layernorm-deltas"].items():
            live = backbone.layernorm_parameters(encoder)
            if len(live) != len(deltas):
                raise CheckpointError(
                    f"layer-norm section for {encoder!r} has {len(deltas)} tensors, "
                    f"backbone exposes {len(live)}")
            for p, delta in zip(live, deltas):
                p.add_(delta)
    backbone._checkpoint_applied = True
    return model, int(payload["epoch"]), payload.get("rng-state", {})
