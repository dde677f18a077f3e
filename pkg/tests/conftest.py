import numpy as np
import pytest
import torch

from sketchadapt.backbone import load_pretrained
from sketchadapt.strokes import VectorSketch


@pytest.fixture()
def toy_backbone():
    return load_pretrained("toy", seed=0)


@pytest.fixture()
def toy_backbone_f64():
    return load_pretrained("toy", seed=0, dtype=torch.float64)


@pytest.fixture()
def square_sketch() -> VectorSketch:
    rows = np.array([
        [0.1, 0.1, 1, 0, 0],
        [0.9, 0.1, 1, 0, 0],
        [0.9, 0.9, 1, 0, 0],
        [0.1, 0.9, 1, 0, 0],
        [0.1, 0.1, 0, 1, 0],
        [0.1, 0.1, 0, 0, 1],
    ], dtype=np.float32)
    return VectorSketch(rows)


@pytest.fixture()
def hline_sketch() -> VectorSketch:
    rows = np.array([
        [0.1, 0.5, 1, 0, 0],
        [0.9, 0.5, 0, 1, 0],
        [0.9, 0.5, 0, 0, 1],
    ], dtype=np.float32)
    return VectorSketch(rows)
