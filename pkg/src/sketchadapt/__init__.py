"""sketchadapt: open-set sketch classification over a frozen dual encoder.

Learnable deep prompts adapt a frozen vision-language backbone to sketches;
an instance-conditional Meta-Net, a three-level abstraction codebook with
Dirichlet mixup, and a raster-to-vector decoder head make the classifier
robust across categories and drawing abstraction levels.
"""

from .backbone import (AdapterSpec, BackboneBundle, SimilarityHead, classify,
                       load_pretrained)
from .codebook import (AbstractionCodebook, MixCoefficients, abstraction_prompt,
                       codebook_loss, mixup_feature, mixup_loss,
                       predict_abstraction, sample_mix_coefficients)
from .common import AbstractionLevel, SketchAdaptError
from .config import RunConfig, TrainConfig
from .datasets import (DatasetSplit, LabeledSample, build_split, filter_edgemaps,
                       ingest_stroke_dataset, load_manifest, write_manifest)
from .decoder import StrokeDecoder, sketch2vec_loss
from .evaluator import EvalReport, evaluate
from .model import ModelState, build_model, predict, total_loss
from .prompts import PromptState, compose_text_prompts, init_prompts, meta_context
from .rasterize import RasterSketch, render_raster
from .strokes import VectorSketch, stroke3_to_stroke5
from .trainer import TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "AbstractionCodebook", "AbstractionLevel", "AdapterSpec", "BackboneBundle",
    "DatasetSplit", "EvalReport", "LabeledSample", "MixCoefficients",
    "ModelState", "PromptState", "RasterSketch", "RunConfig", "SimilarityHead",
    "SketchAdaptError", "StrokeDecoder", "TrainConfig", "TrainResult",
    "VectorSketch", "abstraction_prompt", "build_model", "build_split",
    "classify", "codebook_loss", "compose_text_prompts", "evaluate",
    "filter_edgemaps", "ingest_stroke_dataset", "init_prompts",
    "load_manifest", "load_pretrained", "meta_context", "mixup_feature",
    "mixup_loss", "predict", "predict_abstraction", "render_raster",
    "sample_mix_coefficients", "sketch2vec_loss", "stroke3_to_stroke5",
    "total_loss", "train", "write_manifest",
]
