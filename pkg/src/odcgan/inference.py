"""Running a trained generator and scoring it against ground truth."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from . import checkpoint as ckpt
from .config import RunConfig
from .data import DatasetError, SplitTensors
from .metrics import MetricsReport, aggregate, confusion, metrics_from_counts, write_metrics_csv
from .model import Generator, generator_forward
from .postprocess import PostprocessConfig, postprocess

log = logging.getLogger(__name__)

# maps a Bx3x256x256 image batch to Bx1x256x256 soft masks
PredictFn = Callable[[torch.Tensor], torch.Tensor]


class Predictor:
    def __init__(self, gen: Generator, batch_size: int = 4):
        self.gen = gen
        self.batch_size = batch_size

    @classmethod
    def from_checkpoint(cls, path) -> "Predictor":
        tensors, meta = ckpt.load_archive(path)
        cfg = RunConfig.from_dict(meta["config"])
        gen = Generator(cfg.generator)
        ckpt.restore_module(gen, "generator", tensors)
        gen.eval()
        return cls(gen)

    def __call__(self, images: torch.Tensor) -> torch.Tensor:
        out = [generator_forward(self.gen, images[i:i + self.batch_size], "eval")
               for i in range(0, len(images), self.batch_size)]
        return torch.cat(out)


def evaluate_split(predict: PredictFn, split: SplitTensors, post: PostprocessConfig | None = None,
                   out_csv=None):
    """Per-image metrics at 256x256 after postprocessing, plus their mean.

    Returns ``(summary, per_image)`` where ``per_image`` maps id to report.
    When ``out_csv`` is given the rows and the aggregate are written there.
    """
    if len(split) == 0:
        raise DatasetError("test split is empty")
    if split.masks is None:
        raise DatasetError("test split is missing ground-truth masks")
    post = post or PostprocessConfig()
    soft = predict(split.images)
    per_image: dict[str, MetricsReport] = {}
    for i, id_ in enumerate(split.ids):
        hard = postprocess(soft[i, 0].cpu().numpy(), post)
        gt = split.masks[i, 0].numpy().astype(np.uint8)
        per_image[id_] = metrics_from_counts(confusion(hard, gt))
    summary = aggregate(per_image.values())
    if out_csv is not None:
        write_metrics_csv(Path(out_csv), per_image, summary)
    return summary, per_image
