"""Optic-disc segmentation with a conditional GAN."""

from .config import RunConfig, load_config_file
from .data import SplitTensors, load_manifest
from .inference import Predictor, evaluate_split
from .losses import LossConfig, discriminator_loss, generator_loss
from .metrics import ConfusionCounts, MetricsReport, confusion, metrics_from_counts
from .model import (DiscriminatorConfig, GeneratorConfig, build_discriminator, build_generator,
                    discriminator_forward, generator_forward)
from .postprocess import StructuringElement, largest_component, morph_open, threshold
from .train import Trainer

__version__ = "0.1.0"
