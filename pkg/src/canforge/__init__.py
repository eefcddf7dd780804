"""DCGAN, CAN and conditional CAN training toolkit for 64x64 portrait generation."""
from .data import (
    STYLE_NAMES,
    VOCABULARY,
    DatasetManifest,
    StyleVocabulary,
    denormalize,
    five_crop,
    load_manifest,
    make_batches,
    normalize,
    resize_to_64,
)
from .losses import (
    bce_fake,
    bce_real,
    can_discriminator_loss,
    can_generator_loss,
    d_style_loss,
    g_adversarial_loss,
    style_ambiguity_loss,
)
from .models import (
    ModelSpec,
    build_discriminator,
    build_generator,
    init_parameters,
    parameter_census,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .trainer import TrainingConfig, divergence_monitor, train, train_step_d, train_step_g
from .generation import GenerationRequest, export_curves, generate, make_collage

__version__ = "0.1.0"
