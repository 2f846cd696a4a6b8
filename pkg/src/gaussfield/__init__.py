"""Editable 2D images as trainable Gaussian feature fields.

An image is represented by a set of 2D Gaussian components carrying feature
embeddings. A query coordinate gathers its radius-limited nearest Gaussians,
averages their embeddings under the Gaussian kernel, and decodes the result
with a small MLP. Moving the Gaussians moves the content.
"""

from .core import (
    ConfigError,
    ContractError,
    DomainError,
    GaussFieldError,
    GaussianSet,
    ImageBuffer,
    ModelConfig,
    normalize_coords,
    validate_config,
)
from .field import (
    Model,
    TrainBatch,
    aggregate,
    bake,
    decode,
    init_model,
    psnr,
    render,
    sample_batch,
    train,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "DomainError",
    "GaussFieldError",
    "GaussianSet",
    "ImageBuffer",
    "Model",
    "ModelConfig",
    "TrainBatch",
    "aggregate",
    "bake",
    "decode",
    "init_model",
    "normalize_coords",
    "psnr",
    "render",
    "sample_batch",
    "train",
    "train_step",
    "validate_config",
    "__version__",
]
