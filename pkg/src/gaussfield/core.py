"""Shared domain types, coordinate conventions, and configuration validation.

One coordinate system is used everywhere in the package: the image maps to
the axis-aligned box [0, W/S] x [0, H/S] with S = max(W, H), so the longest
image side spans exactly 1.0 and pixels are sampled at their centers.
Gaussian means, KNN radii and hash-grid queries all live in this domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np


class GaussFieldError(Exception):
    """Base class for every error raised by this package."""


class DomainError(GaussFieldError, ValueError):
    """An argument lies outside an operation's documented domain."""


class ConfigError(GaussFieldError, ValueError):
    """Invalid model configuration; the message names the offending field."""


class ContractError(GaussFieldError, RuntimeError):
    """An operation was invoked on a model in the wrong state."""


def domain_box(width: int, height: int) -> tuple[float, float]:
    """Extent (x_max, y_max) of the coordinate domain for an image size."""
    if width <= 0 or height <= 0:
        raise DomainError(f"image size must be positive, got {width}x{height}")
    s = float(max(width, height))
    return width / s, height / s


def normalize_coords(i: int, j: int, width: int, height: int) -> tuple[float, float]:
    """Map pixel (row i, col j) to its center in the shared domain.

    Returns ((j + 0.5) / S, (i + 0.5) / S) with S = max(width, height).
    """
    if not (0 <= i < height and 0 <= j < width):
        raise DomainError(
            f"pixel ({i}, {j}) outside image of size {width}x{height}"
        )
    s = float(max(width, height))
    return (j + 0.5) / s, (i + 0.5) / s


def pixel_centers(
    width: int,
    height: int,
    region: tuple[int, int, int, int] | None = None,
) -> np.ndarray:
    """Domain coordinates of all pixel centers, row-major, shape (P, 2).

    ``region`` is a pixel rect (x0, y0, x1, y1), half-open, defaulting to the
    full image. Normalization always uses the full image size.
    """
    x0, y0, x1, y1 = region if region is not None else (0, 0, width, height)
    if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
        raise DomainError(f"invalid pixel region {(x0, y0, x1, y1)} for {width}x{height}")
    s = float(max(width, height))
    xs = (np.arange(x0, x1, dtype=np.float64) + 0.5) / s
    ys = (np.arange(y0, y1, dtype=np.float64) + 0.5) / s
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


@dataclass
class ModelConfig:
    """Hyper-parameters of a Gaussian feature-field model."""

    n_gaussians: int = 5000
    knn_k: int = 16
    knn_radius: float = 0.1
    levels: int = 8
    features_per_level: int = 2
    min_res: int = 16
    max_res: int = 8192
    hash_table_log2: int = 15
    mlp_hidden_layers: int = 3
    mlp_hidden_width: int = 64
    smooth_l1_beta: float = 1.0
    lr_grid: float = 1e-2
    lr_mlp: float = 1e-3
    batch_size: int = 1024
    iterations: int = 2000
    rng_seed: int = 0

    @property
    def embed_dim(self) -> int:
        return self.levels * self.features_per_level

    def validate(self) -> "ModelConfig":
        """Check every invariant; raises ConfigError naming the bad field."""
        problems = []
        if self.n_gaussians < 1:
            problems.append(f"n_gaussians must be >= 1, got {self.n_gaussians}")
        if self.knn_k < 1:
            problems.append(f"knn_k must be >= 1, got {self.knn_k}")
        if not (self.knn_radius > 0 and math.isfinite(self.knn_radius)):
            problems.append(f"knn_radius must be > 0, got {self.knn_radius}")
        if self.levels < 1:
            problems.append(f"levels must be >= 1, got {self.levels}")
        if self.features_per_level < 1:
            problems.append(
                f"features_per_level must be >= 1, got {self.features_per_level}"
            )
        if self.min_res < 2:
            problems.append(f"min_res must be >= 2, got {self.min_res}")
        if self.max_res < self.min_res:
            problems.append(
                f"max_res must be >= min_res, got {self.max_res} < {self.min_res}"
            )
        if self.hash_table_log2 < 1:
            problems.append(f"hash_table_log2 must be >= 1, got {self.hash_table_log2}")
        if self.mlp_hidden_layers < 1:
            problems.append(
                f"mlp_hidden_layers must be >= 1, got {self.mlp_hidden_layers}"
            )
        if self.mlp_hidden_width < 1:
            problems.append(
                f"mlp_hidden_width must be >= 1, got {self.mlp_hidden_width}"
            )
        if not (self.smooth_l1_beta > 0):
            problems.append(f"smooth_l1_beta must be > 0, got {self.smooth_l1_beta}")
        if self.lr_grid < 0:
            problems.append(f"lr_grid must be >= 0, got {self.lr_grid}")
        if self.lr_mlp < 0:
            problems.append(f"lr_mlp must be >= 0, got {self.lr_mlp}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.iterations < 0:
            problems.append(f"iterations must be >= 0, got {self.iterations}")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**d).validate()

    def with_overrides(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs).validate()


def validate_config(cfg: ModelConfig) -> ModelConfig:
    """Functional alias for ModelConfig.validate."""
    return cfg.validate()


@dataclass
class GaussianSet:
    """The editable geometric substrate: N components with means and shapes.

    ``cov_params`` rows are (log_s1, log_s2, theta_rad); the covariance is
    R(theta) diag(exp(2 log_s1), exp(2 log_s2)) R(theta)^T, positive-definite
    by construction. ``embeddings`` is present only on baked sets.
    """

    means: np.ndarray
    cov_params: np.ndarray
    embeddings: np.ndarray | None = None
    baked: bool = False

    def __post_init__(self):
        self.means = np.ascontiguousarray(self.means, dtype=np.float64)
        self.cov_params = np.ascontiguousarray(self.cov_params, dtype=np.float64)
        if self.means.ndim != 2 or self.means.shape[1] != 2:
            raise DomainError(f"means must be (N, 2), got {self.means.shape}")
        if self.cov_params.shape != (self.means.shape[0], 3):
            raise DomainError(
                f"cov_params must be (N, 3), got {self.cov_params.shape}"
            )
        if not np.all(np.isfinite(self.means)):
            raise DomainError("means must be finite")
        if not np.all(np.isfinite(self.cov_params)):
            raise DomainError("cov_params must be finite")
        if self.embeddings is not None:
            self.embeddings = np.ascontiguousarray(self.embeddings, dtype=np.float64)
            if self.embeddings.shape[0] != self.means.shape[0]:
                raise DomainError("embeddings row count must match means")
        if self.baked and self.embeddings is None:
            raise DomainError("baked set requires embeddings")

    @property
    def count(self) -> int:
        return self.means.shape[0]

    def covariances(self) -> np.ndarray:
        """Materialize the (N, 2, 2) covariance matrices from the params."""
        log_s1, log_s2, theta = (self.cov_params[:, k] for k in range(3))
        c, s = np.cos(theta), np.sin(theta)
        d1, d2 = np.exp(2.0 * log_s1), np.exp(2.0 * log_s2)
        # R diag(d1, d2) R^T written out elementwise
        cov = np.empty((self.count, 2, 2))
        cov[:, 0, 0] = c * c * d1 + s * s * d2
        cov[:, 0, 1] = c * s * (d1 - d2)
        cov[:, 1, 0] = cov[:, 0, 1]
        cov[:, 1, 1] = s * s * d1 + c * c * d2
        return cov


@dataclass
class ImageBuffer:
    """An RGB or RGBA raster with unit-interval channel values.

    ``data`` has shape (height, width, channels), row-major, float64.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.channels not in (3, 4):
            raise DomainError(f"channels must be 3 or 4, got {self.channels}")
        if self.data.shape != (self.height, self.width, self.channels):
            raise DomainError(
                f"data shape {self.data.shape} does not match "
                f"{self.height}x{self.width}x{self.channels}"
            )
        if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
            raise DomainError("pixel values must lie in [0, 1]")

    @classmethod
    def from_array(cls, data: np.ndarray) -> "ImageBuffer":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 3:
            raise DomainError(f"expected (H, W, C) array, got shape {data.shape}")
        h, w, c = data.shape
        return cls(width=w, height=h, channels=c, data=data)

    def rgb(self) -> np.ndarray:
        return self.data[:, :, :3]

    def alpha(self) -> np.ndarray | None:
        return self.data[:, :, 3] if self.channels == 4 else None
