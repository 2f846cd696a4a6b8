"""Geometry editing on baked models: selections over Gaussians, rigid and
affine transforms of their means, animation replay, and alpha compositing.

Edits move means (and, where meaningful, re-orient or re-scale shapes) but
never touch embeddings or decoder weights, so the decoded content deforms
with the geometry.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import spatial
from .core import ContractError, DomainError, GaussianSet, ImageBuffer
from .field import Model, render

SELECTION_KINDS = ("all", "indices", "rect", "polygon")
TRANSFORM_KINDS = ("translate", "rotate", "scale", "displace")


@dataclass
class Selection:
    """A subset of Gaussians: everything, explicit ids, or a 2D region."""

    kind: str
    indices: np.ndarray | None = None
    rect_min: np.ndarray | None = None
    rect_max: np.ndarray | None = None
    polygon: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in SELECTION_KINDS:
            raise DomainError(f"unknown selection kind {self.kind!r}")
        if self.kind == "indices":
            self.indices = np.asarray(self.indices, dtype=np.int64).ravel()
        elif self.kind == "rect":
            self.rect_min = np.asarray(self.rect_min, dtype=np.float64).ravel()
            self.rect_max = np.asarray(self.rect_max, dtype=np.float64).ravel()
            if self.rect_min.shape != (2,) or self.rect_max.shape != (2,):
                raise DomainError("rect needs 2D min and max corners")
            if np.any(self.rect_min > self.rect_max):
                raise DomainError("rect min must be <= max component-wise")
        elif self.kind == "polygon":
            self.polygon = np.asarray(self.polygon, dtype=np.float64)
            if self.polygon.ndim != 2 or self.polygon.shape[1] != 2:
                raise DomainError("polygon needs an (n, 2) vertex list")
            if self.polygon.shape[0] < 3:
                raise DomainError("degenerate polygon: fewer than 3 vertices")


@dataclass
class Transform:
    """A geometric edit applied to selected means."""

    kind: str
    vector: np.ndarray | None = None          # translate
    center: np.ndarray | None = None          # rotate / scale
    angle: float | None = None                # rotate
    sx: float | None = None                   # scale
    sy: float | None = None                   # scale
    offsets: np.ndarray | None = None         # displace, (n_selected, 2)

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise DomainError(f"unknown transform kind {self.kind!r}")
        if self.kind == "translate":
            self.vector = _finite_vec2(self.vector, "translate vector")
        elif self.kind == "rotate":
            self.center = _finite_vec2(self.center, "rotate center")
            if self.angle is None or not np.isfinite(self.angle):
                raise DomainError("rotate needs a finite angle")
            self.angle = float(self.angle)
        elif self.kind == "scale":
            self.center = _finite_vec2(self.center, "scale center")
            for name, v in (("sx", self.sx), ("sy", self.sy)):
                if v is None or not np.isfinite(v) or v == 0:
                    raise DomainError(f"scale factor {name} must be finite and nonzero")
            self.sx, self.sy = float(self.sx), float(self.sy)
        elif self.kind == "displace":
            self.offsets = np.asarray(self.offsets, dtype=np.float64)
            if self.offsets.ndim != 2 or self.offsets.shape[1] != 2:
                raise DomainError("displace needs (n, 2) offsets")
            if not np.all(np.isfinite(self.offsets)):
                raise DomainError("displace offsets must be finite")


def _finite_vec2(v, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.shape != (2,) or not np.all(np.isfinite(v)):
        raise DomainError(f"{what} must be a finite 2-vector")
    return v


def _points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd rule crossing test, vectorized over points."""
    inside = np.zeros(points.shape[0], dtype=bool)
    px, py = points[:, 0], points[:, 1]
    n = polygon.shape[0]
    for a in range(n):
        x1, y1 = polygon[a]
        x2, y2 = polygon[(a + 1) % n]
        crosses = (y1 > py) != (y2 > py)
        if not crosses.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < x_at)
    return inside


def select(gaussians: GaussianSet, sel: Selection) -> np.ndarray:
    """Indices of the selected Gaussians, sorted ascending."""
    n = gaussians.count
    if sel.kind == "all":
        return np.arange(n, dtype=np.int64)
    if sel.kind == "indices":
        if sel.indices.size and (sel.indices.min() < 0 or sel.indices.max() >= n):
            raise DomainError(f"selection index out of range for {n} Gaussians")
        return np.unique(sel.indices)
    means = gaussians.means
    if sel.kind == "rect":
        hit = np.all((means >= sel.rect_min) & (means <= sel.rect_max), axis=1)
    else:
        hit = _points_in_polygon(means, sel.polygon)
    return np.flatnonzero(hit).astype(np.int64)


def apply_transform(model: Model, indices: np.ndarray, t: Transform) -> Model:
    """New model with the selected means (and shapes) transformed.

    Only baked models are editable; embeddings and decoder weights are
    shared with the input model, untouched.
    """
    if not model.baked:
        raise ContractError("editing requires a baked model")
    indices = np.asarray(indices, dtype=np.int64).ravel()
    n = model.gaussians.count
    if indices.size and (indices.min() < 0 or indices.max() >= n):
        raise DomainError(f"transform index out of range for {n} Gaussians")

    means = model.gaussians.means.copy()
    cov = model.gaussians.cov_params.copy()
    sub = means[indices]
    if t.kind == "translate":
        means[indices] = sub + t.vector
    elif t.kind == "rotate":
        c, s = np.cos(t.angle), np.sin(t.angle)
        rel = sub - t.center
        means[indices] = t.center + np.stack(
            [c * rel[:, 0] - s * rel[:, 1], s * rel[:, 0] + c * rel[:, 1]], axis=1
        )
        cov[indices, 2] += t.angle
    elif t.kind == "scale":
        rel = sub - t.center
        means[indices] = t.center + rel * np.array([t.sx, t.sy])
        cov[indices, 0] += np.log(abs(t.sx))
        cov[indices, 1] += np.log(abs(t.sy))
    elif t.kind == "displace":
        if t.offsets.shape[0] != indices.size:
            raise DomainError(
                f"displace offsets rows ({t.offsets.shape[0]}) != "
                f"selection size ({indices.size})"
            )
        means[indices] = sub + t.offsets

    gaussians = GaussianSet(
        means=means,
        cov_params=cov,
        embeddings=model.gaussians.embeddings,
        baked=True,
    )
    edited = copy.copy(model)
    edited.gaussians = gaussians
    edited.index = spatial.rebuild(model.index, means)
    return edited


def replay_animation(model: Model, manifest):
    """Render one frame per manifest entry, yielding (frame_index, buffer).

    Each frame supplies absolute positions for every Gaussian; the model
    itself is never mutated. Frames render at the model's training size.
    """
    if not model.baked:
        raise ContractError("animation replay requires a baked model")
    n = model.gaussians.count
    if manifest.count != n:
        raise DomainError(
            f"manifest is for {manifest.count} Gaussians, model has {n}"
        )
    base = model.gaussians.means
    all_ids = np.arange(n, dtype=np.int64)
    for k in range(len(manifest)):
        positions = manifest.read_frame(k)
        posed = apply_transform(
            model, all_ids, Transform(kind="displace", offsets=positions - base)
        )
        yield k, render(posed, model.train_width, model.train_height)


def composite_over(fg: ImageBuffer, bg: ImageBuffer) -> ImageBuffer:
    """Straight-alpha blend of an RGBA foreground over an RGB background."""
    if fg.channels != 4:
        raise DomainError("foreground must be RGBA")
    if bg.channels != 3:
        raise DomainError("background must be RGB")
    if (fg.width, fg.height) != (bg.width, bg.height):
        raise DomainError(
            f"dimension mismatch: {fg.width}x{fg.height} vs {bg.width}x{bg.height}"
        )
    a = fg.alpha()[:, :, None]
    out = a * fg.rgb() + (1.0 - a) * bg.rgb()
    return ImageBuffer.from_array(out)
