"""Multi-resolution hash-grid feature encoder with exact analytic gradients.

Each level overlays a regular 2D vertex lattice on the unit square and
bilinearly interpolates per-vertex feature rows. Small levels index their
vertices directly (collision-free); levels whose vertex grid exceeds the
table fall back to spatial hashing. Level outputs concatenate level-major.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ModelConfig

_HASH_PRIME = np.int64(2654435761)

# Corner visit order for bilinear interpolation; the forward/backward sums
# follow this order exactly so repeated evaluation is bit-stable.
_CORNERS = ((0, 0), (1, 0), (0, 1), (1, 1))


def level_resolutions(min_res: int, max_res: int, levels: int) -> np.ndarray:
    """Per-level lattice resolutions on a geometric ladder.

    floor(min_res * b^l) with b chosen so the last level lands on max_res.
    The 1e-6 nudge inside the floor absorbs 1-ulp dips of b^(levels-1),
    which would otherwise drop the top level to max_res - 1.
    """
    if levels == 1:
        return np.array([min_res], dtype=np.int64)
    growth = np.exp((np.log(max_res) - np.log(min_res)) / (levels - 1))
    ladder = np.floor(min_res * growth ** np.arange(levels) + 1e-6)
    return ladder.astype(np.int64)


@dataclass
class HashGrid:
    """Trainable multi-resolution feature tables."""

    levels: int
    feature_dim: int
    table_size: int
    resolutions: np.ndarray
    growth: float
    tables: np.ndarray = field(repr=False)  # (levels, table_size, feature_dim)

    @property
    def output_dim(self) -> int:
        return self.levels * self.feature_dim


def build_hashgrid(cfg: ModelConfig, rng: np.random.Generator) -> HashGrid:
    """Fresh grid per the config; tables start uniform in [-1e-4, 1e-4]."""
    cfg = cfg.validate()
    res = level_resolutions(cfg.min_res, cfg.max_res, cfg.levels)
    table_size = 1 << cfg.hash_table_log2
    growth = (
        float(np.exp((np.log(cfg.max_res) - np.log(cfg.min_res)) / (cfg.levels - 1)))
        if cfg.levels > 1
        else 1.0
    )
    tables = rng.uniform(
        -1e-4, 1e-4, size=(cfg.levels, table_size, cfg.features_per_level)
    )
    return HashGrid(
        levels=cfg.levels,
        feature_dim=cfg.features_per_level,
        table_size=table_size,
        resolutions=res,
        growth=growth,
        tables=tables,
    )


def vertex_slot(resolution: int, vx, vy, table_size: int):
    """Table slot of lattice vertex (vx, vy) at the given level resolution.

    Dense levels ((res+1)^2 <= table_size) index row-major and are
    collision-free; larger levels hash with a 64-bit intermediate.
    Accepts scalars or arrays.
    """
    vx = np.asarray(vx, dtype=np.int64)
    vy = np.asarray(vy, dtype=np.int64)
    side = int(resolution) + 1
    if side * side <= table_size:
        return vy * side + vx
    return (vx ^ (vy * _HASH_PRIME)) & np.int64(table_size - 1)


@dataclass
class EncodePlan:
    """Precomputed interpolation slots and weights for fixed query points.

    Forward/backward through the plan is the *only* arithmetic path for
    encoding, so planned (cached) and direct evaluation are bit-identical.
    """

    slots: np.ndarray    # (levels, P, 4) int64
    weights: np.ndarray  # (levels, P, 4) float64


def make_plan(grid: HashGrid, points: np.ndarray) -> EncodePlan:
    """Resolve corner slots and bilinear weights for each point and level.

    Points are clamped to the unit square (the domain box is a subset of it;
    see the coordinate conventions in core).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    pts = np.clip(pts, 0.0, 1.0)
    n_pts = pts.shape[0]
    slots = np.empty((grid.levels, n_pts, 4), dtype=np.int64)
    weights = np.empty((grid.levels, n_pts, 4))
    for lvl in range(grid.levels):
        res = int(grid.resolutions[lvl])
        scaled = pts * res
        v0 = np.clip(np.floor(scaled), 0, res - 1).astype(np.int64)
        fx = scaled[:, 0] - v0[:, 0]
        fy = scaled[:, 1] - v0[:, 1]
        wx = (1.0 - fx, fx)
        wy = (1.0 - fy, fy)
        for c, (dx, dy) in enumerate(_CORNERS):
            slots[lvl, :, c] = vertex_slot(
                res, v0[:, 0] + dx, v0[:, 1] + dy, grid.table_size
            )
            weights[lvl, :, c] = wx[dx] * wy[dy]
    return EncodePlan(slots=slots, weights=weights)


def encode_planned(grid: HashGrid, plan: EncodePlan, rows=slice(None)) -> np.ndarray:
    """Interpolated features for the planned points (or a row subset)."""
    slots = plan.slots[:, rows, :]
    weights = plan.weights[:, rows, :]
    n_pts = slots.shape[1]
    out = np.empty((n_pts, grid.levels * grid.feature_dim))
    for lvl in range(grid.levels):
        feats = grid.tables[lvl][slots[lvl]]  # (P, 4, F)
        w = weights[lvl]
        acc = (
            w[:, 0, None] * feats[:, 0]
            + w[:, 1, None] * feats[:, 1]
            + w[:, 2, None] * feats[:, 2]
            + w[:, 3, None] * feats[:, 3]
        )
        out[:, lvl * grid.feature_dim:(lvl + 1) * grid.feature_dim] = acc
    return out


def encode(grid: HashGrid, points: np.ndarray) -> np.ndarray:
    """Feature vector(s) for arbitrary points; shape (P, d) or (d,)."""
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    out = encode_planned(grid, make_plan(grid, pts))
    return out[0] if single else out


def encode_backward_planned(
    grid: HashGrid, plan: EncodePlan, upstream: np.ndarray
) -> np.ndarray:
    """Table gradients for planned points given upstream (P, d) gradients.

    Each point touches at most 4 slots per level; contributions accumulate
    additively (bincount is sequential per slot, so merges are deterministic).
    """
    n_pts = plan.slots.shape[1]
    up = np.asarray(upstream, dtype=np.float64).reshape(
        n_pts, grid.levels, grid.feature_dim
    )
    grad = np.zeros_like(grid.tables)
    for lvl in range(grid.levels):
        contrib = plan.weights[lvl][:, :, None] * up[:, lvl, None, :]  # (P, 4, F)
        flat = plan.slots[lvl].ravel()
        for f in range(grid.feature_dim):
            grad[lvl, :, f] = np.bincount(
                flat, weights=contrib[:, :, f].ravel(), minlength=grid.table_size
            )
    return grad


def encode_backward(
    grid: HashGrid, points: np.ndarray, upstream: np.ndarray
) -> np.ndarray:
    """Table gradients of encode at ``points`` given upstream gradients."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    up = np.asarray(upstream, dtype=np.float64).reshape(pts.shape[0], -1)
    return encode_backward_planned(grid, make_plan(grid, pts), up)
