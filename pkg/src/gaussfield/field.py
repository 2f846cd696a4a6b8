"""The Gaussian feature-field model: initialization, kernel-weighted KNN
feature aggregation, decoding, training, baking, rendering, and PSNR.

A query coordinate never reaches the decoder directly: its embedding is the
kernel-weighted average of its radius-limited nearest Gaussians' feature
vectors, so the decoded image depends only on relative geometry. During
training each Gaussian's feature vector is interpolated from the hash grid
at its (fixed) mean; baking stores those vectors and drops the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import encoding, net, spatial
from .core import (
    ContractError,
    DomainError,
    GaussianSet,
    ImageBuffer,
    ModelConfig,
    domain_box,
    pixel_centers,
)

# Below this total kernel mass the weights are considered underflowed and the
# query falls back to inverse-squared-distance weights over the same set.
_WEIGHT_UNDERFLOW = 1e-30

_RENDER_CHUNK = 16384


@dataclass
class Model:
    """A trainable (or baked) Gaussian feature field for one image."""

    config: ModelConfig
    gaussians: GaussianSet
    grid: encoding.HashGrid | None
    color_mlp: net.Mlp
    mask_mlp: net.Mlp | None
    index: spatial.GridIndex
    channels: int
    train_width: int
    train_height: int
    history: list = field(default_factory=list)
    _trainer: object = field(default=None, repr=False)

    @property
    def baked(self) -> bool:
        return self.gaussians.baked


@dataclass
class TrainBatch:
    """One optimization batch: color samples plus, for RGBA, mask samples."""

    coords: np.ndarray
    targets: np.ndarray
    alpha_coords: np.ndarray | None = None
    alpha_targets: np.ndarray | None = None
    # Optional precomputed neighbor arrays (idx, sq_dists, counts); the
    # training loop fills these from its per-pixel cache.
    neighbors: tuple | None = None
    alpha_neighbors: tuple | None = None


@dataclass
class AggregateInfo:
    """Debug view of one aggregation: neighbors and normalized weights."""

    indices: np.ndarray
    sq_dists: np.ndarray
    weights: np.ndarray
    coverage_miss: bool
    used_fallback: bool


def init_model(
    image: ImageBuffer, cfg: ModelConfig, rng_seed: int | None = None
) -> Model:
    """Fresh model over an image: jittered-grid means, isotropic shapes.

    For RGBA images, candidate means whose pixel has zero alpha are removed,
    so the component count can shrink below cfg.n_gaussians.
    """
    cfg = cfg.validate()
    seed = cfg.rng_seed if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    bx, by = domain_box(image.width, image.height)

    n_goal = cfg.n_gaussians
    nx = max(1, math.ceil(math.sqrt(n_goal * bx / by)))
    ny = max(1, math.ceil(n_goal / nx))
    sx, sy = bx / nx, by / ny
    gx = (np.arange(nx) + 0.5) * sx
    gy = (np.arange(ny) + 0.5) * sy
    mx, my = np.meshgrid(gx, gy)
    candidates = np.stack([mx.ravel(), my.ravel()], axis=1)
    chosen = rng.choice(candidates.shape[0], size=n_goal, replace=False)
    means = candidates[np.sort(chosen)]
    means = means + rng.uniform(-0.5, 0.5, size=means.shape) * np.array([sx, sy])

    if image.channels == 4:
        alpha = image.alpha()
        scale = float(max(image.width, image.height))
        jj = np.clip((means[:, 0] * scale).astype(np.int64), 0, image.width - 1)
        ii = np.clip((means[:, 1] * scale).astype(np.int64), 0, image.height - 1)
        keep = alpha[ii, jj] > 0
        means = means[keep]
        if means.shape[0] == 0:
            raise DomainError("empty support: every candidate fell on zero alpha")

    n = means.shape[0]
    iso_scale = bx / math.sqrt(n_goal)
    cov_params = np.zeros((n, 3))
    cov_params[:, 0] = math.log(iso_scale)
    cov_params[:, 1] = math.log(iso_scale)

    grid = encoding.build_hashgrid(cfg, rng)
    d = cfg.embed_dim
    hidden = [cfg.mlp_hidden_width] * cfg.mlp_hidden_layers
    color_mlp = net.build_mlp([d] + hidden + [3], rng)
    mask_mlp = net.build_mlp([d] + hidden + [1], rng) if image.channels == 4 else None

    return Model(
        config=cfg,
        gaussians=GaussianSet(means=means, cov_params=cov_params),
        grid=grid,
        color_mlp=color_mlp,
        mask_mlp=mask_mlp,
        index=spatial.build_index(means, cfg.knn_radius),
        channels=image.channels,
        train_width=image.width,
        train_height=image.height,
    )


# ---------------------------------------------------------------------------
# Aggregation


class _AggCache:
    __slots__ = (
        "xs", "idx", "mask", "sq", "counts", "w", "sw", "wn",
        "p1", "p2", "inv1", "inv2", "fallback", "e_pair", "emb",
    )


def _neighbors(model: Model, xs: np.ndarray):
    return spatial.query_radius_knn_batch(
        model.index, xs, model.config.knn_radius, model.config.knn_k
    )


def _gauss_embeddings(model: Model, rows) -> np.ndarray:
    """Feature vectors of the given Gaussians (hash grid or baked store)."""
    if model.gaussians.baked:
        return model.gaussians.embeddings[rows]
    trainer = model._trainer
    if trainer is not None:
        return encoding.encode_planned(model.grid, trainer.plan, rows)
    return encoding.encode(model.grid, model.gaussians.means[rows])


def aggregate_batch(model: Model, xs: np.ndarray, neighbors: tuple | None = None):
    """Kernel-weighted average of neighbor embeddings for each query row.

    Returns (embeddings (M, d), cache). Rows with no neighbor inside the
    radius get the zero vector.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    idx, sq, counts = neighbors if neighbors is not None else _neighbors(model, xs)
    mask = idx >= 0
    idx_safe = np.where(mask, idx, 0)

    diff = xs[:, None, :] - model.gaussians.means[idx_safe]
    cov = model.gaussians.cov_params[idx_safe]
    cos_t, sin_t = np.cos(cov[:, :, 2]), np.sin(cov[:, :, 2])
    p1 = cos_t * diff[:, :, 0] + sin_t * diff[:, :, 1]
    p2 = -sin_t * diff[:, :, 0] + cos_t * diff[:, :, 1]
    inv1 = np.exp(-2.0 * cov[:, :, 0])
    inv2 = np.exp(-2.0 * cov[:, :, 1])
    quad = p1 * p1 * inv1 + p2 * p2 * inv2
    w = np.where(mask, np.exp(-0.5 * quad), 0.0)

    sw = w.sum(axis=1)
    covered = counts > 0
    fallback = covered & (sw < _WEIGHT_UNDERFLOW)
    if fallback.any():
        # All kernel weights underflowed; sq > 0 here because a zero-distance
        # neighbor would have weight exp(0) = 1.
        w_fb = np.where(mask[fallback], 1.0 / sq[fallback], 0.0)
        w[fallback] = w_fb
        sw[fallback] = w_fb.sum(axis=1)

    sw_safe = np.where(covered, sw, 1.0)
    wn = w / sw_safe[:, None]

    d = model.config.embed_dim
    e_pair = np.zeros((xs.shape[0], model.config.knn_k, d))
    flat_mask = mask.ravel()
    if flat_mask.any():
        uniq, inv = np.unique(idx_safe.ravel()[flat_mask], return_inverse=True)
        e_uniq = _gauss_embeddings(model, uniq)
        e_flat = e_pair.reshape(-1, d)
        e_flat[flat_mask] = e_uniq[inv]

    emb = (wn[:, :, None] * e_pair).sum(axis=1)

    cache = _AggCache()
    cache.xs, cache.idx, cache.mask, cache.sq, cache.counts = xs, idx, mask, sq, counts
    cache.w, cache.sw, cache.wn = w, sw_safe, wn
    cache.p1, cache.p2, cache.inv1, cache.inv2 = p1, p2, inv1, inv2
    cache.fallback = fallback
    cache.e_pair, cache.emb = e_pair, emb
    return emb, cache


def aggregate(model: Model, x: np.ndarray):
    """Single-point aggregation; returns (embedding, AggregateInfo)."""
    emb, cache = aggregate_batch(model, np.asarray(x, dtype=np.float64)[None, :])
    n = int(cache.counts[0])
    info = AggregateInfo(
        indices=cache.idx[0, :n].copy(),
        sq_dists=cache.sq[0, :n].copy(),
        weights=cache.wn[0, :n].copy(),
        coverage_miss=n == 0,
        used_fallback=bool(cache.fallback[0]),
    )
    return emb[0], info


def aggregate_backward(model: Model, cache: _AggCache, upstream: np.ndarray):
    """Gradients of the aggregation w.r.t. embeddings and shape params.

    Returns (per-Gaussian embedding grads (N, d), cov param grads (N, 3)).
    Means receive no gradient by design.
    """
    n = model.gaussians.count
    d = model.config.embed_dim
    ge = np.zeros((n, d))
    gcov = np.zeros((n, 3))

    mask = cache.mask
    if not mask.any():
        return ge, gcov
    idx_safe = np.where(mask, cache.idx, 0)

    # d emb / d e_pair = wn
    g_epair = cache.wn[:, :, None] * upstream[:, None, :]
    np.add.at(ge, idx_safe[mask], g_epair[mask])

    # d emb / d w_i = (e_i - emb) / sum(w)
    gw = ((cache.e_pair - cache.emb[:, None, :]) * upstream[:, None, :]).sum(axis=2)
    gw = gw / cache.sw[:, None]

    # Kernel rows only: fallback weights do not depend on the shape params.
    kernel_rows = ~cache.fallback
    km = mask & kernel_rows[:, None]
    if km.any():
        w, p1, p2 = cache.w, cache.p1, cache.p2
        inv1, inv2 = cache.inv1, cache.inv2
        ga = gw * w * inv1 * p1 * p1
        gb = gw * w * inv2 * p2 * p2
        gt = gw * (-w * p1 * p2 * (inv1 - inv2))
        flat_idx = idx_safe[km]
        gcov[:, 0] += np.bincount(flat_idx, weights=ga[km], minlength=n)
        gcov[:, 1] += np.bincount(flat_idx, weights=gb[km], minlength=n)
        gcov[:, 2] += np.bincount(flat_idx, weights=gt[km], minlength=n)
    return ge, gcov


# ---------------------------------------------------------------------------
# Decoding and rendering


def decode_batch(
    model: Model, xs: np.ndarray, neighbors: tuple | None = None
) -> np.ndarray:
    """Decoded colors (M, 3) or colors+alpha (M, 4) at the query points."""
    emb, _ = aggregate_batch(model, xs, neighbors)
    rgb, _ = net.mlp_forward(model.color_mlp, emb)
    if model.mask_mlp is None:
        return rgb
    alpha, _ = net.mlp_forward(model.mask_mlp, emb)
    return np.concatenate([rgb, alpha], axis=1)


def decode(model: Model, x: np.ndarray) -> np.ndarray:
    """Decoded color (and alpha for RGBA models) at one coordinate."""
    return decode_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0]


def render(
    model: Model,
    width: int,
    height: int,
    region: tuple[int, int, int, int] | None = None,
) -> ImageBuffer:
    """Decode every pixel center of the (optionally cropped) raster."""
    x0, y0, x1, y1 = region if region is not None else (0, 0, width, height)
    coords = pixel_centers(width, height, (x0, y0, x1, y1))
    out = np.empty((coords.shape[0], 4 if model.mask_mlp is not None else 3))
    for lo in range(0, coords.shape[0], _RENDER_CHUNK):
        hi = min(lo + _RENDER_CHUNK, coords.shape[0])
        out[lo:hi] = decode_batch(model, coords[lo:hi])
    data = out.reshape(y1 - y0, x1 - x0, out.shape[1])
    return ImageBuffer.from_array(data)


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """Peak signal-to-noise ratio over the RGB channels, peak = 1.0."""
    if (a.width, a.height) != (b.width, b.height):
        raise DomainError(
            f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    mse = float(np.mean((a.rgb() - b.rgb()) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


# ---------------------------------------------------------------------------
# Training


class _Trainer:
    """Optimizer state attached to an unbaked model during training."""

    def __init__(self, model: Model):
        cfg = model.config
        self.plan = encoding.make_plan(model.grid, model.gaussians.means)
        self.opt_tables = net.adam_init(model.grid.tables, cfg.lr_grid)
        self.opt_cov = net.adam_init(model.gaussians.cov_params, cfg.lr_grid)
        self.opt_color = net.adam_init(model.color_mlp.theta, cfg.lr_mlp)
        self.opt_mask = (
            net.adam_init(model.mask_mlp.theta, cfg.lr_mlp)
            if model.mask_mlp is not None
            else None
        )
        self.iteration = 0

    def lr_scale(self, total_iterations: int) -> float:
        """Cosine decay from 1.0 to 0.1 across the configured run length."""
        frac = min(1.0, self.iteration / max(1, total_iterations))
        return 0.1 + 0.45 * (1.0 + math.cos(math.pi * frac))


def _ensure_trainer(model: Model) -> _Trainer:
    if model.baked:
        raise ContractError("model is baked; training operates on unbaked models")
    if model._trainer is None:
        model._trainer = _Trainer(model)
    return model._trainer


def _head_pass(model, mlp, coords, targets, neighbors, beta):
    """Forward + backward of one decoder head; returns loss and gradients."""
    emb, agg_cache = aggregate_batch(model, coords, neighbors)
    pred, mlp_cache = net.mlp_forward(mlp, emb)
    loss = net.smooth_l1(pred, targets, beta)
    g_pred = net.smooth_l1_grad(pred, targets, beta)
    g_theta, g_emb = net.mlp_backward(mlp, mlp_cache, g_pred)
    ge, gcov = aggregate_backward(model, agg_cache, g_emb)
    return loss, g_theta, ge, gcov


def evaluate_loss(model: Model, batch: TrainBatch) -> float:
    """The training objective at the current parameters (no updates)."""
    beta = model.config.smooth_l1_beta
    emb, _ = aggregate_batch(model, batch.coords, batch.neighbors)
    pred, _ = net.mlp_forward(model.color_mlp, emb)
    loss = net.smooth_l1(pred, batch.targets, beta)
    if model.mask_mlp is not None and batch.alpha_coords is not None:
        emb_m, _ = aggregate_batch(model, batch.alpha_coords, batch.alpha_neighbors)
        pred_m, _ = net.mlp_forward(model.mask_mlp, emb_m)
        loss += net.smooth_l1(pred_m, batch.alpha_targets[:, None], beta)
    return loss


def compute_gradients(model: Model, batch: TrainBatch):
    """Loss and exact gradients for every trained parameter group.

    Returns (loss, grads) with grads keyed "tables", "cov", "color", "mask"
    ("mask" absent for RGB models or batches without mask samples).
    """
    trainer = _ensure_trainer(model)
    beta = model.config.smooth_l1_beta

    loss, g_color, ge, gcov = _head_pass(
        model, model.color_mlp, batch.coords, batch.targets, batch.neighbors, beta
    )
    grads = {"color": g_color}
    if model.mask_mlp is not None and batch.alpha_coords is not None:
        loss_m, g_mask, ge_m, gcov_m = _head_pass(
            model,
            model.mask_mlp,
            batch.alpha_coords,
            batch.alpha_targets[:, None],
            batch.alpha_neighbors,
            beta,
        )
        loss += loss_m
        ge += ge_m
        gcov += gcov_m
        grads["mask"] = g_mask
    grads["tables"] = encoding.encode_backward_planned(model.grid, trainer.plan, ge)
    grads["cov"] = gcov
    return loss, grads


def train_step(model: Model, batch: TrainBatch) -> float:
    """One joint optimization step over tables, shape params, and decoders."""
    trainer = _ensure_trainer(model)
    cfg = model.config
    loss, grads = compute_gradients(model, batch)

    scale = trainer.lr_scale(cfg.iterations)
    net.adam_step(model.grid.tables, grads["tables"], trainer.opt_tables, cfg.lr_grid * scale)
    net.adam_step(model.gaussians.cov_params, grads["cov"], trainer.opt_cov, cfg.lr_grid * scale)
    net.adam_step(model.color_mlp.theta, grads["color"], trainer.opt_color, cfg.lr_mlp * scale)
    if "mask" in grads:
        net.adam_step(model.mask_mlp.theta, grads["mask"], trainer.opt_mask, cfg.lr_mlp * scale)
    trainer.iteration += 1
    return loss


def _valid_pixel_ids(image: ImageBuffer) -> np.ndarray:
    """Flat ids of pixels eligible for color training (alpha > 0 for RGBA)."""
    if image.channels == 4:
        return np.flatnonzero(image.alpha().ravel() > 0)
    return np.arange(image.width * image.height)


def sample_batch(
    image: ImageBuffer, cfg: ModelConfig, rng: np.random.Generator
) -> TrainBatch:
    """Uniform pixel batch; RGBA adds an all-pixels batch for the mask head."""
    centers = pixel_centers(image.width, image.height)
    rgb_flat = image.rgb().reshape(-1, 3)
    valid = _valid_pixel_ids(image)
    if valid.size == 0:
        raise DomainError("empty support: no pixels eligible for training")
    ids = valid[rng.integers(0, valid.size, size=cfg.batch_size)]
    batch = TrainBatch(coords=centers[ids], targets=rgb_flat[ids])
    if image.channels == 4:
        mask_ids = rng.integers(0, centers.shape[0], size=cfg.batch_size)
        batch.alpha_coords = centers[mask_ids]
        batch.alpha_targets = image.alpha().ravel()[mask_ids]
    return batch


class _PixelCache:
    """Per-pixel coordinates, targets, and neighbor lists for one image."""

    def __init__(self, model: Model, image: ImageBuffer):
        self.centers = pixel_centers(image.width, image.height)
        self.rgb_flat = image.rgb().reshape(-1, 3)
        self.alpha_flat = image.alpha().ravel() if image.channels == 4 else None
        self.valid = _valid_pixel_ids(image)
        if self.valid.size == 0:
            raise DomainError("empty support: no pixels eligible for training")
        n_pix = self.centers.shape[0]
        k = model.config.knn_k
        self.idx = np.empty((n_pix, k), dtype=np.int64)
        self.sq = np.empty((n_pix, k))
        self.counts = np.empty(n_pix, dtype=np.int64)
        for lo in range(0, n_pix, _RENDER_CHUNK):
            hi = min(lo + _RENDER_CHUNK, n_pix)
            i, s, c = _neighbors(model, self.centers[lo:hi])
            self.idx[lo:hi], self.sq[lo:hi], self.counts[lo:hi] = i, s, c

    def neighbors_for(self, ids: np.ndarray) -> tuple:
        return self.idx[ids], self.sq[ids], self.counts[ids]


def _validation_psnr(model: Model, cache: _PixelCache, val_ids: np.ndarray) -> float:
    pred = decode_batch(
        model, cache.centers[val_ids], cache.neighbors_for(val_ids)
    )[:, :3]
    mse = float(np.mean((pred - cache.rgb_flat[val_ids]) ** 2))
    return math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)


def train(
    model: Model,
    image: ImageBuffer,
    cfg: ModelConfig | None = None,
    progress_callback=None,
) -> Model:
    """Run the configured number of steps, recording progress every 100.

    History entries are dicts {"iteration", "loss", "psnr"}; the PSNR is
    measured on a fixed 4096-pixel validation subsample.
    """
    if cfg is not None:
        model.config = cfg.validate()
    cfg = model.config
    if (image.width, image.height) != (model.train_width, model.train_height):
        raise DomainError("image dimensions do not match the model")
    trainer = _ensure_trainer(model)
    cache = _PixelCache(model, image)

    val_rng = np.random.default_rng([cfg.rng_seed, 1])
    n_val = min(4096, cache.valid.size)
    val_ids = cache.valid[val_rng.choice(cache.valid.size, size=n_val, replace=False)]
    batch_rng = np.random.default_rng([cfg.rng_seed, 2])

    for it in range(1, cfg.iterations + 1):
        ids = cache.valid[batch_rng.integers(0, cache.valid.size, size=cfg.batch_size)]
        batch = TrainBatch(
            coords=cache.centers[ids],
            targets=cache.rgb_flat[ids],
            neighbors=cache.neighbors_for(ids),
        )
        if model.mask_mlp is not None:
            mask_ids = batch_rng.integers(0, cache.centers.shape[0], size=cfg.batch_size)
            batch.alpha_coords = cache.centers[mask_ids]
            batch.alpha_targets = cache.alpha_flat[mask_ids]
            batch.alpha_neighbors = cache.neighbors_for(mask_ids)
        loss = train_step(model, batch)
        if it % 100 == 0:
            entry = {
                "iteration": it,
                "loss": loss,
                "psnr": _validation_psnr(model, cache, val_ids),
            }
            model.history.append(entry)
            if progress_callback is not None:
                progress_callback(entry)
    return model


def bake(model: Model) -> Model:
    """Store each Gaussian's feature vector and drop the hash grid.

    Decoding is unchanged: the stored vectors are exactly what the grid
    produced, so pre- and post-bake outputs are bit-identical.
    """
    if model.baked:
        raise ContractError("model is already baked")
    embeddings = encoding.encode(model.grid, model.gaussians.means)
    model.gaussians.embeddings = embeddings
    model.gaussians.baked = True
    model.grid = None
    model._trainer = None
    return model
