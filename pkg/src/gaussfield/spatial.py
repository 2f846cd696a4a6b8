"""Uniform-grid spatial index over 2D points with exact radius-limited KNN.

The grid is an acceleration structure only: every query gathers the cells
that could contain points within the radius, then filters and sorts the
candidates exactly, so results are identical to a brute-force scan. Ties
at equal distance break by ascending point index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ContractError, DomainError

# Cell coordinates are clipped to this range before key packing. Points this
# far out (> 2^30 cells from the origin) can never be within any practical
# query radius, and the final distance filter keeps results exact regardless.
_CELL_CLIP = 1 << 30


def _pack_cells(cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    cx = np.clip(cx, -_CELL_CLIP, _CELL_CLIP).astype(np.int64)
    cy = np.clip(cy, -_CELL_CLIP, _CELL_CLIP).astype(np.int64)
    return (cx + _CELL_CLIP) * np.int64(4 * _CELL_CLIP) + (cy + _CELL_CLIP)


@dataclass
class NeighborList:
    """Result of a radius-limited KNN query, sorted by (sq_dist, index)."""

    indices: np.ndarray
    sq_dists: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class GridIndex:
    """Immutable uniform-cell index over a snapshot of point positions."""

    cell_size: float
    origin: np.ndarray
    mean_snapshot: np.ndarray = field(repr=False)
    _keys: np.ndarray = field(repr=False)       # sorted unique packed cell keys
    _bounds: np.ndarray = field(repr=False)     # len(_keys)+1 offsets into _order
    _order: np.ndarray = field(repr=False)      # point ids grouped by cell

    @property
    def count(self) -> int:
        return self.mean_snapshot.shape[0]

    @property
    def cells(self) -> dict[tuple[int, int], np.ndarray]:
        """Mapping (cx, cy) -> point indices; built on demand for inspection."""
        out = {}
        cxy = np.floor(
            (self.mean_snapshot - self.origin) / self.cell_size
        ).astype(np.int64)
        for pos in range(len(self._keys)):
            ids = self._order[self._bounds[pos]:self._bounds[pos + 1]]
            cx, cy = cxy[ids[0]]
            out[(int(cx), int(cy))] = np.sort(ids)
        return out

    def verify_against(self, means: np.ndarray) -> None:
        """Debug check that the index matches ``means``; raises if stale."""
        if self.mean_snapshot.shape != means.shape or not np.array_equal(
            self.mean_snapshot, means
        ):
            raise ContractError("grid index is stale: means changed since build")


def build_index(means: np.ndarray, cell_size: float) -> GridIndex:
    """Bucket points into uniform cells of the given size."""
    means = np.ascontiguousarray(means, dtype=np.float64)
    if means.ndim != 2 or means.shape[1] != 2:
        raise DomainError(f"means must be (N, 2), got {means.shape}")
    if not np.all(np.isfinite(means)):
        raise DomainError("means must be finite")
    if not (cell_size > 0 and np.isfinite(cell_size)):
        raise DomainError(f"cell_size must be > 0, got {cell_size}")
    origin = np.zeros(2)
    cxy = np.floor((means - origin) / cell_size).astype(np.int64)
    keys = _pack_cells(cxy[:, 0], cxy[:, 1])
    order = np.argsort(keys, kind="stable").astype(np.int64)
    sorted_keys = keys[order]
    unique_keys, starts = np.unique(sorted_keys, return_index=True)
    bounds = np.append(starts, len(order)).astype(np.int64)
    return GridIndex(
        cell_size=float(cell_size),
        origin=origin,
        mean_snapshot=means.copy(),
        _keys=unique_keys,
        _bounds=bounds,
        _order=order,
    )


def rebuild(index: GridIndex, new_means: np.ndarray) -> GridIndex:
    """Full rebuild with the same cell size; edits swap in the result."""
    return build_index(new_means, index.cell_size)


def query_radius_knn_batch(
    index: GridIndex, xs: np.ndarray, r: float, k: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Radius-limited KNN for a batch of query points.

    Returns (indices, sq_dists, counts) with shapes (M, k), (M, k), (M,).
    Row m holds the up-to-k nearest points within distance r of xs[m],
    sorted by (sq_dist, index); unused slots are -1 / +inf.
    """
    if not (r > 0 and np.isfinite(r)):
        raise DomainError(f"radius must be > 0, got {r}")
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    m_queries = xs.shape[0]
    out_idx = np.full((m_queries, k), -1, dtype=np.int64)
    out_sq = np.full((m_queries, k), np.inf)
    counts = np.zeros(m_queries, dtype=np.int64)
    if m_queries == 0 or index.count == 0:
        return out_idx, out_sq, counts

    cs = index.cell_size
    reach = int(np.ceil(r / cs - 1e-12))
    qc = np.floor((xs - index.origin) / cs).astype(np.int64)

    qid_parts, start_parts, len_parts = [], [], []
    nkeys = len(index._keys)
    for dx in range(-reach, reach + 1):
        for dy in range(-reach, reach + 1):
            nk = _pack_cells(qc[:, 0] + dx, qc[:, 1] + dy)
            pos = np.searchsorted(index._keys, nk)
            pos_c = np.minimum(pos, nkeys - 1)
            hit = (pos < nkeys) & (index._keys[pos_c] == nk)
            if not hit.any():
                continue
            qid_parts.append(np.flatnonzero(hit))
            start_parts.append(index._bounds[pos_c[hit]])
            len_parts.append(index._bounds[pos_c[hit] + 1] - index._bounds[pos_c[hit]])
    if not qid_parts:
        return out_idx, out_sq, counts

    qid_runs = np.concatenate(qid_parts)
    start_runs = np.concatenate(start_parts)
    len_runs = np.concatenate(len_parts)

    # Expand [start, start+len) runs into one flat candidate array.
    total = int(len_runs.sum())
    if total == 0:
        return out_idx, out_sq, counts
    run_offsets = np.repeat(np.cumsum(len_runs) - len_runs, len_runs)
    within = np.arange(total, dtype=np.int64) - run_offsets
    cand_pos = np.repeat(start_runs, len_runs) + within
    cand_idx = index._order[cand_pos]
    cand_qid = np.repeat(qid_runs, len_runs)

    diff = index.mean_snapshot[cand_idx] - xs[cand_qid]
    sq = diff[:, 0] ** 2 + diff[:, 1] ** 2
    keep = sq <= r * r
    if not keep.any():
        return out_idx, out_sq, counts
    cand_idx, cand_qid, sq = cand_idx[keep], cand_qid[keep], sq[keep]

    order = np.lexsort((cand_idx, sq, cand_qid))
    cand_idx, cand_qid, sq = cand_idx[order], cand_qid[order], sq[order]

    # Rank within each query group, keep the first k.
    group_start = np.zeros(len(cand_qid), dtype=np.int64)
    new_group = np.flatnonzero(np.diff(cand_qid)) + 1
    group_start[new_group] = new_group
    np.maximum.accumulate(group_start, out=group_start)
    rank = np.arange(len(cand_qid), dtype=np.int64) - group_start
    top = rank < k
    out_idx[cand_qid[top], rank[top]] = cand_idx[top]
    out_sq[cand_qid[top], rank[top]] = sq[top]
    np.add.at(counts, cand_qid[top], 1)
    return out_idx, out_sq, counts


def query_radius_knn(index: GridIndex, x: np.ndarray, r: float, k: int) -> NeighborList:
    """The up-to-k nearest indexed points within distance r of x."""
    idx, sq, counts = query_radius_knn_batch(index, np.asarray(x, dtype=np.float64), r, k)
    n = int(counts[0])
    return NeighborList(indices=idx[0, :n].copy(), sq_dists=sq[0, :n].copy())
