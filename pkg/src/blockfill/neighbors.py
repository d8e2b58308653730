"""Neighborhood imputers over block centroids: IDW and spatial k-NN.

Queries run on a k-d tree (scipy.spatial.cKDTree) and reproduce an
exact brute-force scan including the documented tie rule: equal
distances are ordered by block id. Coordinates are planar meters.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyIndexError
from .model import BlockTable, TargetPair

#: a neighbor closer than this is treated as coincident with the query.
COINCIDENT_EPS = 1e-9

IDW_DEFAULT_POWER = 2.0
IDW_DEFAULT_K = 8
SKNN_DEFAULT_K = 5


class SpatialIndex:
    """k-d tree over the centroids of blocks with observed targets."""

    def __init__(self, ids: list[str], coords: np.ndarray, positions: np.ndarray | None = None):
        if len(ids) == 0:
            raise EmptyIndexError("no observed blocks to index")
        self.ids = list(ids)
        self.coords = np.ascontiguousarray(coords, dtype=np.float64)
        self.positions = positions if positions is not None else np.arange(len(self.ids))
        self.tree = cKDTree(self.coords)

    @classmethod
    def from_table(cls, table: BlockTable, feature: str | None = None) -> "SpatialIndex":
        """Index blocks observed in ``feature`` ("fsi"/"gsi") or in both."""
        if feature == "fsi":
            pos = np.flatnonzero(~np.isnan(table.fsi))
        elif feature == "gsi":
            pos = np.flatnonzero(~np.isnan(table.gsi))
        else:
            pos = table.observed_positions()
        return cls([table.records[p].id for p in pos], table.coords[pos], positions=pos)

    def __len__(self) -> int:
        return len(self.ids)

    def _candidates(self, point: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Distances/row-positions of all points with d <= k-th distance."""
        n = len(self.ids)
        kk = min(k, n)
        m = min(n, kk + 8)
        while True:
            dist, pos = self.tree.query(point, k=m)
            dist = np.atleast_1d(dist)
            pos = np.atleast_1d(pos)
            if m == n or dist[m - 1] > dist[kk - 1]:
                break
            m = min(n, m * 2)
        take = dist <= dist[kk - 1]
        return dist[take], pos[take]

    def query(self, point, k: int) -> list[tuple[str, float]]:
        """The k nearest by (distance, id); fewer than k -> all."""
        point = np.asarray(point, dtype=np.float64)
        kk = min(k, len(self.ids))
        dist, pos = self._candidates(point, kk)
        ranked = sorted(zip(dist, (self.ids[p] for p in pos)), key=lambda t: (t[0], t[1]))
        return [(bid, float(d)) for d, bid in ranked[:kk]]

    def select_batch(self, points: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Exact k-NN sets for many query points at once.

        Returns (dist, pos) of shape (n_queries, min(k, n)); each row's
        set matches :meth:`query` (boundary ties resolved by id), though
        interior ordering is the tree's own.
        """
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n = len(self.ids)
        kk = min(k, n)
        probe = min(n, kk + 1)
        dist, pos = self.tree.query(points, k=probe)
        if probe == 1:
            dist = dist[:, None]
            pos = pos[:, None]
        if probe > kk:
            ambiguous = np.flatnonzero(dist[:, kk - 1] == dist[:, kk])
            dist = np.ascontiguousarray(dist[:, :kk])
            pos = np.ascontiguousarray(pos[:, :kk])
            if ambiguous.size:
                id_to_row = {bid: i for i, bid in enumerate(self.ids)}
                for row in ambiguous:
                    chosen = self.query(points[row], kk)
                    pos[row] = [id_to_row[bid] for bid, _ in chosen]
                    dist[row] = [d for _, d in chosen]
        return dist, pos


def knn_query(index: SpatialIndex, point, k: int) -> list[tuple[str, float]]:
    """k nearest observed blocks, ascending (distance, id)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return index.query(point, k)


def _hide(table: BlockTable, mask) -> BlockTable:
    if mask is None:
        return table
    if hasattr(mask, "fsi_positions"):
        return table.with_hidden(sorted(mask.fsi_positions), sorted(mask.gsi_positions))
    return table.with_hidden(sorted(int(p) for p in mask))


def _per_feature_predict(table: BlockTable, combine, k: int) -> dict[str, dict[int, float]]:
    """Run ``combine`` on the k-NN row of every missing block, per feature."""
    out: dict[str, dict[int, float]] = {"fsi": {}, "gsi": {}}
    cache: list[tuple[np.ndarray, SpatialIndex]] = []
    for feature in ("fsi", "gsi"):
        values = getattr(table, feature)
        obs_pos = np.flatnonzero(~np.isnan(values))
        if obs_pos.size == 0:
            raise EmptyIndexError(f"no blocks with observed {feature}")
        missing_pos = np.flatnonzero(np.isnan(values))
        if missing_pos.size == 0:
            continue
        index = next(
            (idx for cached, idx in cache if np.array_equal(cached, obs_pos)),
            None,
        )
        if index is None:
            index = SpatialIndex(
                [table.records[p].id for p in obs_pos], table.coords[obs_pos], positions=obs_pos
            )
            cache.append((obs_pos, index))
        dist, pos = index.select_batch(table.coords[missing_pos], k)
        vals = values[obs_pos][pos]
        for row, p in enumerate(missing_pos):
            out[feature][int(p)] = combine(index, dist[row], pos[row], vals[row])
    return out


def _assemble(table: BlockTable, per_feature: dict[str, dict[int, float]]) -> dict[str, TargetPair]:
    result: dict[str, TargetPair] = {}
    for p in table.missing_positions():
        rec = table.records[int(p)]
        result[rec.id] = TargetPair(
            fsi=per_feature["fsi"].get(int(p), rec.fsi),
            gsi=per_feature["gsi"].get(int(p), rec.gsi),
        )
    return result


def _coincident_value(index: SpatialIndex, dist, pos, vals) -> float | None:
    near = dist < COINCIDENT_EPS
    if not near.any():
        return None
    # nearest coincident neighbor; among equal distances the smallest id
    order = sorted(
        (float(d), index.ids[p], float(v))
        for d, p, v in zip(dist[near], pos[near], vals[near])
    )
    return order[0][2]


def idw_impute(
    table: BlockTable,
    power: float = IDW_DEFAULT_POWER,
    k: int = IDW_DEFAULT_K,
    mask=None,
) -> dict[str, TargetPair]:
    """Inverse-distance-weighted imputation from the k nearest observed.

    Weights are 1/d^power; a neighbor within ``COINCIDENT_EPS`` meters
    short-circuits to that neighbor's value.
    """
    table = _hide(table, mask)

    def combine(index, dist, pos, vals):
        coincident = _coincident_value(index, dist, pos, vals)
        if coincident is not None:
            return coincident
        w = 1.0 / dist**power
        return float((w * vals).sum() / w.sum())

    return _assemble(table, _per_feature_predict(table, combine, k))


def sknn_impute(table: BlockTable, k: int = SKNN_DEFAULT_K, mask=None) -> dict[str, TargetPair]:
    """Unweighted mean of the k nearest observed neighbors, per feature."""
    table = _hide(table, mask)

    def combine(index, dist, pos, vals):
        return float(vals.mean())

    return _assemble(table, _per_feature_predict(table, combine, k))
