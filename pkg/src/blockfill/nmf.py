"""Masked non-negative matrix factorization with spatial regularization.

The block-attribute matrix X (n x 10: seven land-use shares, max-scaled
site area, fsi, gsi) is factorized as X ~ W H with W, H >= 0 by
minimizing

    || M * (X - W H) ||_F^2  +  lambda * tr(W^T L W)

where M is a binary observation mask (hidden fsi/gsi entries weigh
zero) and L = D - A is the combinatorial Laplacian of the symmetrized
g-nearest-neighbor graph over block centroids. Multiplicative updates
keep both factors non-negative and the objective non-increasing:

    H <- H * (W^T (M*X)) / (W^T (M*(WH)))
    W <- W * ((M*X) H^T + lambda A W) / ((M*(WH)) H^T + lambda D W)

Hidden entries are reconstructed as (W H) at the masked positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import NonNegativeViolationError, RankTooLargeError
from .model import BlockTable, TargetPair

#: multiplicative-update denominators are floored here to avoid 0/0.
UPDATE_FLOOR = 1e-12


@dataclass
class NmfConfig:
    rank: int = 4
    lam: float = 0.1
    graph_k: int = 8
    max_iter: int = 500
    tol: float = 1e-6
    seed: int = 0


@dataclass
class NmfState:
    """Fitted factors and the per-iteration objective trace."""

    W: np.ndarray
    H: np.ndarray
    objective_trace: list[float]

    @property
    def n_iter(self) -> int:
        return len(self.objective_trace) - 1


def knn_neighbor_lists(centroids: np.ndarray, g: int) -> list[np.ndarray]:
    """Indices of each node's g nearest other nodes.

    Distance ties at the g-th position are broken toward lower node
    index; that slow path only triggers on exact float ties (grids).
    """
    centroids = np.ascontiguousarray(np.atleast_2d(centroids), dtype=np.float64)
    n = centroids.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points for a neighbor graph")
    if g < 1:
        raise ValueError("g must be >= 1")
    g = min(g, n - 1)
    tree = cKDTree(centroids)
    probe = min(n, g + 2)
    dist, idx = tree.query(centroids, k=probe)
    self_col = idx == np.arange(n)[:, None]
    dist = np.where(self_col, np.inf, dist)
    order = np.argsort(dist, axis=1, kind="stable")
    rows = np.arange(n)[:, None]
    dist = dist[rows, order]
    idx = idx[rows, order]
    neighbors: list[np.ndarray] = []
    for i in range(n):
        chosen = idx[i, :g]
        boundary = dist[i, g - 1]
        tie = g < probe - int(self_col[i].any()) and dist[i, g] == boundary
        if tie:
            ball = tree.query_ball_point(centroids[i], boundary)
            cand = [j for j in ball if j != i]
            d = np.sqrt(((centroids[cand] - centroids[i]) ** 2).sum(axis=1))
            ranked = sorted(zip(d, cand))
            chosen = np.asarray([j for _, j in ranked[:g]], dtype=np.int64)
        neighbors.append(np.asarray(chosen, dtype=np.int64))
    return neighbors


def build_spatial_laplacian(centroids: np.ndarray, g: int) -> sparse.csr_matrix:
    """L = D - A for the union-symmetrized g-NN graph (binary weights).

    Each node is linked to its g nearest other nodes (distance ties by
    lower index); the adjacency is made symmetric by union. Row sums of
    L are exactly zero.
    """
    neighbors = knn_neighbor_lists(centroids, g)
    n = len(neighbors)
    rows = np.concatenate([np.full(len(ns), i, dtype=np.int64) for i, ns in enumerate(neighbors)])
    cols = np.concatenate(neighbors)
    data = np.ones(rows.size, dtype=np.float64)
    adj = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    adj = adj.maximum(adj.T)
    degree = np.asarray(adj.sum(axis=1)).ravel()
    lap = sparse.diags(degree) - adj
    return lap.tocsr()


def _objective(mx, mask, wh, lam, lap, w) -> float:
    resid = float(((mx - mask * wh) ** 2).sum())
    if lam > 0.0:
        resid += lam * float((w * (lap @ w)).sum())
    return resid


def smvnmf_fit(
    X: np.ndarray,
    mask: np.ndarray,
    config: NmfConfig,
    laplacian: sparse.spmatrix | None = None,
    centroids: np.ndarray | None = None,
) -> NmfState:
    """Run the masked multiplicative updates until tol or max_iter.

    ``mask`` is 1 where X is observed, 0 where hidden; hidden entries of
    X are ignored entirely (zeroed on entry).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    mask = np.ascontiguousarray(mask, dtype=np.float64)
    n, d = X.shape
    r = int(config.rank)
    if r < 1 or r >= min(n, d):
        raise RankTooLargeError(f"rank {r} must satisfy 1 <= r < min(n, d) = {min(n, d)}")
    if float(np.min(np.where(mask > 0, X, 0.0))) < 0.0:
        raise NonNegativeViolationError("observed entries must be non-negative")

    lam = float(config.lam)
    if lam > 0.0:
        if laplacian is None:
            if centroids is None:
                raise ValueError("spatial regularization needs a laplacian or centroids")
            laplacian = build_spatial_laplacian(centroids, config.graph_k)
        adj = sparse.diags(laplacian.diagonal()) - laplacian  # A = D - L
        deg = laplacian.diagonal()
    else:
        laplacian = sparse.csr_matrix((n, n))
        adj = None
        deg = None

    rng = np.random.default_rng(config.seed)
    # uniform in (0, 1]
    W = 1.0 - rng.random((n, r))
    H = 1.0 - rng.random((r, d))

    mx = mask * X  # constant across iterations
    wh = W @ H
    trace = [_objective(mx, mask, wh, lam, laplacian, W)]
    for _ in range(config.max_iter):
        # H update
        numer = W.T @ mx
        denom = W.T @ (mask * wh)
        np.maximum(denom, UPDATE_FLOOR, out=denom)
        H *= numer / denom
        wh = W @ H
        # W update
        numer = mx @ H.T
        denom = (mask * wh) @ H.T
        if lam > 0.0:
            numer += lam * (adj @ W)
            denom += lam * (deg[:, None] * W)
        np.maximum(denom, UPDATE_FLOOR, out=denom)
        W *= numer / denom
        wh = W @ H
        trace.append(_objective(mx, mask, wh, lam, laplacian, W))
        prev, cur = trace[-2], trace[-1]
        if prev > 0.0 and abs(prev - cur) / prev < config.tol:
            break
    return NmfState(W=W, H=H, objective_trace=trace)


#: column layout of the factorization matrix.
NMF_COLUMNS = 10
_FSI_COL = 8
_GSI_COL = 9


def _data_matrix(table: BlockTable) -> tuple[np.ndarray, np.ndarray, float]:
    """(X, mask, area_scale); site area max-scaled, hidden targets zeroed."""
    n = len(table)
    X = np.zeros((n, NMF_COLUMNS), dtype=np.float64)
    X[:, :7] = table.shares
    area_scale = float(np.max(table.site_area))
    if area_scale <= 0.0:
        area_scale = 1.0
    X[:, 7] = table.site_area / area_scale
    mask = np.ones((n, NMF_COLUMNS), dtype=np.float64)
    fsi, gsi = table.fsi, table.gsi
    fsi_missing = np.isnan(fsi)
    gsi_missing = np.isnan(gsi)
    X[:, _FSI_COL] = np.where(fsi_missing, 0.0, fsi)
    X[:, _GSI_COL] = np.where(gsi_missing, 0.0, gsi)
    mask[fsi_missing, _FSI_COL] = 0.0
    mask[gsi_missing, _GSI_COL] = 0.0
    return X, mask, area_scale


def smvnmf_impute(
    table: BlockTable,
    mask=None,
    config: NmfConfig | None = None,
    laplacian: sparse.spmatrix | None = None,
) -> dict[str, TargetPair]:
    """Reconstruct hidden fsi/gsi as the factorization value, clamped at 0.

    ``laplacian`` may be precomputed (it depends only on the full-table
    centroids and graph_k, not on the mask).
    """
    config = config or NmfConfig()
    if mask is not None:
        if hasattr(mask, "fsi_positions"):
            table = table.with_hidden(sorted(mask.fsi_positions), sorted(mask.gsi_positions))
        else:
            table = table.with_hidden(sorted(int(p) for p in mask))
    missing = table.missing_positions()
    if missing.size == 0:
        return {}
    X, obs_mask, _ = _data_matrix(table)
    state = smvnmf_fit(X, obs_mask, config, laplacian=laplacian, centroids=table.coords)
    wh = state.W @ state.H
    result: dict[str, TargetPair] = {}
    for p in missing:
        rec = table.records[int(p)]
        result[rec.id] = TargetPair(
            fsi=max(float(wh[p, _FSI_COL]), 0.0) if rec.fsi is None else rec.fsi,
            gsi=max(float(wh[p, _GSI_COL]), 0.0) if rec.gsi is None else rec.gsi,
        )
    return result
