"""Spatial and group statistics over block attributes.

Implements the motivation-style statistics package: global Moran's I
with a permutation test over k-NN row-standardized weights, one-way
ANOVA over dominant land-use groups (p via an own continued-fraction
regularized incomplete beta), and Pearson correlation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ._seeds import mix_seed
from .errors import DegenerateGroupsError, ZeroVarianceError
from .model import LAND_USE_CATEGORIES, BlockRecord, BlockTable
from .nmf import knn_neighbor_lists

DEFAULT_WEIGHTS_K = 8
DEFAULT_N_PERM = 999


@dataclass
class SpatialWeights:
    """Row-standardized sparse spatial weights with zero diagonal."""

    matrix: sparse.csr_matrix
    k: int

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def knn_weights(coords: np.ndarray, k: int = DEFAULT_WEIGHTS_K, max_distance: float | None = None) -> SpatialWeights:
    """k-NN weights over centroids, row-standardized.

    ``max_distance`` optionally drops neighbors farther than the cutoff
    (inclusive), which on a unit grid with k=4 yields the classic
    4-neighborhood (rook) structure. A node losing all its neighbors to
    the cutoff is an error.
    """
    coords = np.ascontiguousarray(np.atleast_2d(coords), dtype=np.float64)
    n = coords.shape[0]
    neighbor_lists = knn_neighbor_lists(coords, k)
    rows = []
    cols = []
    for i, neigh in enumerate(neighbor_lists):
        if max_distance is not None:
            d = np.sqrt(((coords[neigh] - coords[i]) ** 2).sum(axis=1))
            neigh = neigh[d <= max_distance]
        if neigh.size == 0:
            raise ValueError(f"node {i} has no neighbors within the distance cutoff")
        rows.append(np.full(neigh.size, i, dtype=np.int64))
        cols.append(neigh)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    counts = np.bincount(rows, minlength=n).astype(np.float64)
    data = 1.0 / counts[rows]
    matrix = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    return SpatialWeights(matrix=matrix, k=k)


def morans_i(values: np.ndarray, weights: SpatialWeights) -> float:
    """Global Moran's I: (n/S0) * sum_ij w_ij z_i z_j / sum_i z_i^2."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n < 3:
        raise ValueError("Moran's I needs at least 3 values")
    if n != weights.n:
        raise ValueError(f"{n} values vs {weights.n} weight rows")
    z = values - values.mean()
    denom = float(z @ z)
    if denom == 0.0:
        raise ZeroVarianceError("Moran's I undefined for constant values")
    s0 = float(weights.matrix.sum())
    num = float(z @ (weights.matrix @ z))
    return (n / s0) * num / denom


def morans_i_permutation_p(
    values: np.ndarray,
    weights: SpatialWeights,
    n_perm: int = DEFAULT_N_PERM,
    seed: int = 0,
) -> tuple[float, float]:
    """One-sided permutation test: p = (1 + #{I_perm >= I}) / (1 + n_perm).

    With the +1 correction p can never be 0; at 999 permutations the
    smallest attainable p is exactly 0.001.
    """
    if n_perm < 99:
        raise ValueError("n_perm must be >= 99")
    observed = morans_i(values, weights)
    values = np.asarray(values, dtype=np.float64)
    count = 0
    for i in range(n_perm):
        rng = np.random.default_rng(mix_seed(seed, 0x9E12, i))
        permuted = rng.permutation(values)
        if morans_i(permuted, weights) >= observed:
            count += 1
    return observed, (1 + count) / (1 + n_perm)


def dominant_group(record: BlockRecord) -> str:
    """Category with the highest share; ties go to the category order.

    All-zero shares yield "undetermined" (excluded from ANOVA).
    """
    shares = np.asarray(record.shares, dtype=np.float64)
    if shares.max() <= 0.0:
        return "undetermined"
    return LAND_USE_CATEGORIES[int(np.argmax(shares))]


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    max_iter = 300
    eps = 3e-16
    fpmin = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) to ~1e-10 via the symmetric continued fraction."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f_value: float, df_between: int, df_within: int) -> float:
    """Survival function of the F distribution."""
    if not math.isfinite(f_value):
        return 0.0
    if f_value <= 0.0:
        return 1.0
    x = df_within / (df_within + df_between * f_value)
    return regularized_incomplete_beta(df_within / 2.0, df_between / 2.0, x)


def anova_f(groups: list[np.ndarray]) -> tuple[float, float]:
    """Classical one-way ANOVA: returns (F, p).

    Needs >= 2 groups with >= 2 values each and nonzero total variance.
    If the within-group variance is exactly zero while group means
    differ, F is +inf and p is 0.
    """
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2 or any(g.size < 2 for g in groups):
        raise DegenerateGroupsError("need >= 2 groups with >= 2 values each")
    all_values = np.concatenate(groups)
    n = all_values.size
    grand = all_values.mean()
    if float(((all_values - grand) ** 2).sum()) == 0.0:
        raise DegenerateGroupsError("total variance is zero")
    ss_between = sum(g.size * (g.mean() - grand) ** 2 for g in groups)
    ss_within = sum(float(((g - g.mean()) ** 2).sum()) for g in groups)
    df_between = len(groups) - 1
    df_within = n - len(groups)
    ms_between = ss_between / df_between
    ms_within = ss_within / df_within
    if ms_within == 0.0:
        if ms_between == 0.0:
            raise DegenerateGroupsError("all values identical")
        return math.inf, 0.0
    f_value = ms_between / ms_within
    return float(f_value), f_sf(f_value, df_between, df_within)


def pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pearson_r needs two equal-length 1-d arrays, length >= 2")
    zx = x - x.mean()
    zy = y - y.mean()
    sx = float(zx @ zx)
    sy = float(zy @ zy)
    if sx == 0.0 or sy == 0.0:
        raise ZeroVarianceError("correlation undefined for constant input")
    return float((zx @ zy) / math.sqrt(sx * sy))


def stats_report(
    table: BlockTable,
    weights_k: int = DEFAULT_WEIGHTS_K,
    n_perm: int = DEFAULT_N_PERM,
    seed: int = 0,
) -> dict:
    """All summary statistics over blocks with both targets observed.

    ANOVA runs across dominant land-use groups of size >= 2 (the
    "undetermined" group is excluded); Moran's I uses k-NN weights over
    the observed blocks' centroids.
    """
    observed = table.observed_positions()
    if observed.size < 3:
        raise DegenerateGroupsError("need at least 3 observed blocks")
    fsi = table.fsi[observed]
    gsi = table.gsi[observed]
    area = table.site_area[observed]
    weights = knn_weights(table.coords[observed], k=weights_k)

    groups: dict[str, list[int]] = {}
    for row, pos in enumerate(observed):
        label = dominant_group(table.records[int(pos)])
        if label != "undetermined":
            groups.setdefault(label, []).append(row)
    usable = {name: rows for name, rows in groups.items() if len(rows) >= 2}

    report: dict = {
        "n_blocks": int(len(table)),
        "n_observed": int(observed.size),
        "weights": {"kind": "knn", "k": weights_k, "row_standardized": True},
        "n_permutations": n_perm,
        "dominant_group_counts": {name: len(rows) for name, rows in sorted(groups.items())},
        "anova": {},
        "morans_i": {},
        "pearson_r": {},
    }
    for tag, (name, values) in enumerate((("fsi", fsi), ("gsi", gsi))):
        if len(usable) >= 2:
            f_value, p = anova_f([values[rows] for rows in usable.values()])
            report["anova"][name] = {"F": f_value, "p": p}
        else:
            report["anova"][name] = {"F": None, "p": None, "reason": "fewer than 2 usable groups"}
        i_value, p = morans_i_permutation_p(values, weights, n_perm=n_perm, seed=mix_seed(seed, tag))
        report["morans_i"][name] = {"I": i_value, "p": p}
    report["pearson_r"]["fsi_gsi"] = pearson_r(fsi, gsi)
    report["pearson_r"]["fsi_site_area"] = pearson_r(fsi, area)
    report["pearson_r"]["gsi_site_area"] = pearson_r(gsi, area)
    return report
