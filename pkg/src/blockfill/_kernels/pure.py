"""Pure NumPy tree kernels; reference semantics for the compiled backend.

Both backends must produce bit-identical trees. The contract that makes
this work:

* candidate splits are evaluated at boundaries between distinct sorted
  feature values, left statistics accumulated in ascending-value order
  with ties in ascending sample order (stable sort);
* gains compare with strict ``>`` so the first-found candidate wins ties,
  features scanned in index order;
* node ids are allocated breadth-first, children of earlier nodes first,
  left before right.
"""

from __future__ import annotations

import numpy as np

#: a split must beat the parent score by more than this to be kept.
MIN_SPLIT_GAIN = 1e-12


class TreeGrower:
    """Grows depth-wise regression trees on a fixed feature matrix.

    The matrix is given once so repeated calls (one tree per class per
    boosting round) share the presorted feature order.
    """

    def __init__(self, X: np.ndarray):
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.n, self.n_features = self.X.shape

    def grow(
        self,
        grad: np.ndarray,
        hess: np.ndarray,
        max_depth: int,
        min_leaf: int,
        reg_lambda: float,
    ):
        """Returns (feat, thr, left, right, value, train_pred).

        feat is -1 at leaves; value holds the leaf weight -G/(H+lambda).
        """
        X = self.X
        n = self.n
        grad = np.asarray(grad, dtype=np.float64)
        hess = np.asarray(hess, dtype=np.float64)

        feat: list[int] = [-1]
        thr: list[float] = [0.0]
        left: list[int] = [-1]
        right: list[int] = [-1]
        value: list[float] = [0.0]
        train_pred = np.zeros(n, dtype=np.float64)

        # sequential sums match the compiled kernel's accumulation order
        g_root = float(np.cumsum(grad)[-1])
        h_root = float(np.cumsum(hess)[-1])
        level = [(0, np.arange(n, dtype=np.intp), g_root, h_root)]

        def finalize(node_id, idx, g_sum, h_sum):
            v = -g_sum / (h_sum + reg_lambda)
            value[node_id] = v
            train_pred[idx] = v

        for _ in range(max_depth):
            next_level = []
            for node_id, idx, g_sum, h_sum in level:
                found = self._best_split(idx, grad, hess, g_sum, h_sum, min_leaf, reg_lambda)
                if found is None:
                    finalize(node_id, idx, g_sum, h_sum)
                    continue
                f, t, gl, hl = found
                go_left = X[idx, f] < t
                feat[node_id] = f
                thr[node_id] = t
                left_id = len(feat)
                right_id = left_id + 1
                left[node_id] = left_id
                right[node_id] = right_id
                for _new in range(2):
                    feat.append(-1)
                    thr.append(0.0)
                    left.append(-1)
                    right.append(-1)
                    value.append(0.0)
                next_level.append((left_id, idx[go_left], gl, hl))
                next_level.append((right_id, idx[~go_left], g_sum - gl, h_sum - hl))
            level = next_level
            if not level:
                break
        for node_id, idx, g_sum, h_sum in level:
            finalize(node_id, idx, g_sum, h_sum)

        return (
            np.asarray(feat, dtype=np.int32),
            np.asarray(thr, dtype=np.float64),
            np.asarray(left, dtype=np.int32),
            np.asarray(right, dtype=np.int32),
            np.asarray(value, dtype=np.float64),
            train_pred,
        )

    def _best_split(self, idx, grad, hess, g_sum, h_sum, min_leaf, reg_lambda):
        m = idx.size
        if m < 2 * min_leaf or m < 2:
            return None
        X = self.X
        best_raw = -np.inf
        best = None
        for f in range(self.n_features):
            v = X[idx, f]
            order = np.argsort(v, kind="stable")
            vs = v[order]
            gs = grad[idx][order]
            hs = hess[idx][order]
            cg = np.cumsum(gs)
            ch = np.cumsum(hs)
            counts = np.arange(1, m)
            mids = 0.5 * (vs[:-1] + vs[1:])
            valid = (
                (vs[1:] != vs[:-1])
                & (counts >= min_leaf)
                & ((m - counts) >= min_leaf)
                & (mids > vs[:-1])
            )
            if not valid.any():
                continue
            gl = cg[:-1]
            hl = ch[:-1] + reg_lambda
            gr = g_sum - gl
            hr = (h_sum - ch[:-1]) + reg_lambda
            # gl^2/hl + gr^2/hr with a single division (bit-equal to the
            # compiled kernel's expression)
            with np.errstate(invalid="ignore", divide="ignore"):
                raw = (gl * gl * hr + gr * gr * hl) / (hl * hr)
            raw = np.where(valid, raw, -np.inf)
            j = int(np.argmax(raw))
            if raw[j] > best_raw:
                best_raw = raw[j]
                best = (f, float(mids[j]), float(gl[j]), float(ch[j]))
        if best is None:
            return None
        parent_score = g_sum * g_sum / (h_sum + reg_lambda)
        if best_raw - parent_score <= MIN_SPLIT_GAIN:
            return None
        return best


def apply_forest(feat, thr, left, right, value, tree_start, tree_class, X, n_classes, scale):
    """Sum scaled leaf values of a packed forest into per-class scores."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    scores = np.zeros((n, n_classes), dtype=np.float64)
    rows = np.arange(n)
    for t in range(tree_start.size - 1):
        node = np.full(n, tree_start[t], dtype=np.int64)
        while True:
            f = feat[node]
            active = f >= 0
            if not active.any():
                break
            a_rows = rows[active]
            a_node = node[active]
            go_left = X[a_rows, f[active]] < thr[a_node]
            node[active] = np.where(go_left, left[a_node], right[a_node])
        scores[:, tree_class[t]] += scale * value[node]
    return scores
