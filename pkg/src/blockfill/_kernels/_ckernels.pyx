# Compiled twin of pure.py; must stay bit-identical to it. Any change to
# the split-search semantics has to land in both backends.

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64
ctypedef cnp.uint8_t u8

cdef double MIN_SPLIT_GAIN = 1e-12
cdef double NEG_INF = float("-inf")


cdef class TreeGrower:
    cdef double[:, ::1] X
    cdef double[:, ::1] xs
    cdef i32[:, ::1] sidx
    cdef i32[::1] slot
    cdef Py_ssize_t n, n_features

    def __init__(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        cdef Py_ssize_t n = X.shape[0]
        cdef Py_ssize_t F = X.shape[1]
        self.n = n
        self.n_features = F
        self.X = X
        xs = np.empty((F, n), dtype=np.float64)
        sidx = np.empty((F, n), dtype=np.int32)
        for f in range(F):
            order = np.argsort(X[:, f], kind="stable")
            sidx[f] = order.astype(np.int32)
            xs[f] = X[order, f]
        self.xs = xs
        self.sidx = sidx
        self.slot = np.empty(n, dtype=np.int32)

    def grow(self, grad, hess, int max_depth, int min_leaf, double reg_lambda):
        cdef double[::1] gv = np.ascontiguousarray(grad, dtype=np.float64)
        cdef double[::1] hv = np.ascontiguousarray(hess, dtype=np.float64)
        # interleave (g, h) so one cache line serves both random reads
        gh_np = np.empty(2 * self.n, dtype=np.float64)
        gh_np[0::2] = grad
        gh_np[1::2] = hess
        cdef double[::1] gh = gh_np
        cdef Py_ssize_t n = self.n
        cdef Py_ssize_t F = self.n_features
        cdef Py_ssize_t width, max_nodes

        if max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        width = n if max_depth >= 62 else min(<Py_ssize_t>1 << max_depth, n)
        if width < 1:
            width = 1
        max_nodes = 2 * n + 1
        if max_depth < 62 and (<Py_ssize_t>1 << (max_depth + 1)) - 1 < max_nodes:
            max_nodes = (<Py_ssize_t>1 << (max_depth + 1)) - 1

        feat_np = np.full(max_nodes, -1, dtype=np.int32)
        thr_np = np.zeros(max_nodes, dtype=np.float64)
        left_np = np.full(max_nodes, -1, dtype=np.int32)
        right_np = np.full(max_nodes, -1, dtype=np.int32)
        value_np = np.zeros(max_nodes, dtype=np.float64)
        train_np = np.zeros(n, dtype=np.float64)
        cdef i32[::1] feat_arr = feat_np
        cdef double[::1] thr_arr = thr_np
        cdef i32[::1] left_arr = left_np
        cdef i32[::1] right_arr = right_np
        cdef double[::1] value_arr = value_np
        cdef double[::1] train_pred = train_np

        # per-slot level state (double-buffered across levels)
        cdef double[::1] tot_g = np.zeros(width, dtype=np.float64)
        cdef double[::1] tot_h = np.zeros(width, dtype=np.float64)
        cdef i64[::1] tot_c = np.zeros(width, dtype=np.int64)
        cdef i32[::1] nid = np.zeros(width, dtype=np.int32)
        cdef double[::1] ntot_g = np.zeros(width, dtype=np.float64)
        cdef double[::1] ntot_h = np.zeros(width, dtype=np.float64)
        cdef i64[::1] ntot_c = np.zeros(width, dtype=np.int64)
        cdef i32[::1] nnid = np.zeros(width, dtype=np.int32)
        cdef double[::1] tmp_d
        cdef i64[::1] tmp_l
        cdef i32[::1] tmp_i

        # per-slot scan state
        cdef double[::1] run_g = np.zeros(width, dtype=np.float64)
        cdef double[::1] run_h = np.zeros(width, dtype=np.float64)
        cdef i64[::1] run_c = np.zeros(width, dtype=np.int64)
        cdef double[::1] last_v = np.zeros(width, dtype=np.float64)
        cdef u8[::1] started = np.zeros(width, dtype=np.uint8)

        # per-slot best candidate
        cdef double[::1] braw = np.zeros(width, dtype=np.float64)
        cdef i32[::1] bfeat = np.zeros(width, dtype=np.int32)
        cdef double[::1] bthr = np.zeros(width, dtype=np.float64)
        cdef double[::1] bgl = np.zeros(width, dtype=np.float64)
        cdef double[::1] bhl = np.zeros(width, dtype=np.float64)
        cdef u8[::1] is_split = np.zeros(width, dtype=np.uint8)
        cdef i32[::1] child_slot = np.zeros(width, dtype=np.int32)
        cdef double[::1] leaf_val = np.zeros(width, dtype=np.float64)

        cdef i32[::1] slot = self.slot
        cdef double[:, ::1] xs = self.xs
        cdef i32[:, ::1] sidx = self.sidx
        cdef double[:, ::1] X = self.X

        # raw pointers for the hot scan
        cdef double* gv_p = &gv[0]
        cdef double* hv_p = &hv[0]
        cdef double* gh_p = &gh[0]
        cdef i32* slot_p = &slot[0]
        cdef double* run_g_p = &run_g[0]
        cdef double* run_h_p = &run_h[0]
        cdef i64* run_c_p = &run_c[0]
        cdef double* last_v_p = &last_v[0]
        cdef u8* started_p = &started[0]
        cdef double* braw_p = &braw[0]
        cdef i32* bfeat_p = &bfeat[0]
        cdef double* bthr_p = &bthr[0]
        cdef double* bgl_p = &bgl[0]
        cdef double* bhl_p = &bhl[0]
        cdef double* tot_g_p
        cdef double* tot_h_p
        cdef i64* tot_c_p
        cdef double* xs_f
        cdef i32* sidx_f

        cdef Py_ssize_t i, f, depth
        cdef i32 sl, s, ns
        cdef Py_ssize_t n_active, n_next, n_nodes
        cdef i64 c
        cdef i32 node
        cdef double g0, h0, v, lv, t, gl, hl, gr, hr, raw, parent
        cdef double NAN = float("nan")

        g0 = 0.0
        h0 = 0.0
        for i in range(n):
            g0 += gv[i]
            h0 += hv[i]
            slot[i] = 0
        tot_g[0] = g0
        tot_h[0] = h0
        tot_c[0] = n
        nid[0] = 0
        n_active = 1
        n_nodes = 1

        for depth in range(max_depth):
            tot_g_p = &tot_g[0]
            tot_h_p = &tot_h[0]
            tot_c_p = &tot_c[0]
            for sl in range(<i32>n_active):
                braw_p[sl] = NEG_INF
                bfeat_p[sl] = -1
            for f in range(F):
                xs_f = &xs[f, 0]
                sidx_f = &sidx[f, 0]
                for sl in range(<i32>n_active):
                    run_g_p[sl] = 0.0
                    run_h_p[sl] = 0.0
                    run_c_p[sl] = 0
                    started_p[sl] = 0
                for i in range(n):
                    s = sidx_f[i]
                    sl = slot_p[s]
                    if sl < 0:
                        continue
                    v = xs_f[i]
                    if started_p[sl] == 1 and v != last_v_p[sl]:
                        c = run_c_p[sl]
                        if c >= min_leaf and tot_c_p[sl] - c >= min_leaf:
                            t = 0.5 * (last_v_p[sl] + v)
                            if t > last_v_p[sl]:
                                gl = run_g_p[sl]
                                hl = run_h_p[sl] + reg_lambda
                                gr = tot_g_p[sl] - gl
                                hr = tot_h_p[sl] - run_h_p[sl] + reg_lambda
                                # gl^2/hl + gr^2/hr with a single division
                                raw = (gl * gl * hr + gr * gr * hl) / (hl * hr)
                                if raw > braw_p[sl]:
                                    braw_p[sl] = raw
                                    bfeat_p[sl] = <i32>f
                                    bthr_p[sl] = t
                                    bgl_p[sl] = gl
                                    bhl_p[sl] = run_h_p[sl]
                    run_g_p[sl] += gv_p[s]
                    run_h_p[sl] += hv_p[s]
                    run_c_p[sl] += 1
                    last_v_p[sl] = v
                    started_p[sl] = 1
            # decide splits, allocate children breadth-first
            n_next = 0
            for sl in range(<i32>n_active):
                node = nid[sl]
                is_split[sl] = 0
                if bfeat[sl] >= 0 and tot_c[sl] >= 2 * min_leaf and tot_c[sl] >= 2:
                    parent = tot_g[sl] * tot_g[sl] / (tot_h[sl] + reg_lambda)
                    if braw[sl] - parent > MIN_SPLIT_GAIN:
                        is_split[sl] = 1
                if is_split[sl] == 1:
                    feat_arr[node] = bfeat[sl]
                    thr_arr[node] = bthr[sl]
                    left_arr[node] = <i32>n_nodes
                    right_arr[node] = <i32>(n_nodes + 1)
                    child_slot[sl] = <i32>n_next
                    ntot_g[n_next] = bgl[sl]
                    ntot_h[n_next] = bhl[sl]
                    ntot_c[n_next] = 0
                    nnid[n_next] = <i32>n_nodes
                    ntot_g[n_next + 1] = tot_g[sl] - bgl[sl]
                    ntot_h[n_next + 1] = tot_h[sl] - bhl[sl]
                    ntot_c[n_next + 1] = 0
                    nnid[n_next + 1] = <i32>(n_nodes + 1)
                    n_nodes += 2
                    n_next += 2
                else:
                    leaf_val[sl] = -tot_g[sl] / (tot_h[sl] + reg_lambda)
                    value_arr[node] = leaf_val[sl]
            # partition samples into child slots / finalize leaves
            for s in range(<i32>n):
                sl = slot[s]
                if sl < 0:
                    continue
                if is_split[sl] == 1:
                    if X[s, bfeat[sl]] < bthr[sl]:
                        ns = child_slot[sl]
                    else:
                        ns = child_slot[sl] + 1
                    slot[s] = ns
                    ntot_c[ns] += 1
                else:
                    train_pred[s] = leaf_val[sl]
                    slot[s] = -1
            tmp_d = tot_g; tot_g = ntot_g; ntot_g = tmp_d
            tmp_d = tot_h; tot_h = ntot_h; ntot_h = tmp_d
            tmp_l = tot_c; tot_c = ntot_c; ntot_c = tmp_l
            tmp_i = nid; nid = nnid; nnid = tmp_i
            n_active = n_next
            if n_active == 0:
                break
        # nodes still active hit the depth limit: finalize as leaves
        if n_active > 0:
            for sl in range(<i32>n_active):
                value_arr[nid[sl]] = -tot_g[sl] / (tot_h[sl] + reg_lambda)
            for s in range(<i32>n):
                sl = slot[s]
                if sl >= 0:
                    train_pred[s] = value_arr[nid[sl]]
                    slot[s] = -1

        return (
            feat_np[:n_nodes].copy(),
            thr_np[:n_nodes].copy(),
            left_np[:n_nodes].copy(),
            right_np[:n_nodes].copy(),
            value_np[:n_nodes].copy(),
            train_np,
        )


def apply_forest(i32[::1] feat, double[::1] thr, i32[::1] left, i32[::1] right,
                 double[::1] value, i64[::1] tree_start, i32[::1] tree_class,
                 double[:, ::1] X, int n_classes, double scale):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_trees = tree_start.shape[0] - 1
    scores_np = np.zeros((n, n_classes), dtype=np.float64)
    cdef double[:, ::1] scores = scores_np
    cdef Py_ssize_t t, i
    cdef i32 nd, cls
    for t in range(n_trees):
        cls = tree_class[t]
        for i in range(n):
            nd = <i32>tree_start[t]
            while feat[nd] >= 0:
                if X[i, feat[nd]] < thr[nd]:
                    nd = left[nd]
                else:
                    nd = right[nd]
            scores[i, cls] += scale * value[nd]
    return scores_np
