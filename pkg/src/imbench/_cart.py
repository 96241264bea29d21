"""Flat-array CART kernels.

Trees are grown depth-first over presorted per-feature value/index arrays
that are stably partitioned at every split, so no sorting happens inside
nodes. The grower sees each distinct sampled row once, with an integer
multiplicity standing in for repeated bootstrap draws; weighted class
masses and raw draw counts therefore match a duplicated-row representation
exactly.

Nodes live in parallel arrays: ``feature[i] < 0`` marks a leaf. Split
candidates are midpoints between consecutive distinct sorted values; ties
in gain break toward (lower feature index, lower threshold). A split is
accepted only if it has strictly positive weighted-Gini gain and both
children keep at least ``min_leaf`` raw rows. Routing: x <= threshold goes
left.

Feature subsets are drawn by partial Fisher-Yates from a pre-generated
random integer pool, so growth is a pure function of its inputs.
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


@njit(cache=True)
def build_sorted_columns(X, full_order, remap):
    """Sorted values and local indices per feature for the sampled rows.

    ``full_order[f]`` sorts all dataset rows by feature f; ``remap`` maps a
    dataset row to its local index among sampled unique rows (-1 if not
    sampled).
    """
    d, n = full_order.shape
    u = 0
    for r in range(remap.shape[0]):
        if remap[r] >= 0:
            u += 1
    vals = np.empty((d, u), dtype=np.float64)
    idx = np.empty((d, u), dtype=np.int32)
    for f in range(d):
        k = 0
        for j in range(n):
            r = full_order[f, j]
            l = remap[r]
            if l >= 0:
                idx[f, k] = l
                vals[f, k] = X[r, f]
                k += 1
    return vals, idx


@njit(cache=True)
def grow_tree(vals, idx_all, rc0, rc1, wb0, wb1, max_depth, min_leaf, n_sub,
              pool):
    d, u = vals.shape
    cap = 2 * u + 1

    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    raw0 = np.zeros(cap, dtype=np.int64)
    raw1 = np.zeros(cap, dtype=np.int64)
    w0s = np.zeros(cap, dtype=np.float64)
    w1s = np.zeros(cap, dtype=np.float64)
    proba = np.zeros(cap, dtype=np.float64)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_lo = np.empty(cap, dtype=np.int64)
    stack_hi = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)

    side = np.empty(u, dtype=np.uint8)
    scratch_i = np.empty(u, dtype=np.int32)
    scratch_v = np.empty(u, dtype=np.float64)
    perm = np.empty(d, dtype=np.int64)

    n_nodes = 1
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = u
    stack_depth[0] = 0
    cursor = 0
    pool_len = pool.shape[0]

    while top >= 0:
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        depth = stack_depth[top]
        top -= 1

        r0 = 0
        r1 = 0
        tw0 = 0.0
        tw1 = 0.0
        for i in range(lo, hi):
            l = idx_all[0, i]
            r0 += rc0[l]
            r1 += rc1[l]
            tw0 += wb0[l]
            tw1 += wb1[l]
        raw0[node] = r0
        raw1[node] = r1
        w0s[node] = tw0
        w1s[node] = tw1
        wt = tw0 + tw1
        if wt > 0.0:
            proba[node] = tw1 / wt
        else:
            proba[node] = r1 / (r0 + r1)

        m_node = r0 + r1
        if r0 == 0 or r1 == 0 or depth >= max_depth or m_node < 2 * min_leaf:
            continue
        p0 = tw0 / wt
        p1 = tw1 / wt
        gini_node = 1.0 - p0 * p0 - p1 * p1

        for j in range(d):
            perm[j] = j
        k = n_sub if n_sub < d else d
        for j in range(k):
            r = pool[cursor % pool_len]
            cursor += 1
            pick = j + r % (d - j)
            tmp = perm[j]
            perm[j] = perm[pick]
            perm[pick] = tmp

        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        n_loc = hi - lo
        for jj in range(k):
            f = perm[jj]
            lw0 = 0.0
            lw1 = 0.0
            lr = 0
            for i in range(1, n_loc):
                l_prev = idx_all[f, lo + i - 1]
                lw0 += wb0[l_prev]
                lw1 += wb1[l_prev]
                lr += rc0[l_prev] + rc1[l_prev]
                v_prev = vals[f, lo + i - 1]
                v_cur = vals[f, lo + i]
                if v_cur <= v_prev:
                    continue
                if lr < min_leaf or (m_node - lr) < min_leaf:
                    continue
                mL = lw0 + lw1
                mR = (tw0 - lw0) + (tw1 - lw1)
                if mL <= 0.0 or mR <= 0.0:
                    continue
                a0 = lw0 / mL
                a1 = lw1 / mL
                gL = 1.0 - a0 * a0 - a1 * a1
                b0 = (tw0 - lw0) / mR
                b1 = (tw1 - lw1) / mR
                gR = 1.0 - b0 * b0 - b1 * b1
                score = (mL * gL + mR * gR) / (mL + mR)
                gain = gini_node - score
                if gain <= 0.0:
                    continue
                thr = 0.5 * (v_prev + v_cur)
                take = False
                if gain > best_gain:
                    take = True
                elif gain == best_gain and best_feat >= 0:
                    if f < best_feat or (f == best_feat and thr < best_thr):
                        take = True
                if take:
                    best_gain = gain
                    best_feat = f
                    best_thr = thr

        if best_feat < 0:
            continue

        n_left_loc = 0
        for i in range(lo, hi):
            l = idx_all[best_feat, i]
            if vals[best_feat, i] <= best_thr:
                side[l] = 1
                n_left_loc += 1
            else:
                side[l] = 0
        for f in range(d):
            wl = lo
            nr = 0
            for i in range(lo, hi):
                l = idx_all[f, i]
                if side[l] == 1:
                    idx_all[f, wl] = l
                    vals[f, wl] = vals[f, i]
                    wl += 1
                else:
                    scratch_i[nr] = l
                    scratch_v[nr] = vals[f, i]
                    nr += 1
            for i in range(nr):
                idx_all[f, wl + i] = scratch_i[i]
                vals[f, wl + i] = scratch_v[i]

        feature[node] = best_feat
        threshold[node] = best_thr
        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        left[node] = left_id
        right[node] = right_id

        top += 1
        stack_node[top] = right_id
        stack_lo[top] = lo + n_left_loc
        stack_hi[top] = hi
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = left_id
        stack_lo[top] = lo
        stack_hi[top] = lo + n_left_loc
        stack_depth[top] = depth + 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes],
            right[:n_nodes], raw0[:n_nodes], raw1[:n_nodes],
            w0s[:n_nodes], w1s[:n_nodes], proba[:n_nodes])


@njit(cache=True)
def predict_forest(Xq, feature, threshold, left, right, proba, offsets,
                   tree_weights):
    # tree-outer iteration keeps each tree's node block hot in cache; the
    # per-row accumulation order over trees stays fixed, so sums are
    # bit-reproducible
    nq = Xq.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros(nq, dtype=np.float64)
    for t in range(n_trees):
        base = offsets[t]
        w = tree_weights[t]
        for i in range(nq):
            nid = base
            while feature[nid] >= 0:
                if Xq[i, feature[nid]] <= threshold[nid]:
                    nid = base + left[nid]
                else:
                    nid = base + right[nid]
            out[i] += w * proba[nid]
    return out


@njit(cache=True)
def predict_trees(Xq, feature, threshold, left, right, proba, offsets):
    nq = Xq.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.empty((nq, n_trees), dtype=np.float64)
    for t in range(n_trees):
        base = offsets[t]
        for i in range(nq):
            nid = base
            while feature[nid] >= 0:
                if Xq[i, feature[nid]] <= threshold[nid]:
                    nid = base + left[nid]
                else:
                    nid = base + right[nid]
            out[i, t] = proba[nid]
    return out
