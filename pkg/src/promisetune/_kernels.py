"""Hot numeric kernels with a numba path and a pure numpy/python fallback.

Both paths share signatures and arithmetic order. The numba path is used
whenever numba imports, unless ``PROMISETUNE_DISABLE_NUMBA`` is set to a
truthy value before import.
"""
from __future__ import annotations

import math
import os
from itertools import combinations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_DISABLED = os.environ.get("PROMISETUNE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")
USE_NUMBA = numba is not None and not _DISABLED

# residual variance below this (on the unit-diagonal correlation scale)
# means a variable is determined by the conditioning set
COLLINEAR_EPS = 1e-10
_SQRT2 = math.sqrt(2.0)


def _njit(fn):
    return numba.njit(cache=True, nogil=True)(fn)


# --------------------------------------------------------------------------
# CART tree growth
# --------------------------------------------------------------------------

def _grow_tree_py(X, y, rows, kinds, min_leaf):
    m = rows.shape[0]
    d = X.shape[1]
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    is_cat = np.zeros(cap, np.bool_)
    value = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    pred = np.zeros(cap)
    count = np.zeros(cap, np.int64)

    idx = rows.copy()
    stack = [(0, 0, m)]
    n_nodes = 1
    while stack:
        node, lo, hi = stack.pop()
        seg = idx[lo:hi]
        n = hi - lo
        ys = y[seg]
        s = np.cumsum(ys)[-1]
        sq = np.cumsum(ys * ys)[-1]
        count[node] = n
        pred[node] = s / n
        if n < 2 * min_leaf or ys.min() == ys.max():
            continue
        parent = sq - s * s / n
        best = parent
        bf = -1
        bcat = False
        bval = 0.0
        for f in range(d):
            xs = X[seg, f]
            if kinds[f] == 0:
                order = np.argsort(xs, kind="mergesort")
                xo = xs[order]
                yo = ys[order]
                sl = np.cumsum(yo)[:-1]
                sql = np.cumsum(yo * yo)[:-1]
                nl = np.arange(1, n, dtype=np.float64)
                nr = n - nl
                sr = s - sl
                sqr = sq - sql
                sse = (sql - sl * sl / nl) + (sqr - sr * sr / nr)
                ok = (nl >= min_leaf) & (nr >= min_leaf) & (xo[:-1] != xo[1:])
                if not ok.any():
                    continue
                cand = np.flatnonzero(ok)
                t = cand[np.argmin(sse[cand])]
                if sse[t] < best:
                    best = sse[t]
                    bf = f
                    bcat = False
                    bval = 0.5 * (xo[t] + xo[t + 1])
            else:
                for v in np.unique(xs):
                    mask = xs == v
                    nl = int(mask.sum())
                    nr = n - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    yl = ys[mask]
                    sl = np.cumsum(yl)[-1]
                    sql = np.cumsum(yl * yl)[-1]
                    sr = s - sl
                    sqr = sq - sql
                    sse = (sql - sl * sl / nl) + (sqr - sr * sr / nr)
                    if sse < best:
                        best = sse
                        bf = f
                        bcat = True
                        bval = float(v)
        if bf < 0 or not (parent - best > 1e-10 * parent):
            continue
        xs = X[seg, bf]
        go_left = (xs == bval) if bcat else (xs < bval)
        nleft = int(go_left.sum())
        idx[lo:hi] = np.concatenate((seg[go_left], seg[~go_left]))
        feature[node] = bf
        is_cat[node] = bcat
        value[node] = bval
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        stack.append((right[node], lo + nleft, hi))
        stack.append((left[node], lo, lo + nleft))
    k = n_nodes
    return feature[:k], is_cat[:k], value[:k], left[:k], right[:k], pred[:k], count[:k]


def _grow_tree_nb(X, y, rows, kinds, min_leaf):
    m = rows.shape[0]
    d = X.shape[1]
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    is_cat = np.zeros(cap, np.bool_)
    value = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    pred = np.zeros(cap)
    count = np.zeros(cap, np.int64)

    idx = rows.copy()
    buf = np.empty(m, np.int64)
    xs = np.empty(m, np.int64)
    ys = np.empty(m)
    order = np.empty(m, np.int64)
    # counting-sort buckets, used when a column's range is small
    span_cap = 4 * m + 16
    bucket = np.zeros(span_cap + 1, np.int64)
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        n = hi - lo
        s = 0.0
        sq = 0.0
        ymin = np.inf
        ymax = -np.inf
        for t in range(n):
            v = y[idx[lo + t]]
            xs[t] = 0
            ys[t] = v
            s += v
            sq += v * v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        count[node] = n
        pred[node] = s / n
        if n < 2 * min_leaf or ymin == ymax:
            continue
        parent = sq - s * s / n
        best = parent
        bf = -1
        bcat = False
        bval = 0.0
        for f in range(d):
            xmin = X[idx[lo], f]
            xmax = xmin
            for t in range(n):
                xv = X[idx[lo + t], f]
                xs[t] = xv
                if xv < xmin:
                    xmin = xv
                if xv > xmax:
                    xmax = xv
            if xmin == xmax:
                continue
            span = xmax - xmin + 1
            if kinds[f] == 0:
                if span <= span_cap:
                    # stable counting sort: the same order as a stable argsort
                    for t in range(span + 1):
                        bucket[t] = 0
                    for t in range(n):
                        bucket[xs[t] - xmin + 1] += 1
                    for t in range(1, span + 1):
                        bucket[t] += bucket[t - 1]
                    for t in range(n):
                        b = xs[t] - xmin
                        order[bucket[b]] = t
                        bucket[b] += 1
                else:
                    order[:n] = np.argsort(xs[:n], kind="mergesort")
                sl = 0.0
                sql = 0.0
                tbest = -1
                sbest = np.inf
                for t in range(n - 1):
                    v = ys[order[t]]
                    sl += v
                    sql += v * v
                    nl = t + 1
                    nr = n - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    if xs[order[t]] == xs[order[t + 1]]:
                        continue
                    sr = s - sl
                    sqr = sq - sql
                    sse = (sql - sl * sl / nl) + (sqr - sr * sr / nr)
                    if sse < sbest:
                        sbest = sse
                        tbest = t
                if tbest >= 0 and sbest < best:
                    best = sbest
                    bf = f
                    bcat = False
                    bval = 0.5 * (xs[order[tbest]] + xs[order[tbest + 1]])
            else:
                if span <= span_cap:
                    for t in range(span):
                        bucket[t] = 0
                    for t in range(n):
                        bucket[xs[t] - xmin] += 1
                    nv = 0
                    for t in range(span):
                        if bucket[t] > 0:
                            buf[nv] = t + xmin
                            nv += 1
                    vals = buf[:nv].copy()
                else:
                    vals = np.unique(xs[:n])
                for q in range(vals.shape[0]):
                    vv = vals[q]
                    nl = 0
                    sl = 0.0
                    sql = 0.0
                    for t in range(n):
                        if xs[t] == vv:
                            nl += 1
                            sl += ys[t]
                            sql += ys[t] * ys[t]
                    nr = n - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    sr = s - sl
                    sqr = sq - sql
                    sse = (sql - sl * sl / nl) + (sqr - sr * sr / nr)
                    if sse < best:
                        best = sse
                        bf = f
                        bcat = True
                        bval = float(vv)
        if bf < 0 or not (parent - best > 1e-10 * parent):
            continue
        nleft = 0
        nright = 0
        for t in range(lo, hi):
            r = idx[t]
            x = X[r, bf]
            if bcat:
                go = x == bval
            else:
                go = x < bval
            if go:
                idx[lo + nleft] = r
                nleft += 1
            else:
                buf[nright] = r
                nright += 1
        for t in range(nright):
            idx[lo + nleft + t] = buf[t]
        feature[node] = bf
        is_cat[node] = bcat
        value[node] = bval
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        st_node[top] = right[node]
        st_lo[top] = lo + nleft
        st_hi[top] = hi
        top += 1
        st_node[top] = left[node]
        st_lo[top] = lo
        st_hi[top] = lo + nleft
        top += 1
    k = n_nodes
    return feature[:k], is_cat[:k], value[:k], left[:k], right[:k], pred[:k], count[:k]


def _grow_forest_impl(X, y, R, kinds, min_leaf):
    # grows one tree per row of R (bootstrap row indices) into flat arrays
    T = R.shape[0]
    cap = T * (2 * R.shape[1] + 1)
    feature = np.empty(cap, np.int64)
    is_cat = np.empty(cap, np.bool_)
    value = np.empty(cap)
    left = np.empty(cap, np.int64)
    right = np.empty(cap, np.int64)
    pred = np.empty(cap)
    count = np.empty(cap, np.int64)
    roots = np.empty(T, np.int64)
    k = 0
    for t in range(T):
        f, c, v, lt, rt, pr, cn = grow_tree(X, y, R[t], kinds, min_leaf)
        sz = f.shape[0]
        roots[t] = k
        for q in range(sz):
            feature[k + q] = f[q]
            is_cat[k + q] = c[q]
            value[k + q] = v[q]
            left[k + q] = lt[q] + k if lt[q] >= 0 else -1
            right[k + q] = rt[q] + k if rt[q] >= 0 else -1
            pred[k + q] = pr[q]
            count[k + q] = cn[q]
        k += sz
    return feature[:k], is_cat[:k], value[:k], left[:k], right[:k], pred[:k], count[:k], roots


# --------------------------------------------------------------------------
# forest prediction
# --------------------------------------------------------------------------

def _predict_py(feature, is_cat, value, left, right, pred, roots, X):
    T = roots.shape[0]
    m = X.shape[0]
    out = np.empty((T, m))
    rows = np.arange(m)
    for t in range(T):
        node = np.full(m, roots[t], np.int64)
        active = feature[node] >= 0
        while active.any():
            a = rows[active]
            nd = node[a]
            x = X[a, feature[nd]]
            go = np.where(is_cat[nd], x == value[nd], x < value[nd])
            node[a] = np.where(go, left[nd], right[nd])
            active = feature[node] >= 0
        out[t] = pred[node]
    return out


def _predict_nb(feature, is_cat, value, left, right, pred, roots, X):
    T = roots.shape[0]
    m = X.shape[0]
    out = np.empty((T, m))
    for t in range(T):
        for i in range(m):
            node = roots[t]
            while feature[node] >= 0:
                x = X[i, feature[node]]
                if is_cat[node]:
                    go = x == value[node]
                else:
                    go = x < value[node]
                node = left[node] if go else right[node]
            out[t, i] = pred[node]
    return out


# --------------------------------------------------------------------------
# rule fit matrix
# --------------------------------------------------------------------------

def _fits_py(X, c_rule, c_opt, c_lo, c_hi, c_start, c_len, cat_vals, n_rules):
    n = X.shape[0]
    out = np.ones((n, n_rules), np.uint8)
    for c in range(c_rule.shape[0]):
        x = X[:, c_opt[c]]
        if c_len[c] < 0:
            ok = (x >= c_lo[c]) & (x < c_hi[c])
        else:
            ok = np.isin(x, cat_vals[c_start[c]:c_start[c] + c_len[c]])
        out[~ok, c_rule[c]] = 0
    return out


def _fits_nb(X, c_rule, c_opt, c_lo, c_hi, c_start, c_len, cat_vals, n_rules):
    n = X.shape[0]
    out = np.ones((n, n_rules), np.uint8)
    for c in range(c_rule.shape[0]):
        r = c_rule[c]
        o = c_opt[c]
        for i in range(n):
            if out[i, r] == 0:
                continue
            x = X[i, o]
            if c_len[c] < 0:
                ok = x >= c_lo[c] and x < c_hi[c]
            else:
                ok = False
                for q in range(c_start[c], c_start[c] + c_len[c]):
                    if cat_vals[q] == x:
                        ok = True
                        break
            if not ok:
                out[i, r] = 0
    return out


# --------------------------------------------------------------------------
# Fisher-z conditional independence search
# --------------------------------------------------------------------------

def _partial_corr_impl(C, i, j, S, ns):
    if ns <= 1:
        # the sweep below written out for zero or one conditioning variable,
        # with the same operations in the same order
        g00 = C[i, i]
        g01 = C[i, j]
        g11 = C[j, j]
        if ns == 1:
            s = S[0]
            if C[s, s] > COLLINEAR_EPS:
                f = C[i, s] / C[s, s]
                if f != 0.0:
                    g00 -= f * C[s, i]
                    g01 -= f * C[s, j]
                f = C[j, s] / C[s, s]
                if f != 0.0:
                    g11 -= f * C[s, j]
        if g00 <= COLLINEAR_EPS or g11 <= COLLINEAR_EPS:
            return 0.0, False
        r = g01 / math.sqrt(g00 * g11)
        lim = 1.0 - 1e-12
        if r > lim:
            r = lim
        elif r < -lim:
            r = -lim
        return r, True
    k = ns + 2
    ids = np.empty(k, np.int64)
    ids[0] = i
    ids[1] = j
    for q in range(ns):
        ids[q + 2] = S[q]
    G = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            G[a, b] = C[ids[a], ids[b]]
    # sweep out the conditioning variables one at a time; a pivot with no
    # residual variance is already spanned by earlier pivots
    for s in range(2, k):
        piv = G[s, s]
        if piv <= COLLINEAR_EPS:
            continue
        for a in range(k):
            if a == s:
                continue
            f = G[a, s] / piv
            if f == 0.0:
                continue
            for b in range(k):
                if b != s:
                    G[a, b] -= f * G[s, b]
        for a in range(k):
            if a != s:
                G[a, s] = 0.0
                G[s, a] = 0.0
    if G[0, 0] <= COLLINEAR_EPS or G[1, 1] <= COLLINEAR_EPS:
        return 0.0, False
    r = G[0, 1] / math.sqrt(G[0, 0] * G[1, 1])
    lim = 1.0 - 1e-12
    if r > lim:
        r = lim
    elif r < -lim:
        r = -lim
    return r, True


def _fisher_p_impl(r, n, ns):
    dof = n - ns - 3
    if dof <= 0:
        return -1.0
    z = 0.5 * math.log((1.0 + r) / (1.0 - r)) * math.sqrt(dof)
    return math.erfc(abs(z) / _SQRT2)


def _ci_pvalue_impl(C, n, i, j, S, ns):
    """p-value of the test, or -1.0 when inconclusive."""
    r, ok = _partial_corr(C, i, j, S, ns)
    if not ok:
        return -1.0
    return _fisher_p(r, n, ns)


def _find_sepset_py(C, n, i, j, cand, size_lo, size_hi, alpha):
    sep = np.full(max(size_hi, 1), -1, np.int64)
    for size in range(size_lo, min(size_hi, cand.shape[0]) + 1):
        for S in combinations(cand.tolist(), size):
            S = np.asarray(S, np.int64)
            pv = _ci_pvalue_impl(C, n, i, j, S, size)
            if pv > alpha:
                sep[:size] = S
                return True, sep, size, pv
    return False, sep, 0, 0.0


def _find_sepset_nb(C, n, i, j, cand, size_lo, size_hi, alpha):
    width = max(size_hi, 1)
    sep = np.full(width, -1, np.int64)
    m = cand.shape[0]
    S = np.empty(width, np.int64)
    comb = np.empty(width, np.int64)
    top = size_hi if size_hi < m else m
    for size in range(size_lo, top + 1):
        for q in range(size):
            comb[q] = q
        while True:
            for q in range(size):
                S[q] = cand[comb[q]]
            pv = _ci_pvalue(C, n, i, j, S, size)
            if pv > alpha:
                for q in range(size):
                    sep[q] = S[q]
                return True, sep, size, pv
            # next combination in lexicographic order
            q = size - 1
            while q >= 0 and comb[q] == m - size + q:
                q -= 1
            if q < 0:
                break
            comb[q] += 1
            for t in range(q + 1, size):
                comb[t] = comb[t - 1] + 1
    return False, sep, 0, 0.0


def _skeleton_level_py(C, n, adj, d, alpha):
    p = adj.shape[0]
    remove = np.zeros((p, p), np.bool_)
    sep = np.full((p, p, max(d, 1)), -1, np.int64)
    sepn = np.full((p, p), -1, np.int64)
    for i in range(p):
        # without conditioning the test is symmetric, so each pair runs once
        for j in range(i + 1 if d == 0 else 0, p):
            if i == j or not adj[i, j] or remove[i, j]:
                continue
            cand = np.flatnonzero(adj[i] & (np.arange(p) != j)).astype(np.int64)
            if cand.shape[0] < d:
                continue
            found, s, ns, _ = _find_sepset(C, n, i, j, cand, d, d, alpha)
            if found:
                remove[i, j] = remove[j, i] = True
                sep[i, j] = sep[j, i] = s
                sepn[i, j] = sepn[j, i] = ns
    return remove, sep, sepn


def _skeleton_level_nb(C, n, adj, d, alpha):
    p = adj.shape[0]
    remove = np.zeros((p, p), np.bool_)
    sep = np.full((p, p, max(d, 1)), -1, np.int64)
    sepn = np.full((p, p), -1, np.int64)
    cand = np.empty(p, np.int64)
    for i in range(p):
        for j in range(i + 1 if d == 0 else 0, p):
            if i == j or not adj[i, j] or remove[i, j]:
                continue
            m = 0
            for q in range(p):
                if adj[i, q] and q != j:
                    cand[m] = q
                    m += 1
            if m < d:
                continue
            found, s, ns, _ = _find_sepset(C, n, i, j, cand[:m], d, d, alpha)
            if found:
                remove[i, j] = True
                remove[j, i] = True
                for q in range(ns):
                    sep[i, j, q] = s[q]
                    sep[j, i, q] = s[q]
                sepn[i, j] = ns
                sepn[j, i] = ns
    return remove, sep, sepn


# --------------------------------------------------------------------------
# possible-d-separating sets
# --------------------------------------------------------------------------

def _possible_dsep_impl(M, a):
    # breadth-first search over directed edge states (x, y); z extends the
    # path when y is a collider on x, y, z or x, y, z form a triangle
    p = M.shape[0]
    out = np.zeros(p, np.bool_)
    seen = np.zeros((p, p), np.bool_)
    qx = np.empty(p * p, np.int64)
    qy = np.empty(p * p, np.int64)
    head = 0
    tail = 0
    for b in range(p):
        if M[a, b] != 0:
            out[b] = True
            seen[a, b] = True
            qx[tail] = a
            qy[tail] = b
            tail += 1
    while head < tail:
        x = qx[head]
        y = qy[head]
        head += 1
        for z in range(p):
            if M[y, z] == 0 or z == x or z == a or seen[y, z]:
                continue
            if (M[x, y] == 2 and M[z, y] == 2) or M[x, z] != 0:
                out[z] = True
                seen[y, z] = True
                qx[tail] = y
                qy[tail] = z
                tail += 1
    return out


# --------------------------------------------------------------------------
# PAG orientation (marks: 0 none, 1 circle, 2 arrow, 3 tail; M[i, j] is the
# mark at j on edge i-j). Sepsets arrive as has[i, j], sep[i, j, :sepn[i, j]].
# --------------------------------------------------------------------------

def _in_sepset(has, sep, sepn, x, z, v):
    if not has[x, z]:
        return -1
    for k in range(sepn[x, z]):
        if sep[x, z, k] == v:
            return 1
    return 0


def _orient_colliders_impl(M, has, sep, sepn):
    p = M.shape[0]
    adj = M != 0
    for y in range(p):
        for x in range(p):
            if not adj[y, x]:
                continue
            for z in range(x + 1, p):
                if not adj[y, z] or adj[x, z]:
                    continue
                if _in_sepset(has, sep, sepn, x, z, y) == 0:
                    M[x, y] = 2
                    M[z, y] = 2


def _pd_edge(M, x, y):
    # edge x-y possibly directed from x to y: not into x, not out of y
    return M[x, y] != 0 and M[y, x] != 2 and M[x, y] != 3


def _uncovered_pd_reach(M, a, first, target, banned):
    # breadth-first search over edge states; uncoveredness only involves
    # consecutive triples, so state reachability suffices
    if not _pd_edge(M, a, first) or first == banned:
        return False
    if first == target:
        return True
    p = M.shape[0]
    seen = np.zeros((p, p), np.bool_)
    qx = np.empty(p * p, np.int64)
    qy = np.empty(p * p, np.int64)
    seen[a, first] = True
    qx[0] = a
    qy[0] = first
    head = 0
    tail = 1
    while head < tail:
        x = qx[head]
        y = qy[head]
        head += 1
        for z in range(p):
            if M[y, z] == 0 or z == x or z == a or z == banned or seen[y, z]:
                continue
            if M[x, z] != 0 or not _pd_edge(M, y, z):
                continue
            if z == target:
                return True
            seen[y, z] = True
            qx[tail] = y
            qy[tail] = z
            tail += 1
    return False


def _discriminating_start(M, alpha, beta, gamma):
    p = M.shape[0]
    seen = np.zeros(p, np.bool_)
    seen[alpha] = True
    seen[beta] = True
    seen[gamma] = True
    queue = np.empty(p, np.int64)
    queue[0] = alpha
    head = 0
    tail = 1
    while head < tail:
        cur = queue[head]
        head += 1
        for th in range(p):
            if M[th, cur] != 2 or seen[th]:
                continue
            if M[th, gamma] == 0:
                return th
            if M[cur, th] == 2 and M[th, gamma] == 2 and M[gamma, th] == 3:
                seen[th] = True
                queue[tail] = th
                tail += 1
    return -1


def _rule1(M):
    changed = False
    p = M.shape[0]
    for b in range(p):
        for a in range(p):
            if M[a, b] != 2:
                continue
            for c in range(p):
                if c == a or M[b, c] == 0 or M[a, c] != 0 or M[c, b] != 1:
                    continue
                M[c, b] = 3
                M[b, c] = 2
                changed = True
    return changed


def _rule2(M):
    changed = False
    p = M.shape[0]
    for a in range(p):
        for c in range(p):
            if M[a, c] != 1:
                continue
            for b in range(p):
                if M[a, b] == 0 or M[c, b] == 0:
                    continue
                ab_directed = M[a, b] == 2 and M[b, a] == 3
                bc_directed = M[b, c] == 2 and M[c, b] == 3
                if (ab_directed and M[b, c] == 2) or (M[a, b] == 2 and bc_directed):
                    M[a, c] = 2
                    changed = True
                    break
    return changed


def _rule3(M):
    changed = False
    p = M.shape[0]
    for d in range(p):
        for b in range(p):
            if M[d, b] != 1:
                continue
            # d *-o b with a *-> b <-* c, a and c non-adjacent, a *-o d o-* c
            done = False
            for a in range(p):
                if not (M[a, b] == 2 and M[a, d] == 1 and M[d, a] != 0):
                    continue
                for c in range(a + 1, p):
                    if M[c, b] == 2 and M[c, d] == 1 and M[d, c] != 0 and M[a, c] == 0:
                        M[d, b] = 2
                        changed = done = True
                        break
                if done:
                    break
    return changed


def _rule4(M, has, sep, sepn):
    changed = False
    p = M.shape[0]
    for beta in range(p):
        for gamma in range(p):
            if M[beta, gamma] == 0 or M[gamma, beta] != 1:
                continue
            # alpha <-* beta, alpha -> gamma, alpha a collider with its predecessor
            for alpha in range(p):
                if M[beta, alpha] != 2 or M[alpha, gamma] != 2 or M[gamma, alpha] != 3:
                    continue
                theta = _discriminating_start(M, alpha, beta, gamma)
                if theta < 0:
                    continue
                if _in_sepset(has, sep, sepn, theta, gamma, beta) == 1:
                    M[beta, gamma] = 2
                    M[gamma, beta] = 3
                else:
                    M[alpha, beta] = 2
                    M[beta, alpha] = 2
                    M[beta, gamma] = 2
                    M[gamma, beta] = 2
                changed = True
                break
    return changed


def _rule8(M):
    changed = False
    p = M.shape[0]
    for a in range(p):
        for c in range(p):
            if M[a, c] != 2 or M[c, a] != 1:
                continue
            for b in range(p):
                if M[a, b] == 0 or M[c, b] == 0:
                    continue
                if not (M[b, c] == 2 and M[c, b] == 3):
                    continue
                if M[b, a] == 3 and (M[a, b] == 2 or M[a, b] == 1):
                    M[c, a] = 3
                    changed = True
                    break
    return changed


def _rule9(M):
    changed = False
    p = M.shape[0]
    for a in range(p):
        for c in range(p):
            if M[a, c] != 2 or M[c, a] != 1:
                continue
            for b in range(p):
                if M[a, b] == 0 or b == c or M[b, c] != 0:
                    continue
                if _uncovered_pd_reach(M, a, b, c, -1):
                    M[c, a] = 3
                    changed = True
                    break
    return changed


def _rule10(M):
    changed = False
    p = M.shape[0]
    parents = np.empty(p, np.int64)
    for a in range(p):
        for c in range(p):
            if M[a, c] != 2 or M[c, a] != 1:
                continue
            k = 0
            for x in range(p):
                if x != a and M[x, c] == 2 and M[c, x] == 3:
                    parents[k] = x
                    k += 1
            done = False
            for x in range(k):
                for y in range(x + 1, k):
                    b = parents[x]
                    d = parents[y]
                    for m1 in range(p):
                        if M[a, m1] == 0 or m1 == c or not _uncovered_pd_reach(M, a, m1, b, c):
                            continue
                        for m2 in range(p):
                            if M[a, m2] == 0 or m2 == c or m2 == m1 or M[m1, m2] != 0:
                                continue
                            if _uncovered_pd_reach(M, a, m2, d, c):
                                M[c, a] = 3
                                changed = done = True
                                break
                        if done:
                            break
                    if done:
                        break
                if done:
                    break
    return changed


def _orient_rules_impl(M, has, sep, sepn):
    while True:
        changed = _rule1(M)
        changed |= _rule2(M)
        changed |= _rule3(M)
        changed |= _rule4(M, has, sep, sepn)
        changed |= _rule8(M)
        changed |= _rule9(M)
        changed |= _rule10(M)
        if not changed:
            return


_ORIENT_HELPERS = ("_in_sepset", "_pd_edge", "_uncovered_pd_reach", "_discriminating_start", "_rule1", "_rule2",
                   "_rule3", "_rule4", "_rule8", "_rule9", "_rule10")

if USE_NUMBA:
    # helpers are rebound to compiled versions so compiled callers resolve them
    for _name in _ORIENT_HELPERS:
        globals()[_name] = _njit(globals()[_name])
    orient_colliders = _njit(_orient_colliders_impl)
    orient_rules = _njit(_orient_rules_impl)
    possible_dsep = _njit(_possible_dsep_impl)
    _partial_corr = _njit(_partial_corr_impl)
    _fisher_p = _njit(_fisher_p_impl)
    _ci_pvalue = _njit(_ci_pvalue_impl)
    _find_sepset = _njit(_find_sepset_nb)
    skeleton_level = _njit(_skeleton_level_nb)
    grow_tree = _njit(_grow_tree_nb)
    grow_forest = _njit(_grow_forest_impl)
    predict_trees = _njit(_predict_nb)
    fits_matrix = _njit(_fits_nb)
else:
    orient_colliders = _orient_colliders_impl
    orient_rules = _orient_rules_impl
    possible_dsep = _possible_dsep_impl
    _partial_corr = _partial_corr_impl
    _fisher_p = _fisher_p_impl
    _ci_pvalue = _ci_pvalue_impl
    _find_sepset = _find_sepset_py
    skeleton_level = _skeleton_level_py
    grow_tree = _grow_tree_py
    grow_forest = _grow_forest_impl
    predict_trees = _predict_py
    fits_matrix = _fits_py

find_sepset = _find_sepset


def partial_corr(C, i, j, S):
    """Partial correlation of nodes ``i`` and ``j`` given ``S`` from a correlation matrix.

    Returns ``(r, ok)``; ``ok`` is False when ``i`` or ``j`` is (numerically)
    a linear function of ``S``.
    """
    S = np.asarray(S, np.int64)
    return _partial_corr(np.ascontiguousarray(C, np.float64), int(i), int(j), S, S.shape[0])


def ci_pvalue(C, n, i, j, S):
    S = np.asarray(S, np.int64)
    return _ci_pvalue(np.ascontiguousarray(C, np.float64), int(n), int(i), int(j), S, S.shape[0])
