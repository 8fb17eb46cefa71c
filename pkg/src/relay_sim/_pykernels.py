"""Pure-Python reference loops; used when the compiled module is unavailable."""

import math


def chain_argmax(x, h, start, x0, y0, n_hops, absorb_level, out_idx):
    n = len(x)
    cur = -1
    px, py = x0, y0
    for k in range(n_hops):
        if cur >= 0 and h[cur] >= absorb_level:
            out_idx[k] = cur
            continue
        best, bs = -1, -math.inf
        for j in range(start if cur < 0 else cur + 1, n):
            s = (h[j] - py) / (x[j] - px)
            if s > bs:
                bs, best = s, j
        if best < 0:
            return k
        out_idx[k] = best
        cur = best
        px, py = x[best], h[best]
    return n_hops


def batch_chain_argmax(X, H, start_col, x0, y0, n_hops, absorb_level, out_idx, out_count):
    B, K = X.shape
    for r in range(B):
        xs, hs = X[r].tolist(), H[r].tolist()
        row = [-1] * n_hops
        out_count[r] = chain_argmax(xs, hs, int(start_col[r]), float(x0[r]), float(y0[r]), n_hops, absorb_level, row)
        out_idx[r, :] = row


def hull_parents(x, h, out_parent):
    xs, hs = list(x), list(h)
    stack = []
    for i in range(len(xs) - 1, -1, -1):
        xi, hi = xs[i], hs[i]
        while len(stack) >= 2:
            a, b = stack[-1], stack[-2]
            if (hs[b] - hi) * (xs[a] - xi) > (hs[a] - hi) * (xs[b] - xi):
                stack.pop()
            else:
                break
        out_parent[i] = stack[-1] if stack else -1
        stack.append(i)


def range_targets(x, h, qx, qy, R, out):
    import bisect

    xs, hs = list(x), list(h)
    n = len(xs)
    for q in range(len(qx)):
        px, py = float(qx[q]), float(qy[q])
        j = bisect.bisect_right(xs, px)
        lim = px + R
        best, bs = -1, -math.inf
        while j < n and xs[j] <= lim:
            s = (hs[j] - py) / (xs[j] - px)
            if s > bs:
                bs, best = s, j
            j += 1
        out[q] = best


def batch_range_chain(X, H, x0, y0, R, max_hops, out_idx, out_count, out_status):
    B, K = X.shape
    for r in range(B):
        xs, hs = X[r].tolist(), H[r].tolist()
        cur = -1
        px, py = float(x0[r]), float(y0[r])
        out_status[r] = 3
        out_count[r] = max_hops
        for k in range(max_hops):
            lim = px + R
            if lim > xs[K - 1]:
                out_status[r], out_count[r] = 2, k
                break
            best, bs = -1, -math.inf
            j = cur + 1
            while j < K and xs[j] <= lim:
                s = (hs[j] - py) / (xs[j] - px)
                if s > bs:
                    bs, best = s, j
                j += 1
            if best < 0:
                out_status[r], out_count[r] = 1, k
                break
            out_idx[r, k] = best
            cur = best
            px, py = xs[best], hs[best]


def batch_general_first(X, H, UP, LOW, x0, y0, cap, out_idx, out_stop, out_status):
    B, K = X.shape
    for r in range(B):
        best, bs = -1, -math.inf
        out_stop[r] = -1
        out_status[r] = 2
        xr, hr, ur, lr = X[r].tolist(), H[r].tolist(), UP[r].tolist(), LOW[r].tolist()
        px, py, c = float(x0[r]), float(y0[r]), float(cap[r])
        for j in range(K):
            if xr[j] > c:
                out_status[r] = 0
                break
            if hr[j] > ur[j]:
                out_stop[r] = j
                out_status[r] = 0
                break
            if hr[j] >= lr[j]:
                s = (hr[j] - py) / (xr[j] - px)
                if s > bs:
                    bs, best = s, j
        out_idx[r] = best
