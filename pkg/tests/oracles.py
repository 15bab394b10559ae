"""Straight-line reference implementations used as test oracles.

Everything here is written with plain Python loops and scalar math so it
shares no code path with the vectorized package.  Constants named FROZEN_*
were computed once with these oracles and are pinned so a regression in
either side is caught.
"""

import math
import struct

# decode_depth(raw=1.2, d_min=0.1, d_max=10) via the scalar formula below
FROZEN_DECODE_1_2 = 0.12972868589810538

# TOY_* problem: 4 points, 2 views, all-ones weights on all 6 pairs
TOY_RAYS_K = [(0.1, -0.2), (0.3, 0.1), (-0.25, 0.2), (0.05, 0.3)]
TOY_RAYS_L = [(0.12, -0.18), (0.28, 0.12), (-0.22, 0.18), (0.07, 0.27)]
TOY_DEPTH_K = [2.0, 3.0, 2.5, 4.0]
TOY_DEPTH_L = [2.2, 2.9, 2.6, 3.5]
FROZEN_TOY_DATA = 0.017215527616804376
FROZEN_TOY_TOTAL = 0.007215527616804376  # beta 0.01, sign -1, mean weight 1


def decode_scalar(raw, d_min=0.1, d_max=10.0):
    a = 1.0 / d_min - 1.0 / d_max
    b = 1.0 / d_max
    s = 1.0 / (1.0 + math.exp(-raw))
    return 1.0 / (a * s + b)


def edm_loop(points):
    n = len(points)
    out = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            out[i][j] = sum((points[i][c] - points[j][c]) ** 2 for c in range(len(points[i])))
    return out


def back_project_loop(rays, depths):
    return [[rays[i][c] * depths[i] for c in range(3)] for i in range(len(rays))]


def data_term_loop(rays_k, rays_l, depth_k, depth_l, edges, weights, alpha=2.0):
    """Weighted mean of |normalized squared distance differences| over ``edges``."""
    pk = [(x * z, y * z, z) for (x, y), z in zip(rays_k, depth_k)]
    pl = [(x * z, y * z, z) for (x, y), z in zip(rays_l, depth_l)]

    def sq(p, q):
        return sum((p[c] - q[c]) ** 2 for c in range(3))

    ek = [sq(pk[i], pk[j]) for i, j in edges]
    el = [sq(pl[i], pl[j]) for i, j in edges]
    sk, sl = sum(ek), sum(el)
    num = sum(w * abs(a / sk - b / sl) for w, a, b in zip(weights, ek, el))
    return num / (alpha * sum(weights))


def median_loop(values):
    v = sorted(values)
    n = len(v)
    mid = n // 2
    return v[mid] if n % 2 else 0.5 * (v[mid - 1] + v[mid])


def depth_metrics_loop(pred, gt):
    n = len(gt)
    abs_rel = sum(abs(p - g) / g for p, g in zip(pred, gt)) / n
    sq_rel = sum((p - g) ** 2 / g for p, g in zip(pred, gt)) / n
    rmse = math.sqrt(sum((p - g) ** 2 for p, g in zip(pred, gt)) / n)
    rmse_log = math.sqrt(sum((math.log(p) - math.log(g)) ** 2 for p, g in zip(pred, gt)) / n)
    deltas = []
    for k in (1, 2, 3):
        deltas.append(sum(1 for p, g in zip(pred, gt) if max(p / g, g / p) < 1.25 ** k) / n)
    return {"abs_rel": abs_rel, "sq_rel": sq_rel, "rmse": rmse, "rmse_log": rmse_log,
            "delta1": deltas[0], "delta2": deltas[1], "delta3": deltas[2]}


def confusion_loop(pred, gt):
    tp = fp = fn = tn = 0
    for p, g in zip(pred, gt):
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def flo_bytes(flow_rows):
    """Reference ``.flo`` encoder with :mod:`struct`; ``flow_rows[y][x] = (u, v)``."""
    h, w = len(flow_rows), len(flow_rows[0])
    out = struct.pack("<f", 202021.25) + struct.pack("<ii", w, h)
    for row in flow_rows:
        for u, v in row:
            out += struct.pack("<ff", u, v)
    return out


def pfm_bytes(rows):
    """Reference grayscale PFM encoder; ``rows[0]`` is the top image row."""
    h, w = len(rows), len(rows[0])
    out = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    for row in reversed(rows):
        out += struct.pack(f"<{w}f", *row)
    return out


def matmul_loop(a, b):
    return [[sum(a[i][t] * b[t][j] for t in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]
