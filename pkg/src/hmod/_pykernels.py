"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation (same summation order,
same inverse-CDF rule) so that both backends return identical samples for the
same uniforms.
"""

import math

import numpy as np


def od_counts(origins, dests, n):
    origins = np.asarray(origins, dtype=np.int64)
    dests = np.asarray(dests, dtype=np.int64)
    flat = np.bincount(origins * n + dests, minlength=n * n)
    return flat.reshape(n, n).astype(np.int64)


def _pick(weights, u):
    # first index whose running sum exceeds u * total
    cum = np.cumsum(weights)
    target = u * cum[-1]
    idx = int(np.searchsorted(cum, target, side="right"))
    return min(idx, len(weights) - 1)


def demand_walks(demand, anchors, uniforms, smoothing):
    """Walks over a smoothed OD matrix.

    Walk ``w`` starts with a forward step (row of ``demand``) when ``w`` is
    even and with a reverse step (column) when odd; directions alternate.
    """
    demand = np.asarray(demand, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.int64)
    n_anchor, n_walk, length = uniforms.shape
    out = np.empty((n_anchor, n_walk, length), dtype=np.int64)
    for a in range(n_anchor):
        for w in range(n_walk):
            cur = int(anchors[a])
            forward = w % 2 == 0
            for j in range(length):
                weights = (demand[cur, :] if forward else demand[:, cur]) + smoothing
                cur = _pick(weights, uniforms[a, w, j])
                out[a, w, j] = cur
                forward = not forward
    return out


def _candidate_range(ptr, times, node, lo, hi, inclusive):
    start, stop = int(ptr[node]), int(ptr[node + 1])
    seg = times[start:stop]
    i0 = start + int(np.searchsorted(seg, lo, side="left"))
    i1 = start + int(np.searchsorted(seg, hi, side="right" if inclusive else "left"))
    return i0, i1


def decay_walks(out_ptr, out_time, out_nbr, in_ptr, in_time, in_nbr,
                anchors, t, horizon, timescale, uniforms):
    """Time-respecting walks over raw trip events.

    The first step draws from edges in ``[t - horizon, t)``; each later step
    from edges in ``[t_hat - horizon, t_hat]`` around the previous edge time.

    Returns ``(nodes, times, lengths)``. ``times`` holds the edge time reached
    at each step; ``lengths[a, w]`` counts real steps and later positions
    repeat the last reached node and time.
    """
    anchors = np.asarray(anchors, dtype=np.int64)
    n_anchor, n_walk, length = uniforms.shape
    nodes = np.empty((n_anchor, n_walk, length), dtype=np.int64)
    hat = np.empty((n_anchor, n_walk, length), dtype=np.float64)
    lengths = np.zeros((n_anchor, n_walk), dtype=np.int64)
    for a in range(n_anchor):
        for w in range(n_walk):
            cur = int(anchors[a])
            t_hat = float(t)
            forward = w % 2 == 0
            steps = 0
            for j in range(length):
                if forward:
                    ptr, times, nbr = out_ptr, out_time, out_nbr
                else:
                    ptr, times, nbr = in_ptr, in_time, in_nbr
                # first step strictly before t; later steps may reuse an edge at t_hat
                i0, i1 = _candidate_range(ptr, times, cur, t_hat - horizon, t_hat, inclusive=j > 0)
                if i1 <= i0:
                    break
                # math.exp, not np.exp: matches libm in the compiled twin bit for bit
                weights = np.array([math.exp(-(t_hat - x) / timescale) for x in times[i0:i1].tolist()])
                k = i0 + _pick(weights, uniforms[a, w, j])
                cur = int(nbr[k])
                t_hat = float(times[k])
                nodes[a, w, j] = cur
                hat[a, w, j] = t_hat
                steps += 1
                forward = not forward
            fill = cur if steps > 0 else int(anchors[a])
            nodes[a, w, steps:] = fill
            hat[a, w, steps:] = t_hat
            lengths[a, w] = steps
    return nodes, hat, lengths
