"""Per-level messages, cross-level fusion and the recurrent memory commit."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .memory import BankError, MemoryBank

SECONDS_PER_HOUR = 3600.0


def init_message_params(params: ad.ParamSet, levels, d_memory: int, d_message: int, n_nodes: int) -> None:
    params.vector("time.W_e", d_memory, fan_in=1)
    params.vector("time.b_e", d_memory)
    for d in levels:
        width = 4 * d_memory if d == 0 else 2 * d_memory + n_nodes
        params.weight(f"msg{d}.W_m2", width, d_message)
        params.vector(f"msg{d}.b_m2", d_message)
        params.weight(f"msg{d}.W_m1", d_message, d_message)
        params.vector(f"msg{d}.b_m1", d_message)
        ad.init_gru(params, f"gru{d}", d_message, d_memory)
    params.weight("fuse.W_pool", d_message, d_message)
    params.vector("fuse.b_pool", d_message)
    params.weight("fuse.W_mess", 2 * d_message, d_message)
    params.vector("fuse.b_mess", d_message)


def time_encode(h, delta_t, params: ad.ParamSet) -> ad.Tensor:
    """``(1 + W_e * dt + b_e) * h`` with ``dt`` in seconds, scaled to hours.

    ``h`` is ``(d,)`` or ``(n, d)``; ``delta_t`` a scalar or ``(n,)``.
    """
    dt = np.asarray(delta_t, dtype=np.float64)
    if np.any(dt < 0):
        raise ValueError("time_encode: negative time gap")
    hours = dt / SECONDS_PER_HOUR
    if hours.ndim == 1:
        hours = hours[:, None]
    scale = 1.0 + ad.mul(params["time.W_e"], hours) + params["time.b_e"]
    return ad.mul(scale, h)


def batch_aggregate_continuous(h0: np.ndarray, event_times, t: float, timescale: float) -> np.ndarray:
    """Mean over a node's batch of ``[h0 || h0 * exp(-(t - t_b) / s)]``.

    ``h0`` is the node's continuous memory (a detached constant), so the result
    is ``[h0 || h0 * mean_b decay_b]``.
    """
    times = np.asarray(event_times, dtype=np.float64)
    if times.size == 0:
        raise ValueError("batch_aggregate_continuous: empty batch; skip the node instead")
    decay = np.exp(-(t - times) / timescale)
    return np.concatenate([h0, h0 * decay.mean()])


def batch_aggregate_rows(h0: np.ndarray, nodes: np.ndarray, origins: np.ndarray, times: np.ndarray,
                         t: float, timescale: float) -> np.ndarray:
    """Vectorised ``batch_aggregate_continuous`` for every node in ``nodes``."""
    n_total = h0.shape[0]
    decay_sum = np.zeros(n_total)
    counts = np.zeros(n_total)
    np.add.at(decay_sum, origins, np.exp(-(t - times) / timescale))
    np.add.at(counts, origins, 1.0)
    mean_decay = decay_sum[nodes] / counts[nodes]
    rows = h0[nodes]
    return np.concatenate([rows, rows * mean_decay[:, None]], axis=1)


def compress(raw, params: ad.ParamSet, level: int) -> ad.Tensor:
    """Two-layer ReLU map of a raw message down to ``d_message``."""
    p = f"msg{level}"
    hidden = ad.relu(ad.linear(raw, params[f"{p}.W_m2"], params[f"{p}.b_m2"]))
    return ad.linear(hidden, params[f"{p}.W_m1"], params[f"{p}.b_m1"])


def continuous_raw(h_batch: np.ndarray, encoded: ad.Tensor, embedding) -> ad.Tensor:
    """``[H'' || time-encoded H^0 || embedding]`` for level 0."""
    return ad.concat([h_batch, encoded, embedding], axis=-1)


def discrete_raw(h_level: np.ndarray, od_rows: np.ndarray, embedding) -> ad.Tensor:
    """``[H^d || OD row over the level's span || embedding]`` for a discrete level."""
    return ad.concat([h_level, od_rows, embedding], axis=-1)


def aggregate_others(pooled: dict, level: int, d_message: int, n_rows: int) -> ad.Tensor:
    """Element-wise max over the pooled messages of every level except ``level``."""
    others = [pooled[k] for k in sorted(pooled) if k != level]
    if not others:
        return ad.Tensor(np.zeros((n_rows, d_message)))
    if len(others) == 1:
        return others[0]
    return ad.maxpool_rows(ad.stack(others, axis=0), axis=0)


def fuse_messages(current: dict, stored: np.ndarray, levels, n_layers: int, params: ad.ParamSet) -> dict:
    """Mix each firing level's message with the other levels' messages.

    ``current`` maps a firing level to ``(nodes, M0)`` with ``M0`` shaped
    ``(len(nodes), d_message)``. ``stored`` is the bank's ``(N, D+1, d_message)``
    last fused messages, standing in for levels that do not fire now.
    Returns ``{level: (nodes, M_L)}``.
    """
    msgs = {d: m for d, (_, m) in current.items()}
    rows = {d: nodes for d, (nodes, _) in current.items()}
    n_nodes, _, d_message = stored.shape
    for _ in range(n_layers):
        full = {}
        for k in levels:
            base = ad.Tensor(stored[:, k])
            full[k] = ad.put_rows(base, rows[k], msgs[k]) if k in msgs else base
        pooled = {k: ad.relu(ad.linear(v, params["fuse.W_pool"], params["fuse.b_pool"]))
                  for k, v in full.items()}
        nxt = {}
        for d in msgs:
            agg = aggregate_others(pooled, d, d_message, n_nodes)
            agg_rows = ad.take(agg, rows[d])
            nxt[d] = ad.linear(ad.concat([msgs[d], agg_rows], axis=-1),
                               params["fuse.W_mess"], params["fuse.b_mess"])
        msgs = nxt
    return {d: (rows[d], msgs[d]) for d in msgs}


def commit_update(bank: MemoryBank, level: int, nodes, message, t: float, params: ad.ParamSet) -> ad.Tensor:
    """GRU step on ``H^level`` for ``nodes``; writes the detached result into the bank.

    Returns the new memory rows as a differentiable tensor.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if np.any(bank.last_update[nodes, level] > t):
        raise BankError(f"commit at t={t} precedes the last update of level {level}")
    h = bank.memories[nodes, level].copy()
    new = ad.gru_cell(h, message, params, prefix=f"gru{level}")
    msg = message.data if isinstance(message, ad.Tensor) else np.asarray(message)
    bank.write_rows(nodes, level, new.data, t, messages=msg)
    return new
