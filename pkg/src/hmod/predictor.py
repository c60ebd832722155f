"""Prediction head, masked OD loss and thresholded RMSE / PCC."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .memory import MemoryBank


def init_head_params(params: ad.ParamSet, n_levels: int, d_memory: int, d_head: int, n_nodes: int) -> None:
    params.weight("head.W_o2", n_levels * d_memory, d_head)
    params.vector("head.b_o2", d_head)
    params.weight("head.W_o1", d_head, n_nodes)
    params.vector("head.b_o1", n_nodes)


def fuse_memories(node: int, bank: MemoryBank, levels=None) -> np.ndarray:
    """Concatenation of a node's memories in level order."""
    levels = range(bank.depth + 1) if levels is None else levels
    return np.concatenate([bank.memories[node, d] for d in levels])


def head(fused, params: ad.ParamSet) -> ad.Tensor:
    hidden = ad.relu(ad.linear(fused, params["head.W_o2"], params["head.b_o2"]))
    return ad.linear(hidden, params["head.W_o1"], params["head.b_o1"])


def predict_row(node: int, bank: MemoryBank, params: ad.ParamSet, levels=None) -> np.ndarray:
    return head(fuse_memories(node, bank, levels), params).data


def predict_matrix(bank: MemoryBank, params: ad.ParamSet, levels=None, memories: dict | None = None) -> ad.Tensor:
    """``N x N`` prediction, row ``i`` from node ``i``'s fused memories.

    ``memories`` may override a level with a differentiable ``(N, d_H)`` tensor.
    """
    levels = list(range(bank.depth + 1)) if levels is None else list(levels)
    memories = memories or {}
    parts = [memories.get(d, ad.Tensor(bank.memories[:, d])) for d in levels]
    return head(ad.concat(parts, axis=-1), params)


def od_mask(y: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    """1 where an entry is penalised; 0 where the truth is zero and the prediction is not positive."""
    return ~((y == 0) & (y_hat <= 0))


def od_loss(y, y_hat, masked: bool = True) -> ad.Tensor:
    """Mean over all ``N^2`` entries of the masked squared error."""
    y = np.asarray(getattr(y, "values", y), dtype=np.float64)
    y_hat = ad.as_tensor(y_hat)
    if y.shape != y_hat.shape:
        raise ad.ShapeError(f"od_loss: target {y.shape} vs prediction {y_hat.shape}")
    diff = y_hat - y
    sq = ad.mul(diff, diff)
    if masked:
        sq = ad.mul(sq, od_mask(y, y_hat.data).astype(np.float64))
    return ad.mul(ad.sum(sq), 1.0 / y.size)


# ------------------------------------------------------------------ metrics

@dataclass
class ThresholdMetrics:
    threshold: float
    count: int
    rmse: float
    pcc: float | None          # None when undefined (fewer than 2 entries or zero variance)


@dataclass
class MetricReport:
    entries: list = field(default_factory=list)

    def at(self, threshold: float) -> ThresholdMetrics:
        for e in self.entries:
            if e.threshold == threshold:
                return e
        raise KeyError(threshold)

    @property
    def rmse(self) -> float:
        return self.entries[0].rmse

    @property
    def pcc(self):
        return self.entries[0].pcc

    def row(self) -> dict:
        out = {}
        for e in self.entries:
            tag = f"ge{e.threshold:g}"
            out[f"{tag}_rmse"] = e.rmse
            out[f"{tag}_pcc"] = e.pcc
            out[f"{tag}_count"] = e.count
        return out


def pearson(a: np.ndarray, b: np.ndarray):
    if a.size < 2:
        return None
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if denom == 0.0:
        return None
    return float(np.clip(np.dot(da, db) / denom, -1.0, 1.0))


def metrics(y, y_hat, thresholds=(0.0, 3.0, 5.0), clamp: bool = True) -> MetricReport:
    """RMSE and PCC over entries whose truth is at least each threshold.

    Inputs may be single matrices or stacks of matrices; entries are pooled.
    Predictions are clamped at zero first unless ``clamp`` is False.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise ValueError(f"metrics: shapes differ {y.shape} vs {y_hat.shape}")
    if clamp:
        y_hat = np.maximum(y_hat, 0.0)
    report = MetricReport()
    for p in thresholds:
        sel = y >= p
        count = int(sel.sum())
        if count == 0:
            report.entries.append(ThresholdMetrics(float(p), 0, float("nan"), None))
            continue
        err = y_hat[sel] - y[sel]
        report.entries.append(ThresholdMetrics(float(p), count, float(math.sqrt(np.mean(err * err))),
                                               pearson(y_hat[sel], y[sel])))
    return report
