"""Chronological training, evaluation and the HA / LR baselines."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .memory import MemoryBank
from .model import HMOD
from .predictor import MetricReport, metrics, od_loss
from .trips import EventLog, od_matrix

log_ = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class Split:
    """Window index ranges ``[begin, end)`` for the chronological split."""

    origin: float
    n_windows: int
    train: tuple
    val: tuple
    test: tuple


def count_windows(log: EventLog, delta_t: float) -> int:
    if len(log) == 0:
        return 0
    return int((log.end_time - log.start_time) // delta_t) + 1


def make_split(log: EventLog, config: TrainConfig) -> Split:
    n = count_windows(log, config.delta_t)
    n_train = int(round(n * config.train_frac))
    n_val = int(round(n * config.val_frac))
    n_val = min(n_val, n - n_train)
    return Split(log.start_time, n, (0, n_train), (n_train, n_train + n_val), (n_train + n_val, n))


def window_targets(log: EventLog, origin: float, delta_t: float, begin: int, end: int) -> np.ndarray:
    """OD matrices of windows ``begin .. end-1`` stacked to ``(end - begin, N, N)``."""
    out = np.zeros((max(end - begin, 0), log.node_count, log.node_count))
    for i, k in enumerate(range(begin, end)):
        out[i] = od_matrix(log, origin + k * delta_t, origin + (k + 1) * delta_t).values
    return out


def _check_finite(bank: MemoryBank, k: int) -> None:
    if not np.all(np.isfinite(bank.memories)):
        raise TrainingError(f"non-finite memory after window {k}")


def run_epoch(model: HMOD, bank: MemoryBank, log: EventLog, windows: tuple, origin: float,
              learn: bool = True) -> float:
    """One chronological pass over windows ``[begin, end)``.

    After updating the bank with window ``k`` the model predicts window
    ``k + 1`` (when it lies inside the range), takes the OD loss, and, when
    ``learn`` is set, back-propagates and steps Adam. Returns the mean loss.
    """
    c = model.config
    begin, end = windows
    losses = []
    for k in range(begin, end):
        fresh = model.update_window(bank, log, k, origin)
        _check_finite(bank, k)
        if k + 1 >= end:
            continue
        target = od_matrix(log, origin + (k + 1) * c.delta_t, origin + (k + 2) * c.delta_t).values
        loss = od_loss(target, model.predict(bank, fresh), masked=not c.plain_mse)
        value = float(loss.data)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value} predicting window {k + 1}")
        losses.append(value)
        if learn:
            ad.backward(loss, model.params)
            ad.adam_step(model.params, lr=c.lr, betas=(c.beta1, c.beta2), eps=c.adam_eps)
    return float(np.mean(losses)) if losses else 0.0


def fast_forward(model: HMOD, bank: MemoryBank, log: EventLog, windows: tuple, origin: float) -> None:
    """Advance memories through windows without predictions or parameter changes."""
    for k in range(*windows):
        model.update_window(bank, log, k, origin)


def predict_windows(model: HMOD, bank: MemoryBank, log: EventLog, windows: tuple, origin: float):
    """Predict each window from the state at its start, then absorb its events.

    Returns ``(predictions, targets)`` stacked over windows.
    """
    begin, end = windows
    c = model.config
    preds = np.zeros((max(end - begin, 0), model.n_nodes, model.n_nodes))
    for i, k in enumerate(range(begin, end)):
        preds[i] = model.predict(bank).data
        model.update_window(bank, log, k, origin)
        _check_finite(bank, k)
    return preds, window_targets(log, origin, c.delta_t, begin, end)


def evaluate(model: HMOD, bank: MemoryBank, log: EventLog, windows: tuple, origin: float) -> MetricReport:
    preds, targets = predict_windows(model, bank, log, windows, origin)
    return metrics(targets, preds, model.config.thresholds)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_rmse: float
    val_pcc: float | None


@dataclass
class FitResult:
    model: HMOD
    bank: MemoryBank            # positioned at the end of train + validation
    split: Split
    history: list = field(default_factory=list)
    best_epoch: int = -1


def fit(log: EventLog, config: TrainConfig, split: Split | None = None) -> FitResult:
    """Train with early stopping on validation RMSE over all entries.

    Each epoch replays the training windows from a fresh bank; validation then
    fast-forwards that bank through the validation windows. The bank state of
    the best epoch (end of validation) is kept so test evaluation continues
    chronologically from it.
    """
    split = split or make_split(log, config)
    model = HMOD(config, log.node_count)
    history = []
    best = (math.inf, -1, None, None)
    stale = 0
    for epoch in range(config.max_epochs):
        bank = model.new_bank(split.origin)
        train_loss = run_epoch(model, bank, log, split.train, split.origin, learn=True)
        if split.val[1] > split.val[0]:
            report = evaluate(model, bank, log, split.val, split.origin)
            val_rmse, val_pcc = report.rmse, report.pcc
        else:
            val_rmse, val_pcc = train_loss, None
        history.append(EpochRecord(epoch, train_loss, val_rmse, val_pcc))
        log_.info("epoch %d loss %.6f val rmse %.6f", epoch, train_loss, val_rmse)
        if val_rmse < best[0]:
            best = (val_rmse, epoch, model.params.values(), bank.snapshot())
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    bank = model.new_bank(split.origin)
    if best[2] is not None:
        model.params.load_values(best[2])
        bank.restore(best[3])
    return FitResult(model, bank, split, history, best[1])


# ------------------------------------------------------------------ baselines

def _slot(origin: float, k: int, delta_t: float) -> int:
    return int(((k * delta_t) % 86400.0) // delta_t)


def baseline_ha(log: EventLog, config: TrainConfig, split: Split | None = None):
    """Historical average of the training windows, per time-of-day slot or globally.

    Returns ``(report, predictions)`` over the test windows.
    """
    split = split or make_split(log, config)
    dt = config.delta_t
    train = window_targets(log, split.origin, dt, *split.train)
    begin, end = split.test
    preds = np.zeros((end - begin, log.node_count, log.node_count))
    if config.ha_mode == "global":
        preds[:] = train.mean(axis=0) if len(train) else 0.0
    else:
        slots = np.array([_slot(split.origin, k, dt) for k in range(*split.train)])
        overall = train.mean(axis=0) if len(train) else np.zeros(preds.shape[1:])
        for i, k in enumerate(range(begin, end)):
            sel = slots == _slot(split.origin, k, dt)
            preds[i] = train[sel].mean(axis=0) if sel.any() else overall
    targets = window_targets(log, split.origin, dt, begin, end)
    return metrics(targets, preds, config.thresholds), preds


LR_LAGS = 4


def lr_design(series: np.ndarray, begin: int, end: int):
    """Rows of ``[y_{k-4}, .., y_{k-1}, 1]`` per (window, pair) with target ``y_k``, for ``k`` in ``[begin, end)``."""
    rows, targets = [], []
    for k in range(max(begin, LR_LAGS), end):
        lags = series[k - LR_LAGS:k].reshape(LR_LAGS, -1).T      # (pairs, 4), oldest first
        rows.append(np.hstack([lags, np.ones((lags.shape[0], 1))]))
        targets.append(series[k].ravel())
    if not rows:
        return np.zeros((0, LR_LAGS + 1)), np.zeros(0)
    return np.vstack(rows), np.concatenate(targets)


def fit_lr(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least squares; falls back to ridge with 1e-6 damping when the design is rank-deficient."""
    if x.shape[0] == 0:
        return np.zeros(x.shape[1])
    gram = x.T @ x
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        return np.linalg.solve(gram + 1e-6 * np.eye(gram.shape[0]), x.T @ y)
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    return coef


def baseline_lr(log: EventLog, config: TrainConfig, split: Split | None = None):
    """One linear map shared by all OD pairs from the last 4 windows of a pair to its next value.

    Returns ``(report, predictions, coefficients)``; coefficients are ordered
    oldest lag first, then the intercept.
    """
    split = split or make_split(log, config)
    series = window_targets(log, split.origin, config.delta_t, 0, split.n_windows)
    x, y = lr_design(series, *split.train)
    coef = fit_lr(x, y)
    begin, end = split.test
    if begin < LR_LAGS:
        raise TrainingError(f"LR baseline needs {LR_LAGS} windows of history before the test range")
    xt, _ = lr_design(series, begin, end)
    preds = (xt @ coef).reshape(end - begin, log.node_count, log.node_count)
    return metrics(series[begin:end], preds, config.thresholds), preds, coef
