"""One window of the hierarchical memory updater plus the prediction head."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import messages, predictor, walks
from .config import TrainConfig
from .memory import MemoryBank
from .trips import EventLog, od_matrix


class HMOD:
    """Parameters and window-level update logic.

    Windows are indexed from the log's ``start_time``: window ``k`` covers
    ``[start + k * delta_t, start + (k + 1) * delta_t)``. Discrete level ``d``
    fires at the end of window ``k`` when ``(k + 1)`` is a multiple of
    ``2 ** (d - 1)``.
    """

    def __init__(self, config: TrainConfig, n_nodes: int):
        self.config = config
        self.n_nodes = n_nodes
        self.levels = config.levels
        self.params = ad.ParamSet(seed=config.seed)
        c = config
        messages.init_message_params(self.params, self.levels, c.d_memory, c.d_message, n_nodes)
        walks.init_walk_params(self.params, c.d_memory)
        predictor.init_head_params(self.params, len(self.levels), c.d_memory, c.d_head, n_nodes)

    def new_bank(self, t_start: float) -> MemoryBank:
        c = self.config
        return MemoryBank(self.n_nodes, c.depth, c.d_memory, t_start=t_start,
                          d_message=c.d_message, delta_t=c.delta_t)

    def window_bounds(self, origin: float, k: int) -> tuple[float, float]:
        dt = self.config.delta_t
        return origin + k * dt, origin + (k + 1) * dt

    def fires(self, level: int, k: int) -> bool:
        return level == 0 or (k + 1) % (2 ** (level - 1)) == 0

    def embed(self, level: int, anchors: np.ndarray, t: float, k: int, bank: MemoryBank,
              log: EventLog, demand: np.ndarray | None) -> ad.Tensor:
        c = self.config
        if c.disable_embedding:
            return ad.Tensor(np.zeros((len(anchors), c.d_memory)))
        n_walks = 2 * c.walk_pairs
        u = walks.walk_uniforms(c.seed, k, level, self.n_nodes, n_walks, c.walk_length)
        batch = walks.sample_walks(anchors, level, t, c.walk_pairs, c.walk_length, uniforms=u,
                                   log=log, demand=demand, horizon=c.walk_horizon,
                                   timescale=c.timescale, smoothing=c.smoothing)
        return walks.embed_nodes(batch, bank.memories[:, level].copy(), self.params)

    def raw_messages(self, bank: MemoryBank, log: EventLog, k: int, origin: float) -> dict:
        """Compressed per-level messages ``{level: (nodes, M0)}`` for the levels firing at the end of window ``k``."""
        c = self.config
        t0, t1 = self.window_bounds(origin, k)
        current = {}
        if 0 in self.levels:
            lo, hi = log.span(t0, t1)
            origins = log.origins[lo:hi]
            if len(origins):
                active = np.unique(origins)
                h0 = bank.memories[:, 0]
                h_batch = messages.batch_aggregate_rows(h0, active, origins, log.times[lo:hi], t1, c.timescale)
                encoded = messages.time_encode(h0[active], t1 - bank.last_update[active, 0], self.params)
                emb = self.embed(0, active, t1, k, bank, log, None)
                raw = messages.continuous_raw(h_batch, encoded, emb)
                current[0] = (active, messages.compress(raw, self.params, 0))
        everyone = np.arange(self.n_nodes)
        for d in self.levels:
            if d == 0 or not self.fires(d, k):
                continue
            span = bank.level_span(d)
            demand = od_matrix(log, t1 - span, t1).values
            emb = self.embed(d, everyone, t1, k, bank, log, demand)
            raw = messages.discrete_raw(bank.memories[:, d], demand, emb)
            current[d] = (everyone, messages.compress(raw, self.params, d))
        return current

    def update_window(self, bank: MemoryBank, log: EventLog, k: int, origin: float) -> dict:
        """Advance the bank through window ``k``.

        Returns ``{level: (N, d_H) tensor}`` for every level updated, carrying
        gradients back to the parameters. The bank itself only stores values.
        """
        _, t1 = self.window_bounds(origin, k)
        current = self.raw_messages(bank, log, k, origin)
        if not current:
            return {}
        fused = messages.fuse_messages(current, bank.stored_messages, self.levels,
                                       self.config.fusion_layers, self.params)
        fresh = {}
        for d in sorted(fused):
            nodes, msg = fused[d]
            rows = messages.commit_update(bank, d, nodes, msg, t1, self.params)
            fresh[d] = ad.put_rows(ad.Tensor(bank.memories[:, d].copy()), nodes, rows)
        return fresh

    def predict(self, bank: MemoryBank, fresh: dict | None = None) -> ad.Tensor:
        return predictor.predict_matrix(bank, self.params, self.levels, fresh)
