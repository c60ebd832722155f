"""Per-node hierarchical memory state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BankError(RuntimeError):
    """Chronology or shape violation on the memory bank."""


@dataclass(frozen=True)
class BankSnapshot:
    shape: tuple
    memories: np.ndarray
    last_update: np.ndarray
    stored_messages: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, BankSnapshot):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.memories, other.memories)
                and np.array_equal(self.last_update, other.last_update)
                and np.array_equal(self.stored_messages, other.stored_messages))


class MemoryBank:
    """``D + 1`` memory vectors per node.

    Level 0 is the continuous-time memory; level ``d >= 1`` is refreshed every
    ``2**(d-1) * delta_t`` seconds. Alongside each memory the bank keeps its
    last update time and the most recent fused message that updated it.
    """

    def __init__(self, n_nodes: int, depth: int, d_memory: int, t_start: float = 0.0,
                 d_message: int | None = None, delta_t: float = 1800.0):
        if n_nodes < 1 or depth < 0 or d_memory < 1:
            raise ValueError(f"invalid bank shape N={n_nodes}, D={depth}, d_H={d_memory}")
        self.n_nodes = n_nodes
        self.depth = depth
        self.d_memory = d_memory
        self.d_message = d_memory if d_message is None else d_message
        self.delta_t = float(delta_t)
        self.memories = np.zeros((n_nodes, depth + 1, d_memory))
        self.last_update = np.full((n_nodes, depth + 1), float(t_start))
        self.stored_messages = np.zeros((n_nodes, depth + 1, self.d_message))

    @property
    def shape(self) -> tuple:
        return (self.n_nodes, self.depth, self.d_memory, self.d_message)

    def level_span(self, level: int) -> float:
        """Seconds covered by a discrete level: ``2**(level-1) * delta_t``."""
        if not 1 <= level <= self.depth:
            raise ValueError(f"level {level} is not a discrete level (1..{self.depth})")
        return (2 ** (level - 1)) * self.delta_t

    def read(self, node: int, level: int) -> np.ndarray:
        return self.memories[node, level].copy()

    def read_all_levels(self, node: int) -> list[np.ndarray]:
        return [self.memories[node, d].copy() for d in range(self.depth + 1)]

    def level(self, level: int) -> np.ndarray:
        """Read-only view of one level for all nodes, ``(N, d_H)``."""
        view = self.memories[:, level]
        view.flags.writeable = False
        return view

    def write(self, node: int, level: int, vector, t: float, message=None) -> None:
        self.write_rows(np.array([node]), level, np.asarray(vector)[None, :], t,
                        None if message is None else np.asarray(message)[None, :])

    def write_rows(self, nodes, level: int, vectors, t: float, messages=None) -> None:
        nodes = np.asarray(nodes, dtype=np.int64)
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.shape != (len(nodes), self.d_memory):
            raise ValueError(f"memory rows must be ({len(nodes)}, {self.d_memory}), got {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise BankError(f"non-finite memory written at level {level}")
        stale = self.last_update[nodes, level] > t
        if stale.any():
            bad = int(nodes[np.argmax(stale)])
            raise BankError(f"write at t={t} precedes last update "
                            f"{self.last_update[bad, level]} of node {bad}, level {level}")
        self.memories[nodes, level] = vectors
        self.last_update[nodes, level] = t
        if messages is not None:
            self.stored_messages[nodes, level] = messages

    def snapshot(self) -> BankSnapshot:
        return BankSnapshot(self.shape, self.memories.copy(), self.last_update.copy(),
                            self.stored_messages.copy())

    def restore(self, snap: BankSnapshot) -> None:
        if snap.shape != self.shape:
            raise BankError(f"snapshot shape {snap.shape} does not match bank {self.shape}")
        self.memories = snap.memories.copy()
        self.last_update = snap.last_update.copy()
        self.stored_messages = snap.stored_messages.copy()

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {"bank/memories": self.memories, "bank/last_update": self.last_update,
                "bank/stored_messages": self.stored_messages}

    @classmethod
    def from_arrays(cls, arrays: dict, delta_t: float) -> "MemoryBank":
        mem = arrays["bank/memories"]
        msg = arrays["bank/stored_messages"]
        bank = cls(mem.shape[0], mem.shape[1] - 1, mem.shape[2], d_message=msg.shape[2], delta_t=delta_t)
        bank.memories = mem.copy()
        bank.last_update = arrays["bank/last_update"].copy()
        bank.stored_messages = msg.copy()
        return bank
