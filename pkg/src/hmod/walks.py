"""Origin/destination-alternating temporal random walks and their embedding.

Walk ``w`` of an anchor starts with a forward step (anchor as origin) when
``w`` is even and with a reverse step (anchor as destination) when odd, then
alternates direction. The anchor itself is not part of the walk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .trips import EventLog

FORWARD, REVERSE = "forward", "reverse"
ORIGIN, DESTINATION = "origin", "destination"


@dataclass(frozen=True)
class WalkSample:
    nodes: tuple
    roles: tuple
    parity: int          # 0: starts forward, 1: starts reverse
    level: int
    anchor: int
    anchor_time: float
    steps: int           # real steps before padding


@dataclass
class WalkBatch:
    """Walks for a set of anchors at one level, ``nodes`` shaped ``(A, 2*eps, omega)``."""

    anchors: np.ndarray
    nodes: np.ndarray
    lengths: np.ndarray
    level: int
    time: float

    @property
    def valid(self) -> np.ndarray:
        """Walks that took at least one real step."""
        return self.lengths > 0

    def samples(self) -> list[WalkSample]:
        out = []
        for a, anchor in enumerate(self.anchors):
            for w in range(self.nodes.shape[1]):
                out.append(WalkSample(tuple(int(x) for x in self.nodes[a, w]), walk_roles(w, self.nodes.shape[2]),
                                      w % 2, self.level, int(anchor), self.time, int(self.lengths[a, w])))
        return out


def walk_roles(walk_index: int, length: int) -> tuple:
    """Role of each reached node: a forward step lands on a destination."""
    first = DESTINATION if walk_index % 2 == 0 else ORIGIN
    other = ORIGIN if first == DESTINATION else DESTINATION
    return tuple(first if j % 2 == 0 else other for j in range(length))


def walk_uniforms(seed: int, window: int, level: int, n_nodes: int, n_walks: int, length: int) -> np.ndarray:
    """Uniform draws for every (anchor, walk, step); row ``a`` depends only on (seed, window, level, a)."""
    rng = np.random.default_rng([seed, window, level])
    return rng.random((n_nodes, n_walks, length))


# ------------------------------------------------------------------ step distributions

def decay_step_distribution(log: EventLog, node: int, direction: str, t_hat: float,
                            horizon: float, timescale: float, inclusive: bool = False):
    """Candidate events and their probabilities for one continuous-level step.

    The first step of a walk only sees events strictly before ``t_hat``;
    later steps (``inclusive=True``) also accept events at ``t_hat``.
    Returns ``(neighbours, times, probs)``; empty arrays when there is no candidate.
    """
    ptr, times, nbr, _ = log.adjacency(direction)
    a, b = int(ptr[node]), int(ptr[node + 1])
    i0 = a + int(np.searchsorted(times[a:b], t_hat - horizon, side="left"))
    i1 = a + int(np.searchsorted(times[a:b], t_hat, side="right" if inclusive else "left"))
    w = np.array([math.exp(-(t_hat - x) / timescale) for x in times[i0:i1].tolist()])
    probs = w / w.sum() if len(w) else w
    return nbr[i0:i1].copy(), times[i0:i1].copy(), probs


def demand_step_distribution(demand: np.ndarray, node: int, direction: str, smoothing: float) -> np.ndarray:
    """Next-node probabilities over the smoothed OD row (forward) or column (reverse)."""
    row = demand[node, :] if direction == FORWARD else demand[:, node]
    w = np.asarray(row, dtype=np.float64) + smoothing
    return w / w.sum()


def sample_step(node: int, direction: str, level: int, t_hat: float, rng: np.random.Generator, *,
                log: EventLog | None = None, demand: np.ndarray | None = None,
                horizon: float = 0.0, timescale: float = 1.0, smoothing: float = 0.01):
    """One walk step through the production kernels.

    Returns ``(next_node, new_t_hat)``, or ``None`` when a continuous-level
    step has no candidate edge.
    """
    walk = 0 if direction == FORWARD else 1
    u = np.zeros((1, 2, 1))
    u[0, walk, 0] = rng.random()
    anchors = np.array([node], dtype=np.int64)
    if level == 0:
        fwd, rev = log.adjacency(FORWARD), log.adjacency(REVERSE)
        nodes, times, lengths = kernels.decay_walks(fwd[0], fwd[1], fwd[2], rev[0], rev[1], rev[2], anchors,
                                                    float(t_hat), float(horizon), float(timescale), u)
        if lengths[0, walk] == 0:
            return None
        return int(nodes[0, walk, 0]), float(times[0, walk, 0])
    nodes = kernels.demand_walks(np.ascontiguousarray(demand, dtype=np.float64), anchors, u, float(smoothing))
    return int(nodes[0, walk, 0]), float(t_hat)


# ------------------------------------------------------------------ batched sampling

def sample_walks(anchors, level: int, t: float, n_pairs: int, length: int, *, uniforms: np.ndarray,
                 log: EventLog | None = None, demand: np.ndarray | None = None,
                 horizon: float = 0.0, timescale: float = 1.0, smoothing: float = 0.01) -> WalkBatch:
    """``2 * n_pairs`` walks of ``length`` nodes for every anchor.

    ``uniforms`` is indexed by anchor id: shape ``(N, 2 * n_pairs, length)``.
    """
    anchors = np.asarray(anchors, dtype=np.int64)
    u = np.ascontiguousarray(uniforms[anchors, :2 * n_pairs, :length])
    if level == 0:
        fwd = log.adjacency(FORWARD)
        rev = log.adjacency(REVERSE)
        nodes, _, lengths = kernels.decay_walks(fwd[0], fwd[1], fwd[2], rev[0], rev[1], rev[2],
                                                anchors, float(t), float(horizon), float(timescale), u)
    else:
        nodes = kernels.demand_walks(np.ascontiguousarray(demand, dtype=np.float64), anchors, u, float(smoothing))
        lengths = np.full(nodes.shape[:2], length, dtype=np.int64)
    return WalkBatch(anchors, nodes, lengths, level, float(t))


# ------------------------------------------------------------------ embedding

def init_walk_params(params: ad.ParamSet, d_memory: int, prefix: str = "walk") -> None:
    params.weight(f"{prefix}.W_O", d_memory, d_memory)
    params.weight(f"{prefix}.W_D", d_memory, d_memory)
    params.weight(f"{prefix}.W_a", d_memory, d_memory)
    params.vector(f"{prefix}.a", d_memory, fan_in=d_memory)


def role_sums(walks: WalkBatch, memory: np.ndarray):
    """Per-walk sums of memories at positions weighted by ``W_O`` and by ``W_D``.

    Even walks send even positions through ``W_O`` and odd positions through
    ``W_D``; odd walks swap.
    """
    gathered = memory[walks.nodes]                                 # (A, W, omega, d)
    n_walks, length = walks.nodes.shape[1:]
    pos_even = (np.arange(length) % 2 == 0)
    walk_even = (np.arange(n_walks) % 2 == 0)
    uses_o = walk_even[:, None] == pos_even[None, :]               # (W, omega)
    sum_o = np.einsum("awjd,wj->awd", gathered, uses_o.astype(np.float64))
    sum_d = np.einsum("awjd,wj->awd", gathered, (~uses_o).astype(np.float64))
    return sum_o, sum_d


def intra_walk_embed(walks: WalkBatch, memory: np.ndarray, params: ad.ParamSet, prefix: str = "walk") -> ad.Tensor:
    """Walk representations ``(A, W, d)``: role-projected memories summed and scaled by ``1 / (2 * omega)``."""
    sum_o, sum_d = role_sums(walks, memory)
    length = walks.nodes.shape[2]
    proj = ad.matmul(sum_o, params[f"{prefix}.W_O"]) + ad.matmul(sum_d, params[f"{prefix}.W_D"])
    return ad.mul(proj, 1.0 / (2 * length))


def attention_scores(embeddings: ad.Tensor, params: ad.ParamSet, prefix: str = "walk") -> ad.Tensor:
    a = params[f"{prefix}.a"]
    projected = ad.matmul(embeddings, params[f"{prefix}.W_a"])
    return ad.reshape(ad.matmul(projected, ad.reshape(a, (a.shape[0], 1))), embeddings.shape[:-1])


def inter_walk_attend(embeddings: ad.Tensor, params: ad.ParamSet, mask=None, prefix: str = "walk"):
    """Attention-weighted sum over walks. Returns ``(Z, beta)``; ``Z`` is ``(A, d)``."""
    embeddings = ad.as_tensor(embeddings)
    beta = ad.softmax(attention_scores(embeddings, params, prefix), axis=-1, mask=mask)
    z = ad.sum(ad.mul(ad.reshape(beta, beta.shape + (1,)), embeddings), axis=-2)
    return z, beta


def embed_nodes(walks: WalkBatch, memory: np.ndarray, params: ad.ParamSet, prefix: str = "walk") -> ad.Tensor:
    """Node embeddings for every anchor of ``walks``; anchors with no walk embed to zero."""
    emb = intra_walk_embed(walks, memory, params, prefix)
    z, _ = inter_walk_attend(emb, params, mask=walks.valid, prefix=prefix)
    return z
