"""Trip event storage: ingestion, windowed OD counts, candidate lookup, synthetic streams."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import kernels

TRIP_MAGIC = "#hmod-trips"
TRIP_VERSION = "v1"


class TripError(ValueError):
    pass


class TripEvent(NamedTuple):
    origin: int
    destination: int
    timestamp: float
    features: tuple = ()


@dataclass(frozen=True)
class ODMatrix:
    values: np.ndarray
    window_start: float
    window_end: float

    def __post_init__(self):
        if not self.window_start < self.window_end:
            raise TripError(f"empty window [{self.window_start}, {self.window_end})")


@dataclass(eq=False)
class EventLog:
    """Immutable, time-sorted trip events held column-wise.

    ``start_time`` is the dataset origin from the file header; windows used by
    training are aligned to it.
    """

    origins: np.ndarray
    dests: np.ndarray
    times: np.ndarray
    features: np.ndarray
    node_count: int
    start_time: float = 0.0
    allow_self_loops: bool = True
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.origins = np.ascontiguousarray(self.origins, dtype=np.int64)
        self.dests = np.ascontiguousarray(self.dests, dtype=np.int64)
        self.times = np.ascontiguousarray(self.times, dtype=np.float64)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(len(self.times), -1)
        self.features = np.ascontiguousarray(feats)
        m = len(self.times)
        if not (len(self.origins) == len(self.dests) == m == len(self.features)):
            raise TripError("column lengths differ")
        if m:
            if np.any(np.diff(self.times) < 0):
                raise TripError("events are not sorted by timestamp")
            if not np.all(np.isfinite(self.times)):
                raise TripError("non-finite timestamp")
            bad = (self.origins < 0) | (self.origins >= self.node_count) | (self.dests < 0) | (
                self.dests >= self.node_count)
            if bad.any():
                raise TripError(f"node id out of range [0, {self.node_count}) at event {int(np.argmax(bad))}")
            if not self.allow_self_loops and np.any(self.origins == self.dests):
                raise TripError("self-loop trips are disabled for this log")
        for arr in (self.origins, self.dests, self.times, self.features):
            arr.setflags(write=False)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def end_time(self) -> float:
        return float(self.times[-1]) if len(self.times) else self.start_time

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self):
        for k in range(len(self)):
            yield self.event(k)

    def event(self, k: int) -> TripEvent:
        return TripEvent(int(self.origins[k]), int(self.dests[k]), float(self.times[k]),
                         tuple(self.features[k].tolist()))

    def span(self, t0: float, t1: float) -> tuple[int, int]:
        """Index range ``[lo, hi)`` of events with ``t0 <= t < t1``."""
        if not t0 < t1:
            raise TripError(f"window start {t0} must precede end {t1}")
        lo = int(np.searchsorted(self.times, t0, side="left"))
        hi = int(np.searchsorted(self.times, t1, side="left"))
        return lo, hi

    def slice_time(self, t0: float, t1: float) -> "EventLog":
        lo, hi = self.span(t0, t1)
        return EventLog(self.origins[lo:hi], self.dests[lo:hi], self.times[lo:hi],
                        self.features[lo:hi], self.node_count, start_time=t0,
                        allow_self_loops=self.allow_self_loops)

    def adjacency(self, direction: str):
        """CSR index ``(ptr, times, neighbours)`` grouped by origin (forward) or destination (reverse).

        Within each node the events stay in timestamp order.
        """
        if direction not in ("forward", "reverse"):
            raise TripError(f"unknown direction {direction!r}")
        if direction not in self._index:
            key, nbr = (self.origins, self.dests) if direction == "forward" else (self.dests, self.origins)
            order = np.argsort(key, kind="stable")
            ptr = np.zeros(self.node_count + 1, dtype=np.int64)
            np.cumsum(np.bincount(key, minlength=self.node_count), out=ptr[1:])
            self._index[direction] = (
                ptr,
                np.ascontiguousarray(self.times[order]),
                np.ascontiguousarray(nbr[order]),
                order,
            )
        return self._index[direction]


def make_log(events: Iterable[Sequence], node_count: int, *, feature_dim: int | None = None,
             start_time: float = 0.0, allow_self_loops: bool = True) -> EventLog:
    """Build a log from ``(origin, destination, time[, features])`` tuples, sorting stably by time."""
    rows = list(events)
    origins = np.array([r[0] for r in rows], dtype=np.int64)
    dests = np.array([r[1] for r in rows], dtype=np.int64)
    times = np.array([r[2] for r in rows], dtype=np.float64)
    if feature_dim is None:
        feature_dim = len(rows[0][3]) if rows and len(rows[0]) > 3 else 0
    feats = np.array([list(r[3]) if len(r) > 3 else [] for r in rows], dtype=np.float64)
    feats = feats.reshape(len(rows), feature_dim)
    order = np.argsort(times, kind="stable")
    return EventLog(origins[order], dests[order], times[order], feats[order], node_count,
                    start_time=start_time, allow_self_loops=allow_self_loops)


def _parse_header(line: str) -> dict:
    parts = line.split()
    if len(parts) < 2 or parts[0] != TRIP_MAGIC:
        raise TripError(f"line 1: expected '{TRIP_MAGIC} {TRIP_VERSION} nodes=N features=F' header")
    if parts[1] != TRIP_VERSION:
        raise TripError(f"line 1: unsupported trip file version {parts[1]!r}")
    meta = {}
    for item in parts[2:]:
        key, sep, value = item.partition("=")
        if not sep:
            raise TripError(f"line 1: malformed header field {item!r}")
        meta[key] = value
    for key in ("nodes", "features"):
        if key not in meta:
            raise TripError(f"line 1: header is missing '{key}='")
    return meta


def ingest(source, *, allow_self_loops: bool = True) -> EventLog:
    """Parse a trip file (path, text, or iterable of lines) into a sorted EventLog."""
    if isinstance(source, Path) or (isinstance(source, str) and source and "\n" not in source
                                     and not source.startswith(TRIP_MAGIC)):
        lines = Path(source).read_text().splitlines()
    elif isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in source]
    if not any(ln.strip() for ln in lines):
        return make_log([], 0)
    meta = _parse_header(lines[0])
    try:
        n = int(meta["nodes"])
        d_f = int(meta["features"])
        start = float(meta.get("start", "0"))
    except ValueError as exc:
        raise TripError(f"line 1: {exc}") from None

    rows = []
    reader = csv.reader(io.StringIO("\n".join(lines[1:])))
    for lineno, rec in enumerate(reader, start=2):
        if not rec or (len(rec) == 1 and not rec[0].strip()):
            continue
        if len(rec) != 3 + d_f:
            raise TripError(f"line {lineno}: expected {3 + d_f} columns, got {len(rec)}")
        try:
            o, d, t = int(rec[0]), int(rec[1]), float(rec[2])
            feats = tuple(float(x) for x in rec[3:])
        except ValueError as exc:
            raise TripError(f"line {lineno}: {exc}") from None
        if not (0 <= o < n and 0 <= d < n):
            raise TripError(f"line {lineno}: node id out of range [0, {n})")
        if not math.isfinite(t):
            raise TripError(f"line {lineno}: non-finite timestamp")
        if not allow_self_loops and o == d:
            raise TripError(f"line {lineno}: self-loop trip {o}->{d}")
        rows.append((o, d, t, feats))
    return make_log(rows, n, feature_dim=d_f, start_time=start, allow_self_loops=allow_self_loops)


def write_trips(log: EventLog, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"{TRIP_MAGIC} {TRIP_VERSION} nodes={log.node_count} "
                 f"features={log.feature_dim} start={log.start_time!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        for k in range(len(log)):
            w.writerow([int(log.origins[k]), int(log.dests[k]), repr(float(log.times[k])),
                        *(repr(float(x)) for x in log.features[k])])


def od_matrix(log: EventLog, t0: float, t1: float) -> ODMatrix:
    lo, hi = log.span(t0, t1)
    counts = kernels.od_counts(log.origins[lo:hi], log.dests[lo:hi], log.node_count)
    return ODMatrix(counts.astype(np.float64), float(t0), float(t1))


def window_events(log: EventLog, t0: float, t1: float) -> list[TripEvent]:
    lo, hi = log.span(t0, t1)
    return [log.event(k) for k in range(lo, hi)]


def candidates(log: EventLog, node: int, direction: str, before: float, horizon: float) -> list[TripEvent]:
    """Events leaving (forward) or entering (reverse) ``node`` with ``before - horizon <= t < before``."""
    if not horizon > 0:
        raise TripError("horizon must be positive")
    ptr, times, _, order = log.adjacency(direction)
    a, b = int(ptr[node]), int(ptr[node + 1])
    i0 = a + int(np.searchsorted(times[a:b], before - horizon, side="left"))
    i1 = a + int(np.searchsorted(times[a:b], before, side="left"))
    return [log.event(int(k)) for k in order[i0:i1]]


# ---------------------------------------------------------------- synthetic streams

@dataclass
class SyntheticSpec:
    """Declarative description of a synthetic trip stream.

    Rates are trips per hour per OD pair. Each pair's intensity is
    ``base_rate * pair_weight * day_factor * (floor + sum_k mix_k * amp_k * bump_k(hour))``
    where the bumps are daily-periodic Gaussians and ``mix_k`` depends on how
    residential the origin and destination nodes are.
    """

    nodes: int = 12
    duration_s: float = 14 * 86400.0
    base_rate: float = 1.0
    pair_spread: float = 0.0
    floor: float = 1.0
    profiles: list = field(default_factory=list)  # [(name, peak_hour, width_h, amplitude)]
    day_factor_sd: float = 0.0
    bin_s: float = 300.0
    feature_dim: int = 1
    allow_self_loops: bool = False
    start_time: float = 0.0
    seed: int = 0
    rates: np.ndarray | None = None  # explicit N×N base matrix overrides base_rate/pair_spread


_SPEC_KEYS = {
    "nodes": int, "duration_s": float, "base_rate": float, "pair_spread": float, "floor": float,
    "day_factor_sd": float, "bin_s": float, "feature_dim": int, "allow_self_loops": None,
    "start_time": float, "seed": int, "profiles": None,
}


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise TripError(f"not a boolean: {value!r}")


def parse_synthetic_spec(text: str) -> SyntheticSpec:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    spec = SyntheticSpec()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise TripError(f"line {lineno}: expected key = value")
        if key not in _SPEC_KEYS:
            raise TripError(f"line {lineno}: unknown synthetic-spec key {key!r}")
        if key == "profiles":
            profs = []
            for item in filter(None, (p.strip() for p in value.split(","))):
                bits = item.split(":")
                if len(bits) != 4:
                    raise TripError(f"line {lineno}: profile must be name:peak_hour:width_h:amplitude")
                profs.append((bits[0], float(bits[1]), float(bits[2]), float(bits[3])))
            spec.profiles = profs
        elif key == "allow_self_loops":
            spec.allow_self_loops = _parse_bool(value)
        else:
            try:
                setattr(spec, key, _SPEC_KEYS[key](value))
            except ValueError as exc:
                raise TripError(f"line {lineno}: {key}: {exc}") from None
    return spec


def load_synthetic_spec(path) -> SyntheticSpec:
    return parse_synthetic_spec(Path(path).read_text())


def _bump(hours: np.ndarray, peak: float, width: float) -> np.ndarray:
    # circular distance on the 24 h clock
    d = np.abs(hours - peak) % 24.0
    d = np.minimum(d, 24.0 - d)
    return np.exp(-0.5 * (d / width) ** 2)


def synthetic_intensity(spec: SyntheticSpec, rng: np.random.Generator):
    """Per-pair base rates, per-pair profile mixes and per-day factors (trips/hour)."""
    n = spec.nodes
    if spec.rates is not None:
        base = np.asarray(spec.rates, dtype=np.float64)
        if base.shape != (n, n):
            raise TripError(f"explicit rates must be {n}x{n}")
    else:
        base = np.full((n, n), float(spec.base_rate))
        if spec.pair_spread > 0:
            base = base * rng.lognormal(-0.5 * spec.pair_spread ** 2, spec.pair_spread, size=(n, n))
    if np.any(base < 0) or spec.base_rate < 0 or spec.floor < 0:
        raise TripError("negative rate in synthetic spec")
    if any(p[3] < 0 for p in spec.profiles):
        raise TripError("negative profile amplitude in synthetic spec")
    if not spec.allow_self_loops:
        base = base.copy()
        np.fill_diagonal(base, 0.0)

    home = rng.uniform(0.0, 1.0, size=n)
    mixes = []
    for k, _ in enumerate(spec.profiles):
        if k % 2 == 0:   # outbound-from-home shaped peaks
            mixes.append(np.outer(home, 1.0 - home))
        else:            # return-home shaped peaks
            mixes.append(np.outer(1.0 - home, home))
    n_days = int(math.ceil(spec.duration_s / 86400.0)) + 1
    if spec.day_factor_sd > 0:
        s = spec.day_factor_sd
        day = rng.lognormal(-0.5 * s * s, s, size=n_days)
    else:
        day = np.ones(n_days)
    return base, mixes, day


def generate_synthetic(spec: SyntheticSpec, seed: int | None = None) -> EventLog:
    """Draw an inhomogeneous Poisson trip stream with piecewise-constant intensity per bin."""
    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    n = spec.nodes
    base, mixes, day = synthetic_intensity(spec, rng)
    coords = rng.uniform(0.0, 10.0, size=(n, 2))

    n_bins = int(math.ceil(spec.duration_s / spec.bin_s))
    bin_starts = np.arange(n_bins) * spec.bin_s
    bin_len = np.minimum(spec.bin_s, spec.duration_s - bin_starts)
    mid_hours = ((bin_starts + 0.5 * bin_len) / 3600.0) % 24.0
    day_idx = (bin_starts // 86400.0).astype(np.int64)

    origins, dests, times = [], [], []
    for b in range(n_bins):
        shape = np.full((n, n), spec.floor)
        for (name, peak, width, amp), mix in zip(spec.profiles, mixes):
            shape = shape + mix * amp * _bump(np.array(mid_hours[b]), peak, width)
        lam = base * shape * day[day_idx[b]] * (bin_len[b] / 3600.0)
        counts = rng.poisson(lam)
        total = int(counts.sum())
        if total == 0:
            continue
        flat = np.repeat(np.arange(n * n), counts.ravel())
        origins.append(flat // n)
        dests.append(flat % n)
        times.append(bin_starts[b] + rng.uniform(0.0, bin_len[b], size=total))

    if origins:
        o = np.concatenate(origins)
        d = np.concatenate(dests)
        t = np.concatenate(times) + spec.start_time
    else:
        o = d = np.zeros(0, dtype=np.int64)
        t = np.zeros(0)
    order = np.argsort(t, kind="stable")
    o, d, t = o[order], d[order], t[order]
    feats = np.zeros((len(t), spec.feature_dim))
    if spec.feature_dim >= 1 and len(t):
        # travel distance between node coordinates, plus noise for the remaining columns
        feats[:, 0] = np.linalg.norm(coords[o] - coords[d], axis=1)
        if spec.feature_dim > 1:
            feats[:, 1:] = rng.normal(size=(len(t), spec.feature_dim - 1))
    return EventLog(o, d, t, feats, n, start_time=spec.start_time,
                    allow_self_loops=spec.allow_self_loops)
