"""RSSI trace ingestion and the shipped synthetic walk traces.

Trace CSV schema: one sample per line, ``time_s,node_id,rssi_dbm``; lines
starting with ``#`` are comments.  Timestamps must be nondecreasing per node.
Between samples the last observation is carried forward.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .sim.scenario import derive_rng


class ParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyTrace(ValueError):
    pass


@dataclass(frozen=True)
class RssiTrace:
    samples: Tuple[Tuple[float, str, float], ...]
    by_node: Dict[str, Tuple[List[float], List[float]]]

    @property
    def duration(self) -> float:
        return max(t for t, _, _ in self.samples)

    @property
    def node_ids(self) -> Tuple[str, ...]:
        return tuple(sorted(self.by_node))

    def value_at(self, node_id: str, t: float) -> float:
        """RSSI at time t, last observation carried forward (first sample
        extends backwards)."""
        times, values = self.by_node[node_id]
        i = bisect.bisect_right(times, t) - 1
        return values[max(0, i)]


def _build(samples: Sequence[Tuple[float, str, float]]) -> RssiTrace:
    if not samples:
        raise EmptyTrace("trace contains no samples")
    by_node: Dict[str, Tuple[List[float], List[float]]] = {}
    for t, node, rssi in samples:
        times, values = by_node.setdefault(node, ([], []))
        times.append(t)
        values.append(rssi)
    return RssiTrace(samples=tuple(samples), by_node=by_node)


def loads_trace(text: str) -> RssiTrace:
    samples: List[Tuple[float, str, float]] = []
    last_t: Dict[str, float] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split(",")
        if len(parts) != 3:
            raise ParseError(line_no, f"expected time_s,node_id,rssi_dbm: {line!r}")
        try:
            t = float(parts[0])
            rssi = float(parts[2])
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
        node = parts[1].strip()
        if not node:
            raise ParseError(line_no, "empty node_id")
        if not math.isfinite(t) or not math.isfinite(rssi):
            raise ParseError(line_no, "non-finite sample")
        if node in last_t and t < last_t[node]:
            raise ParseError(line_no, f"timestamps decrease for node {node!r}")
        last_t[node] = t
        samples.append((t, node, rssi))
    return _build(samples)


def load_trace(path) -> RssiTrace:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_trace(fh.read())


def dumps_trace(trace: RssiTrace) -> str:
    lines = [f"{t!r},{node},{rssi!r}" for t, node, rssi in trace.samples]
    return "\n".join(lines) + "\n"


def save_trace(trace: RssiTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_trace(trace))


def synthetic_walk_trace(kind: str, seed: int = 0, duration: float = 120.0,
                         sample_period: float = 0.1) -> RssiTrace:
    """Two-user walking experiment stand-ins.

    'torso': strong link that improves as the users approach, with a deep
        body-shadowing dropout while they cross at mid-experiment.
    'pocket': weaker, noisier link that keeps working through the crossing.

    Path loss follows a log-distance law for two users starting 50 m apart,
    walking towards each other, crossing at mid-run and continuing for 10 m.
    """
    if kind not in ("torso", "pocket"):
        raise ValueError("kind must be 'torso' or 'pocket'")
    rng = derive_rng(seed, 0x77A1, 0 if kind == "torso" else 1)
    speed = 50.0 / (duration / 2)  # closing speed covers 50 m by mid-run
    cross_t = duration / 2
    samples = []
    t = 0.0
    while t <= duration:
        d = abs(cross_t - t) * speed + 0.5
        # log-distance path loss, exponent 2.2, 1 m reference at -40 dBm
        base = -40.0 - 22.0 * math.log10(d)
        if kind == "torso":
            rssi = base + rng.gauss(0.0, 1.5)
            if abs(t - cross_t) < 5.0:
                # bodies aligned: the torso link drops below sensitivity
                rssi = -106.0 + rng.gauss(0.0, 1.0)
        else:
            rssi = base - 12.0 + rng.gauss(0.0, 3.0)
        samples.append((round(t, 3), kind, round(rssi, 2)))
        t += sample_period
    return _build(samples)
