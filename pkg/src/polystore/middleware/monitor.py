"""Monitor: usage snapshots, the append-only record store and plan lookup."""

from __future__ import annotations

import json
import math
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .signature import Signature

RECORD_VERSION = 1
LATENCY_WINDOW = 16
DEFAULT_STALE_THRESHOLD = 0.5


@dataclass(frozen=True)
class UsageSnapshot:
    active_queries: int = 0
    resident_bytes: tuple = ()  # ((engine, bytes), ...) sorted by engine
    avg_latency_ms: float = 0.0

    def to_json(self):
        return {"active_queries": self.active_queries,
                "resident_bytes": dict(self.resident_bytes),
                "avg_latency_ms": self.avg_latency_ms}

    @classmethod
    def from_json(cls, d):
        return cls(int(d["active_queries"]), tuple(sorted(d["resident_bytes"].items())),
                   float(d["avg_latency_ms"]))


class UsageTracker:
    """Live counters behind :class:`UsageSnapshot`."""

    def __init__(self, window=LATENCY_WINDOW):
        self._lock = threading.Lock()
        self._active = 0
        self._latencies = deque(maxlen=window)

    def begin(self):
        with self._lock:
            self._active += 1

    def end(self, elapsed_ms):
        with self._lock:
            self._active -= 1
            self._latencies.append(elapsed_ms)

    def snapshot(self, engines) -> UsageSnapshot:
        with self._lock:
            lat = sum(self._latencies) / len(self._latencies) if self._latencies else 0.0
            active = self._active
        return UsageSnapshot(active, tuple(sorted(engines.resident_bytes().items())), lat)


def _field_diff(x, y):
    if x == y:
        return 0.0
    lo = min(abs(x), abs(y))
    if lo == 0:
        return 1.0
    return min(1.0, abs(x - y) / lo)


def usage_divergence(a: UsageSnapshot, b: UsageSnapshot) -> float:
    """Mean relative difference over the three usage fields, each capped at 1.

    Resident bytes contribute the mean difference over engines (an engine
    missing on one side counts as zero bytes).
    """
    ra, rb = dict(a.resident_bytes), dict(b.resident_bytes)
    engines = sorted(set(ra) | set(rb))
    mem = (sum(_field_diff(ra.get(e, 0), rb.get(e, 0)) for e in engines) / len(engines)
           if engines else 0.0)
    return (_field_diff(a.active_queries, b.active_queries) + mem
            + _field_diff(a.avg_latency_ms, b.avg_latency_ms)) / 3.0


@dataclass
class MonitorRecord:
    signature: Signature
    plan_id: str
    plan: dict
    elapsed_ms: float
    step_ms: list
    usage: UsageSnapshot
    phase: str  # training | production
    timestamp: float = field(default_factory=time.time)
    query: str = ""
    source: str = "user"  # user | idle
    ok: bool = True
    error: str | None = None

    def to_json(self):
        d = {"v": RECORD_VERSION, "signature": self.signature.to_json(), "plan_id": self.plan_id,
             "plan": self.plan, "elapsed_ms": self.elapsed_ms, "step_ms": list(self.step_ms),
             "usage": self.usage.to_json(), "phase": self.phase, "timestamp": self.timestamp,
             "query": self.query, "source": self.source, "ok": self.ok}
        if self.error is not None:
            d["error"] = self.error
        return d

    @classmethod
    def from_json(cls, d):
        if d.get("v") != RECORD_VERSION:
            raise ValueError(f"unsupported monitor record version {d.get('v')!r}")
        return cls(Signature.from_json(d["signature"]), d["plan_id"], d["plan"],
                   float(d["elapsed_ms"]), list(d["step_ms"]), UsageSnapshot.from_json(d["usage"]),
                   d["phase"], float(d["timestamp"]), d.get("query", ""), d.get("source", "user"),
                   bool(d.get("ok", True)), d.get("error"))


class MonitorStore:
    """Append-only JSON-lines file; ``path=None`` keeps records in memory only."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._records: list[MonitorRecord] = []
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if line.strip():
                        try:
                            self._records.append(MonitorRecord.from_json(json.loads(line)))
                        except (ValueError, KeyError, TypeError) as exc:
                            raise ValueError(f"{self.path}:{lineno}: bad monitor record: {exc}") from None

    def __len__(self):
        return len(self._records)

    def records(self):
        return list(self._records)

    def append(self, record: MonitorRecord):
        with self._lock:
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
            self._records.append(record)


# ---------------------------------------------------------------- lookup

def _constant_distance(a, b):
    total = 0.0
    for (ta, va), (tb, vb) in zip(a, b):
        if ta == "text" or tb == "text":
            total += 0.0 if (ta, va) == (tb, vb) else 1.0
            continue
        x, y = float(va), float(vb)
        denom = abs(x) + abs(y)
        total += 0.0 if denom == 0 else abs(x - y) / denom
    return total / len(a) if a else 0.0


@dataclass
class LookupResult:
    plan_id: str
    plan: dict
    record: MonitorRecord
    distance: float
    divergence: float
    stale: bool


def monitor_lookup(store, sig: Signature, now: UsageSnapshot | None = None,
                   threshold=DEFAULT_STALE_THRESHOLD):
    """Best known plan for ``sig``, or ``None`` when nothing comparable was recorded.

    Candidates share the structure hash and object set. The nearest constant
    vector wins (ties go to the most recent record); within it the record
    with the smallest elapsed time names the plan.
    """
    records = store.records() if hasattr(store, "records") else list(store)
    same = [(k, r) for k, r in enumerate(records)
            if r.ok and r.signature.structure == sig.structure
            and tuple(r.signature.objects) == tuple(sig.objects)
            and len(r.signature.constants) == len(sig.constants)]
    if not same:
        return None
    scored = [(_constant_distance(sig.constants, r.signature.constants), -k, r) for k, r in same]
    best_dist, _, nearest = min(scored, key=lambda t: (t[0], t[1]))
    group = [r for d, _, r in scored
             if math.isclose(d, best_dist, abs_tol=1e-15)
             and r.signature.constants == nearest.signature.constants]
    fastest = min(group, key=lambda r: r.elapsed_ms)
    div = usage_divergence(now, fastest.usage) if now is not None else 0.0
    return LookupResult(fastest.plan_id, fastest.plan, fastest, best_dist, div, div > threshold)
