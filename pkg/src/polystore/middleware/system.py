"""The polystore facade: catalog, training and production phases, idle queue."""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..array.engine import DenseArray, make_array
from ..canonical import results_equivalent
from ..errors import CatalogError, PlanDivergenceError, PlanError, PolystoreError
from ..islands import ARRAY_ENGINE, KV_ENGINE, RELATIONAL_ENGINE, Engines
from ..polyparser import PolyAst, decompose, poly_parse
from ..relational.relation import Relation, check_identifier
from .executor import ExecutionResult, execute_plan
from .monitor import (DEFAULT_STALE_THRESHOLD, MonitorRecord, MonitorStore, UsageTracker,
                      monitor_lookup)
from .plan import QueryPlan, plan_enumerate
from .signature import Signature, signature_of

ON_MISS = ("random", "train")


@dataclass
class Prepared:
    text: str
    ast: PolyAst
    containers: list
    remainder: object
    signature: Signature
    plans: list

    def plan(self, plan_id):
        for p in self.plans:
            if p.plan_id == plan_id:
                return p
        return None


@dataclass
class PlanTiming:
    plan_id: str
    steps: list
    elapsed_ms: float
    step_ms: list

    def to_json(self):
        return {"plan_id": self.plan_id, "steps": self.steps, "elapsed_ms": self.elapsed_ms,
                "step_ms": self.step_ms}


@dataclass
class QueryReport:
    phase: str
    signature: Signature
    chosen: str
    plans: list = field(default_factory=list)  # PlanTiming, one per executed plan
    plan_count: int = 1
    monitor_hit: bool = False
    stale: bool = False
    divergence: float | None = None
    queued: int = 0
    notes: list = field(default_factory=list)

    @property
    def retrain_recommended(self):
        return self.stale

    def to_json(self):
        return {"phase": self.phase, "signature": self.signature.to_json(), "chosen": self.chosen,
                "plan_count": self.plan_count, "monitor_hit": self.monitor_hit,
                "stale": self.stale, "divergence": self.divergence, "queued": self.queued,
                "retrain_recommended": self.retrain_recommended, "notes": list(self.notes),
                "plans": [p.to_json() for p in self.plans]}


@dataclass
class QueryOutcome:
    value: object
    report: QueryReport


@dataclass
class IdleReport:
    executed: int = 0
    failed: int = 0
    remaining: int = 0
    errors: list = field(default_factory=list)


class BackgroundQueue:
    """Plans waiting for an idle moment. Persisted as JSON when a path is set."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.items = []
        if self.path is not None and self.path.exists():
            text = self.path.read_text(encoding="utf-8").strip()
            self.items = json.loads(text) if text else []

    def __len__(self):
        return len(self.items)

    def _save(self):
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(json.dumps(self.items, indent=1), encoding="utf-8")

    def extend(self, items):
        self.items.extend(items)
        self._save()

    def pop(self):
        item = self.items.pop(0)
        self._save()
        return item


class Polystore:
    """Three engines behind the island layer, plus planner, monitor and executor.

    ``monitor_store`` is a path (JSON lines, persisted) or ``None`` (memory
    only). The production-miss background queue lives next to it in
    ``<monitor_store>.queue``.
    """

    def __init__(self, monitor_store=None, seed=None, on_miss="random",
                 stale_threshold=DEFAULT_STALE_THRESHOLD, workers=1):
        if on_miss not in ON_MISS:
            raise ValueError(f"on_miss must be one of {ON_MISS}")
        if stale_threshold < 0:
            raise ValueError("stale_threshold must be non-negative")
        self.engines = Engines()
        self.catalog: dict[str, tuple] = {}
        if isinstance(monitor_store, MonitorStore):
            self.monitor = monitor_store
        else:
            self.monitor = MonitorStore(monitor_store)
        qpath = None if self.monitor.path is None else Path(str(self.monitor.path) + ".queue")
        self.queue = BackgroundQueue(qpath)
        self.rng = random.Random(seed)
        self.on_miss = on_miss
        self.stale_threshold = stale_threshold
        self.workers = workers
        self.usage = UsageTracker()
        self._admission = threading.RLock()

    # ------------------------------------------------------------ catalog

    def register(self, name, engine, model):
        check_identifier(name, "object name")
        current = self.catalog.get(name)
        if current is not None and current != (engine, model):
            raise CatalogError(f"object {name!r} already lives in the {current[0]} engine")
        self.catalog[name] = (engine, model)

    def _claim(self, name):
        if name in self.catalog:
            raise CatalogError(f"object {name!r} already exists")

    def load_csv(self, name, source) -> int:
        if name not in self.engines.relational:
            self._claim(name)
        n = self.engines.relational.load_csv(name, source)
        self.register(name, RELATIONAL_ENGINE, "relational")
        return n

    def add_relation(self, relation: Relation):
        self._claim(relation.name)
        self.engines.relational.store(relation)
        self.register(relation.name, RELATIONAL_ENGINE, "relational")

    def load_array(self, name, source) -> DenseArray:
        self._claim(name)
        arr = self.engines.array.load_file(name, source)
        self.register(name, ARRAY_ENGINE, "array")
        return arr

    def add_array(self, name, dims, values) -> DenseArray:
        self._claim(name)
        arr = self.engines.array.put(make_array(name, dims, values))
        self.register(name, ARRAY_ENGINE, "array")
        return arr

    def load_jsonl(self, name, source) -> int:
        if name not in self.engines.keyvalue:
            self._claim(name)
        n = self.engines.keyvalue.load_jsonl(name, source)
        self.register(name, KV_ENGINE, "document")
        return n

    def add_documents(self, name, docs):
        self._claim(name)
        for key, fields in docs:
            self.engines.keyvalue.put(name, key, fields)
        self.engines.keyvalue.create_store(name, exist_ok=True)
        self.register(name, KV_ENGINE, "document")

    def _sync_catalog(self):
        """Pick up objects created or dropped by native (degenerate-island) statements."""
        live = {RELATIONAL_ENGINE: set(self.engines.relational.names()),
                ARRAY_ENGINE: set(self.engines.array.names()),
                KV_ENGINE: set(self.engines.keyvalue.names())}
        for name, (engine, _) in list(self.catalog.items()):
            if name not in live[engine]:
                del self.catalog[name]
        models = {RELATIONAL_ENGINE: "relational", ARRAY_ENGINE: "array", KV_ENGINE: "document"}
        for engine, names in live.items():
            for name in names:
                if not name.startswith("_") and name not in self.catalog:
                    self.catalog[name] = (engine, models[engine])

    # ------------------------------------------------------------ planning

    def prepare(self, text) -> Prepared:
        ast = poly_parse(text)
        containers, remainder = decompose(ast)
        sig = signature_of(containers, remainder)
        plans = plan_enumerate(containers, remainder, self.catalog)
        return Prepared(text, ast, containers, remainder, sig, plans)

    def _execute(self, prep: Prepared, plan: QueryPlan):
        usage = self.usage.snapshot(self.engines)
        self.usage.begin()
        elapsed = 0.0
        try:
            res = execute_plan(plan, prep.containers, prep.remainder, self.engines, self.catalog,
                               workers=self.workers)
            elapsed = res.elapsed_ms
        finally:
            self.usage.end(elapsed)
        if any(c.island.startswith("D_") for c in prep.containers):
            self._sync_catalog()
        return res, usage

    def _record(self, prep, plan, res: ExecutionResult, usage, phase, source="user"):
        self.monitor.append(MonitorRecord(prep.signature, plan.plan_id, plan.to_json(),
                                          res.elapsed_ms, list(res.step_ms), usage, phase,
                                          time.time(), prep.text, source))

    @staticmethod
    def _timing(plan, res):
        return PlanTiming(plan.plan_id, [s.describe() for s in plan.steps], res.elapsed_ms,
                          list(res.step_ms))

    # ------------------------------------------------------------ phases

    def query(self, text, training=None) -> QueryOutcome:
        """Route to training or production; ``training=None`` follows the query's prefix."""
        if training is None:
            training = poly_parse(text).training
        return self.run_training(text) if training else self.run_production(text)

    def run_training(self, text) -> QueryOutcome:
        """Run every plan, insist they agree, record each, return the fastest plan's result."""
        prep = self.prepare(text)
        with self._admission:
            return self._train(prep)

    def _train(self, prep):
        runs = []
        for plan in prep.plans:
            res, usage = self._execute(prep, plan)
            runs.append((plan, res, usage))
        first_plan, first, _ = runs[0]
        for plan, res, _ in runs[1:]:
            if not results_equivalent(first.value, res.value):
                raise PlanDivergenceError(first_plan.plan_id, plan.plan_id)
        for plan, res, usage in runs:
            self._record(prep, plan, res, usage, "training")
        best_plan, best, _ = min(runs, key=lambda r: r[1].elapsed_ms)
        report = QueryReport("training", prep.signature, best_plan.plan_id,
                             [self._timing(p, r) for p, r, _ in runs], len(prep.plans))
        return QueryOutcome(best.value, report)

    def run_production(self, text) -> QueryOutcome:
        prep = self.prepare(text)
        with self._admission:
            now = self.usage.snapshot(self.engines)
            hit = monitor_lookup(self.monitor, prep.signature, now, self.stale_threshold)
            plan = prep.plan(hit.plan_id) if hit is not None else None
            notes = []
            if hit is not None and plan is None:
                notes.append(f"monitor suggested plan {hit.plan_id}, which is no longer viable")
            if plan is None:
                if self.on_miss == "train":
                    out = self._train(prep)
                    out.report.notes.insert(0, "monitor miss: ran the training phase")
                    return out
                plan = self.rng.choice(prep.plans)
                rest = [p for p in prep.plans if p.plan_id != plan.plan_id]
                notes.append(f"monitor miss: picked plan {plan.plan_id} at random, "
                             f"{len(rest)} queued for idle time")
            res, usage = self._execute(prep, plan)
            if hit is None or prep.plan(hit.plan_id) is None:
                # Queue the alternatives only once the query itself has succeeded.
                self.queue.extend({"query": prep.text, "plan_id": p.plan_id,
                                   "signature": prep.signature.to_json()} for p in rest)
            self._record(prep, plan, res, usage, "production")
            report = QueryReport("production", prep.signature, plan.plan_id,
                                 [self._timing(plan, res)], len(prep.plans),
                                 monitor_hit=hit is not None and prep.plan(hit.plan_id) is not None,
                                 notes=notes)
            if hit is not None and report.monitor_hit:
                report.divergence = hit.divergence
                report.stale = hit.stale
                if hit.stale:
                    report.notes.append(f"usage divergence {hit.divergence:.2f} exceeds "
                                        f"{self.stale_threshold}: retraining recommended")
            else:
                report.queued = len(prep.plans) - 1
            return QueryOutcome(res.value, report)

    def run_idle(self, budget=None) -> IdleReport:
        """Execute queued plans (at most ``budget``) and add them to the monitor store."""
        out = IdleReport()
        with self._admission:
            while len(self.queue) and (budget is None or out.executed + out.failed < budget):
                item = self.queue.pop()
                try:
                    prep = self.prepare(item["query"])
                    plan = prep.plan(item["plan_id"])
                    if plan is None:
                        raise PlanError(f"plan {item['plan_id']} is no longer viable")
                    res, usage = self._execute(prep, plan)
                    self._record(prep, plan, res, usage, "production", source="idle")
                    out.executed += 1
                except PolystoreError as exc:
                    out.failed += 1
                    out.errors.append(f"{item['plan_id']}: {exc}")
            out.remaining = len(self.queue)
        return out
