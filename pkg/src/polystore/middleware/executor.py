"""Executor: runs one plan, driving the migrator for every Migrate step."""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ..errors import PlanExecutionError, PolystoreError
from ..islands import cast_migrate, drop, execute_on, get_island, referenced_objects
from .plan import CombineRemainder, ExecuteContainer, Migrate, validate_plan

_RUN_IDS = itertools.count()


@dataclass
class ExecutionResult:
    value: object
    elapsed_ms: float
    step_ms: list = field(default_factory=list)


class _Run:
    """Mutable state of one plan execution."""

    def __init__(self, plan, containers, remainder, engines, catalog):
        self.plan = plan
        self.containers = {c.id: c for c in containers}
        self.nodes = {n.id: n for n in remainder.nodes()}
        self.engines = engines
        self.catalog = catalog
        self.prefix = f"_p{next(_RUN_IDS)}"
        self.values = {}   # container/node id -> in-memory result
        self.placed = {}   # (object, engine, model) -> name inside that engine
        self.temps = []    # (engine, name) to drop afterwards
        self.step_ms = [0.0] * len(plan.steps)

    def bindings(self, objects, engine, model):
        out = {}
        for obj in objects:
            name = self.placed.get((obj, engine, model))
            if name is not None:
                out[obj] = name
        return out

    def run_step(self, k):
        step = self.plan.steps[k]
        t0 = time.perf_counter()
        try:
            if isinstance(step, Migrate):
                self._migrate(step)
            elif isinstance(step, ExecuteContainer):
                c = self.containers[step.container]
                model = get_island(c.island).model
                self.values[c.id] = execute_on(c.island, step.engine, c.text, self.engines,
                                               self.bindings(c.objects, step.engine, model))
            else:
                n = self.nodes[step.node]
                model = get_island(n.island).model
                refs = ["$" + r for r in n.inputs]
                objs = refs + referenced_objects(n.local_text, n.island)
                self.values[n.id] = execute_on(n.island, step.host, n.local_text, self.engines,
                                               self.bindings(objs, step.host, model))
        except PolystoreError as exc:
            raise PlanExecutionError(f"{step.describe()}: {exc}",
                                     plan_id=self.plan.plan_id, step=k) from exc
        finally:
            self.step_ms[k] = (time.perf_counter() - t0) * 1000.0

    def _migrate(self, step):
        spec = step.spec
        safe = step.obj.lstrip("$")
        suffix = "_cells" if spec.target_model == "array" and step.target == "relational" else ""
        target = f"{self.prefix}_{safe}{suffix}"
        if step.obj.startswith("$"):
            source = self.values[step.obj[1:]]
        else:
            home = self.catalog.get(step.obj, (step.source, spec.source_model))
            source = self.placed.get((step.obj, step.source, spec.source_model))
            if source is None:
                if home != (step.source, spec.source_model):
                    raise PolystoreError(f"{step.obj} is not resident on {step.source}")
                source = step.obj
        self.temps.append((step.target, target))
        cast_migrate(source, step.source, step.target, spec, self.engines, target=target)
        self.placed[(step.obj, step.target, spec.target_model)] = target

    def cleanup(self):
        for engine, name in self.temps:
            drop(self.engines, engine, name)


def _container_groups(plan):
    """Split steps into per-container groups plus a sequential tail.

    A group is the migrations of one container followed by its execute
    step. The tail starts at the first step that consumes a container result.
    """
    groups, current = [], []
    for k, step in enumerate(plan.steps):
        current.append(k)
        if isinstance(step, ExecuteContainer):
            groups.append(current)
            current = []
        elif isinstance(step, CombineRemainder) or step.obj.startswith("$"):
            return groups, current + list(range(k + 1, len(plan.steps)))
    return groups, current


def execute_plan(plan, containers, remainder, engines, catalog, workers=1, validate=True):
    """Run ``plan`` and return its value with wall time for every step.

    With ``workers > 1`` independent containers run concurrently; the
    engines only ever see concurrent reads plus creation of distinct temps.
    """
    if validate:
        validate_plan(plan, containers, remainder, catalog)
    run = _Run(plan, containers, remainder, engines, catalog)
    t0 = time.perf_counter()
    try:
        groups, tail = _container_groups(plan)
        if workers > 1 and len(groups) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(lambda g=g: [run.run_step(k) for k in g]) for g in groups]
                for f in futures:
                    f.result()
        else:
            for g in groups:
                for k in g:
                    run.run_step(k)
        for k in tail:
            run.run_step(k)
        final = remainder.root.ref if remainder.trivial else remainder.root.id
        value = run.values[final]
    finally:
        run.cleanup()
    elapsed = (time.perf_counter() - t0) * 1000.0
    return ExecutionResult(value, elapsed, run.step_ms)
