"""Query plans and the planner.

A plan is a flat list of steps. Containers come first, each preceded by
the migrations that bring its base objects onto the chosen engine. Each
remainder node then pulls its inputs onto its host engine and combines them.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import warnings
from dataclasses import dataclass

from ..casts import CastSpec
from ..errors import NoViableEngine, PlanError, Untranslatable
from ..islands import ENGINE_MODELS, check_translatable, get_island, parse_island_text, referenced_objects

PLAN_VERSION = 1
MAX_PLANS = 64


@dataclass(frozen=True)
class Migrate:
    obj: str       # base object name, or "$c0" / "$r1" for an intermediate result
    source: str
    target: str
    spec: CastSpec

    def to_json(self):
        return {"step": "migrate", "obj": self.obj, "from": self.source, "to": self.target,
                "cast": self.spec.to_json()}

    def describe(self):
        return (f"migrate {self.obj} {self.source}->{self.target} "
                f"({self.spec.source_model}->{self.spec.target_model})")


@dataclass(frozen=True)
class ExecuteContainer:
    container: str
    engine: str

    def to_json(self):
        return {"step": "execute", "container": self.container, "engine": self.engine}

    def describe(self):
        return f"execute {self.container} on {self.engine}"


@dataclass(frozen=True)
class CombineRemainder:
    node: str
    host: str

    def to_json(self):
        return {"step": "combine", "node": self.node, "host": self.host}

    def describe(self):
        return f"combine {self.node} on {self.host}"


def step_from_json(d):
    kind = d["step"]
    if kind == "migrate":
        return Migrate(d["obj"], d["from"], d["to"], CastSpec.from_json(d["cast"]))
    if kind == "execute":
        return ExecuteContainer(d["container"], d["engine"])
    if kind == "combine":
        return CombineRemainder(d["node"], d["host"])
    raise PlanError(f"unknown plan step {kind!r}")


@dataclass(frozen=True)
class QueryPlan:
    steps: tuple

    @property
    def plan_id(self):
        blob = json.dumps([s.to_json() for s in self.steps], sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]

    def to_json(self):
        return {"v": PLAN_VERSION, "plan_id": self.plan_id,
                "steps": [s.to_json() for s in self.steps]}

    @classmethod
    def from_json(cls, d):
        if d.get("v") != PLAN_VERSION:
            raise PlanError(f"unsupported plan version {d.get('v')!r}")
        return cls(tuple(step_from_json(s) for s in d["steps"]))

    def engines(self):
        """Engine chosen for each container and remainder node."""
        out = {}
        for s in self.steps:
            if isinstance(s, ExecuteContainer):
                out[s.container] = s.engine
            elif isinstance(s, CombineRemainder):
                out[s.node] = s.host
        return out

    def describe(self):
        return "; ".join(s.describe() for s in self.steps)


def result_model(island, text):
    """Data model of the value an island query produces (``scalar`` for counts)."""
    isl = get_island(island) if isinstance(island, str) else island
    node = parse_island_text(isl.language, text)
    if isl.language == "sql":
        return "relational"
    if isl.language == "afl":
        # A bare array name parses to a Ref, which has no operator.
        return "scalar" if getattr(node, "op", None) == "count" else "array"
    return "relational" if node.op == "termcount" else "document"


def _viable(island, text):
    ok = []
    reasons = []
    for engine in island.engines:
        try:
            check_translatable(island, engine, text)
        except Untranslatable as exc:
            reasons.append(f"{engine}: {exc}")
            continue
        ok.append(engine)
    return ok, reasons


def plan_enumerate(containers, remainder, catalog, limit=MAX_PLANS):
    """All plans for a decomposed query, in deterministic order.

    ``catalog`` maps every base object to ``(engine, model)``. Candidate
    engines come from each island after shim pruning; the plan space is the
    product over containers and remainder nodes.
    """
    nodes = remainder.nodes()
    choices = []
    for c in containers:
        island = get_island(c.island)
        ok, reasons = _viable(island, c.text)
        if not ok:
            raise NoViableEngine(f"no engine can run container {c.id} ({c.island}): "
                                 + "; ".join(reasons))
        choices.append(ok)
    for n in nodes:
        island = get_island(n.island)
        ok, reasons = _viable(island, n.local_text)
        if not ok:
            raise NoViableEngine(f"no engine can host the {n.island} remainder: "
                                 + "; ".join(reasons))
        choices.append(ok)

    models = {c.id: result_model(c.island, c.text) for c in containers}
    for n in nodes:
        models[n.id] = result_model(n.island, n.local_text)
        for ref in n.inputs:
            if models[ref] == "scalar":
                raise PlanError(f"${ref} is a scalar and cannot feed the {n.island} scope")

    # Degenerate islands pass native text through (CREATE TABLE names new
    # objects), so only non-degenerate scopes need every object catalogued.
    for c in containers:
        if not get_island(c.island).degenerate:
            _check_known(c.objects, catalog)
    for n in nodes:
        _check_known(referenced_objects(n.local_text, n.island), catalog)

    plans = []
    for combo in itertools.product(*choices):
        plans.append(_build(containers, nodes, combo, catalog, models))
        if len(plans) > limit:
            break
    if len(plans) > limit:
        warnings.warn(f"plan space truncated to the first {limit} plans", RuntimeWarning,
                      stacklevel=2)
        plans = plans[:limit]
    return plans


def _check_known(objects, catalog):
    for obj in objects:
        if obj not in catalog:
            raise PlanError(f"unknown object {obj!r}")


def _build(containers, nodes, combo, catalog, models):
    steps = []
    where = {}  # (object, engine, model) already placed by an earlier step

    def bring(obj, engine, model, source, source_model):
        if (obj, engine, model) in where:
            return
        # Intermediate results always get a step so the host can bind them by name.
        if not obj.startswith("$") and (source, source_model) == (engine, model):
            return
        if model not in ENGINE_MODELS[engine]:
            raise PlanError(f"engine {engine} cannot hold {model} data")
        steps.append(Migrate(obj, source, engine, CastSpec(source_model, model)))
        where[(obj, engine, model)] = True

    for c, engine in zip(containers, combo):
        # Each container migrates its own inputs so containers stay independent.
        where.clear()
        model = get_island(c.island).model
        for obj in c.objects:
            home, home_model = catalog.get(obj, (engine, model))
            bring(obj, engine, model, home, home_model)
        steps.append(ExecuteContainer(c.id, engine))

    where.clear()
    placed = {c.id: e for c, e in zip(containers, combo)}
    for n, host in zip(nodes, combo[len(containers):]):
        model = get_island(n.island).model
        for ref in n.inputs:
            bring("$" + ref, host, model, placed[ref], models[ref])
        for obj in referenced_objects(n.local_text, n.island):
            home, home_model = catalog[obj]
            bring(obj, host, model, home, home_model)
        steps.append(CombineRemainder(n.id, host))
        placed[n.id] = host
    return QueryPlan(tuple(steps))


def validate_plan(plan, containers, remainder, catalog):
    """Check step ordering: every input is produced and placed before it is used."""
    by_id = {c.id: c for c in containers}
    nodes = {n.id: n for n in remainder.nodes()}
    produced = {}  # ref -> engine
    available = {(obj, eng, model) for obj, (eng, model) in catalog.items()}
    for k, step in enumerate(plan.steps):
        if isinstance(step, Migrate):
            if step.obj.startswith("$"):
                ref = step.obj[1:]
                if produced.get(ref) != step.source:
                    raise PlanError(f"step {k}: {step.obj} is migrated before it is produced "
                                    f"on {step.source}")
            elif (step.obj, step.source, step.spec.source_model) not in available:
                raise PlanError(f"step {k}: {step.obj} is not resident on {step.source}")
            if step.spec.target_model not in ENGINE_MODELS.get(step.target, ()):
                raise PlanError(f"step {k}: {step.target} cannot hold {step.spec.target_model}")
            available.add((step.obj, step.target, step.spec.target_model))
        elif isinstance(step, ExecuteContainer):
            c = by_id.get(step.container)
            if c is None:
                raise PlanError(f"step {k}: unknown container {step.container}")
            model = get_island(c.island).model
            for obj in c.objects:
                if obj in catalog and (obj, step.engine, model) not in available:
                    raise PlanError(f"step {k}: {obj} is not available on {step.engine}")
            produced[c.id] = step.engine
        elif isinstance(step, CombineRemainder):
            n = nodes.get(step.node)
            if n is None:
                raise PlanError(f"step {k}: unknown remainder node {step.node}")
            model = get_island(n.island).model
            for ref in n.inputs:
                if ("$" + ref, step.host, model) not in available:
                    raise PlanError(f"step {k}: combine of {n.id} needs ${ref} on {step.host} "
                                    f"before it runs")
            for obj in referenced_objects(n.local_text, n.island):
                if (obj, step.host, model) not in available:
                    raise PlanError(f"step {k}: {obj} is not available on {step.host}")
            produced[n.id] = step.host
        else:
            raise PlanError(f"step {k}: unknown step type {type(step).__name__}")
    final = remainder.root.ref if remainder.trivial else remainder.root.id
    if final not in produced:
        raise PlanError("plan never produces the query result")
    return True
