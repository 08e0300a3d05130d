"""Native JSON formats: business objects, problems, tasks, and plan trees.

Object file layout::

    {"objects": [{"id", "name", "variables": [{"name", "domain", "initial"}],
                  "actions": [{"name", "pre": <formula>, "eff": [[<atom>...], ...]}]}]}

Formulas nest as ``{"and": [...]}``, ``{"or": [...]}``, ``{"not": ...}`` and
atoms ``{"var": ..., "val": ...}``.  Problem files carry ``goal`` (atoms over
qualified ``object.variable`` names), ``init_overrides`` (atoms, or
``{"var": ..., "unset": true}`` markers), and a ``scope``.

Schema violations raise :class:`SchemaError` with the JSON path of the
offending field.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from statusplan.model import (
    ACTION,
    Action,
    ActionTree,
    And,
    Atom,
    FAIL,
    Fact,
    Formula,
    ModelError,
    Not,
    Or,
    PlanningTask,
    STOP,
    Variable,
)

logger = logging.getLogger(__name__)

# Reserved domain value backing "unset" initial-condition markers: a variable
# initialized unset satisfies no precondition atom until an effect sets it.
UNSET_VALUE = "__unset__"

SCOPES = ("full", "bo_relevant")


class SchemaError(ValueError):
    """A malformed document, reported with the path of the bad field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# --------------------------------------------------------------------------
# business-object model


@dataclass(frozen=True)
class BoVariable:
    name: str
    domain: tuple[str, ...]
    initial: str


@dataclass(frozen=True)
class BoAction:
    """Effect is a DNF over the object's own atoms: a list of conjunctions,
    each becoming one outcome."""

    name: str
    precondition: Formula  # atoms are Fact(var_name, value_name) pairs
    effect: tuple[tuple[tuple[str, str], ...], ...]


@dataclass(frozen=True)
class BusinessObject:
    id: str
    name: str
    variables: tuple[BoVariable, ...]
    actions: tuple[BoAction, ...]

    def variable(self, name: str) -> BoVariable:
        for v in self.variables:
            if v.name == name:
                return v
        raise ModelError(f"object {self.id!r}: unknown variable {name!r}")


@dataclass(frozen=True)
class Override:
    """An initial-value override; ``value is None`` marks the variable unset."""

    var: str
    value: str | None = None

    @property
    def unset(self) -> bool:
        return self.value is None


@dataclass(frozen=True)
class ProblemBundle:
    objects: tuple[BusinessObject, ...]
    goal: tuple[tuple[str, str], ...]  # (qualified var name, value name)
    overrides: tuple[Override, ...] = ()
    scope: str = "full"
    instance_id: str | None = None


# --------------------------------------------------------------------------
# JSON schema helpers


def _expect(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise SchemaError(path, message)


def _get(obj: dict, key: str, path: str, kind=None, required: bool = True):
    if key not in obj:
        if required:
            raise SchemaError(path, f"missing field {key!r}")
        return None
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise SchemaError(f"{path}.{key}", f"expected {kind.__name__}")
    return value


def _reject_unknown(obj: dict, allowed: Iterable[str], path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}", "unknown field")


def _formula_from_json(data, path: str) -> Formula:
    _expect(isinstance(data, dict), path, "formula must be an object")
    if "var" in data:
        _reject_unknown(data, ("var", "val"), path)
        var = _get(data, "var", path, str)
        val = _get(data, "val", path, str)
        return Atom(Fact(var, val))
    if "not" in data:
        _reject_unknown(data, ("not",), path)
        return Not(_formula_from_json(data["not"], f"{path}.not"))
    for key, node in (("and", And), ("or", Or)):
        if key in data:
            _reject_unknown(data, (key,), path)
            items = data[key]
            _expect(isinstance(items, list), f"{path}.{key}", "expected list")
            return node(
                tuple(
                    _formula_from_json(c, f"{path}.{key}[{i}]")
                    for i, c in enumerate(items)
                )
            )
    raise SchemaError(path, "formula needs one of: var, not, and, or")


def _formula_to_json(phi: Formula, fact_name) -> dict:
    if isinstance(phi, Atom):
        var, val = fact_name(phi.fact)
        return {"var": var, "val": val}
    if isinstance(phi, Not):
        return {"not": _formula_to_json(phi.child, fact_name)}
    if isinstance(phi, And):
        return {"and": [_formula_to_json(c, fact_name) for c in phi.children]}
    if isinstance(phi, Or):
        return {"or": [_formula_to_json(c, fact_name) for c in phi.children]}
    raise ModelError(f"not a formula node: {phi!r}")


def _atom_from_json(data, path: str) -> tuple[str, str]:
    _expect(isinstance(data, dict), path, "atom must be an object")
    _reject_unknown(data, ("var", "val"), path)
    return (_get(data, "var", path, str), _get(data, "val", path, str))


# --------------------------------------------------------------------------
# object and problem files


def load_objects(data, path: str = "$") -> tuple[BusinessObject, ...]:
    _expect(isinstance(data, dict), path, "expected object")
    _reject_unknown(data, ("objects",), path)
    items = _get(data, "objects", path, list)
    objects = []
    seen_ids = set()
    for i, obj in enumerate(items):
        opath = f"{path}.objects[{i}]"
        _expect(isinstance(obj, dict), opath, "expected object")
        _reject_unknown(obj, ("id", "name", "variables", "actions"), opath)
        oid = _get(obj, "id", opath, str)
        _expect(oid not in seen_ids, opath, f"duplicate object id {oid!r}")
        seen_ids.add(oid)
        name = _get(obj, "name", opath, str, required=False) or oid
        variables = []
        var_names = set()
        for j, v in enumerate(_get(obj, "variables", opath, list)):
            vpath = f"{opath}.variables[{j}]"
            _expect(isinstance(v, dict), vpath, "expected object")
            _reject_unknown(v, ("name", "domain", "initial"), vpath)
            vname = _get(v, "name", vpath, str)
            _expect(vname not in var_names, vpath, f"duplicate variable {vname!r}")
            var_names.add(vname)
            domain = _get(v, "domain", vpath, list)
            _expect(
                bool(domain) and all(isinstance(d, str) for d in domain),
                f"{vpath}.domain",
                "expected nonempty list of strings",
            )
            _expect(
                UNSET_VALUE not in domain,
                f"{vpath}.domain",
                f"{UNSET_VALUE!r} is reserved",
            )
            initial = _get(v, "initial", vpath, str)
            variables.append(BoVariable(vname, tuple(domain), initial))
        actions = []
        for j, a in enumerate(_get(obj, "actions", opath, list)):
            apath = f"{opath}.actions[{j}]"
            _expect(isinstance(a, dict), apath, "expected object")
            _reject_unknown(a, ("name", "pre", "eff"), apath)
            aname = _get(a, "name", apath, str)
            pre = _formula_from_json(_get(a, "pre", apath), f"{apath}.pre")
            eff_json = _get(a, "eff", apath, list)
            _expect(bool(eff_json), f"{apath}.eff", "effect DNF must be nonempty")
            disjuncts = []
            for k, conj in enumerate(eff_json):
                cpath = f"{apath}.eff[{k}]"
                _expect(isinstance(conj, list), cpath, "expected list of atoms")
                disjuncts.append(
                    tuple(
                        _atom_from_json(at, f"{cpath}[{m}]")
                        for m, at in enumerate(conj)
                    )
                )
            actions.append(BoAction(aname, pre, tuple(disjuncts)))
        objects.append(
            BusinessObject(oid, name, tuple(variables), tuple(actions))
        )
    return tuple(objects)


def load_objects_file(path) -> tuple[BusinessObject, ...]:
    with open(path, encoding="utf-8") as fh:
        return load_objects(json.load(fh))


def load_problem(data, objects: Sequence[BusinessObject], path: str = "$") -> ProblemBundle:
    _expect(isinstance(data, dict), path, "expected object")
    _reject_unknown(data, ("goal", "init_overrides", "scope"), path)
    goal = tuple(
        _atom_from_json(a, f"{path}.goal[{i}]")
        for i, a in enumerate(_get(data, "goal", path, list))
    )
    overrides = []
    for i, o in enumerate(data.get("init_overrides", ())):
        opath = f"{path}.init_overrides[{i}]"
        _expect(isinstance(o, dict), opath, "expected object")
        if o.get("unset"):
            _reject_unknown(o, ("var", "unset"), opath)
            overrides.append(Override(_get(o, "var", opath, str)))
        else:
            overrides.append(Override(*_atom_from_json(o, opath)))
    scope = data.get("scope", "full")
    _expect(scope in SCOPES, f"{path}.scope", f"expected one of {SCOPES}")
    return ProblemBundle(tuple(objects), goal, tuple(overrides), scope)


def load_problem_file(path, objects: Sequence[BusinessObject]) -> ProblemBundle:
    with open(path, encoding="utf-8") as fh:
        return load_problem(json.load(fh), objects)


def rename_object(obj: BusinessObject, new_id: str) -> BusinessObject:
    """Clone an object under a fresh id (variables are object-qualified, so
    renaming the id is enough for independent copies)."""
    return BusinessObject(new_id, obj.name, obj.variables, obj.actions)


# --------------------------------------------------------------------------
# compilation into a planning task


def _qualified(obj_id: str, var_name: str) -> str:
    return f"{obj_id}.{var_name}"


def compile_bo(
    objects: Sequence[BusinessObject],
    goal: Iterable[tuple[str, str]],
    overrides: Iterable[Override] = (),
    scope: str = "full",
) -> PlanningTask:
    """Compile business objects plus a goal into a planning task.

    Variables are the union over all objects, qualified ``object.variable``;
    initial values are the declared ones overridden per ``overrides``.  Each
    object action becomes one task action whose outcomes are the effect-DNF
    disjuncts.  Under ``scope="bo_relevant"`` only actions of goal-mentioned
    objects are included.  Action names are qualified with the object id
    when more than one object is compiled.
    """
    if scope not in SCOPES:
        raise ModelError(f"unknown scope {scope!r}")
    goal = tuple(goal)
    overrides = tuple(overrides)

    unset_vars = {o.var for o in overrides if o.unset}
    override_values = {o.var: o.value for o in overrides if not o.unset}

    variables: list[Variable] = []
    owner_of: dict[str, str] = {}
    for obj in objects:
        for v in obj.variables:
            qname = _qualified(obj.id, v.name)
            if qname in owner_of:
                raise ModelError(f"variable name collision: {qname!r}")
            owner_of[qname] = obj.id
            # task-level Variable.initial is the effective initial value
            domain = v.domain
            initial = v.initial
            if qname in unset_vars:
                domain = domain + (UNSET_VALUE,)
                initial = UNSET_VALUE
            elif qname in override_values:
                initial = override_values[qname]
                if initial not in domain:
                    raise ModelError(
                        f"override for {qname!r}: unknown value {initial!r}"
                    )
            variables.append(Variable(qname, domain, initial, owner=obj.id))

    for o in overrides:
        if o.var not in owner_of:
            raise ModelError(f"override references unknown variable {o.var!r}")

    task_vars = tuple(variables)
    var_index = {v.name: i for i, v in enumerate(task_vars)}

    def intern_fact(qvar: str, val: str, where: str) -> Fact:
        vi = var_index.get(qvar)
        if vi is None:
            raise ModelError(f"{where}: unknown variable {qvar!r}")
        if val == UNSET_VALUE:
            raise ModelError(f"{where}: {UNSET_VALUE!r} is reserved")
        return Fact(vi, task_vars[vi].value_index(val))

    def intern_formula(phi: Formula, obj_id: str, where: str) -> Formula:
        if isinstance(phi, Atom):
            return Atom(intern_fact(_qualified(obj_id, phi.fact.var), phi.fact.value, where))
        if isinstance(phi, Not):
            return Not(intern_formula(phi.child, obj_id, where))
        if isinstance(phi, And):
            return And(tuple(intern_formula(c, obj_id, where) for c in phi.children))
        if isinstance(phi, Or):
            return Or(tuple(intern_formula(c, obj_id, where) for c in phi.children))
        raise ModelError(f"{where}: not a formula node: {phi!r}")

    goal_objects = set()
    goal_facts = []
    for qvar, val in goal:
        f = intern_fact(qvar, val, "goal")
        goal_facts.append(f)
        goal_objects.add(owner_of[qvar])

    qualify_actions = len(objects) > 1
    actions: list[Action] = []
    for obj in objects:
        if scope == "bo_relevant" and obj.id not in goal_objects:
            continue
        for a in obj.actions:
            where = f"action {a.name!r}"
            pre = intern_formula(a.precondition, obj.id, where)
            outcomes = []
            for conj in a.effect:
                facts = tuple(
                    sorted(
                        intern_fact(_qualified(obj.id, var), val, where)
                        for var, val in conj
                    )
                )
                vars_assigned = [f.var for f in facts]
                if len(set(vars_assigned)) != len(vars_assigned):
                    raise ModelError(
                        f"{where}: effect disjunct assigns a variable twice"
                    )
                if facts in outcomes:
                    logger.warning(
                        "action %r: duplicate effect disjunct dropped", a.name
                    )
                    continue
                outcomes.append(facts)
            name = f"{obj.id}.{a.name}" if qualify_actions else a.name
            actions.append(Action(name, pre, tuple(outcomes)))

    initial = tuple(v.domain.index(v.initial) for v in task_vars)
    return PlanningTask(task_vars, tuple(actions), initial, tuple(goal_facts))


def compile_bundle(bundle: ProblemBundle) -> PlanningTask:
    return compile_bo(bundle.objects, bundle.goal, bundle.overrides, bundle.scope)


# --------------------------------------------------------------------------
# task-level JSON


def task_to_json(task: PlanningTask) -> dict:
    def fact_name(f: Fact) -> tuple[str, str]:
        v = task.variables[f.var]
        return v.name, v.domain[f.value]

    def var_json(i: int, v: Variable) -> dict:
        data = {
            "name": v.name,
            "domain": list(v.domain),
            "initial": v.domain[task.initial[i]],
        }
        if v.owner is not None:
            data["owner"] = v.owner
        return data

    return {
        "variables": [var_json(i, v) for i, v in enumerate(task.variables)],
        "actions": [
            {
                "name": a.name,
                "pre": _formula_to_json(a.precondition, fact_name),
                "eff": [
                    [dict(zip(("var", "val"), fact_name(f))) for f in eff]
                    for eff in a.outcomes
                ],
            }
            for a in task.actions
        ],
        "goal": [dict(zip(("var", "val"), fact_name(f))) for f in task.goal],
    }


def task_from_json(data, path: str = "$") -> PlanningTask:
    _expect(isinstance(data, dict), path, "expected object")
    _reject_unknown(data, ("variables", "actions", "goal"), path)
    variables = []
    for i, v in enumerate(_get(data, "variables", path, list)):
        vpath = f"{path}.variables[{i}]"
        _expect(isinstance(v, dict), vpath, "expected object")
        _reject_unknown(v, ("name", "domain", "initial", "owner"), vpath)
        domain = _get(v, "domain", vpath, list)
        variables.append(
            Variable(
                _get(v, "name", vpath, str),
                tuple(domain),
                _get(v, "initial", vpath, str),
                owner=_get(v, "owner", vpath, str, required=False),
            )
        )
    task_vars = tuple(variables)
    var_index = {v.name: i for i, v in enumerate(task_vars)}

    def intern(atom: tuple[str, str], where: str) -> Fact:
        var, val = atom
        if var not in var_index:
            raise SchemaError(where, f"unknown variable {var!r}")
        vi = var_index[var]
        if val not in task_vars[vi].domain:
            raise SchemaError(where, f"unknown value {val!r} for {var!r}")
        return Fact(vi, task_vars[vi].domain.index(val))

    def intern_formula(phi: Formula, where: str) -> Formula:
        if isinstance(phi, Atom):
            return Atom(intern(phi.fact, where))
        if isinstance(phi, Not):
            return Not(intern_formula(phi.child, where))
        if isinstance(phi, And):
            return And(tuple(intern_formula(c, where) for c in phi.children))
        return Or(tuple(intern_formula(c, where) for c in phi.children))

    actions = []
    for i, a in enumerate(_get(data, "actions", path, list)):
        apath = f"{path}.actions[{i}]"
        _expect(isinstance(a, dict), apath, "expected object")
        _reject_unknown(a, ("name", "pre", "eff"), apath)
        pre = intern_formula(
            _formula_from_json(_get(a, "pre", apath), f"{apath}.pre"), f"{apath}.pre"
        )
        outcomes = []
        for k, conj in enumerate(_get(a, "eff", apath, list)):
            cpath = f"{apath}.eff[{k}]"
            _expect(isinstance(conj, list), cpath, "expected list of atoms")
            outcomes.append(
                tuple(
                    sorted(
                        intern(_atom_from_json(at, f"{cpath}[{m}]"), f"{cpath}[{m}]")
                        for m, at in enumerate(conj)
                    )
                )
            )
        actions.append(Action(_get(a, "name", apath, str), pre, tuple(outcomes)))

    goal = tuple(
        intern(_atom_from_json(g, f"{path}.goal[{i}]"), f"{path}.goal[{i}]")
        for i, g in enumerate(_get(data, "goal", path, list))
    )
    initial = tuple(v.domain.index(v.initial) for v in task_vars)
    return PlanningTask(task_vars, tuple(actions), initial, goal)


def write_task(task: PlanningTask, path) -> None:
    Path(path).write_text(json.dumps(task_to_json(task), indent=2), encoding="utf-8")


def read_task(path) -> PlanningTask:
    with open(path, encoding="utf-8") as fh:
        return task_from_json(json.load(fh))


def canonicalize_task(task: PlanningTask) -> PlanningTask:
    """Reorder variables and actions by name (and outcomes/goal canonically)
    so structurally equal tasks compare equal."""
    var_order = sorted(range(len(task.variables)), key=lambda i: task.variables[i].name)
    remap = {old: new for new, old in enumerate(var_order)}

    def map_fact(f: Fact) -> Fact:
        return Fact(remap[f.var], f.value)

    def map_formula(phi: Formula) -> Formula:
        if isinstance(phi, Atom):
            return Atom(map_fact(phi.fact))
        if isinstance(phi, Not):
            return Not(map_formula(phi.child))
        if isinstance(phi, And):
            return And(tuple(map_formula(c) for c in phi.children))
        return Or(tuple(map_formula(c) for c in phi.children))

    variables = tuple(task.variables[i] for i in var_order)
    actions = tuple(
        sorted(
            (
                Action(
                    a.name,
                    map_formula(a.precondition),
                    tuple(
                        sorted(tuple(sorted(map_fact(f) for f in eff)) for eff in a.outcomes)
                    ),
                )
                for a in task.actions
            ),
            key=lambda a: a.name,
        )
    )
    initial = tuple(task.initial[i] for i in var_order)
    goal = tuple(sorted(map_fact(f) for f in task.goal))
    return PlanningTask(variables, actions, initial, goal)


# --------------------------------------------------------------------------
# plan trees


def plan_to_json(task: PlanningTask, tree: ActionTree) -> dict:
    if tree.kind == STOP:
        return {"kind": "stop"}
    if tree.kind == FAIL:
        return {"kind": "fail"}
    return {
        "kind": "action",
        "action": task.actions[tree.action].name,
        "children": [plan_to_json(task, c) for c in tree.children],
    }


def plan_from_json(task: PlanningTask, data, path: str = "$") -> ActionTree:
    _expect(isinstance(data, dict), path, "expected object")
    kind = _get(data, "kind", path, str)
    if kind == "stop":
        _reject_unknown(data, ("kind",), path)
        return ActionTree.stop()
    if kind == "fail":
        _reject_unknown(data, ("kind",), path)
        return ActionTree.fail()
    _expect(kind == "action", f"{path}.kind", "expected action, stop, or fail")
    _reject_unknown(data, ("kind", "action", "children"), path)
    name = _get(data, "action", path, str)
    if name not in task.action_index:
        raise SchemaError(f"{path}.action", f"unknown action {name!r}")
    children = _get(data, "children", path, list)
    return ActionTree.act(
        task.action_index[name],
        [plan_from_json(task, c, f"{path}.children[{i}]") for i, c in enumerate(children)],
    )
