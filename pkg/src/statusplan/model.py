"""Core domain types and state algebra for finite-domain planning tasks.

A task consists of finite-domain status variables, actions with formula
preconditions and one or more outcomes (partial assignments), an initial
state, and a conjunctive goal.  States are fixed-width tuples of value
indices (one slot per variable) so they hash and compare cheaply; variable
and value names are interned once per task.  The set of still-available
nondeterministic actions is tracked as a bitmask over the task's
nondeterministic-action index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence, Union

State = tuple  # value index per variable, one slot per task variable


class ModelError(ValueError):
    """Raised for structurally invalid model input."""


class DnfLimitError(ModelError):
    """Raised when a DNF expansion exceeds the configured conjunct limit."""

    def __init__(self, size: int, limit: int):
        super().__init__(f"DNF expansion exceeds limit: {size} > {limit} conjuncts")
        self.size = size
        self.limit = limit


class Fact(NamedTuple):
    """A statement ``variable = value``.

    At task level both fields are integer indices (variable position and
    value position within its domain).  Before interning, business-object
    loaders use the same shape with string names.
    """

    var: int
    value: int


# --------------------------------------------------------------------------
# formulas


@dataclass(frozen=True)
class Atom:
    fact: Fact


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]


Formula = Union[Atom, Not, And, Or]

TRUE = And(())
FALSE = Or(())


def formula_atoms(phi: Formula) -> Iterable[Fact]:
    """Yield every atom occurring in the formula."""
    stack = [phi]
    while stack:
        node = stack.pop()
        if isinstance(node, Atom):
            yield node.fact
        elif isinstance(node, Not):
            stack.append(node.child)
        else:
            stack.extend(node.children)


# --------------------------------------------------------------------------
# variables, actions, tasks


@dataclass(frozen=True)
class Variable:
    """A finite-domain status variable.

    Names are unique within a task and act as identifiers.  ``initial``
    is the declared default value; a task's effective initial state may
    override it.
    """

    name: str
    domain: tuple[str, ...]
    initial: str
    owner: str | None = None

    def __post_init__(self):
        if not self.domain:
            raise ModelError(f"variable {self.name!r}: empty domain")
        if len(set(self.domain)) != len(self.domain):
            raise ModelError(f"variable {self.name!r}: duplicate domain values")
        if self.initial not in self.domain:
            raise ModelError(
                f"variable {self.name!r}: initial value {self.initial!r} not in domain"
            )

    def value_index(self, value: str) -> int:
        try:
            return self.domain.index(value)
        except ValueError:
            raise ModelError(
                f"variable {self.name!r}: unknown value {value!r}"
            ) from None


@dataclass(frozen=True)
class Action:
    """An action with a formula precondition and one outcome per effect
    alternative.  Actions with a single outcome are deterministic."""

    name: str
    precondition: Formula
    outcomes: tuple[tuple[Fact, ...], ...]

    def __post_init__(self):
        if not self.outcomes:
            raise ModelError(f"action {self.name!r}: no outcomes")
        for eff in self.outcomes:
            seen = set()
            for f in eff:
                if f.var in seen:
                    raise ModelError(
                        f"action {self.name!r}: outcome assigns variable twice"
                    )
                seen.add(f.var)

    @property
    def deterministic(self) -> bool:
        return len(self.outcomes) == 1


@dataclass(frozen=True)
class PlanningTask:
    """A finite-domain planning task with nondeterministic actions."""

    variables: tuple[Variable, ...]
    actions: tuple[Action, ...]
    initial: State
    goal: tuple[Fact, ...]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ModelError("duplicate variable names")
        action_names = [a.name for a in self.actions]
        if len(set(action_names)) != len(action_names):
            raise ModelError("duplicate action names")
        if len(self.initial) != len(self.variables):
            raise ModelError("initial state does not cover the variable set")
        for i, v in enumerate(self.variables):
            if not 0 <= self.initial[i] < len(v.domain):
                raise ModelError(f"initial value index out of range for {v.name!r}")
        for f in self.goal:
            self._check_fact(f, "goal")
        for a in self.actions:
            for f in formula_atoms(a.precondition):
                self._check_fact(f, f"action {a.name!r} precondition")
            for eff in a.outcomes:
                for f in eff:
                    self._check_fact(f, f"action {a.name!r} outcome")

    def _check_fact(self, f: Fact, where: str) -> None:
        if not 0 <= f.var < len(self.variables):
            raise ModelError(f"{where}: unknown variable index {f.var}")
        if not 0 <= f.value < len(self.variables[f.var].domain):
            raise ModelError(
                f"{where}: value index {f.value} out of range for "
                f"{self.variables[f.var].name!r}"
            )

    @cached_property
    def variable_index(self) -> dict:
        return {v.name: i for i, v in enumerate(self.variables)}

    @cached_property
    def action_index(self) -> dict:
        return {a.name: i for i, a in enumerate(self.actions)}

    @cached_property
    def nondet_actions(self) -> tuple:
        return tuple(i for i, a in enumerate(self.actions) if not a.deterministic)

    @cached_property
    def det_actions(self) -> tuple:
        return tuple(i for i, a in enumerate(self.actions) if a.deterministic)

    @cached_property
    def nondet_bit(self) -> dict:
        return {a: 1 << pos for pos, a in enumerate(self.nondet_actions)}

    @property
    def all_nondet_mask(self) -> int:
        return (1 << len(self.nondet_actions)) - 1

    @cached_property
    def domain_sizes(self) -> tuple:
        return tuple(len(v.domain) for v in self.variables)

    def fact(self, var_name: str, value_name: str) -> Fact:
        """Intern a (variable name, value name) pair into index form."""
        vi = self.variable_index.get(var_name)
        if vi is None:
            raise ModelError(f"unknown variable {var_name!r}")
        return Fact(vi, self.variables[vi].value_index(value_name))

    def format_fact(self, f: Fact) -> str:
        v = self.variables[f.var]
        return f"{v.name}={v.domain[f.value]}"

    def format_outcome(self, eff: tuple) -> str:
        return ", ".join(self.format_fact(f) for f in eff)


class SearchState(NamedTuple):
    """A state paired with the bitmask of still-available nondeterministic
    actions; plan existence is a function of this pair."""

    state: State
    avail: int


def initial_search_state(task: PlanningTask) -> SearchState:
    return SearchState(task.initial, task.all_nondet_mask)


# --------------------------------------------------------------------------
# state algebra


def apply_outcome(state: State, eff: Sequence[Fact]) -> State:
    """Return the state overwritten by ``eff`` on exactly the variables it
    assigns; all other slots are unchanged.  The input is not mutated."""
    if not eff:
        return state
    values = list(state)
    for f in eff:
        values[f.var] = f.value
    return tuple(values)


def eval_formula(state: State, phi: Formula) -> bool:
    """Standard propositional satisfaction; an atom ``x = c`` holds iff the
    state assigns ``c`` to ``x``.  Empty conjunctions are true, empty
    disjunctions false."""
    if isinstance(phi, Atom):
        return state[phi.fact.var] == phi.fact.value
    if isinstance(phi, Not):
        return not eval_formula(state, phi.child)
    if isinstance(phi, And):
        return all(eval_formula(state, c) for c in phi.children)
    if isinstance(phi, Or):
        return any(eval_formula(state, c) for c in phi.children)
    raise ModelError(f"not a formula node: {phi!r}")


def goal_satisfied(state: State, goal: Iterable[Fact]) -> bool:
    return all(state[f.var] == f.value for f in goal)


def action_applicable(task: PlanningTask, ss: SearchState, action: int) -> bool:
    """Applicable means the precondition holds and, for a nondeterministic
    action, it has not been consumed on the current path."""
    a = task.actions[action]
    if not a.deterministic and not ss.avail & task.nondet_bit[action]:
        return False
    return eval_formula(ss.state, a.precondition)


def applicable_actions(task: PlanningTask, ss: SearchState) -> list:
    return [i for i in range(len(task.actions)) if action_applicable(task, ss, i)]


def successor(task: PlanningTask, ss: SearchState, action: int, outcome: int) -> SearchState:
    a = task.actions[action]
    avail = ss.avail
    if not a.deterministic:
        avail &= ~task.nondet_bit[action]
    return SearchState(apply_outcome(ss.state, a.outcomes[outcome]), avail)


# --------------------------------------------------------------------------
# DNF compilation


def formula_to_dnf(
    phi: Formula, domain_sizes: Sequence[int], limit: int = 4096
) -> tuple:
    """Compile a formula into a list of conjunctions of positive facts whose
    disjunction is equivalent to it over total states.

    Negated atoms expand into the disjunction of the remaining domain
    values.  Contradictory conjuncts (two values for one variable) are
    dropped and duplicate conjuncts removed; no further minimization is
    attempted.  Raises :class:`DnfLimitError` when the intermediate
    expansion exceeds ``limit`` conjuncts.
    """

    def nnf(node: Formula, negate: bool) -> Formula:
        if isinstance(node, Atom):
            if not negate:
                return node
            var, value = node.fact
            others = tuple(
                Atom(Fact(var, v)) for v in range(domain_sizes[var]) if v != value
            )
            if len(others) == 1:
                return others[0]
            return Or(others)
        if isinstance(node, Not):
            return nnf(node.child, not negate)
        if isinstance(node, And):
            children = tuple(nnf(c, negate) for c in node.children)
            return Or(children) if negate else And(children)
        if isinstance(node, Or):
            children = tuple(nnf(c, negate) for c in node.children)
            return And(children) if negate else Or(children)
        raise ModelError(f"not a formula node: {node!r}")

    def expand(node: Formula) -> list:
        if isinstance(node, Atom):
            return [{node.fact.var: node.fact.value}]
        if isinstance(node, Or):
            out = []
            for c in node.children:
                out.extend(expand(c))
                if len(out) > limit:
                    raise DnfLimitError(len(out), limit)
            return out
        if isinstance(node, And):
            branches = [{}]
            for c in node.children:
                child_branches = expand(c)
                merged = []
                for b in branches:
                    for cb in child_branches:
                        conflict = False
                        for var, val in cb.items():
                            if b.get(var, val) != val:
                                conflict = True
                                break
                        if conflict:
                            continue
                        m = dict(b)
                        m.update(cb)
                        merged.append(m)
                        if len(merged) > limit:
                            raise DnfLimitError(len(merged), limit)
                branches = merged
                if not branches:
                    return []
            return branches
        raise ModelError(f"unexpected node after NNF: {node!r}")

    seen = set()
    result = []
    for branch in expand(nnf(phi, False)):
        conj = tuple(Fact(v, branch[v]) for v in sorted(branch))
        if conj not in seen:
            seen.add(conj)
            result.append(conj)
    return tuple(result)


# --------------------------------------------------------------------------
# plan trees

ACTION = "action"
STOP = "stop"
FAIL = "fail"


@dataclass(frozen=True)
class ActionTree:
    """A plan: a tree of actions whose edges are outcome-indexed, with STOP
    (goal reached) and FAIL (certified dead end) leaves."""

    kind: str
    action: int | None = None
    children: tuple["ActionTree", ...] = ()

    @staticmethod
    def stop() -> "ActionTree":
        return ActionTree(STOP)

    @staticmethod
    def fail() -> "ActionTree":
        return ActionTree(FAIL)

    @staticmethod
    def act(action: int, children: Sequence["ActionTree"]) -> "ActionTree":
        return ActionTree(ACTION, action, tuple(children))

    def is_leaf(self) -> bool:
        return self.kind != ACTION


def check_action_tree(task: PlanningTask, tree: ActionTree) -> None:
    """Reject trees whose action nodes lack one child per outcome, or that
    repeat a nondeterministic action on a root-to-leaf path."""

    def walk(node: ActionTree, used: frozenset) -> None:
        if node.kind != ACTION:
            if node.children:
                raise ModelError(f"{node.kind} leaf with children")
            return
        if node.action is None or not 0 <= node.action < len(task.actions):
            raise ModelError(f"tree references unknown action {node.action!r}")
        a = task.actions[node.action]
        if len(node.children) != len(a.outcomes):
            raise ModelError(
                f"action {a.name!r}: {len(node.children)} children for "
                f"{len(a.outcomes)} outcomes"
            )
        if not a.deterministic:
            if node.action in used:
                raise ModelError(
                    f"nondeterministic action {a.name!r} repeated on a path"
                )
            used = used | {node.action}
        for child in node.children:
            walk(child, used)

    walk(tree, frozenset())


def tree_action_count(tree: ActionTree) -> int:
    if tree.kind != ACTION:
        return 0
    return 1 + sum(tree_action_count(c) for c in tree.children)


def tree_fail_count(tree: ActionTree) -> int:
    if tree.kind == FAIL:
        return 1
    return sum(tree_fail_count(c) for c in tree.children)


def tree_nondet_fraction(task: PlanningTask, tree: ActionTree) -> float:
    """Fraction of action nodes in the tree that are nondeterministic."""
    total = 0
    nondet = 0
    stack = [tree]
    while stack:
        node = stack.pop()
        if node.kind == ACTION:
            total += 1
            if not task.actions[node.action].deterministic:
                nondet += 1
            stack.extend(node.children)
    return nondet / total if total else 0.0
