"""Shared fixtures: the customer-quote running example and micro tasks."""

import json
from importlib import resources

import pytest

from statusplan.model import (
    Action,
    ActionTree,
    And,
    Atom,
    Fact,
    PlanningTask,
    Variable,
)
from statusplan.task_io import compile_bo, load_objects, plan_from_json


def fixture_text(name: str) -> str:
    return resources.files("statusplan.fixtures").joinpath(name).read_text()


def fixture_path(name: str) -> str:
    return str(resources.files("statusplan.fixtures").joinpath(name))


@pytest.fixture(scope="session")
def cq_object():
    return load_objects(json.loads(fixture_text("customer_quote.objects.json")))[0]


@pytest.fixture(scope="session")
def cq_task(cq_object):
    return compile_bo(
        [cq_object],
        [("CQ.followUp", "documentCreated"), ("CQ.archiving", "archived")],
    )


@pytest.fixture(scope="session")
def cq_plan(cq_task):
    return plan_from_json(cq_task, json.loads(fixture_text("customer_quote.plan.json")))


def make_binary_task(names, actions, goal, initial=None):
    """Small helper for hand-built tasks: binary variables named ``names``
    with domain (false, true) and initial false unless overridden."""
    variables = tuple(Variable(n, ("false", "true"), "false") for n in names)
    init = tuple(0 for _ in names) if initial is None else tuple(initial)
    return PlanningTask(variables, tuple(actions), init, tuple(goal))


@pytest.fixture(scope="session")
def one_shot_task():
    """One variable x in {A, B}, initial A, goal B, a single action with
    outcomes {A} and {B}: weakly but not strongly solvable."""
    x = Variable("x", ("A", "B"), "A")
    a = Action("a", And(()), ((Fact(0, 0),), (Fact(0, 1),)))
    return PlanningTask((x,), (a,), (0,), (Fact(0, 1),))


@pytest.fixture(scope="session")
def detour_task():
    """x in {A, B, C}, initial A, goal C.  a1: pre A, outcomes {B} or {C};
    a2: pre B, outcome {A}; a3: pre A, outcome {C}.  The bad outcome of a1
    recovers through a2, a3, which naive state-only duplicate pruning would
    wrongly cut."""
    x = Variable("x", ("A", "B", "C"), "A")
    a1 = Action("a1", Atom(Fact(0, 0)), ((Fact(0, 1),), (Fact(0, 2),)))
    a2 = Action("a2", Atom(Fact(0, 1)), ((Fact(0, 0),),))
    a3 = Action("a3", Atom(Fact(0, 0)), ((Fact(0, 2),),))
    return PlanningTask((x,), (a1, a2, a3), (0,), (Fact(0, 2),))


@pytest.fixture(scope="session")
def two_checks_task():
    """The two-variable simplification of the running example: completeness
    and consistency checks only, goal requires both positive."""
    variables = (
        Variable("completeness", ("complete", "notComplete"), "notComplete"),
        Variable("consistency", ("consistent", "notConsistent"), "notConsistent"),
    )
    check_comp = Action(
        "Check CQ Completeness", And(()), ((Fact(0, 0),), (Fact(0, 1),))
    )
    check_cons = Action(
        "Check CQ Consistency", And(()), ((Fact(1, 0),), (Fact(1, 1),))
    )
    return PlanningTask(
        variables,
        (check_comp, check_cons),
        (1, 1),
        (Fact(0, 0), Fact(1, 0)),
    )


def replay(task, state, steps):
    """Apply (action index, outcome index) steps to a state."""
    from statusplan.model import apply_outcome

    for action, outcome in steps:
        state = apply_outcome(state, task.actions[action].outcomes[outcome])
    return state


def tree_from_steps(task, steps):
    """Build a linear plan tree from (action, outcome) steps; nondet actions
    get FAIL siblings on the outcomes not taken."""
    tree = ActionTree.stop()
    for action, outcome in reversed(steps):
        a = task.actions[action]
        children = [
            tree if i == outcome else ActionTree.fail()
            for i in range(len(a.outcomes))
        ]
        tree = ActionTree.act(action, children)
    return tree
