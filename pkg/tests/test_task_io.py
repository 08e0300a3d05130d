"""Business-object compilation and native JSON round trips."""

import json
import logging
import random

import pytest

from statusplan.model import ModelError, eval_formula, goal_satisfied
from statusplan.task_io import (
    Override,
    SchemaError,
    UNSET_VALUE,
    compile_bo,
    load_objects,
    plan_from_json,
    plan_to_json,
    task_from_json,
    task_to_json,
)

from conftest import fixture_text


class TestCompileBo:
    def test_running_example_shape(self, cq_task):
        assert len(cq_task.variables) == 7
        det = [cq_task.actions[i] for i in cq_task.det_actions]
        nondet = [cq_task.actions[i] for i in cq_task.nondet_actions]
        assert len(det) == 4
        assert len(nondet) == 4
        assert all(len(a.outcomes) == 2 for a in nondet)
        assert {a.name for a in det} == {
            "Submit CQ",
            "Mark CQ as Accepted",
            "Create Follow-Up for CQ",
            "Archive CQ",
        }

    def test_empty_object_with_satisfied_goal(self):
        objects = load_objects(
            {
                "objects": [
                    {
                        "id": "X",
                        "name": "X",
                        "variables": [
                            {"name": "s", "domain": ["a", "b"], "initial": "a"}
                        ],
                        "actions": [],
                    }
                ]
            }
        )
        task = compile_bo(objects, [("X.s", "a")])
        assert task.actions == ()
        assert goal_satisfied(task.initial, task.goal)

    def test_scope_filters_to_goal_objects(self, cq_object):
        other = load_objects(
            {
                "objects": [
                    {
                        "id": "PO",
                        "name": "Purchase Order",
                        "variables": [
                            {"name": "status", "domain": ["new", "done"], "initial": "new"}
                        ],
                        "actions": [
                            {
                                "name": "Finish PO",
                                "pre": {"var": "status", "val": "new"},
                                "eff": [[{"var": "status", "val": "done"}]],
                            }
                        ],
                    }
                ]
            }
        )[0]
        goal = [("CQ.archiving", "archived")]
        relevant = compile_bo([cq_object, other], goal, scope="bo_relevant")
        full = compile_bo([cq_object, other], goal, scope="full")
        relevant_names = {a.name for a in relevant.actions}
        full_names = {a.name for a in full.actions}
        assert relevant_names < full_names
        assert not any(n.startswith("PO.") for n in relevant_names)
        # variables stay the union in both scopes
        assert len(relevant.variables) == len(full.variables) == 8

    def test_duplicate_outcome_deduplicated_with_warning(self, caplog):
        objects = load_objects(
            {
                "objects": [
                    {
                        "id": "X",
                        "name": "X",
                        "variables": [
                            {"name": "s", "domain": ["a", "b"], "initial": "a"}
                        ],
                        "actions": [
                            {
                                "name": "dup",
                                "pre": {"var": "s", "val": "a"},
                                "eff": [
                                    [{"var": "s", "val": "b"}],
                                    [{"var": "s", "val": "b"}],
                                ],
                            }
                        ],
                    }
                ]
            }
        )
        with caplog.at_level(logging.WARNING):
            task = compile_bo(objects, [("X.s", "b")])
        assert len(task.actions[0].outcomes) == 1
        assert any("duplicate" in r.message for r in caplog.records)

    def test_contradictory_effect_disjunct_rejected(self):
        objects = load_objects(
            {
                "objects": [
                    {
                        "id": "X",
                        "name": "X",
                        "variables": [
                            {"name": "s", "domain": ["a", "b"], "initial": "a"}
                        ],
                        "actions": [
                            {
                                "name": "bad",
                                "pre": {"var": "s", "val": "a"},
                                "eff": [
                                    [
                                        {"var": "s", "val": "a"},
                                        {"var": "s", "val": "b"},
                                    ]
                                ],
                            }
                        ],
                    }
                ]
            }
        )
        with pytest.raises(ModelError, match="twice"):
            compile_bo(objects, [("X.s", "b")])

    def test_goal_on_unknown_variable_rejected(self, cq_object):
        with pytest.raises(ModelError, match="unknown variable"):
            compile_bo([cq_object], [("CQ.missing", "x")])

    def test_unset_override(self, cq_object):
        task = compile_bo(
            [cq_object],
            [("CQ.archiving", "archived")],
            overrides=[Override("CQ.approval")],
        )
        appr = task.variable_index["CQ.approval"]
        assert task.variables[appr].domain[-1] == UNSET_VALUE
        assert task.initial[appr] == len(task.variables[appr].domain) - 1
        # every precondition atom over the unset variable is false initially
        check = task.actions[task.action_index["Check CQ Approval Status"]]
        assert not eval_formula(task.initial, check.precondition)

    def test_initial_value_override(self, cq_object):
        task = compile_bo(
            [cq_object],
            [("CQ.archiving", "archived")],
            overrides=[Override("CQ.submission", "submitted")],
        )
        sub = task.variable_index["CQ.submission"]
        assert task.variables[sub].domain[task.initial[sub]] == "submitted"

    def test_fuzzed_objects_compile_to_valid_tasks(self):
        rng = random.Random(4242)
        for _ in range(60):
            n_vars = rng.randint(1, 4)
            variables = []
            for i in range(n_vars):
                size = rng.randint(1, 3)
                domain = [f"v{j}" for j in range(size)]
                variables.append(
                    {
                        "name": f"x{i}",
                        "domain": domain,
                        "initial": rng.choice(domain),
                    }
                )
            actions = []
            for i in range(rng.randint(0, 5)):
                v = rng.randrange(n_vars)
                pre_var = variables[v]
                eff = []
                for _ in range(rng.randint(1, 3)):
                    ev = rng.randrange(n_vars)
                    eff.append(
                        [
                            {
                                "var": f"x{ev}",
                                "val": rng.choice(variables[ev]["domain"]),
                            }
                        ]
                    )
                # drop duplicate disjuncts to keep the fuzz quiet
                uniq = []
                for d in eff:
                    if d not in uniq:
                        uniq.append(d)
                actions.append(
                    {
                        "name": f"a{i}",
                        "pre": {
                            "var": pre_var["name"],
                            "val": rng.choice(pre_var["domain"]),
                        },
                        "eff": uniq,
                    }
                )
            objects = load_objects(
                {
                    "objects": [
                        {
                            "id": "F",
                            "name": "F",
                            "variables": variables,
                            "actions": actions,
                        }
                    ]
                }
            )
            gv = rng.randrange(n_vars)
            goal = [(f"F.x{gv}", rng.choice(variables[gv]["domain"]))]
            task = compile_bo(objects, goal)  # construction runs all invariants
            assert len(task.initial) == n_vars


class TestTaskJson:
    def test_round_trip_cq(self, cq_task):
        assert task_from_json(task_to_json(cq_task)) == cq_task

    def test_round_trip_empty_actions(self):
        objects = load_objects(
            {
                "objects": [
                    {
                        "id": "X",
                        "name": "X",
                        "variables": [
                            {"name": "s", "domain": ["a"], "initial": "a"}
                        ],
                        "actions": [],
                    }
                ]
            }
        )
        task = compile_bo(objects, [("X.s", "a")])
        assert task_from_json(task_to_json(task)) == task

    def test_unknown_top_level_field_rejected_with_path(self, cq_task):
        data = task_to_json(cq_task)
        data["extras"] = 1
        with pytest.raises(SchemaError) as err:
            task_from_json(data)
        assert err.value.path == "$.extras"

    def test_bad_nested_field_path(self, cq_task):
        data = task_to_json(cq_task)
        data["actions"][2]["pre"] = {"nope": 1}
        with pytest.raises(SchemaError) as err:
            task_from_json(data)
        assert err.value.path.startswith("$.actions[2].pre")


class TestPlanJson:
    def test_round_trip(self, cq_task, cq_plan):
        data = plan_to_json(cq_task, cq_plan)
        assert plan_from_json(cq_task, data) == cq_plan

    def test_fixture_plan_loads(self, cq_task):
        data = json.loads(fixture_text("customer_quote.plan.json"))
        tree = plan_from_json(cq_task, data)
        assert tree.kind == "action"
        assert cq_task.actions[tree.action].name == "Check CQ Completeness"

    def test_unknown_action_rejected(self, cq_task):
        with pytest.raises(SchemaError, match="unknown action"):
            plan_from_json(cq_task, {"kind": "action", "action": "?", "children": []})
