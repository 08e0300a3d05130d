"""HTTP service endpoints, error codes, and request isolation."""

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from statusplan.service import create_app

from conftest import fixture_path, fixture_text

CQ_GOAL = [
    {"var": "followUp", "val": "documentCreated"},
    {"var": "archiving", "val": "archived"},
]


@pytest.fixture(scope="module")
def client():
    repo_dir = Path(fixture_path("customer_quote.objects.json")).parent
    app = create_app(repo_dir, max_timeout=20.0)
    with TestClient(app) as c:
        yield c


class TestObjects:
    def test_list_contains_cq_with_seven_variables(self, client):
        data = client.get("/objects").json()
        cq = next(o for o in data if o["id"] == "CQ")
        assert len(cq["variables"]) == 7
        assert {v["name"] for v in cq["variables"]} == {
            "archiving",
            "completeness",
            "consistency",
            "approval",
            "submission",
            "acceptance",
            "followUp",
        }

    def test_get_object_detail(self, client):
        data = client.get("/objects/CQ").json()
        assert len(data["actions"]) == 8
        approval = next(v for v in data["variables"] if v["name"] == "approval")
        assert len(approval["domain"]) == 5

    def test_unknown_object_404(self, client):
        assert client.get("/objects/NOPE").status_code == 404


class TestPlan:
    def test_running_example_returns_plan_and_process(self, client):
        resp = client.post("/plan", json={"object": "CQ", "goal": CQ_GOAL})
        assert resp.status_code == 200
        data = resp.json()
        assert data["verdict"] == "plan"
        assert data["mode_used"] == "weak"
        kinds = {}
        for node in data["process"]["nodes"]:
            kinds[node["kind"]] = kinds.get(node["kind"], 0) + 1
        assert kinds == {
            "start": 1,
            "end": 1,
            "task": 8,
            "xor_split": 1,
            "xor_join": 2,
            "and_split": 1,
            "and_join": 1,
        }
        assert data["statistics"]["failed_leaves"] == 3
        assert data["strong_phase"]["verdict"] in ("exhausted_unknown", "unsolvable")

    def test_unknown_variable_422(self, client):
        resp = client.post(
            "/plan",
            json={"object": "CQ", "goal": [{"var": "missing", "val": "x"}]},
        )
        assert resp.status_code == 422

    def test_unknown_value_422(self, client):
        resp = client.post(
            "/plan",
            json={"object": "CQ", "goal": [{"var": "archiving", "val": "zz"}]},
        )
        assert resp.status_code == 422

    def test_unknown_object_404(self, client):
        resp = client.post(
            "/plan", json={"object": "ZZ", "goal": [{"var": "a", "val": "b"}]}
        )
        assert resp.status_code == 404

    def test_malformed_body_400(self, client):
        resp = client.post("/plan", json={"object": "CQ"})
        assert resp.status_code == 400

    def test_unset_initial_condition(self, client):
        resp = client.post(
            "/plan",
            json={
                "object": "CQ",
                "goal": [{"var": "archiving", "val": "archived"}],
                "init": [{"var": "approval", "unset": True}],
            },
        )
        assert resp.status_code == 200
        assert resp.json()["verdict"] == "plan"

    def test_strong_mode_unsolvable_verdict(self, client):
        resp = client.post(
            "/plan",
            json={
                "object": "CQ",
                "goal": CQ_GOAL,
                "mode": "strong",
                "helpful_pruning": False,
            },
        )
        assert resp.status_code == 200
        assert resp.json()["verdict"] == "unsolvable"

    def test_inline_objects(self, client):
        objects_doc = json.loads(fixture_text("customer_quote.objects.json"))
        resp = client.post(
            "/plan",
            json={
                "objects": objects_doc,
                "goal": [{"var": "CQ.archiving", "val": "archived"}],
            },
        )
        assert resp.status_code == 200
        assert resp.json()["statistics"]["plan_size"] == 1

    def test_budget_clamped_resource_limit(self, client):
        resp = client.post(
            "/plan",
            json={
                "object": "CQ",
                "goal": CQ_GOAL,
                "mode": "weak",
                "max_evaluations": 1,
            },
        )
        assert resp.status_code == 200
        assert resp.json()["verdict"] == "resource_limit"


class TestValidate:
    def test_published_plan(self, client):
        plan = json.loads(fixture_text("customer_quote.plan.json"))
        resp = client.post(
            "/validate",
            json={
                "object": "CQ",
                "goal": CQ_GOAL,
                "plan": plan,
                "validate_mode": "weak",
            },
        )
        assert resp.status_code == 200
        assert resp.json()["valid"] is True

    def test_invalid_in_strong_mode(self, client):
        plan = json.loads(fixture_text("customer_quote.plan.json"))
        resp = client.post(
            "/validate",
            json={
                "object": "CQ",
                "goal": CQ_GOAL,
                "plan": plan,
                "validate_mode": "strong",
            },
        )
        assert resp.json()["valid"] is False


class TestConcurrency:
    def test_eight_concurrent_plans_without_crosstalk(self, client):
        # distinct goals exercise distinct searches; responses must carry
        # the goal they were asked for and consistent statistics
        goals = [
            [{"var": "archiving", "val": "archived"}],
            [{"var": "completeness", "val": "complete"}],
            [{"var": "consistency", "val": "consistent"}],
            [{"var": "submission", "val": "submitted"}],
            [{"var": "acceptance", "val": "accepted"}],
            [{"var": "followUp", "val": "documentCreated"}],
            [{"var": "approval", "val": "granted"}],
            CQ_GOAL,
        ]

        def run(goal):
            resp = client.post("/plan", json={"object": "CQ", "goal": goal})
            assert resp.status_code == 200
            return goal, resp.json()

        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(run, goals))
        for goal, data in results:
            assert data["goal"] == goal
            assert data["verdict"] == "plan"
            if goal == CQ_GOAL:
                assert data["statistics"]["plan_size"] == 12
                assert data["statistics"]["failed_leaves"] == 3

    def test_identical_to_cli_result(self, client):
        # the service and the CLI must produce the same plan for the same input
        from click.testing import CliRunner

        from statusplan.cli import main

        cli = CliRunner().invoke(
            main,
            [
                "solve",
                fixture_path("customer_quote.objects.json"),
                fixture_path("customer_quote.problem.json"),
                "--mode",
                "weak",
            ],
        )
        assert cli.exit_code == 0
        cli_payload = json.loads(cli.stdout)
        service_payload = client.post(
            "/plan", json={"object": "CQ", "goal": CQ_GOAL, "mode": "weak"}
        ).json()
        assert cli_payload["plan"] == service_payload["plan"]
        assert cli_payload["process"] == service_payload["process"]
