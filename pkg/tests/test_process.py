"""Plan-to-process-graph pipeline: goldens on the running example plus
structural and language-preservation properties."""

import random

import pytest

from statusplan.model import ActionTree
from statusplan.process import (
    ProcessError,
    canonical_order,
    check_process_graph,
    close_graph,
    compile_process,
    emit,
    graph_paths,
    merge_identical_subtrees,
    parallelize,
    parse_process_json,
    split_checks,
    strip_failed,
    tree_paths,
)

CQ_EXPECTED_KINDS = {
    "start": 1,
    "end": 1,
    "task": 8,
    "xor_split": 1,
    "xor_join": 2,
    "and_split": 1,
    "and_join": 1,
}


class TestStripFailed:
    def test_running_example_flags(self, cq_task, cq_plan):
        step = strip_failed(cq_task, cq_plan)

        flags = {}

        def walk(node):
            if node.is_stop:
                return
            flags[node.name] = flags.get(node.name, False) or node.may_fail
            for _, child in node.children:
                walk(child)

        walk(step)
        assert flags == {
            "Check CQ Completeness": True,
            "Check CQ Consistency": True,
            "Check CQ Approval Status": False,
            "Decide CQ Approval": True,
            "Submit CQ": False,
            "Mark CQ as Accepted": False,
            "Create Follow-Up for CQ": False,
            "Archive CQ": False,
        }

    def test_strong_plan_unchanged(self, detour_task):
        tree = ActionTree.act(2, [ActionTree.stop()])
        step = strip_failed(detour_task, tree)
        assert step.name == "a3" and not step.may_fail
        assert len(step.children) == 1

    def test_one_shot_plan(self, one_shot_task):
        tree = ActionTree.act(0, [ActionTree.fail(), ActionTree.stop()])
        step = strip_failed(one_shot_task, tree)
        assert step.name == "a" and step.may_fail
        assert len(step.children) == 1
        assert step.children[0][1].is_stop


class TestSplitChecks:
    def test_branching_node_gets_split(self, cq_task, cq_plan):
        graph = split_checks(strip_failed(cq_task, cq_plan))
        kinds = graph.node_kind_counts()
        assert kinds["xor_split"] == 1
        split = next(n for n in graph.nodes.values() if n.kind == "xor_split")
        assert split.name == "Check CQ Approval Status"
        labels = {e.label for e in graph.out_edges(split.id)}
        assert labels == {"CQ.approval=necessary", "CQ.approval=notNecessary"}
        # checks lost branches but no longer branch: plain tasks
        assert kinds["task"] == 12  # duplicate chains not merged yet

    def test_single_path_plan_is_linear(self, detour_task):
        tree = ActionTree.act(2, [ActionTree.stop()])
        graph = split_checks(strip_failed(detour_task, tree))
        assert graph.node_kind_counts() == {"task": 1, "stop": 1}


class TestMergeAndClose:
    def test_duplicate_chains_merge_under_join(self, cq_task, cq_plan):
        graph = split_checks(strip_failed(cq_task, cq_plan))
        graph = merge_identical_subtrees(graph)
        kinds = graph.node_kind_counts()
        assert kinds["task"] == 8
        assert kinds["xor_join"] == 2
        names = [n.name for n in graph.nodes.values() if n.kind == "task"]
        assert sorted(names) == sorted(
            [
                "Check CQ Completeness",
                "Check CQ Consistency",
                "Check CQ Approval Status",
                "Decide CQ Approval",
                "Submit CQ",
                "Mark CQ as Accepted",
                "Create Follow-Up for CQ",
                "Archive CQ",
            ]
        )

    def test_all_distinct_subtrees_unchanged(self, detour_task):
        tree = ActionTree.act(
            0,
            [
                ActionTree.act(1, [ActionTree.act(2, [ActionTree.stop()])]),
                ActionTree.stop(),
            ],
        )
        graph = split_checks(strip_failed(detour_task, tree))
        before = dict(graph.node_kind_counts())
        merged = merge_identical_subtrees(graph)
        after = merged.node_kind_counts()
        # two distinct STOP leaves still merge at the final join; tasks do not
        assert after["task"] == before["task"]
        assert after["xor_join"] == 1

    def test_empty_plan_closes_to_start_end(self, cq_task):
        graph = split_checks(strip_failed(cq_task, ActionTree.stop()))
        graph = merge_identical_subtrees(graph)
        graph = close_graph(graph)
        assert graph.node_kind_counts() == {"start": 1, "end": 1}
        assert len(graph.edges) == 1

    def test_single_action_plan(self, detour_task):
        tree = ActionTree.act(2, [ActionTree.stop()])
        graph = close_graph(merge_identical_subtrees(split_checks(strip_failed(detour_task, tree))))
        assert graph.node_kind_counts() == {"start": 1, "task": 1, "end": 1}


class TestParallelize:
    def test_running_example_parallel_checks(self, cq_task, cq_plan):
        graph = compile_process(cq_task, cq_plan)
        kinds = graph.node_kind_counts()
        assert kinds == CQ_EXPECTED_KINDS
        split = next(n for n in graph.nodes.values() if n.kind == "and_split")
        branch_names = {
            graph.nodes[e.dst].name for e in graph.out_edges(split.id)
        }
        assert branch_names == {"Check CQ Completeness", "Check CQ Consistency"}

    def test_interacting_tasks_stay_sequential(self, cq_task):
        idx = cq_task.action_index
        from statusplan.process import action_footprints, tasks_interact

        fp = action_footprints(cq_task)
        assert tasks_interact(fp, "Submit CQ", "Mark CQ as Accepted")
        assert not tasks_interact(fp, "Check CQ Completeness", "Check CQ Consistency")

    def test_single_task_chain_unchanged(self, detour_task):
        tree = ActionTree.act(2, [ActionTree.stop()])
        graph = compile_process(detour_task, tree)
        assert graph.node_kind_counts() == {"start": 1, "task": 1, "end": 1}


class TestEmit:
    def test_json_round_trip(self, cq_task, cq_plan):
        graph = compile_process(cq_task, cq_plan)
        text = emit(graph, "json")
        assert parse_process_json(text) == graph

    def test_empty_plan_dot(self, cq_task):
        graph = compile_process(cq_task, ActionTree.stop())
        dot = emit(graph, "dot")
        assert dot.count("->") == 1
        assert dot.count("shape=") == 2

    def test_dot_marks_gateways_and_failures(self, cq_task, cq_plan):
        graph = compile_process(cq_task, cq_plan)
        dot = emit(graph, "dot")
        assert 'label="×"' in dot and 'label="+"' in dot
        assert dot.count("color=red") == 3

    def test_bpmn_xml_elements(self, cq_task, cq_plan):
        from xml.etree import ElementTree

        graph = compile_process(cq_task, cq_plan)
        xml = emit(graph, "bpmn_xml")
        root = ElementTree.fromstring(xml)
        ns = "{http://www.omg.org/spec/BPMN/20100524/MODEL}"
        process = root.find(f"{ns}process")
        assert len(process.findall(f"{ns}task")) == 8
        assert len(process.findall(f"{ns}exclusiveGateway")) == 3
        assert len(process.findall(f"{ns}parallelGateway")) == 2
        assert len(process.findall(f"{ns}startEvent")) == 1
        assert len(process.findall(f"{ns}endEvent")) == 1
        assert len(process.findall(f"{ns}sequenceFlow")) == len(graph.edges)


class TestLanguagePreservation:
    def assert_language_preserved(self, task, tree):
        graph = compile_process(task, tree)
        check_process_graph(graph)
        want = {canonical_order(task, p) for p in tree_paths(task, tree)}
        got = {canonical_order(task, p) for p in graph_paths(graph)}
        assert want == got

    def test_running_example(self, cq_task, cq_plan):
        self.assert_language_preserved(cq_task, cq_plan)

    def test_fuzzed_small_plans(self):
        from tests_taskgen import random_bo_task
        from statusplan.search import SearchConfig, solve
        from statusplan.model import tree_action_count

        rng = random.Random(20240818)
        checked = 0
        for _ in range(200):
            task = random_bo_task(rng)
            result = solve(
                task, SearchConfig(mode="weak", helpful_pruning=False, timeout=None)
            )
            if result.verdict != "plan" or result.plan.kind != "action":
                continue
            if tree_action_count(result.plan) > 12:
                continue
            self.assert_language_preserved(task, result.plan)
            checked += 1
        assert checked >= 40

    def test_graph_invariants_on_fuzzed_plans(self):
        from tests_taskgen import random_bo_task
        from statusplan.search import SearchConfig, solve

        rng = random.Random(777)
        for _ in range(150):
            task = random_bo_task(rng)
            result = solve(
                task, SearchConfig(mode="weak", helpful_pruning=False, timeout=None)
            )
            if result.verdict == "plan" and result.plan.kind == "action":
                graph = compile_process(task, result.plan)
                check_process_graph(graph)

    def test_may_fail_flags_match_lost_children(self, cq_task, cq_plan):
        graph = compile_process(cq_task, cq_plan)
        flagged = {
            n.name for n in graph.nodes.values() if n.kind == "task" and n.may_fail
        }
        assert flagged == {
            "Check CQ Completeness",
            "Check CQ Consistency",
            "Decide CQ Approval",
        }
