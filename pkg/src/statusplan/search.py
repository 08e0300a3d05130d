"""Forward AND-OR search for strong and weak plans.

The search tree alternates OR nodes (search states: a state plus the set of
still-available nondeterministic actions) and AND nodes (applied actions,
one child per outcome).  Statuses solved/failed/unknown propagate upward:
OR nodes are solved when some child is solved and failed when all are; the
strong AND rule requires every child solved, while the weak rule tolerates
failed children as long as all children are decided and at least one is
solved.  f-values guide node selection: leaves carry weighted heuristic
values, OR nodes take the child minimum plus one, AND nodes the maximum
over non-failed children.

Deterministic successors identical to an ancestor on the current path are
skipped (direct duplicate pruning); the pair comparison includes action
availability, which is what keeps the pruning sound for weak planning.
Helpful-actions pruning restricts expansion to the relaxed plan's actions;
because it can mark solvable nodes failed, plans found under pruning get
their FAIL leaves re-certified, and exhausted searches under pruning are
reported as unknown rather than unsolvable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from statusplan.model import (
    ActionTree,
    PlanningTask,
    SearchState,
    action_applicable,
    applicable_actions,
    apply_outcome,
    check_action_tree,
    goal_satisfied,
    initial_search_state,
    successor,
    tree_fail_count,
)
from statusplan.heuristic import FfEvaluator, INF, make_evaluator

DEFAULT_STRONG_PHASE_BUDGET = 0.5
DEFAULT_TIMEOUT = 60.0


class Status(Enum):
    SOLVED = "solved"
    FAILED = "failed"
    UNKNOWN = "unknown"


SOLVED = Status.SOLVED
FAILED = Status.FAILED
UNKNOWN = Status.UNKNOWN


class SearchInvariantError(RuntimeError):
    """An internal consistency check failed; aborts with diagnostics."""


@dataclass
class SearchConfig:
    mode: str = "auto"  # strong | weak | auto
    heuristic: str = "ff"  # ff | blind
    weight: float = 5.0
    helpful_pruning: bool = True
    max_evaluations: int | None = None
    timeout: float | None = DEFAULT_TIMEOUT
    strong_phase_budget: float = DEFAULT_STRONG_PHASE_BUDGET
    max_depth: int = 1_000_000

    def __post_init__(self):
        if self.weight < 1:
            raise ValueError("weight must be >= 1")
        if self.mode not in ("strong", "weak", "auto"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class SearchStats:
    evaluations: int = 0
    expansions: int = 0
    max_depth: int = 0
    wall_time: float = 0.0
    failed_leaves: int = 0


@dataclass
class SearchResult:
    verdict: str  # plan | unsolvable | exhausted_unknown | resource_limit
    plan: ActionTree | None
    stats: SearchStats
    mode_used: str
    strong_phase: Optional["SearchResult"] = None

    @property
    def solved(self) -> bool:
        return self.verdict == "plan"


class OrNode:
    __slots__ = (
        "content",
        "key_hash",
        "smask",
        "parent",
        "status",
        "f",
        "h",
        "helpful",
        "children",
        "best_child",
        "expanded",
        "depth",
        "failed_by_exhaustion",
    )

    def __init__(self, content: SearchState, parent, depth: int):
        self.content = content
        self.key_hash = hash(content)
        self.smask = None  # fact bitmask of the state, when known
        self.parent = parent  # owning AndNode, or None for the root
        self.status = UNKNOWN
        self.f = 0.0
        self.h = 0.0
        self.helpful = frozenset()
        self.children = []
        self.best_child = None
        self.expanded = False
        self.depth = depth
        self.failed_by_exhaustion = False


class AndNode:
    __slots__ = ("action", "parent", "children", "status", "f")

    def __init__(self, action: int, parent: OrNode):
        self.action = action
        self.parent = parent
        self.children = []
        self.status = UNKNOWN
        self.f = 0.0


# --------------------------------------------------------------------------
# status aggregation


def or_aggregate(statuses) -> Status:
    """Solved when some child is solved; failed when all are (an empty child
    set means a non-goal state with no applicable action, a dead end)."""
    statuses = list(statuses)
    if any(s is SOLVED for s in statuses):
        return SOLVED
    if all(s is FAILED for s in statuses):
        return FAILED
    return UNKNOWN


def weak_aggregate(statuses) -> Status:
    """Weak AND rule: solved when every child is decided and at least one is
    solved; failed only when all children are failed."""
    statuses = list(statuses)
    if not statuses:
        raise SearchInvariantError("AND node without children")
    if all(s is FAILED for s in statuses):
        return FAILED
    if all(s in (SOLVED, FAILED) for s in statuses) and any(
        s is SOLVED for s in statuses
    ):
        return SOLVED
    return UNKNOWN


def strong_aggregate(statuses) -> Status:
    """Classical conjunctive AND rule: solved when all children are solved,
    failed as soon as any child is."""
    statuses = list(statuses)
    if not statuses:
        raise SearchInvariantError("AND node without children")
    if any(s is FAILED for s in statuses):
        return FAILED
    if all(s is SOLVED for s in statuses):
        return SOLVED
    return UNKNOWN


# spec name for the weak rule
sam_aggregate = weak_aggregate


def is_direct_duplicate(node: OrNode, state, avail: int) -> bool:
    """True when some OR ancestor (including the node itself) carries exactly
    this (state, availability) pair.  Candidates with fewer available
    nondeterministic actions than an ancestor can never match it, so only
    deterministic stretches are effectively pruned."""
    content = SearchState(state, avail)
    key = hash(content)
    cur = node
    while cur is not None:
        if cur.key_hash == key and cur.content == content:
            return True
        cur = cur.parent.parent if cur.parent is not None else None
    return False


def update_f_and_best(node) -> None:
    """Recompute a node's f-value from its children.

    OR nodes take the minimum child f plus one and remember a minimizing
    child; AND nodes take the maximum over non-failed children, going to
    infinity only when every child has failed.  Leaf OR nodes keep their
    seeded weighted heuristic value.
    """
    if isinstance(node, OrNode):
        if not node.expanded:
            return
        if not node.children:
            node.f = INF
            node.best_child = None
            return
        best = None
        best_f = INF
        for child in node.children:
            if best is None or child.f < best_f:
                best = child
                best_f = child.f
        node.best_child = best
        node.f = best_f + 1
    else:
        live = [c.f for c in node.children if c.status is not FAILED]
        node.f = max(live) if live else INF


# --------------------------------------------------------------------------
# the search proper


class _Budget:
    def __init__(self, config: SearchConfig):
        self.max_evaluations = config.max_evaluations
        self.deadline = (
            time.monotonic() + config.timeout if config.timeout is not None else None
        )
        self.evaluations = 0

    def exhausted(self) -> bool:
        if self.max_evaluations is not None and self.evaluations >= self.max_evaluations:
            return True
        return self.deadline is not None and time.monotonic() >= self.deadline


class _Search:
    def __init__(self, task: PlanningTask, config: SearchConfig, mode: str):
        self.task = task
        self.config = config
        self.mode = mode
        self.evaluator = make_evaluator(task, config.heuristic)
        self._ff = self.evaluator if isinstance(self.evaluator, FfEvaluator) else None
        self.and_rule = strong_aggregate if mode == "strong" else weak_aggregate
        self._strong = mode == "strong"
        self.stats = SearchStats()
        self.budget = _Budget(config)
        self.root = self._make_or(initial_search_state(task), None, 0)
        self._resume = self.root

    def _or_status(self, children) -> Status:
        all_failed = True
        for c in children:
            s = c.status
            if s is SOLVED:
                return SOLVED
            if s is not FAILED:
                all_failed = False
        return FAILED if all_failed else UNKNOWN

    def _and_status(self, children) -> Status:
        if self._strong:
            all_solved = True
            for c in children:
                s = c.status
                if s is FAILED:
                    return FAILED
                if s is not SOLVED:
                    all_solved = False
            return SOLVED if all_solved else UNKNOWN
        any_solved = False
        all_failed = True
        all_decided = True
        for c in children:
            s = c.status
            if s is SOLVED:
                any_solved = True
                all_failed = False
            elif s is FAILED:
                pass
            else:
                all_failed = False
                all_decided = False
        if all_failed:
            return FAILED
        if all_decided and any_solved:
            return SOLVED
        return UNKNOWN

    def _evaluate(self, node: OrNode, seed=None) -> None:
        if self._ff is not None:
            if node.smask is None:
                node.smask = self._ff.state_mask(node.content.state)
            outcome = self._ff.evaluate(node.content, node.smask, seed, collect_plan=False)
        else:
            outcome = self.evaluator.evaluate(node.content)
        self.budget.evaluations += 1
        self.stats.evaluations += 1
        node.h = outcome.value
        node.helpful = outcome.helpful
        node.f = self.config.weight * outcome.value if outcome.value != INF else INF
        if outcome.value == 0:
            node.status = SOLVED
        elif outcome.value == INF:
            node.status = FAILED

    def _make_or(
        self, content: SearchState, parent, depth: int, smask=None, seed=None
    ) -> OrNode:
        if depth > self.config.max_depth:
            raise SearchInvariantError(
                f"depth ceiling {self.config.max_depth} exceeded; "
                "termination argument violated"
            )
        node = OrNode(content, parent, depth)
        node.smask = smask
        self.stats.max_depth = max(self.stats.max_depth, depth)
        self._evaluate(node, seed)
        return node

    def select_open_node(self) -> OrNode:
        """Follow best children from the root to a non-expanded unknown OR
        node; inside AND nodes take the first unknown child in insertion
        order.  Descent resumes below the highest node the last propagation
        changed, which is equivalent to starting at the root."""
        node = self._resume
        while node.expanded:
            action_node = node.best_child
            if action_node is None or action_node.status is not UNKNOWN:
                action_node = next(
                    (c for c in node.children if c.status is UNKNOWN), None
                )
            if action_node is None:
                raise SearchInvariantError("unknown OR node with no open action")
            child = next(
                (c for c in action_node.children if c.status is UNKNOWN), None
            )
            if child is None:
                raise SearchInvariantError("unknown AND node with no open child")
            node = child
        if node.status is not UNKNOWN:
            raise SearchInvariantError("selected a decided node for expansion")
        return node

    def run(self) -> Status:
        while self.root.status is UNKNOWN:
            if self.budget.exhausted():
                return UNKNOWN
            node = self.select_open_node()
            self._expand(node)
            self._resume = self._propagate(node)
        return self.root.status

    def _expand(self, node: OrNode) -> None:
        task = self.task
        ss = node.content
        self.stats.expansions += 1
        node.expanded = True
        if self.config.helpful_pruning or not isinstance(self.evaluator, FfEvaluator):
            # the helpful set is the expansion set under pruning, and equals
            # the applicable set for the blind heuristic
            actions = sorted(node.helpful)
        else:
            actions = self.evaluator.applicable_actions(ss)
        ff = self._ff
        parent_seed = None
        if ff is not None and actions:
            parent_seed = ff.seed_counts(node.smask)
        for action in actions:
            act = task.actions[action]
            avail = ss.avail
            if not act.deterministic:
                avail &= ~task.nondet_bit[action]
            if act.deterministic:
                succ = apply_outcome(ss.state, act.outcomes[0])
                if is_direct_duplicate(node, succ, avail):
                    continue
            and_node = AndNode(action, node)
            node.children.append(and_node)
            for eff in act.outcomes:
                if ff is not None:
                    smask = ff.successor_mask(node.smask, ss.state, eff)
                    seed = ff.shift_counts(parent_seed, ss.state, eff)
                else:
                    smask = seed = None
                child = self._make_or(
                    SearchState(apply_outcome(ss.state, eff), avail),
                    and_node,
                    node.depth + 1,
                    smask,
                    seed,
                )
                and_node.children.append(child)
            and_node.status = self._and_status(and_node.children)
            update_f_and_best(and_node)
        node.status = self._or_status(node.children)
        if node.status is FAILED:
            node.failed_by_exhaustion = True
        update_f_and_best(node)

    def _propagate(self, node: OrNode) -> OrNode:
        """Re-aggregate statuses and f-values up the path; stops (and lets
        the next descent resume) at the first ancestor left unchanged, since
        everything above it is then unchanged too."""
        and_node = node.parent
        while and_node is not None:
            and_node.status = self._and_status(and_node.children)
            update_f_and_best(and_node)
            or_node = and_node.parent
            before = (or_node.status, or_node.f, or_node.best_child)
            or_node.status = self._or_status(or_node.children)
            if or_node.status is FAILED:
                or_node.failed_by_exhaustion = True
            update_f_and_best(or_node)
            if (or_node.status, or_node.f, or_node.best_child) == before:
                return or_node
            and_node = or_node.parent
        return self.root


def extract_plan(root: OrNode) -> ActionTree:
    """Read the solution tree off a solved search graph: one solved action
    per OR node (preferring the best child), all outcome children per kept
    action, failed children becoming FAIL leaves and goal nodes STOP."""

    def build(node: OrNode) -> ActionTree:
        if node.status is not SOLVED:
            raise SearchInvariantError("extracting from an unsolved node")
        if node.h == 0:
            return ActionTree.stop()
        chosen = None
        if node.best_child is not None and node.best_child.status is SOLVED:
            chosen = node.best_child
        else:
            chosen = next(
                (c for c in node.children if c.status is SOLVED), None
            )
        if chosen is None:
            raise SearchInvariantError("solved OR node without solved action")
        children = []
        for child in chosen.children:
            if child.status is SOLVED:
                children.append(build(child))
            elif child.status is FAILED:
                children.append(ActionTree.fail())
            else:
                raise SearchInvariantError("kept action with undecided child")
        return ActionTree.act(chosen.action, children)

    return build(root)


def _fail_leaf_states(root: OrNode, tree: ActionTree):
    """Pair each FAIL leaf of the extracted tree with its search node."""

    def walk(node: OrNode, t: ActionTree):
        if t.kind == "fail":
            yield node
            return
        if t.kind == "stop":
            return
        chosen = None
        for c in node.children:
            if c.action == t.action and c.status is SOLVED:
                chosen = c
                break
        if chosen is None:
            raise SearchInvariantError("plan action missing from search graph")
        for child_node, child_tree in zip(chosen.children, t.children):
            yield from walk(child_node, child_tree)

    yield from walk(root, tree)


# --------------------------------------------------------------------------
# public entry points


def solve(task: PlanningTask, config: SearchConfig | None = None) -> SearchResult:
    """Search for a plan under the configured mode.

    ``auto`` first looks for a strong plan under ``strong_phase_budget`` and
    falls back to weak planning.  Exhausted searches report ``unsolvable``
    only when helpful pruning was off; with pruning on the verdict is
    ``exhausted_unknown``.  Weak plans found under pruning have every FAIL
    leaf re-certified; if certification fails, the search reruns without
    pruning.
    """
    config = config or SearchConfig()
    if config.mode == "auto":
        strong_cfg = _clone_config(
            config,
            mode="strong",
            timeout=config.strong_phase_budget,
        )
        strong_result = solve(task, strong_cfg)
        if strong_result.solved:
            return strong_result
        weak_cfg = _clone_config(config, mode="weak")
        weak_result = solve(task, weak_cfg)
        weak_result.strong_phase = strong_result
        return weak_result

    start = time.monotonic()
    search = _Search(task, config, config.mode)
    outcome = search.run()
    stats = search.stats
    stats.wall_time = time.monotonic() - start

    if outcome is UNKNOWN:
        return SearchResult("resource_limit", None, stats, config.mode)
    if outcome is FAILED:
        verdict = "exhausted_unknown" if config.helpful_pruning else "unsolvable"
        return SearchResult(verdict, None, stats, config.mode)

    tree = extract_plan(search.root)
    if config.mode == "weak" and config.helpful_pruning:
        if not _certify_fail_leaves(task, config, search, tree):
            retry = _clone_config(config, helpful_pruning=False)
            result = solve(task, retry)
            result.stats.evaluations += stats.evaluations
            result.stats.expansions += stats.expansions
            return result
    stats.failed_leaves = tree_fail_count(tree)
    stats.wall_time = time.monotonic() - start
    return SearchResult("plan", tree, stats, config.mode)


def _clone_config(config: SearchConfig, **changes) -> SearchConfig:
    from dataclasses import replace

    return replace(config, **changes)


def _certify_fail_leaves(
    task: PlanningTask, config: SearchConfig, search: _Search, tree: ActionTree
) -> bool:
    """A FAIL leaf is certified unsolvable when the relaxed planning graph
    reaches a fixed point on it; leaves that failed by search exhaustion
    under pruning are instead re-searched without pruning."""
    ff = search.evaluator if isinstance(search.evaluator, FfEvaluator) else FfEvaluator(task)
    for leaf in _fail_leaf_states(search.root, tree):
        if ff.dead_end(leaf.content):
            continue
        sub = _subtask_search(task, config, leaf.content)
        if sub.verdict == "plan":
            return False
        if sub.verdict != "unsolvable":
            return False  # could not certify within budget; be conservative
    return True


def _subtask_search(task: PlanningTask, config: SearchConfig, content: SearchState) -> SearchResult:
    """Decide solvability of an inner pair by searching without pruning from
    a task whose initial situation is that pair."""
    sub_config = _clone_config(config, mode="weak", helpful_pruning=False)
    search = _Search(task, sub_config, "weak")
    # re-root the search at the given pair
    search.root = search._make_or(content, None, 0)
    outcome = search.run()
    if outcome is SOLVED:
        return SearchResult("plan", None, search.stats, "weak")
    if outcome is FAILED:
        return SearchResult("unsolvable", None, search.stats, "weak")
    return SearchResult("resource_limit", None, search.stats, "weak")


# --------------------------------------------------------------------------
# plan validation


@dataclass
class ValidationReport:
    valid: bool
    message: str = ""
    path: tuple = ()

    def __bool__(self) -> bool:
        return self.valid


def validate_plan(
    task: PlanningTask,
    tree: ActionTree,
    mode: str,
    certifier: Callable[[PlanningTask, SearchState], bool] | None = None,
) -> ValidationReport:
    """Check a plan tree against the strong or weak solution definition.

    FAIL leaves (weak mode only, and only under nondeterministic actions)
    must be certified unsolvable; the default certifier accepts a leaf when
    the relaxed planning graph proves it dead.  Every nondeterministic
    action needs at least one non-FAIL child.  The report carries the first
    violated clause and the path to it.
    """
    if certifier is None:
        ff = FfEvaluator(task)
        certifier = lambda t, ss: ff.dead_end(ss)

    def fail(message, path) -> ValidationReport:
        return ValidationReport(False, message, tuple(path))

    def walk(node: ActionTree, ss: SearchState, path) -> ValidationReport:
        if node.kind == "stop":
            if not goal_satisfied(ss.state, task.goal):
                return fail("STOP leaf in a non-goal state", path)
            return ValidationReport(True)
        if node.kind == "fail":
            return fail("FAIL leaf not attached to a nondeterministic action", path)
        action = node.action
        act = task.actions[action]
        if not action_applicable(task, ss, action):
            return fail(f"action {act.name!r} not applicable", path)
        if len(node.children) != len(act.outcomes):
            return fail(f"action {act.name!r} missing outcome children", path)
        non_fail = 0
        for i, child in enumerate(node.children):
            succ = successor(task, ss, action, i)
            child_path = path + [f"{act.name} / {task.format_outcome(act.outcomes[i]) or 'no-op'}"]
            if child.kind == "fail":
                if act.deterministic:
                    return fail(
                        "FAIL leaf under a deterministic action", child_path
                    )
                if mode == "strong":
                    return fail("FAIL leaf in a strong plan", child_path)
                if not certifier(task, succ):
                    return fail(
                        "FAIL leaf is not certified unsolvable", child_path
                    )
                continue
            non_fail += 1
            report = walk(child, succ, child_path)
            if not report:
                return report
        if not act.deterministic and non_fail == 0:
            return fail(
                f"nondeterministic action {act.name!r} has no successful child",
                path,
            )
        return ValidationReport(True)

    try:
        check_action_tree(task, tree)
    except Exception as err:  # malformed tree shape
        return ValidationReport(False, str(err), ())
    return walk(tree, initial_search_state(task), [])
