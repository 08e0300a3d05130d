"""Instance generation, an exhaustive solvability oracle, and the
benchmark harness.

The oracle decides strong/weak solvability of (state, availability) pairs
exactly, by computing for each availability level the least fixed point of
"goal, or a qualifying nondeterministic exit, or a deterministic step into
the solvable set".  Solvability is a function of the pair, and availability
strictly shrinks across nondeterministic applications, so the recursion over
levels is well-founded.  The state space is enumerated in full, guarded by a
configurable bound; this is test machinery for small tasks, not a planner.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from statusplan.model import (
    PlanningTask,
    SearchState,
    apply_outcome,
    eval_formula,
    goal_satisfied,
    initial_search_state,
    tree_action_count,
    tree_fail_count,
    tree_nondet_fraction,
)
from statusplan.search import SearchConfig, SearchResult, solve
from statusplan.task_io import BusinessObject, ProblemBundle, compile_bundle


class OracleBoundExceeded(RuntimeError):
    pass


class SolvabilityOracle:
    """Exact strong/weak solvability over the full (state, availability)
    space of a small task."""

    def __init__(self, task: PlanningTask, max_pairs: int = 1 << 21):
        self.task = task
        n_states = math.prod(task.domain_sizes)
        n_pairs = n_states * (1 << len(task.nondet_actions))
        if n_pairs > max_pairs:
            raise OracleBoundExceeded(
                f"{n_pairs} state/availability pairs exceed the bound {max_pairs}"
            )
        self._states = list(
            itertools.product(*(range(s) for s in task.domain_sizes))
        )
        self._pre_states = {
            i: frozenset(
                s for s in self._states if eval_formula(s, a.precondition)
            )
            for i, a in enumerate(task.actions)
        }
        self._goal_states = frozenset(
            s for s in self._states if goal_satisfied(s, task.goal)
        )
        self._memo: dict = {}

    def solvable_states(self, avail: int, mode: str) -> frozenset:
        """All states solvable under the given set of available
        nondeterministic actions."""
        key = (avail, mode)
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        task = self.task
        solvable = set(self._goal_states)
        # qualifying nondeterministic applications exit to a smaller level
        for action in task.nondet_actions:
            bit = task.nondet_bit[action]
            if not avail & bit:
                continue
            sub = self.solvable_states(avail & ~bit, mode)
            combine = any if mode == "weak" else all
            for s in self._pre_states[action]:
                if s in solvable:
                    continue
                if combine(
                    apply_outcome(s, eff) in sub
                    for eff in task.actions[action].outcomes
                ):
                    solvable.add(s)
        # close under deterministic predecessors
        changed = True
        while changed:
            changed = False
            for action in task.det_actions:
                eff = task.actions[action].outcomes[0]
                for s in self._pre_states[action]:
                    if s not in solvable and apply_outcome(s, eff) in solvable:
                        solvable.add(s)
                        changed = True
        result = frozenset(solvable)
        self._memo[key] = result
        return result

    def solvable(self, ss: SearchState, mode: str) -> bool:
        return ss.state in self.solvable_states(ss.avail, mode)

    def certifier(self, mode: str = "weak"):
        """A FAIL-leaf certifier for plan validation: certifies a pair when
        it is exactly unsolvable."""

        def certify(task: PlanningTask, ss: SearchState) -> bool:
            return not self.solvable(ss, mode)

        return certify


def oracle_solvable(
    task: PlanningTask, ss: SearchState, mode: str, max_pairs: int = 1 << 21
) -> bool:
    if mode not in ("strong", "weak"):
        raise ValueError(f"unknown mode {mode!r}")
    return SolvabilityOracle(task, max_pairs).solvable(ss, mode)


# --------------------------------------------------------------------------
# instance generation


@dataclass(frozen=True)
class GeneratorSpec:
    object: BusinessObject
    goal_size: int
    samples: int | None = None  # None samples every value tuple
    seed: int = 0
    scope: str = "full"

    def __post_init__(self):
        if not 1 <= self.goal_size <= len(self.object.variables):
            raise ValueError("goal size out of range")
        if self.samples is not None and self.samples < 1:
            raise ValueError("samples must be >= 1")


def generate(spec: GeneratorSpec) -> Iterable[ProblemBundle]:
    """Enumerate variable subsets of the requested size in canonical order
    and sample value tuples for each uniformly without replacement (all of
    them when fewer than requested).  Deterministic under the seed."""
    obj = spec.object
    rng = random.Random(spec.seed)
    counter = 0
    for subset in itertools.combinations(range(len(obj.variables)), spec.goal_size):
        domains = [obj.variables[i].domain for i in subset]
        total = math.prod(len(d) for d in domains)
        if spec.samples is None or spec.samples >= total:
            picks = range(total)
        else:
            picks = sorted(rng.sample(range(total), spec.samples))
        for code in picks:
            values = []
            rest = code
            for d in reversed(domains):
                rest, v = divmod(rest, len(d))
                values.append(v)
            values.reverse()
            goal = tuple(
                (f"{obj.id}.{obj.variables[vi].name}", domains[j][values[j]])
                for j, vi in enumerate(subset)
            )
            yield ProblemBundle(
                (obj,),
                goal,
                (),
                spec.scope,
                instance_id=f"{obj.id}-g{spec.goal_size}-{counter:05d}",
            )
            counter += 1


# --------------------------------------------------------------------------
# goal combination across objects


def combine_goals(
    objects: Sequence[BusinessObject],
    goals: Sequence[Iterable[tuple[str, str]]],
    k: int,
    scope: str = "full",
) -> ProblemBundle:
    """The union task over the first k objects with their goals conjoined."""
    if k > len(objects) or k > len(goals):
        raise ValueError("k exceeds the number of objects")
    chosen = objects[:k]
    ids = [o.id for o in chosen]
    if len(set(ids)) != len(ids):
        raise ValueError("object ids must be unique for goal combination")
    goal = tuple(atom for g in goals[:k] for atom in g)
    return ProblemBundle(
        tuple(chosen), goal, (), scope, instance_id=f"combined-{k}"
    )


# --------------------------------------------------------------------------
# suite running


@dataclass
class RunRecord:
    instance: str
    object: str
    goal_size: int
    mode: str
    heuristic: str
    verdict: str
    evaluations: int = 0
    expansions: int = 0
    wall_time: float = 0.0
    plan_size: int = 0
    failed_leaves: int = 0
    nondet_fraction: float = 0.0
    error: str = ""


CSV_HEADER = [
    "instance",
    "object",
    "goal_size",
    "mode",
    "heuristic",
    "verdict",
    "evaluations",
    "expansions",
    "wall_time",
    "plan_size",
    "failed_leaves",
    "nondet_fraction",
    "error",
]


def _run_one(bundle: ProblemBundle, config: SearchConfig) -> RunRecord:
    object_ids = "+".join(o.id for o in bundle.objects)
    record = RunRecord(
        instance=bundle.instance_id or object_ids,
        object=object_ids,
        goal_size=len(bundle.goal),
        mode=config.mode,
        heuristic=config.heuristic,
        verdict="error",
    )
    try:
        task = compile_bundle(bundle)
        result = solve(task, config)
    except Exception as err:  # per-instance failures never abort the suite
        record.error = f"{type(err).__name__}: {err}"
        return record
    record.verdict = result.verdict
    record.evaluations = result.stats.evaluations
    record.expansions = result.stats.expansions
    record.wall_time = result.stats.wall_time
    if result.strong_phase is not None:
        record.evaluations += result.strong_phase.stats.evaluations
        record.expansions += result.strong_phase.stats.expansions
    if result.plan is not None:
        record.plan_size = tree_action_count(result.plan)
        record.failed_leaves = tree_fail_count(result.plan)
        record.nondet_fraction = tree_nondet_fraction(task, result.plan)
    return record


def run_suite(
    bundles: Iterable[ProblemBundle],
    configs: Sequence[SearchConfig],
    workers: int | None = None,
) -> tuple[list[RunRecord], dict]:
    """Solve every bundle under every configuration; aggregation is
    order-independent."""
    jobs = [(b, c) for b in bundles for c in configs]
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda j: _run_one(*j), jobs))
    else:
        records = [_run_one(b, c) for b, c in jobs]
    records.sort(key=lambda r: (r.instance, r.mode, r.heuristic))
    return records, aggregate(records)


def aggregate(records: Sequence[RunRecord]) -> dict:
    def bucket(keyed):
        out = {}
        for key, rec in keyed:
            slot = out.setdefault(
                key, {"total": 0, "solved": 0, "evaluations": 0}
            )
            slot["total"] += 1
            slot["solved"] += rec.verdict == "plan"
            slot["evaluations"] += rec.evaluations
        for slot in out.values():
            slot["coverage"] = (
                slot["solved"] / slot["total"] if slot["total"] else 0.0
            )
        return out

    solved = [r for r in records if r.verdict == "plan"]
    return {
        "total": len(records),
        "solved": len(solved),
        "coverage": len(solved) / len(records) if records else 0.0,
        "by_goal_size": bucket((r.goal_size, r) for r in records),
        "nondet_fraction_mean": (
            sum(r.nondet_fraction for r in solved) / len(solved) if solved else 0.0
        ),
        "by_object": bucket((r.object, r) for r in records),
    }


def records_to_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([getattr(r, col) for col in CSV_HEADER])
    return buf.getvalue()


def aggregates_to_json(aggregates: dict) -> str:
    def keyfix(d):
        return {str(k): v for k, v in d.items()}

    out = dict(aggregates)
    out["by_goal_size"] = keyfix(out["by_goal_size"])
    out["by_object"] = keyfix(out["by_object"])
    return json.dumps(out, indent=2, sort_keys=True)
