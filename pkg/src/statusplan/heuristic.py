"""Goal-distance estimation over the all-outcomes determinization.

Each available nondeterministic action is replaced by one deterministic
entry per outcome (as if the planner could pick the outcome), preconditions
are compiled to positive-fact conjunctions, and a relaxed planning graph is
grown under value-accumulating semantics: a fixed-point iteration over the
set of reached facts.  The heuristic value is the size of a relaxed plan
extracted by backchaining, not the layer count; reaching a fixed point
before the goal proves the search state unsolvable.  Helpful actions are the
applicable actions appearing in the relaxed plan.

Fact sets are packed into integer bitmasks (one bit per variable/value
pair), which keeps the fixed-point loop cheap even for tasks unioned over
many business objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

from statusplan.model import (
    DnfLimitError,
    Fact,
    PlanningTask,
    SearchState,
    applicable_actions,
    formula_to_dnf,
    goal_satisfied,
)

INF = math.inf


@dataclass(frozen=True)
class DeterminizedAction:
    """One deterministic entry of the determinized action set: a source
    action, a chosen outcome, and one positive-conjunction branch of the
    compiled precondition."""

    action: int
    outcome: int
    precondition: tuple[Fact, ...]
    effect: tuple[Fact, ...]


@dataclass(frozen=True)
class HeuristicOutcome:
    """Value is ``0`` on goal states, ``inf`` on detected dead ends, and the
    number of distinct (action, outcome) pairs in the relaxed plan
    otherwise."""

    value: float
    relaxed_plan: tuple[DeterminizedAction, ...] = ()
    helpful: frozenset = frozenset()


class RpgResult:
    """Fact layers of one relaxed-planning-graph run.

    ``level`` is the first layer containing the goal, or ``inf`` if a fixed
    point was reached before that.  Layers grow monotonically.
    """

    def __init__(self, evaluator, level, entry_level, level_masks, included, fact_levels):
        self._evaluator = evaluator
        self.level = level
        self._entry_level = entry_level
        self._level_masks = level_masks
        self._included = included
        self._fact_levels = fact_levels  # first layer per fact added after F_0

    @property
    def entries(self) -> tuple:
        return tuple(
            e
            for i, e in enumerate(self._evaluator.entries)
            if (self._included >> i) & 1
        )

    def fact_level(self, fact: Fact) -> float:
        fid = self._evaluator.fact_id(fact)
        for t, mask in enumerate(self._level_masks):
            if (mask >> fid) & 1:
                return t
        return INF

    def entry_first_level(self, entry: DeterminizedAction) -> float:
        idx = self._evaluator.entry_index[entry]
        lvl = self._entry_level[idx]
        return INF if lvl < 0 else lvl

    @property
    def layers(self) -> list:
        """F_0 .. F_t as sets of facts (cumulative)."""
        out = []
        for mask in self._level_masks:
            layer = set()
            m = mask
            while m:
                low = m & -m
                layer.add(self._evaluator.fact_of(low.bit_length() - 1))
                m ^= low
            out.append(layer)
        return out


class FfEvaluator:
    """Relaxed-plan heuristic over the all-outcomes determinization.

    One instance per search; owns per-call scratch buffers.  The
    determinized entry list is computed once per task and filtered by the
    availability bitmask at each call.
    """

    def __init__(self, task: PlanningTask, dnf_limit: int = 4096):
        self.task = task
        sizes = task.domain_sizes
        offsets = []
        total = 0
        for s in sizes:
            offsets.append(total)
            total += s
        self._offsets = tuple(offsets)
        self.num_facts = total

        def mask(facts) -> int:
            m = 0
            for f in facts:
                m |= 1 << (self._offsets[f.var] + f.value)
            return m

        entries: list[DeterminizedAction] = []
        action_branch_masks: list[list[int]] = []
        for ai, action in enumerate(task.actions):
            branches = formula_to_dnf(action.precondition, sizes, dnf_limit)
            action_branch_masks.append([mask(b) for b in branches])
            for oi, eff in enumerate(action.outcomes):
                for branch in branches:
                    entries.append(DeterminizedAction(ai, oi, branch, eff))
        self.entries = tuple(entries)
        self.entry_index = {e: i for i, e in enumerate(entries)}
        self._action_branch_masks = action_branch_masks
        self._action_gate = [
            0 if a.deterministic else task.nondet_bit[i]
            for i, a in enumerate(task.actions)
        ]

        self._pre_masks = [mask(e.precondition) for e in entries]
        self._eff_fids = [
            tuple(self._offsets[f.var] + f.value for f in e.effect) for e in entries
        ]
        self._pre_fids = [
            tuple(self._offsets[f.var] + f.value for f in e.precondition)
            for e in entries
        ]
        self._base_counts = [len(fids) for fids in self._pre_fids]
        watchers = [[] for _ in range(total)]
        for i, fids in enumerate(self._pre_fids):
            for fid in fids:
                watchers[fid].append(i)
        self._watchers = watchers
        self._goal_fids = tuple(
            sorted({self._offsets[f.var] + f.value for f in task.goal})
        )
        self._goal_mask = mask(task.goal)
        # which nondeterministic-availability bit gates each entry (0 = always)
        self._entry_gate = [
            0
            if task.actions[e.action].deterministic
            else task.nondet_bit[e.action]
            for e in entries
        ]
        self._included_cache: dict = {}
        max_outcomes = max((len(a.outcomes) for a in task.actions), default=1)
        self._pair_code = [
            e.action * max_outcomes + e.outcome for e in entries
        ]
        achievers = [[] for _ in range(total)]
        for i, e in enumerate(entries):
            for f in e.effect:
                achievers[self._offsets[f.var] + f.value].append(i)
        self._achievers = achievers

    # -- fact numbering -----------------------------------------------------

    def fact_id(self, fact: Fact) -> int:
        return self._offsets[fact.var] + fact.value

    @cached_property
    def _fact_table(self) -> tuple:
        table = []
        for var, size in enumerate(self.task.domain_sizes):
            for value in range(size):
                table.append(Fact(var, value))
        return tuple(table)

    def fact_of(self, fid: int) -> Fact:
        return self._fact_table[fid]

    def state_mask(self, state) -> int:
        m = 0
        for var, value in enumerate(state):
            m |= 1 << (self._offsets[var] + value)
        return m

    def applicable_actions(self, ss: SearchState) -> list:
        """Mask-based applicability over the precompiled precondition
        branches; agrees with the formula-evaluation definition."""
        sm = self.state_mask(ss.state)
        avail = ss.avail
        out = []
        for action, masks in enumerate(self._action_branch_masks):
            gate = self._action_gate[action]
            if gate and not avail & gate:
                continue
            for m in masks:
                if m & ~sm == 0:
                    out.append(action)
                    break
        return out

    # -- relaxed planning graph ----------------------------------------------

    def _included_mask(self, avail: int) -> int:
        cached = self._included_cache.get(avail)
        if cached is None:
            cached = 0
            for i, g in enumerate(self._entry_gate):
                if g == 0 or avail & g:
                    cached |= 1 << i
            self._included_cache[avail] = cached
        return cached

    def seed_counts(self, reached_mask: int):
        """Initial missing-precondition counts for a state (one popcount pass
        over the entries), plus the bitmask of entries with zero count."""
        n = len(self.entries)
        base = self._base_counts
        pre_masks = self._pre_masks
        counts = [0] * n
        zeros = 0
        for i in range(n):
            c = base[i] - (pre_masks[i] & reached_mask).bit_count()
            counts[i] = c
            if c == 0:
                zeros |= 1 << i
        return counts, zeros

    def shift_counts(self, seed, parent_state, eff):
        """Seed counts for the successor state reached by an outcome,
        derived from the parent's seed in time proportional to the change."""
        counts, zeros = seed
        counts = counts[:]
        offsets = self._offsets
        watchers = self._watchers
        for f in eff:
            old = offsets[f.var] + parent_state[f.var]
            new = offsets[f.var] + f.value
            if old == new:
                continue
            for e in watchers[old]:
                c = counts[e] + 1
                counts[e] = c
                if c == 1:
                    zeros &= ~(1 << e)
            for e in watchers[new]:
                c = counts[e] - 1
                counts[e] = c
                if c == 0:
                    zeros |= 1 << e
        return counts, zeros

    def _run_rpg(self, state, avail: int, state_mask: int | None = None, seed=None):
        """Grow fact layers to the goal or a fixed point.

        Counter-based: each entry tracks how many of its precondition facts
        are still missing; fact additions decrement the watching entries,
        which fire at zero.  The seed (from :meth:`seed_counts` or
        :meth:`shift_counts`) is consumed.  Returns (level, entry_level,
        level_masks, included_mask, fact_levels) where fact_levels maps each
        fact added after layer 0 to its first layer.
        """
        n = len(self.entries)
        included = self._included_mask(avail)
        entry_level = [-1] * n
        reached = self.state_mask(state) if state_mask is None else state_mask
        level_masks = [reached]
        fact_levels: dict = {}
        goal_mask = self._goal_mask
        if goal_mask & ~reached == 0:
            return 0, entry_level, level_masks, included, fact_levels
        if seed is None:
            seed = self.seed_counts(reached)
        counts, zeros = seed
        watchers = self._watchers
        eff_fids = self._eff_fids
        frontier = []
        m = zeros & included
        while m:
            low = m & -m
            frontier.append(low.bit_length() - 1)
            m ^= low
        t = 0
        while True:
            new_facts = []
            for i in frontier:
                entry_level[i] = t
                for fid in eff_fids[i]:
                    if not (reached >> fid) & 1:
                        reached |= 1 << fid
                        new_facts.append(fid)
            if not new_facts:
                return INF, entry_level, level_masks, included, fact_levels
            t += 1
            level_masks.append(reached)
            frontier = []
            for fid in new_facts:
                fact_levels[fid] = t
                for e in watchers[fid]:
                    c = counts[e] - 1
                    counts[e] = c
                    if c == 0 and (included >> e) & 1 and entry_level[e] < 0:
                        frontier.append(e)
            if goal_mask & ~reached == 0:
                return t, entry_level, level_masks, included, fact_levels

    def rpg(self, state, avail: int) -> RpgResult:
        level, entry_level, level_masks, included, fact_levels = self._run_rpg(
            state, avail
        )
        return RpgResult(self, level, entry_level, level_masks, included, fact_levels)

    # -- relaxed plan extraction ----------------------------------------------

    def _extract(
        self, state_mask, level, entry_level, fact_levels, collect_plan=True
    ) -> HeuristicOutcome:
        """Backchain from the goal facts, layer by layer, selecting for each
        open fact a supporting entry with minimal first level (ties to the
        lowest entry index)."""
        n = len(self.entries)
        open_at = [set() for _ in range(int(level) + 1)]
        fl_get = fact_levels.get
        for fid in self._goal_fids:
            lvl = fl_get(fid, 0)
            if lvl:
                open_at[lvl].add(fid)
        achievers = self._achievers
        pre_fids = self._pre_fids
        pair_code = self._pair_code
        selected_pairs = set()
        selected_entries = []
        processed = set()
        for i in range(int(level), 0, -1):
            for fid in sorted(open_at[i]):
                best = n * (int(level) + 2)
                for e in achievers[fid]:
                    lvl = entry_level[e]
                    if 0 <= lvl < i:
                        key = lvl * n + e
                        if key < best:
                            best = key
                e = best % n
                assert best < n * (int(level) + 1), "backchaining lost support"
                if e in processed:
                    continue
                processed.add(e)
                code = pair_code[e]
                if code not in selected_pairs:
                    selected_pairs.add(code)
                    selected_entries.append(e)
                for p in pre_fids[e]:
                    lvl = fl_get(p, 0)
                    if lvl:
                        open_at[lvl].add(p)
        pre_masks = self._pre_masks
        entries = self.entries
        helpful = set()
        for e in selected_entries:
            if pre_masks[e] & ~state_mask == 0:
                helpful.add(entries[e].action)
        plan = (
            tuple(entries[e] for e in sorted(selected_entries))
            if collect_plan
            else ()
        )
        return HeuristicOutcome(len(selected_pairs), plan, frozenset(helpful))

    # -- public evaluation ------------------------------------------------------

    def evaluate(
        self,
        ss: SearchState,
        state_mask: int | None = None,
        seed=None,
        collect_plan: bool = True,
    ) -> HeuristicOutcome:
        if state_mask is None:
            state_mask = self.state_mask(ss.state)
        if self._goal_mask & ~state_mask == 0:
            return HeuristicOutcome(0)
        level, entry_level, _, _, fact_levels = self._run_rpg(
            ss.state, ss.avail, state_mask, seed
        )
        if level == INF:
            return HeuristicOutcome(INF)
        return self._extract(state_mask, level, entry_level, fact_levels, collect_plan)

    def successor_mask(self, parent_mask: int, parent_state, eff) -> int:
        """Fact bitmask of a successor state, updated incrementally from the
        parent's mask."""
        offsets = self._offsets
        for f in eff:
            parent_mask &= ~(1 << (offsets[f.var] + parent_state[f.var]))
            parent_mask |= 1 << (offsets[f.var] + f.value)
        return parent_mask

    def dead_end(self, ss: SearchState) -> bool:
        """True when the relaxed planning graph proves the pair unsolvable."""
        mask = self.state_mask(ss.state)
        if self._goal_mask & ~mask == 0:
            return False
        level = self._run_rpg(ss.state, ss.avail, mask)[0]
        return level == INF


class BlindEvaluator:
    """Baseline heuristic: 1 on non-goal states, 0 on goal states; every
    applicable action counts as helpful.  Cannot detect dead ends."""

    def __init__(self, task: PlanningTask):
        self.task = task

    def evaluate(self, ss: SearchState) -> HeuristicOutcome:
        if goal_satisfied(ss.state, self.task.goal):
            return HeuristicOutcome(0)
        return HeuristicOutcome(
            1, (), frozenset(applicable_actions(self.task, ss))
        )


# --------------------------------------------------------------------------
# functional wrappers


def determinize(task: PlanningTask, avail: int) -> list:
    """Deterministic entries of the task under the given availability:
    deterministic actions contribute their single outcome, each available
    nondeterministic action one entry per outcome, with preconditions split
    into positive-fact branches."""
    ev = FfEvaluator(task)
    out = []
    for i, e in enumerate(ev.entries):
        gate = ev._entry_gate[i]
        if gate == 0 or avail & gate:
            out.append(e)
    return out


def build_rpg(task: PlanningTask, state, avail: int) -> RpgResult:
    return FfEvaluator(task).rpg(state, avail)


def extract_relaxed_plan(rpg: RpgResult, task: PlanningTask, state) -> HeuristicOutcome:
    if rpg.level == INF:
        raise ValueError("cannot extract a relaxed plan from an unreachable goal")
    ev = rpg._evaluator
    return ev._extract(
        ev.state_mask(state), rpg.level, rpg._entry_level, rpg._fact_levels
    )


def ff_h(task: PlanningTask, ss: SearchState) -> HeuristicOutcome:
    return FfEvaluator(task).evaluate(ss)


def blind_h(task: PlanningTask, ss: SearchState) -> HeuristicOutcome:
    return BlindEvaluator(task).evaluate(ss)


def make_evaluator(task: PlanningTask, name: str):
    if name == "ff":
        return FfEvaluator(task)
    if name == "blind":
        return BlindEvaluator(task)
    raise ValueError(f"unknown heuristic {name!r}")
