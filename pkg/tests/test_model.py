"""State algebra, formula evaluation, DNF compilation, and plan-tree checks."""

import itertools
import random

import pytest

from statusplan.model import (
    Action,
    ActionTree,
    And,
    Atom,
    DnfLimitError,
    Fact,
    ModelError,
    Not,
    Or,
    PlanningTask,
    Variable,
    apply_outcome,
    check_action_tree,
    eval_formula,
    formula_to_dnf,
    goal_satisfied,
)

from conftest import replay


def fact(task, var, val):
    return task.fact(var, val)


class TestApplyOutcome:
    def test_overwrites_only_assigned_variables(self, cq_task):
        arch = fact(cq_task, "CQ.archiving", "archived")
        after = apply_outcome(cq_task.initial, (arch,))
        assert after[arch.var] == arch.value
        for i, v in enumerate(cq_task.initial):
            if i != arch.var:
                assert after[i] == v
        # the input state is untouched
        assert cq_task.initial[arch.var] != arch.value

    def test_empty_assignment_is_identity(self, cq_task):
        assert apply_outcome(cq_task.initial, ()) == cq_task.initial

    def test_overwrite_with_current_value(self, cq_task):
        arch_not = fact(cq_task, "CQ.archiving", "notArchived")
        assert apply_outcome(cq_task.initial, (arch_not,)) == cq_task.initial

    def test_random_states_agree_with_definition(self):
        rng = random.Random(2024)
        for _ in range(200):
            sizes = [rng.randint(1, 4) for _ in range(rng.randint(1, 6))]
            state = tuple(rng.randrange(s) for s in sizes)
            eff_vars = rng.sample(range(len(sizes)), rng.randint(0, len(sizes)))
            eff = tuple(Fact(v, rng.randrange(sizes[v])) for v in eff_vars)
            after = apply_outcome(state, eff)
            assigned = {f.var: f.value for f in eff}
            for i in range(len(sizes)):
                assert after[i] == assigned.get(i, state[i])


class TestEvalFormula:
    def test_submit_precondition_false_initially(self, cq_task):
        pre = cq_task.actions[cq_task.action_index["Submit CQ"]].precondition
        assert not eval_formula(cq_task.initial, pre)

    def test_empty_conjunction_true(self, cq_task):
        assert eval_formula(cq_task.initial, And(()))

    def test_check_completeness_precondition_true_initially(self, cq_task):
        pre = cq_task.actions[cq_task.action_index["Check CQ Completeness"]].precondition
        assert eval_formula(cq_task.initial, pre)

    def test_negation_form(self, cq_task):
        archived = Atom(fact(cq_task, "CQ.archiving", "archived"))
        assert eval_formula(cq_task.initial, Not(archived))


class TestGoalSatisfied:
    def test_goal_false_initially(self, cq_task):
        assert not goal_satisfied(cq_task.initial, cq_task.goal)

    def test_empty_goal_true(self, cq_task):
        assert goal_satisfied(cq_task.initial, ())

    def test_success_path_reaches_goal(self, cq_task):
        idx = cq_task.action_index
        steps = [
            (idx["Check CQ Completeness"], 0),
            (idx["Check CQ Consistency"], 0),
            (idx["Check CQ Approval Status"], 0),
            (idx["Decide CQ Approval"], 0),
            (idx["Submit CQ"], 0),
            (idx["Mark CQ as Accepted"], 0),
            (idx["Create Follow-Up for CQ"], 0),
            (idx["Archive CQ"], 0),
        ]
        end = replay(cq_task, cq_task.initial, steps)
        assert goal_satisfied(end, cq_task.goal)

    def test_matches_conjunction_evaluation(self, cq_task):
        rng = random.Random(7)
        for _ in range(100):
            state = tuple(rng.randrange(s) for s in cq_task.domain_sizes)
            goal = tuple(
                Fact(v, rng.randrange(cq_task.domain_sizes[v]))
                for v in rng.sample(range(len(cq_task.variables)), 3)
            )
            phi = And(tuple(Atom(f) for f in goal))
            assert goal_satisfied(state, goal) == eval_formula(state, phi)


class TestFormulaToDnf:
    def test_single_atom(self):
        phi = Atom(Fact(0, 1))
        assert formula_to_dnf(phi, (5,)) == ((Fact(0, 1),),)

    def test_binary_negation(self):
        phi = Not(Atom(Fact(0, 1)))
        assert formula_to_dnf(phi, (2,)) == ((Fact(0, 0),),)

    def test_disjunction_under_conjunction(self):
        # (x=1 or x=3) and not y=1, over dom(x)=5 values, dom(y)=2
        phi = And(
            (
                Or((Atom(Fact(0, 1)), Atom(Fact(0, 3)))),
                Not(Atom(Fact(1, 1))),
            )
        )
        dnf = formula_to_dnf(phi, (5, 2))
        assert dnf == (
            (Fact(0, 1), Fact(1, 0)),
            (Fact(0, 3), Fact(1, 0)),
        )

    def test_contradictions_dropped(self):
        phi = And((Atom(Fact(0, 0)), Atom(Fact(0, 1))))
        assert formula_to_dnf(phi, (2,)) == ()

    def test_duplicates_removed(self):
        phi = Or((Atom(Fact(0, 1)), Atom(Fact(0, 1))))
        assert formula_to_dnf(phi, (2,)) == ((Fact(0, 1),),)

    def test_limit_guard(self):
        # conjunction of n disjunctions blows up to 2^n conjuncts
        sizes = tuple(2 for _ in range(16))
        phi = And(
            tuple(Or((Atom(Fact(i, 0)), Atom(Fact(i, 1)))) for i in range(16))
        )
        with pytest.raises(DnfLimitError):
            formula_to_dnf(phi, sizes, limit=4096)

    def test_equivalence_exhaustive(self):
        rng = random.Random(99)
        sizes = (2, 3, 2, 2)

        def random_formula(depth):
            kind = rng.randrange(4 if depth > 0 else 1)
            if kind == 0:
                v = rng.randrange(len(sizes))
                return Atom(Fact(v, rng.randrange(sizes[v])))
            if kind == 1:
                return Not(random_formula(depth - 1))
            children = tuple(random_formula(depth - 1) for _ in range(rng.randint(0, 3)))
            return And(children) if kind == 2 else Or(children)

        for _ in range(60):
            phi = random_formula(3)
            dnf = formula_to_dnf(phi, sizes)
            as_formula = Or(tuple(And(tuple(Atom(f) for f in conj)) for conj in dnf))
            for state in itertools.product(*(range(s) for s in sizes)):
                assert eval_formula(state, phi) == eval_formula(state, as_formula)
            for conj in dnf:
                assert len({f.var for f in conj}) == len(conj)


class TestActionTree:
    def test_repeated_nondeterministic_action_rejected(self, one_shot_task):
        inner = ActionTree.act(0, [ActionTree.fail(), ActionTree.stop()])
        tree = ActionTree.act(0, [inner, ActionTree.stop()])
        with pytest.raises(ModelError, match="repeated"):
            check_action_tree(one_shot_task, tree)

    def test_wrong_child_count_rejected(self, one_shot_task):
        tree = ActionTree.act(0, [ActionTree.stop()])
        with pytest.raises(ModelError, match="children"):
            check_action_tree(one_shot_task, tree)

    def test_valid_tree_accepted(self, one_shot_task, cq_task, cq_plan):
        check_action_tree(
            one_shot_task,
            ActionTree.act(0, [ActionTree.fail(), ActionTree.stop()]),
        )
        check_action_tree(cq_task, cq_plan)

    def test_repetition_across_branches_allowed(self, two_checks_task):
        # the same nondeterministic action on separate paths is fine
        leaf = ActionTree.act(1, [ActionTree.stop(), ActionTree.fail()])
        other = ActionTree.act(1, [ActionTree.stop(), ActionTree.fail()])
        tree = ActionTree.act(0, [leaf, other])
        check_action_tree(two_checks_task, tree)


class TestValidation:
    def test_duplicate_domain_values_rejected(self):
        with pytest.raises(ModelError, match="duplicate"):
            Variable("x", ("a", "a"), "a")

    def test_initial_not_in_domain_rejected(self):
        with pytest.raises(ModelError, match="initial"):
            Variable("x", ("a", "b"), "c")

    def test_outcome_assigning_variable_twice_rejected(self):
        with pytest.raises(ModelError, match="twice"):
            Action("a", And(()), ((Fact(0, 0), Fact(0, 1)),))

    def test_goal_referencing_unknown_variable_rejected(self):
        v = Variable("x", ("a", "b"), "a")
        a = Action("a", And(()), ((Fact(0, 1),),))
        with pytest.raises(ModelError, match="unknown variable"):
            PlanningTask((v,), (a,), (0,), (Fact(3, 0),))
