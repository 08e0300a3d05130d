"""Process synthesis for business-object status models.

Plans strong or weak action trees over finite-domain tasks with
nondeterministic actions, and compiles the trees into BPMN-like process
graphs.
"""

from statusplan.model import (
    Action,
    ActionTree,
    And,
    Atom,
    Fact,
    Formula,
    ModelError,
    Not,
    Or,
    PlanningTask,
    SearchState,
    Variable,
    apply_outcome,
    eval_formula,
    formula_to_dnf,
    goal_satisfied,
    initial_search_state,
)

__all__ = [
    "Action",
    "ActionTree",
    "And",
    "Atom",
    "Fact",
    "Formula",
    "ModelError",
    "Not",
    "Or",
    "PlanningTask",
    "SearchState",
    "Variable",
    "apply_outcome",
    "eval_formula",
    "formula_to_dnf",
    "goal_satisfied",
    "initial_search_state",
]

__version__ = "0.1.0"
