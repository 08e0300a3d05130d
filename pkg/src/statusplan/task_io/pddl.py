"""Parser and printer for a STRIPS-with-oneof PDDL subset.

Supported: typed or untyped STRIPS actions, quantifier-free and/or/not
precondition formulas over predicate atoms, effects that are conjunctions of
literals optionally wrapped in a single top-level ``(oneof ...)`` whose
alternatives become the action's outcomes.  Grounding instantiates action
schemas by exhaustive typed substitution; every ground atom appearing in the
instance becomes a binary-domain variable, and negative effect literals
assign its false value.

Out of subset (rejected by name): quantifiers, conditional effects, numeric
fluents, derived predicates, nested or non-top-level ``oneof``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from statusplan.model import (
    Action,
    And,
    Atom,
    Fact,
    Formula,
    Not,
    Or,
    PlanningTask,
    Variable,
)

FALSE_VALUE = "false"
TRUE_VALUE = "true"
BINARY_DOMAIN = (FALSE_VALUE, TRUE_VALUE)


class PddlError(ValueError):
    pass


class PddlSyntaxError(PddlError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnsupportedPddlError(PddlError):
    def __init__(self, construct: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unsupported construct: {construct}{where}")
        self.construct = construct


# --------------------------------------------------------------------------
# s-expression reading


@dataclass(frozen=True)
class Token:
    text: str
    line: int
    column: int


class SExpr(list):
    """A parenthesized expression; carries the position of its opener."""

    def __init__(self, items, line: int, column: int):
        super().__init__(items)
        self.line = line
        self.column = column


def _tokenize(text: str):
    line = 1
    col = 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            yield Token(ch, line, col)
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < n and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            yield Token(text[start:i].lower(), line, start_col)


def _read_sexprs(text: str) -> list:
    stack: list[list] = [[]]
    opens: list[Token] = []
    for tok in _tokenize(text):
        if tok.text == "(":
            stack.append([])
            opens.append(tok)
        elif tok.text == ")":
            if len(stack) == 1:
                raise PddlSyntaxError("unbalanced ')'", tok.line, tok.column)
            items = stack.pop()
            opener = opens.pop()
            stack[-1].append(SExpr(items, opener.line, opener.column))
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise PddlSyntaxError("unbalanced '('", opens[-1].line, opens[-1].column)
    return stack[0]


def _head(expr) -> str:
    if isinstance(expr, SExpr) and expr and isinstance(expr[0], Token):
        return expr[0].text
    return ""


def _pos(expr) -> tuple[int, int]:
    return expr.line, expr.column


def _arg(section, i: int):
    if len(section) <= i:
        raise PddlSyntaxError(f"truncated {_head(section)!r} section", *_pos(section))
    return section[i]


# --------------------------------------------------------------------------
# domain / problem structure


def _parse_typed_list(items) -> list[tuple[str, str]]:
    """Parse ``a b - t c - object`` into (name, type) pairs; untyped entries
    default to type ``object``."""
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    it = iter(items)
    for tok in it:
        if isinstance(tok, SExpr):
            raise UnsupportedPddlError("(either ...) types", tok.line)
        if tok.text == "-":
            try:
                type_tok = next(it)
            except StopIteration:
                raise PddlSyntaxError("dangling '-' in typed list", tok.line, tok.column)
            if isinstance(type_tok, SExpr):
                raise UnsupportedPddlError("(either ...) types", type_tok.line)
            out.extend((name, type_tok.text) for name in pending)
            pending = []
        else:
            pending.append(tok.text)
    out.extend((name, "object") for name in pending)
    return out


@dataclass
class _Schema:
    name: str
    params: list[tuple[str, str]]
    precondition: object  # raw s-expression (or None for empty)
    effect: object


@dataclass
class _Domain:
    name: str
    types: dict  # type name -> parent
    predicates: dict  # name -> parameter types
    constants: list[tuple[str, str]]
    schemas: list[_Schema]


_UNSUPPORTED_HEADS = {
    "forall": "quantified formula (forall)",
    "exists": "quantified formula (exists)",
    "when": "conditional effect (when)",
    "increase": "numeric fluent (increase)",
    "decrease": "numeric fluent (decrease)",
    "assign": "numeric fluent (assign)",
    "scale-up": "numeric fluent (scale-up)",
    "scale-down": "numeric fluent (scale-down)",
    "imply": "implication (imply)",
    "=": "equality atom (=)",
}


def _check_supported(expr, context: str) -> None:
    head = _head(expr)
    if head in _UNSUPPORTED_HEADS:
        raise UnsupportedPddlError(f"{_UNSUPPORTED_HEADS[head]} in {context}", expr.line)


def _parse_domain(expr) -> _Domain:
    if _head(expr) != "define":
        raise PddlSyntaxError("expected (define (domain ...))", *_pos(expr))
    name = ""
    types: dict = {"object": None}
    predicates: dict = {}
    constants: list[tuple[str, str]] = []
    schemas: list[_Schema] = []
    for section in expr[1:]:
        head = _head(section)
        if head == "domain":
            name = _arg(section, 1).text
        elif head == ":requirements":
            continue
        elif head == ":types":
            for tname, parent in _parse_typed_list(section[1:]):
                types[tname] = parent
                types.setdefault(parent, None)
        elif head == ":constants":
            constants.extend(_parse_typed_list(section[1:]))
        elif head == ":predicates":
            for p in section[1:]:
                if not isinstance(p, SExpr) or not p:
                    raise PddlSyntaxError("malformed predicate declaration", *_pos(p))
                pname = p[0].text
                args = _parse_typed_list(p[1:])
                predicates[pname] = [ptype for _, ptype in args]
        elif head == ":action":
            schemas.append(_parse_action(section))
        elif head in (":functions", ":derived"):
            raise UnsupportedPddlError(f"{head} section", section.line)
        else:
            raise PddlSyntaxError(f"unexpected section {head!r}", *_pos(section))
    return _Domain(name, types, predicates, constants, schemas)


def _parse_action(section) -> _Schema:
    name = _arg(section, 1).text
    params: list[tuple[str, str]] = []
    precondition = None
    effect = None
    i = 2
    while i < len(section):
        key = section[i]
        if not isinstance(key, Token) or not key.text.startswith(":"):
            raise PddlSyntaxError("expected :parameters/:precondition/:effect", *_pos(key))
        if i + 1 >= len(section):
            raise PddlSyntaxError(f"missing value after {key.text}", key.line, key.column)
        value = section[i + 1]
        if key.text == ":parameters":
            params = _parse_typed_list(value)
        elif key.text == ":precondition":
            precondition = value
        elif key.text == ":effect":
            effect = value
        else:
            raise UnsupportedPddlError(f"{key.text} in action", key.line)
        i += 2
    if effect is None:
        raise PddlSyntaxError(f"action {name!r} has no :effect", *_pos(section))
    return _Schema(name, params, precondition, effect)


@dataclass
class _Problem:
    name: str
    domain: str
    objects: list[tuple[str, str]]
    init: list[tuple[str, ...]]
    goal: object


def _parse_problem(expr) -> _Problem:
    if _head(expr) != "define":
        raise PddlSyntaxError("expected (define (problem ...))", *_pos(expr))
    name = ""
    domain = ""
    objects: list[tuple[str, str]] = []
    init: list[tuple[str, ...]] = []
    goal = None
    for section in expr[1:]:
        head = _head(section)
        if head == "problem":
            name = _arg(section, 1).text
        elif head == ":domain":
            domain = _arg(section, 1).text
        elif head == ":objects":
            objects.extend(_parse_typed_list(section[1:]))
        elif head == ":init":
            for atom in section[1:]:
                _check_supported(atom, ":init")
                if _head(atom) == "not":
                    continue  # closed world: negative init literals are implied
                init.append(tuple(t.text for t in atom))
        elif head == ":goal":
            goal = _arg(section, 1)
        elif head == ":metric":
            raise UnsupportedPddlError(":metric section", section.line)
        else:
            raise PddlSyntaxError(f"unexpected section {head!r}", *_pos(section))
    if goal is None:
        raise PddlSyntaxError("problem has no :goal", *_pos(expr))
    return _Problem(name, domain, objects, init, goal)


# --------------------------------------------------------------------------
# grounding


def _type_matches(types: dict, obj_type: str, wanted: str) -> bool:
    t = obj_type
    while t is not None:
        if t == wanted:
            return True
        t = types.get(t)
    return wanted == "object"


def _ground_atom(expr, binding: dict, context: str) -> str:
    _check_supported(expr, context)
    if not isinstance(expr, SExpr) or not expr:
        raise PddlSyntaxError(f"malformed atom in {context}", *_pos(expr))
    parts = []
    for tok in expr:
        if isinstance(tok, SExpr):
            raise PddlSyntaxError("nested expression in atom", tok.line, tok.column)
        text = tok.text
        if text.startswith("?"):
            if text not in binding:
                raise PddlSyntaxError(f"unbound parameter {text}", tok.line, tok.column)
            text = binding[text]
        parts.append(text)
    return " ".join(parts)


def _ground_formula(expr, binding: dict, context: str):
    """Return a formula whose atoms are ground atom names (interned later)."""
    head = _head(expr)
    _check_supported(expr, context)
    if head == "and":
        return And(tuple(_ground_formula(c, binding, context) for c in expr[1:]))
    if head == "or":
        return Or(tuple(_ground_formula(c, binding, context) for c in expr[1:]))
    if head == "not":
        if len(expr) != 2:
            raise PddlSyntaxError("(not ...) takes one argument", *_pos(expr))
        return Not(_ground_formula(expr[1], binding, context))
    if head == "oneof":
        raise UnsupportedPddlError(f"oneof in {context}", expr.line)
    return Atom(Fact(_ground_atom(expr, binding, context), TRUE_VALUE))


def _effect_literals(expr, binding: dict) -> list[tuple[str, bool]]:
    """Flatten a conjunction of literals into (atom, positive) pairs."""
    head = _head(expr)
    _check_supported(expr, "effect")
    if head == "and":
        out = []
        for c in expr[1:]:
            out.extend(_effect_literals(c, binding))
        return out
    if head == "not":
        if len(expr) != 2 or _head(expr[1]) in ("and", "or", "not", "oneof"):
            raise PddlSyntaxError("effect negation must wrap an atom", *_pos(expr))
        return [(_ground_atom(expr[1], binding, "effect"), False)]
    if head == "oneof":
        raise UnsupportedPddlError("nested oneof in effect", expr.line)
    if head == "or":
        raise UnsupportedPddlError("disjunctive effect (or)", expr.line)
    return [(_ground_atom(expr, binding, "effect"), True)]


def parse_pddl(domain_text: str, problem_text: str) -> PlanningTask:
    """Parse and ground a domain/problem pair into a planning task."""
    domain_exprs = _read_sexprs(domain_text)
    problem_exprs = _read_sexprs(problem_text)
    if not domain_exprs:
        raise PddlSyntaxError("empty domain", 1, 1)
    if not problem_exprs:
        raise PddlSyntaxError("empty problem", 1, 1)
    domain = _parse_domain(domain_exprs[0])
    problem = _parse_problem(problem_exprs[0])

    all_objects = domain.constants + problem.objects

    def candidates(wanted: str) -> list[str]:
        return [
            o
            for o, t in all_objects
            if _type_matches(domain.types, t, wanted)
        ]

    # Ground all action schemas by exhaustive typed substitution.
    ground_actions: list[tuple[str, Formula, tuple]] = []
    for schema in domain.schemas:
        pools = [candidates(ptype) for _, ptype in schema.params]
        for combo in product(*pools):
            binding = {pname: obj for (pname, _), obj in zip(schema.params, combo)}
            gname = " ".join((schema.name,) + combo) if combo else schema.name
            if schema.precondition is None or (
                isinstance(schema.precondition, SExpr) and not schema.precondition
            ):
                pre: Formula = And(())
            else:
                pre = _ground_formula(schema.precondition, binding, "precondition")
            eff = schema.effect
            if _head(eff) == "oneof":
                outcomes = [_effect_literals(alt, binding) for alt in eff[1:]]
                if not outcomes:
                    raise PddlSyntaxError("(oneof) needs alternatives", *_pos(eff))
            else:
                outcomes = [_effect_literals(eff, binding)]
            ground_actions.append((gname, pre, tuple(outcomes)))

    # Binary-domain variables: every exhaustive grounding of the declared
    # predicates, plus any atom mentioned in init, goal, or actions.
    atom_names: set[str] = set()
    for pname, ptypes in domain.predicates.items():
        for combo in product(*(candidates(t) for t in ptypes)):
            atom_names.add(" ".join((pname,) + combo))
    for init_atom in problem.init:
        atom_names.add(" ".join(init_atom))
    goal_formula = _ground_formula(problem.goal, {}, "goal")
    for node in [goal_formula]:
        stack = [node]
        while stack:
            cur = stack.pop()
            if isinstance(cur, Atom):
                atom_names.add(cur.fact.var)
            elif isinstance(cur, Not):
                stack.append(cur.child)
            else:
                stack.extend(cur.children)
    for _, pre, outcomes in ground_actions:
        stack = [pre]
        while stack:
            cur = stack.pop()
            if isinstance(cur, Atom):
                atom_names.add(cur.fact.var)
            elif isinstance(cur, Not):
                stack.append(cur.child)
            else:
                stack.extend(cur.children)
        for outcome in outcomes:
            for atom, _pos_flag in outcome:
                atom_names.add(atom)

    init_true = {" ".join(a) for a in problem.init}
    names = sorted(atom_names)
    variables = tuple(
        Variable(n, BINARY_DOMAIN, TRUE_VALUE if n in init_true else FALSE_VALUE)
        for n in names
    )
    var_index = {n: i for i, n in enumerate(names)}

    def intern_formula(phi: Formula) -> Formula:
        if isinstance(phi, Atom):
            return Atom(Fact(var_index[phi.fact.var], 1))
        if isinstance(phi, Not):
            return Not(intern_formula(phi.child))
        if isinstance(phi, And):
            return And(tuple(intern_formula(c) for c in phi.children))
        return Or(tuple(intern_formula(c) for c in phi.children))

    actions = []
    for gname, pre, outcomes in ground_actions:
        interned_outcomes = []
        for outcome in outcomes:
            facts = {}
            for atom, positive in outcome:
                facts[var_index[atom]] = 1 if positive else 0
            interned_outcomes.append(
                tuple(Fact(v, val) for v, val in sorted(facts.items()))
            )
        actions.append(Action(gname, intern_formula(pre), tuple(interned_outcomes)))

    # Goal must be a conjunction of literals (negation only over binary atoms).
    goal_facts = []

    def flatten_goal(phi: Formula) -> None:
        if isinstance(phi, Atom):
            goal_facts.append(Fact(var_index[phi.fact.var], 1))
        elif isinstance(phi, Not) and isinstance(phi.child, Atom):
            goal_facts.append(Fact(var_index[phi.child.fact.var], 0))
        elif isinstance(phi, And):
            for c in phi.children:
                flatten_goal(c)
        else:
            raise UnsupportedPddlError("non-conjunctive goal")

    flatten_goal(goal_formula)

    initial = tuple(1 if n in init_true else 0 for n in names)
    return PlanningTask(variables, tuple(actions), initial, tuple(goal_facts))


def parse_pddl_files(domain_path, problem_path) -> PlanningTask:
    with open(domain_path, encoding="utf-8") as fh:
        domain_text = fh.read()
    with open(problem_path, encoding="utf-8") as fh:
        problem_text = fh.read()
    return parse_pddl(domain_text, problem_text)


# --------------------------------------------------------------------------
# printing


def _safe(name: str) -> str:
    return name.replace(" ", "_")


def _formula_to_pddl(task: PlanningTask, phi: Formula) -> str:
    if isinstance(phi, Atom):
        var = task.variables[phi.fact.var]
        atom = f"({_safe(var.name)})"
        if var.domain[phi.fact.value] == TRUE_VALUE:
            return atom
        return f"(not {atom})"
    if isinstance(phi, Not):
        return f"(not {_formula_to_pddl(task, phi.child)})"
    if isinstance(phi, And):
        return "(and " + " ".join(_formula_to_pddl(task, c) for c in phi.children) + ")"
    if isinstance(phi, Or):
        return "(or " + " ".join(_formula_to_pddl(task, c) for c in phi.children) + ")"
    raise PddlError(f"not a formula node: {phi!r}")


def print_pddl(task: PlanningTask, name: str = "task") -> tuple[str, str]:
    """Render a binary-domain task as a (domain, problem) pair of PDDL texts.

    Every variable must have the binary domain used by :func:`parse_pddl`;
    variables become nullary predicates and actions parameterless schemas,
    so parsing the output reproduces the task up to reordering.
    """
    for v in task.variables:
        if v.domain != BINARY_DOMAIN:
            raise PddlError(
                f"variable {v.name!r} is not binary; only binary-domain tasks print"
            )
    lines = [f"(define (domain {_safe(name)})"]
    lines.append("  (:requirements :strips)")
    preds = " ".join(f"({_safe(v.name)})" for v in task.variables)
    lines.append(f"  (:predicates {preds})")
    for a in task.actions:
        lines.append(f"  (:action {_safe(a.name)}")
        lines.append("    :parameters ()")
        lines.append(f"    :precondition {_formula_to_pddl(task, a.precondition)}")
        if a.deterministic:
            eff = _outcome_to_pddl(task, a.outcomes[0])
        else:
            eff = (
                "(oneof "
                + " ".join(_outcome_to_pddl(task, o) for o in a.outcomes)
                + ")"
            )
        lines.append(f"    :effect {eff})")
    lines.append(")")
    domain_text = "\n".join(lines) + "\n"

    init_atoms = [
        f"({_safe(v.name)})"
        for i, v in enumerate(task.variables)
        if v.domain[task.initial[i]] == TRUE_VALUE
    ]
    goal_atoms = []
    for f in task.goal:
        var = task.variables[f.var]
        atom = f"({_safe(var.name)})"
        goal_atoms.append(atom if var.domain[f.value] == TRUE_VALUE else f"(not {atom})")
    problem_text = "\n".join(
        [
            f"(define (problem {_safe(name)}-1)",
            f"  (:domain {_safe(name)})",
            "  (:init " + " ".join(init_atoms) + ")",
            "  (:goal (and " + " ".join(goal_atoms) + "))",
            ")",
        ]
    ) + "\n"
    return domain_text, problem_text


def _outcome_to_pddl(task: PlanningTask, outcome) -> str:
    literals = []
    for f in outcome:
        var = task.variables[f.var]
        atom = f"({_safe(var.name)})"
        literals.append(atom if var.domain[f.value] == TRUE_VALUE else f"(not {atom})")
    if len(literals) == 1:
        return literals[0]
    return "(and " + " ".join(literals) + ")"
