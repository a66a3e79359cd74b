"""Grounded action schemas, rule generalization, PDDL text, and planning.

Actions observed through pre/post observations become precondition/effect
schemas; rule sets from several demonstrations are generalized by cancelling
opposite-polarity contexts and lifting differing attributes; problems are
solved by exhaustive breadth-first search honoring somewhere-after ordering
constraints, and both domain and problem round-trip through PDDL text.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, replace

from .core import flip_delta, get_constraint
from .errors import (InconsistentDemos, NoEffectObserved, NoPlan,
                     UnknownPrimitive)
from .perception import diff_object
from .world import ObjectSymbol, Pose2, TutorOp, World, apply_operation

# --- data model ------------------------------------------------------------------

GroundAtom = tuple  # (predicate name, (arg, ...))


@dataclass(frozen=True)
class Literal:
    name: str
    args: tuple[str, ...]
    positive: bool = True

    def negate(self) -> "Literal":
        return replace(self, positive=not self.positive)

    def atom(self) -> GroundAtom:
        return (self.name, self.args)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]         # (?var, type)
    preconditions: tuple[Literal, ...]
    effects: tuple[Literal, ...]

    def __post_init__(self):
        if not self.effects:
            raise ValueError(f"action {self.name}: effects must be non-empty")
        for lits in (self.preconditions, self.effects):
            atoms = [(l.name, l.args) for l in lits]
            for a in set(atoms):
                pols = {l.positive for l in lits if (l.name, l.args) == a}
                if len(pols) == 2:
                    raise ValueError(
                        f"action {self.name}: {a} appears with both polarities")


@dataclass(frozen=True)
class OrderingConstraint:
    later: GroundAtom
    earlier: GroundAtom

    def __post_init__(self):
        if self.later == self.earlier:
            raise ValueError("ordering constraint must relate distinct atoms")


@dataclass(frozen=True)
class PlanningProblem:
    name: str
    domain_name: str
    objects: tuple[tuple[str, str], ...]        # (name, type)
    init: frozenset                              # of GroundAtom
    goal: tuple[Literal, ...]
    constraints: tuple[OrderingConstraint, ...] = ()


# --- grounding from observations ----------------------------------------------

def ground_action(name: str, pre_obs, post_obs, landmarks,
                  object_type: str = "block") -> ActionSchema:
    """Derive a lifted schema from one executed action's observation pair."""
    diff = diff_object(pre_obs, post_obs)
    symbol = ObjectSymbol("obj")
    c_pre, c_post = get_constraint(symbol, diff.source_pose, diff.dest_pose,
                                   landmarks)
    delta = flip_delta(c_pre, c_post)
    if not delta:
        raise NoEffectObserved(f"{name}: no predicate changed truth value")
    var = "?b"

    def lift(args):
        return tuple(var if a == symbol.name else a for a in args)

    pre_by_key = {(p.name, p.args): p.value for p in c_pre}
    preconditions = tuple(sorted(
        (Literal(n, lift(a), v) for (n, a), v in pre_by_key.items()),
        key=lambda l: (l.name, l.args)))
    effects = tuple(sorted(
        (Literal(n, lift(a), after) for (n, a), after in delta),
        key=lambda l: (l.name, l.args)))
    return ActionSchema(name=name, params=((var, object_type),),
                        preconditions=preconditions, effects=effects)


# --- rule generalization ---------------------------------------------------------

@dataclass(frozen=True)
class ContextLiteral:
    predicate: str
    subject_attrs: tuple[tuple[str, str], ...]
    value: bool


@dataclass(frozen=True)
class Rule:
    """One observed regularity: subject reaches `consequent` under a context."""
    action: str
    subject_attrs: tuple[tuple[str, str], ...]
    consequent: tuple[str, bool]                # (predicate, value after)
    context: tuple[ContextLiteral, ...] = ()


def extract_rules(model) -> list[Rule]:
    """Rules implied by one demonstration, one per recorded operation."""
    rules = []
    for op in model.ops:
        delta = flip_delta(op.c_pre, op.c_post)
        if not delta:
            continue
        (pname, _args), after = delta[0]
        ctx = []
        for _oid, attrs, preds in op.context_pre:
            for p in preds:
                ctx.append(ContextLiteral(p.name, attrs, p.value))
        rules.append(Rule(action=op.action, subject_attrs=op.symbol.attrs,
                          consequent=(pname, after), context=tuple(sorted(
                              ctx, key=lambda c: (c.predicate, c.subject_attrs,
                                                  c.value)))))
    return rules


def generalize_rules(demo_rule_sets) -> list[ActionSchema]:
    """Minimal schema set consistent with every demonstration.

    Context literals seen with both polarities across demos cancel; attribute
    bindings that differ across rules of identical form are lifted away.
    """
    rules = [r for demo in demo_rule_sets for r in demo]
    if not rules:
        raise InconsistentDemos("no rules to generalize")
    # Opposite-polarity contexts cancel per (predicate, context-subject).
    polarity: dict = {}
    for r in rules:
        for c in r.context:
            polarity.setdefault((c.predicate, c.subject_attrs), set()).add(c.value)
    cancelled = {k for k, v in polarity.items() if len(v) == 2}
    reduced = [replace(r, context=tuple(
        c for c in r.context if (c.predicate, c.subject_attrs) not in cancelled))
        for r in rules]

    for a, b in itertools.combinations(reduced, 2):
        if (a.subject_attrs == b.subject_attrs and a.context == b.context
                and a.consequent[0] == b.consequent[0]
                and a.consequent[1] != b.consequent[1]):
            raise InconsistentDemos(
                f"{a.subject_attrs} maps to both {a.consequent} and {b.consequent}")

    # Lift attributes whose values differ across rules of identical form.
    grouped: dict = {}
    for r in reduced:
        grouped.setdefault((r.action, r.consequent, r.context), []).append(r)
    schemas = []
    for (action, consequent, context), group in sorted(
            grouped.items(), key=lambda kv: kv[0][0]):
        kept: dict = {}
        for key in {k for r in group for k, _v in r.subject_attrs}:
            vals = {dict(r.subject_attrs).get(key) for r in group}
            if len(vals) == 1:
                kept[key] = vals.pop()
        pname, after = consequent
        pre = [Literal(pname, ("?b",), not after)]
        params = [("?b", "block")]
        for k, v in sorted(kept.items()):
            pre.append(Literal(f"{k}-{v}", ("?b",), True))
        for i, c in enumerate(context):
            cv = f"?c{i + 1}"
            params.append((cv, "block"))
            pre.append(Literal(c.predicate, (cv,), c.value))
            for k, v in sorted(c.subject_attrs):
                pre.append(Literal(f"{k}-{v}", (cv,), True))
        schemas.append(ActionSchema(
            name=action, params=tuple(params),
            preconditions=tuple(pre),
            effects=(Literal(pname, ("?b",), after),)))
    return schemas


# --- PDDL text --------------------------------------------------------------------

def _lit_text(lit: Literal) -> str:
    inner = f"({lit.name}{''.join(' ' + a for a in lit.args)})"
    return inner if lit.positive else f"(not {inner})"


def _and_block(lits) -> str:
    if len(lits) == 1:
        return _lit_text(lits[0])
    return "(and " + " ".join(_lit_text(l) for l in lits) + ")"


def emit_pddl(domain, problem: PlanningProblem,
              domain_name: str | None = None) -> tuple[str, str]:
    """Render a schema list and a problem as PDDL 3.0 text (round-trippable)."""
    domain_name = domain_name or problem.domain_name
    preds = {}
    types = set()
    for schema in domain:
        types.update(t for _v, t in schema.params)
        var_types = dict(schema.params)
        for lit in schema.preconditions + schema.effects:
            sig = tuple(var_types.get(a, "object") for a in lit.args)
            preds.setdefault((lit.name, len(lit.args)), sig)
    for name, _t in problem.objects:
        pass
    lines = [f"(define (domain {domain_name})",
             "  (:requirements :strips :typing :constraints)"]
    if types:
        lines.append("  (:types " + " ".join(sorted(types)) + ")")
    pred_row = []
    for (name, arity), sig in sorted(preds.items()):
        args = " ".join(f"?x{i + 1} - {sig[i] if i < len(sig) else 'object'}"
                        for i in range(arity))
        pred_row.append(f"({name}{' ' + args if args else ''})")
    lines.append("  (:predicates " + " ".join(pred_row) + ")")
    for schema in domain:
        pars = " ".join(f"{v} - {t}" for v, t in schema.params)
        lines.append(f"  (:action {schema.name}")
        lines.append(f"    :parameters ({pars})")
        if schema.preconditions:
            lines.append(f"    :precondition {_and_block(schema.preconditions)}")
        lines.append(f"    :effect {_and_block(schema.effects)})")
    domain_text = "\n".join(lines) + ")\n"

    plines = [f"(define (problem {problem.name})",
              f"  (:domain {domain_name})"]
    if problem.objects:
        by_type: dict = {}
        for name, t in problem.objects:
            by_type.setdefault(t, []).append(name)
        row = " ".join(f"{' '.join(names)} - {t}"
                       for t, names in sorted(by_type.items()))
        plines.append(f"  (:objects {row})")
    init_row = " ".join(f"({n}{''.join(' ' + a for a in args)})"
                        for n, args in sorted(problem.init))
    plines.append(f"  (:init {init_row})")
    plines.append(f"  (:goal {_and_block(problem.goal)})")
    if problem.constraints:
        crow = " ".join(
            "(somewhere-after "
            f"({c.later[0]}{''.join(' ' + a for a in c.later[1])}) "
            f"({c.earlier[0]}{''.join(' ' + a for a in c.earlier[1])}))"
            for c in problem.constraints)
        plines.append(f"  (:constraints (and {crow}))")
    problem_text = "\n".join(plines) + ")\n"
    return domain_text, problem_text


def _tokenize(text: str):
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _read(tokens):
    tok = tokens.popleft()
    if tok == "(":
        out = []
        while tokens[0] != ")":
            out.append(_read(tokens))
        tokens.popleft()
        return out
    return tok


def _parse_typed_list(items):
    """PDDL typed list: name... - type name... - type."""
    out = []
    pending = []
    it = iter(items)
    for tok in it:
        if tok == "-":
            t = next(it)
            out.extend((n, t) for n in pending)
            pending = []
        else:
            pending.append(tok)
    out.extend((n, "object") for n in pending)
    return out


def _parse_literal(expr) -> Literal:
    if expr[0] == "not":
        inner = _parse_literal(expr[1])
        return inner.negate()
    return Literal(expr[0], tuple(expr[1:]), True)


def _parse_condition(expr) -> tuple[Literal, ...]:
    if not expr:
        return ()
    if expr[0] == "and":
        return tuple(_parse_literal(e) for e in expr[1:])
    return (_parse_literal(expr),)


def parse_domain(text: str) -> tuple[str, list[ActionSchema]]:
    tree = _read(deque(_tokenize(text)))
    assert tree[0] == "define"
    name = tree[1][1]
    schemas = []
    for section in tree[2:]:
        if section[0] == ":action":
            aname = section[1]
            body = dict(zip(section[2::2], section[3::2]))
            params = tuple(_parse_typed_list(body.get(":parameters", [])))
            pre = _parse_condition(body.get(":precondition", []))
            eff = _parse_condition(body.get(":effect", []))
            schemas.append(ActionSchema(name=aname, params=params,
                                        preconditions=pre, effects=eff))
    return name, schemas


def parse_problem(text: str) -> PlanningProblem:
    tree = _read(deque(_tokenize(text)))
    assert tree[0] == "define"
    name = tree[1][1]
    domain_name = ""
    objects: tuple = ()
    init: frozenset = frozenset()
    goal: tuple = ()
    constraints: list = []
    for section in tree[2:]:
        head = section[0]
        if head == ":domain":
            domain_name = section[1]
        elif head == ":objects":
            objects = tuple(_parse_typed_list(section[1:]))
        elif head == ":init":
            init = frozenset((e[0], tuple(e[1:])) for e in section[1:])
        elif head == ":goal":
            goal = _parse_condition(section[1])
        elif head == ":constraints":
            body = section[1]
            entries = body[1:] if body[0] == "and" else [body]
            for e in entries:
                assert e[0] == "somewhere-after"
                later = (e[1][0], tuple(e[1][1:]))
                earlier = (e[2][0], tuple(e[2][1:]))
                constraints.append(OrderingConstraint(later, earlier))
    return PlanningProblem(name=name, domain_name=domain_name, objects=objects,
                           init=init, goal=goal,
                           constraints=tuple(constraints))


# --- planning -----------------------------------------------------------------------

@dataclass(frozen=True)
class GroundAction:
    name: str
    args: tuple[str, ...]
    pre_pos: frozenset
    pre_neg: frozenset
    adds: frozenset
    dels: frozenset

    def key(self):
        return (self.name, self.args)


def ground_schemas(domain, objects) -> list[GroundAction]:
    by_type: dict = {}
    for name, t in objects:
        by_type.setdefault(t, []).append(name)
    out = []
    for schema in domain:
        pools = [by_type.get(t, []) for _v, t in schema.params]
        var_names = [v for v, _t in schema.params]
        for combo in itertools.product(*pools):
            if len(set(combo)) != len(combo):
                continue
            bind = dict(zip(var_names, combo))

            def g(lit: Literal) -> GroundAtom:
                return (lit.name, tuple(bind.get(a, a) for a in lit.args))

            out.append(GroundAction(
                name=schema.name, args=tuple(combo),
                pre_pos=frozenset(g(l) for l in schema.preconditions if l.positive),
                pre_neg=frozenset(g(l) for l in schema.preconditions if not l.positive),
                adds=frozenset(g(l) for l in schema.effects if l.positive),
                dels=frozenset(g(l) for l in schema.effects if not l.positive)))
    out.sort(key=lambda a: a.key())
    return out


def _goal_holds(state: frozenset, goal) -> bool:
    return all((l.atom() in state) == l.positive for l in goal)


def plan(problem: PlanningProblem, domain) -> list[tuple[str, tuple[str, ...]]]:
    """Shortest valid plan by breadth-first search over ground states.

    A plan is valid when the goal holds at the end and, for every ordering
    constraint, the first step at which `later` holds is not earlier than the
    first step at which `earlier` holds.  Ties break lexicographically by
    action name, then arguments.
    """
    actions = ground_schemas(domain, problem.objects)
    watched = frozenset(c.later for c in problem.constraints) | \
        frozenset(c.earlier for c in problem.constraints)
    init_achieved = frozenset(a for a in watched if a in problem.init)

    def violates(achieved: frozenset) -> bool:
        return any(c.later in achieved and c.earlier not in achieved
                   for c in problem.constraints)

    if violates(init_achieved):
        raise NoPlan("ordering constraints are violated by the initial state")
    start = (problem.init, init_achieved)
    if _goal_holds(problem.init, problem.goal):
        return []
    seen = {start}
    queue = deque([(start, [])])
    while queue:
        (state, achieved), path = queue.popleft()
        for act in actions:
            if not act.pre_pos <= state or act.pre_neg & state:
                continue
            nstate = frozenset((state - act.dels) | act.adds)
            nachieved = achieved | (watched & nstate)
            if violates(nachieved):
                continue
            node = (nstate, nachieved)
            if node in seen:
                continue
            npath = path + [act.key()]
            if _goal_holds(nstate, problem.goal):
                return npath
            seen.add(node)
            queue.append((node, npath))
    raise NoPlan("search exhausted the reachable state space")


def validate_plan(problem: PlanningProblem, domain, steps) -> bool:
    """Independent stepwise replay of a plan against the schema semantics."""
    actions = {a.key(): a for a in ground_schemas(domain, problem.objects)}
    state = problem.init
    achieved_at: dict = {}
    for a in frozenset(c.later for c in problem.constraints) | \
            frozenset(c.earlier for c in problem.constraints):
        if a in state:
            achieved_at[a] = 0
    for i, key in enumerate(steps, start=1):
        act = actions.get(tuple(key) if not isinstance(key, tuple) else key)
        if act is None:
            return False
        if not act.pre_pos <= state or act.pre_neg & state:
            return False
        state = frozenset((state - act.dels) | act.adds)
        for c in problem.constraints:
            for atom in (c.later, c.earlier):
                if atom in state and atom not in achieved_at:
                    achieved_at[atom] = i
    if not _goal_holds(state, problem.goal):
        return False
    for c in problem.constraints:
        if c.later not in achieved_at:
            continue   # never achieved: vacuously ordered
        if c.earlier not in achieved_at:
            return False
        if achieved_at[c.later] < achieved_at[c.earlier]:
            return False
    return True


# --- plan execution against the simulated world -------------------------------------

def execute_plan(steps, primitive_library: dict, world: World,
                 action_semantics: dict | None = None) -> list[World]:
    """Run a symbolic plan through motion primitives on the world.

    Each step rolls the named primitive toward its target object, then applies
    the corresponding world operation.  Returns the world trace, initial state
    included.
    """
    semantics = {"push": "push", "pull": "pull"}
    if action_semantics:
        semantics.update(action_semantics)
    trace = [world]
    hand = (world.width_px / 2.0, float(world.height_px - 10))
    for name, args in steps:
        if name not in primitive_library:
            raise UnknownPrimitive(f"no primitive registered for action {name!r}")
        prim = primitive_library[name]
        target = world.object_by_id(args[0])
        path = prim.rollout(hand, (target.pose.x, target.pose.y), dt=0.01)
        hand = tuple(path[-1])
        op = TutorOp(action=semantics.get(name, "pick-and-place"),
                     pick=Pose2(target.pose.x, target.pose.y))
        world = apply_operation(world, op)
        trace.append(world)
    return trace
