import itertools

import numpy as np
import pytest

from vsl import scenarios, symbolic
from vsl.core import record_demonstration
from vsl.errors import (InconsistentDemos, NoEffectObserved, NoPlan,
                        UnknownPrimitive)
from vsl.perception import Frame, capture_observation
from vsl.symbolic import (ActionSchema, ContextLiteral, Literal,
                          OrderingConstraint, PlanningProblem, Rule,
                          emit_pddl, execute_plan, extract_rules,
                          generalize_rules, ground_action, parse_domain,
                          parse_problem, plan, validate_plan)
from vsl.world import Pose2, TutorOp, apply_operation, render

PUSH = ActionSchema("push", (("?b", "block"),),
                    (Literal("far", ("?b",), False),),
                    (Literal("far", ("?b",), True),))
PULL = ActionSchema("pull", (("?b", "block"),),
                    (Literal("far", ("?b",), True),),
                    (Literal("far", ("?b",), False),))


def _obs_pair_for(world, op):
    frame = Frame((world.width_px / 2, world.height_px / 2),
                  world.width_px, world.height_px)
    pre = capture_observation(render(world), frame, "pre", 1)
    post_world = apply_operation(world, op)
    post = capture_observation(render(post_world), frame, "post", 1)
    return pre, post


# --- grounding -----------------------------------------------------------------

def test_ground_push_matches_reference_schema(pushpull_fixture):
    world = pushpull_fixture.world
    green = world.object_by_id("Bgreen")
    pre, post = _obs_pair_for(world, TutorOp("push", pick=green.pose))
    schema = ground_action("push", pre, post, world.landmarks)
    assert schema == PUSH


def test_ground_pull_matches_reference_schema():
    fx = scenarios.pushpull(initial="far")
    world = fx.world
    green = world.object_by_id("Bgreen")
    pre, post = _obs_pair_for(world, TutorOp("pull", pick=green.pose))
    schema = ground_action("pull", pre, post, world.landmarks)
    assert schema == PULL


def test_ground_requires_effect(pushpull_fixture):
    world = pushpull_fixture.world
    green = world.object_by_id("Bgreen")
    op = TutorOp(pick=green.pose,
                 place=Pose2(green.pose.x + 70, green.pose.y))  # same side
    pre, post = _obs_pair_for(world, op)
    with pytest.raises(NoEffectObserved):
        ground_action("slide", pre, post, world.landmarks)


# --- rule generalization ----------------------------------------------------------

def _rule(color, value_after, ctx_color=None, ctx_far=None):
    ctx = ()
    if ctx_color is not None:
        ctx = (ContextLiteral("far", (("color", ctx_color),), ctx_far),)
    return Rule(action="pull" if not value_after else "push",
                subject_attrs=(("color", color),),
                consequent=("far", value_after), context=ctx)


def test_published_rule_set_generalizes_to_color_free_rule():
    demo1 = [_rule("green", False, "orange", True),
             _rule("orange", False, "green", False)]
    demo2 = [_rule("green", False, "orange", False)]
    demo3 = [_rule("orange", False, "green", True)]
    schemas = generalize_rules([demo1, demo2, demo3])
    assert len(schemas) == 1
    schema = schemas[0]
    assert schema.name == "pull"
    assert schema.params == (("?b", "block"),)
    assert schema.preconditions == (Literal("far", ("?b",), True),)
    assert schema.effects == (Literal("far", ("?b",), False),)


def test_single_demo_rule_kept_with_context():
    schemas = generalize_rules([[_rule("green", False, "orange", True)]])
    assert len(schemas) == 1
    pre = schemas[0].preconditions
    assert Literal("far", ("?c1",), True) in pre
    assert Literal("color-orange", ("?c1",), True) in pre
    assert Literal("color-green", ("?b",), True) in pre


def test_contradictory_demos_rejected():
    a = [_rule("green", False)]
    b = [Rule(action="pull", subject_attrs=(("color", "green"),),
              consequent=("far", True), context=())]
    with pytest.raises(InconsistentDemos):
        generalize_rules([a, b])


def test_rules_extracted_from_recorded_pushpull_demo(pushpull_fixture):
    world = pushpull_fixture.world
    green = world.object_by_id("Bgreen")
    orange = world.object_by_id("Borange")
    script = scenarios.DemoScript((TutorOp("push", pick=green.pose),
                                   TutorOp("push", pick=orange.pose)))
    model = record_demonstration(world, script)
    rules = extract_rules(model)
    assert len(rules) == 2
    assert rules[0].subject_attrs == (("color", "green"),)
    assert rules[0].consequent == ("far", True)
    assert rules[0].context == (ContextLiteral("far", (("color", "orange"),),
                                               False),)


# --- PDDL ----------------------------------------------------------------------

def _ordered_problem():
    objs = (("Borange", "block"), ("Bgreen", "block"), ("Byellow", "block"))
    cons = (OrderingConstraint(("far", ("Bgreen",)), ("far", ("Borange",))),
            OrderingConstraint(("far", ("Byellow",)), ("far", ("Bgreen",))))
    return PlanningProblem(
        name="ordered", domain_name="tabletop", objects=objs,
        init=frozenset(),
        goal=tuple(Literal("far", (o,), True) for o, _ in objs),
        constraints=cons)


def test_domain_text_contains_reference_action():
    dom, _prob = emit_pddl([PUSH, PULL], _ordered_problem())
    assert "(:action push" in dom
    assert "(not (far ?b))" in dom
    assert ":requirements :strips :typing :constraints" in dom


def test_problem_text_contains_ordering_constraint():
    _dom, prob = emit_pddl([PUSH, PULL], _ordered_problem())
    assert "(somewhere-after (far Bgreen) (far Borange))" in prob
    assert "(somewhere-after (far Byellow) (far Bgreen))" in prob


def test_empty_constraint_list_omits_block():
    p = PlanningProblem("p", "d", (("a", "block"),), frozenset(),
                        (Literal("far", ("a",), True),))
    _dom, prob = emit_pddl([PUSH], p)
    assert ":constraints" not in prob


def test_pddl_round_trip_structural_equality():
    problem = _ordered_problem()
    dom_text, prob_text = emit_pddl([PUSH, PULL], problem)
    name, schemas = parse_domain(dom_text)
    assert name == "tabletop"
    assert tuple(schemas) == (PUSH, PULL)
    assert parse_problem(prob_text) == problem
    dom2, prob2 = emit_pddl(schemas, parse_problem(prob_text))
    assert (dom2, prob2) == (dom_text, prob_text)


# --- planning -------------------------------------------------------------------

def test_plan_three_pulls():
    objs = tuple((f"b{i}", "block") for i in range(3))
    problem = PlanningProblem(
        "near-all", "tabletop", objs,
        init=frozenset(("far", (o,)) for o, _ in objs),
        goal=tuple(Literal("far", (o,), False) for o, _ in objs))
    steps = plan(problem, [PUSH, PULL])
    assert len(steps) == 3
    assert all(name == "pull" for name, _ in steps)
    assert validate_plan(problem, [PUSH, PULL], steps)


def test_plan_honors_ordering_constraints():
    steps = plan(_ordered_problem(), [PUSH, PULL])
    assert steps == [("push", ("Borange",)), ("push", ("Bgreen",)),
                     ("push", ("Byellow",))]
    assert validate_plan(_ordered_problem(), [PUSH, PULL], steps)


def test_no_plan_when_goal_unreachable():
    problem = PlanningProblem(
        "impossible", "tabletop", (("b", "block"),),
        init=frozenset(), goal=(Literal("far", ("b",), True),))
    with pytest.raises(NoPlan):
        plan(problem, [PULL])


def test_plan_empty_when_goal_holds_initially():
    problem = PlanningProblem(
        "done", "tabletop", (("b", "block"),),
        init=frozenset({("far", ("b",))}),
        goal=(Literal("far", ("b",), True),))
    assert plan(problem, [PUSH, PULL]) == []


def _oracle_shortest(problem, domain):
    """Independent exhaustive BFS used as the optimality oracle."""
    from collections import deque
    acts = symbolic.ground_schemas(domain, problem.objects)
    start = problem.init
    if all((l.atom() in start) == l.positive for l in problem.goal):
        return 0
    seen = {start}
    q = deque([(start, 0)])
    while q:
        state, depth = q.popleft()
        for a in acts:
            if not a.pre_pos <= state or a.pre_neg & state:
                continue
            ns = frozenset((state - a.dels) | a.adds)
            if ns in seen:
                continue
            if all((l.atom() in ns) == l.positive for l in problem.goal):
                return depth + 1
            seen.add(ns)
            q.append((ns, depth + 1))
    return None


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_plan_length_optimal_vs_oracle(n):
    rng = np.random.default_rng(n)
    objs = tuple((f"b{i}", "block") for i in range(n))
    init = frozenset(("far", (o,)) for o, _ in objs if rng.random() < 0.5)
    goal = tuple(Literal("far", (o,), bool(rng.random() < 0.5))
                 for o, _ in objs)
    problem = PlanningProblem("rand", "tabletop", objs, init, goal)
    steps = plan(problem, [PUSH, PULL])
    assert validate_plan(problem, [PUSH, PULL], steps)
    assert len(steps) == _oracle_shortest(problem, [PUSH, PULL])
    # provable optimum for this domain: count of objects whose literal differs
    differs = sum(1 for lit in goal
                  if (lit.atom() in init) != lit.positive)
    assert len(steps) == differs


def test_generalized_rules_plan_unseen_colors():
    demo1 = [_rule("green", False, "orange", True),
             _rule("orange", False, "green", False)]
    demo2 = [_rule("green", False, "orange", False)]
    demo3 = [_rule("orange", False, "green", True)]
    schemas = generalize_rules([demo1, demo2, demo3])
    for n in range(1, 7):
        objs = tuple((f"cube_{c}", "block")
                     for c in ["teal", "mauve", "lilac", "umber", "jade",
                               "coral"][:n])
        problem = PlanningProblem(
            "keep-near", "tabletop", objs,
            init=frozenset(("far", (o,)) for o, _ in objs),
            goal=tuple(Literal("far", (o,), False) for o, _ in objs))
        steps = plan(problem, schemas)
        assert len(steps) == n
        assert validate_plan(problem, schemas, steps)


# --- execution ---------------------------------------------------------------------

def test_execute_plan_pulls_object_near():
    from vsl.motion import default_primitive_library
    fx = scenarios.pushpull(initial="far")
    world = fx.world
    lib = default_primitive_library(world.config.push_displacement)
    trace = execute_plan([("pull", ("Bgreen",))], lib, world)
    assert len(trace) == 2
    before = world.object_by_id("Bgreen").pose
    after = trace[-1].object_by_id("Bgreen").pose
    assert after.y == pytest.approx(before.y + 110)


def test_execute_empty_plan():
    fx = scenarios.pushpull()
    trace = execute_plan([], {}, fx.world)
    assert trace == [fx.world]


def test_execute_unknown_primitive():
    fx = scenarios.pushpull()
    with pytest.raises(UnknownPrimitive):
        execute_plan([("teleport", ("Bgreen",))], {}, fx.world)


def test_plan_validity_checked_stepwise():
    # a pull on a near object violates its precondition
    problem = PlanningProblem(
        "p", "d", (("b", "block"),), init=frozenset(),
        goal=(Literal("far", ("b",), False),))
    assert validate_plan(problem, [PUSH, PULL], [])
    assert not validate_plan(problem, [PUSH, PULL], [("pull", ("b",))])


def test_constraint_soundness_on_returned_plans():
    problem = _ordered_problem()
    steps = plan(problem, [PUSH, PULL])
    for constraint in problem.constraints:
        first = {}
        state = set(problem.init)
        acts = {a.key(): a for a in
                symbolic.ground_schemas([PUSH, PULL], problem.objects)}
        for i, key in enumerate(steps, start=1):
            a = acts[key]
            state = (state - set(a.dels)) | set(a.adds)
            for atom in (constraint.later, constraint.earlier):
                if atom in state and atom not in first:
                    first[atom] = i
        assert first[constraint.later] >= first[constraint.earlier]
