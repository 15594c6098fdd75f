from dataclasses import replace

import pytest

from ltlplanner.ltl import AtomicProposition as AP
from ltlplanner.scenarios import SCENARIOS, case_study_2, fig_env, get_scenario, kitchen
from ltlplanner.world import (GO_TO, NOTHING, OPEN, PICK_UP, PUT_DOWN, REPORT, Decision, MalformedDecision,
                              Outcome, RobotState, UnresolvableTarget, ap_satisfied, apply, decision_set,
                              load_scenario, matching_objects, scenario_from_json, word_symbol)


def run(world, robot, *decisions):
    res = None
    for d in decisions:
        res = apply(world, robot, d)
        world, robot = res.world, res.robot
    return res


class TestApply:
    def test_carry_and_put_down(self):
        sc = fig_env()
        res = run(sc.world, RobotState("x1"), Decision(PICK_UP, "coke1"), Decision(GO_TO, "x3"), Decision(PUT_DOWN))
        assert res.world.obj("coke1").location == "x3"
        assert not res.world.obj("coke1").held
        assert res.robot == RobotState("x3")

    def test_nothing_keeps_state(self):
        sc = fig_env()
        res = apply(sc.world, sc.robot, Decision(NOTHING))
        assert res.robot == sc.robot and res.world == sc.world and res.outcome is Outcome.OK

    def test_closed_fridge_blocks_grasp(self):
        sc = kitchen()
        res = apply(sc.world, RobotState("LD"), Decision(PICK_UP, "water"))
        assert res.outcome is Outcome.FAILED
        assert ("fridge", "closed") in [f.args for f in res.feedback.facts if f.kind == "door-state"]

    def test_open_then_grasp(self):
        sc = kitchen()
        res = run(sc.world, RobotState("LD"), Decision(OPEN, "fridge"), Decision(PICK_UP, "water"))
        assert res.outcome is Outcome.OK and res.robot.holding == "water"

    def test_blocked_location(self):
        sc = get_scenario("case_study_1")
        res = apply(sc.world, sc.robot, Decision(GO_TO, "x5"))
        assert res.outcome is Outcome.FAILED
        assert res.robot.at == sc.robot.at
        assert [f.kind for f in res.feedback.facts][0] == "location-blocked"

    def test_pick_up_elsewhere_fails(self):
        sc = fig_env()
        assert apply(sc.world, sc.robot, Decision(PICK_UP, "coke1")).outcome is Outcome.FAILED

    def test_hands_full(self):
        sc = fig_env()
        w = sc.world.with_object(replace(sc.world.obj("coke2"), location="x1"))
        res = run(w, RobotState("x1"), Decision(PICK_UP, "coke1"), Decision(PICK_UP, "coke2"))
        assert res.outcome is Outcome.FAILED

    def test_report(self):
        sc = fig_env()
        assert apply(sc.world, sc.robot, Decision(REPORT)).outcome is Outcome.REPORTED

    def test_feedback_text(self):
        sc = fig_env()
        res = apply(sc.world, sc.robot, Decision(GO_TO, "x1"))
        assert res.feedback.text == "object of class Coke exists in location x1"
        res = apply(sc.world, sc.robot, Decision(GO_TO, "x3"))
        assert res.feedback.text == "no object in location x3"

    def test_unknown_location_is_malformed(self):
        sc = fig_env()
        with pytest.raises(MalformedDecision):
            apply(sc.world, sc.robot, Decision(GO_TO, "x9"))


class TestDecision:
    def test_kitchen_has_18(self):
        assert len(decision_set(kitchen().world)) == 18

    def test_order_and_codes(self):
        s = decision_set(fig_env().world)
        assert s[0].code() == "(1, x1)" and s[-1].code() == "(6)"
        assert str(Decision(PUT_DOWN)) == "(3) put down object"

    @pytest.mark.parametrize("a,t", [(7, None), (1, None), (3, "x1")])
    def test_malformed(self, a, t):
        with pytest.raises(MalformedDecision):
            Decision(a, t)


class TestAtoms:
    def test_pen_at_lf(self):
        sc = kitchen()
        ap = AP(1, "move", "pen", "LF")
        assert not ap_satisfied(sc.world, ap)
        w = sc.world.with_object(replace(sc.world.obj("pen"), location="LF"))
        assert ap_satisfied(w, ap)

    def test_held_object_does_not_count(self):
        sc = kitchen()
        res = run(sc.world, RobotState("LC"), Decision(PICK_UP, "pen"), Decision(GO_TO, "LF"))
        assert not ap_satisfied(res.world, AP(1, "move", "pen", "LF"))

    def test_ambiguous_drink(self):
        sc = case_study_2()
        ap = AP(1, "bring", "a drink", "LC")
        w = sc.world.with_object(replace(sc.world.obj("coke1"), location="LC"))
        assert ap_satisfied(w, ap)
        assert {o.id for o in matching_objects(sc.world, "drink")} == {"coke1", "coke2", "water"}

    def test_quantity(self):
        sc = case_study_2()
        w = sc.world.with_object(replace(sc.world.obj("coke1"), location="LC"))
        assert not ap_satisfied(w, AP(2, "bring", "drink", "LC", 2))
        w = w.with_object(replace(w.obj("water"), location="LC", container=None))
        assert ap_satisfied(w, AP(2, "bring", "drink", "LC", 2))

    def test_unresolvable(self):
        with pytest.raises(UnresolvableTarget):
            ap_satisfied(kitchen().world, AP(1, "move", "banana", "LA"))

    def test_word_symbol(self):
        sc = fig_env()
        aps = list(sc.atoms)
        assert word_symbol(sc.world, aps) == 0
        w = sc.world.with_object(replace(sc.world.obj("coke1"), location="x3"))
        assert word_symbol(w, aps) == 0b10
        w = w.with_object(replace(w.obj("water"), location="x3", container=None))
        assert word_symbol(w, aps) == 0b11  # a two-AP symbol, infeasible for planning


class TestScenarios:
    @pytest.mark.parametrize("name", sorted(SCENARIOS))
    def test_json_round_trip(self, name, tmp_path):
        sc = get_scenario(name)
        assert scenario_from_json(sc.to_json()) == sc
        p = tmp_path / "s.json"
        p.write_text(sc.dumps())
        assert load_scenario(p) == sc

    def test_unknown_scenario(self):
        with pytest.raises(KeyError):
            get_scenario("nope")
