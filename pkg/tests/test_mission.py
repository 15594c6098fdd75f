import json

import pytest

from ltlplanner.automaton import initial_state, make_assignment, select_subtask
from ltlplanner.experiments import load_suite, render_instruction, run_experiment_suite, standard_suite
from ltlplanner.ltl import AtomicProposition as AP, atoms_from_json
from ltlplanner.mission import (HumanAssistDenied, MissionConfig, MissionInfeasible, assistance_cascade,
                                compile_task, replay_accepts, resolve_scenario, run_flat_baseline, run_mission)
from ltlplanner.scenarios import HARD_ATOMS, HARD_FORMULA, get_scenario
from ltlplanner.scoring import OracleScorer
from ltlplanner.world import Decision

PEN_LF = AP(1, "move", "pen", "LF")


def run_case(name, **kw):
    sc = get_scenario(name)
    return run_mission(MissionConfig(sc.formula, name, **kw))


class TestRunMission:
    def test_easy_pen(self):
        tr = run_mission(MissionConfig("F p1", "kitchen", [PEN_LF]))
        assert tr.status == "satisfied"
        assert len(tr.steps) <= 7
        assert tr.states == ["q0", "qF"]
        assert tr.joint_confidence == pytest.approx(0.95)

    def test_hard_mission(self):
        tr = run_mission(MissionConfig(HARD_FORMULA, "kitchen"))
        assert tr.status == "satisfied"
        assert len(tr.states) == 6
        assert tr.joint_confidence == pytest.approx(0.7738, abs=5e-4)

    def test_trace_replays(self):
        sc = resolve_scenario("kitchen")
        tr = run_mission(MissionConfig(HARD_FORMULA, "kitchen"))
        _, dfa, _ = compile_task(HARD_FORMULA, list(HARD_ATOMS))
        decisions = [Decision(int(s.decision[1]), s.decision[4:-1] or None) for s in tr.steps]
        assert replay_accepts(sc, dfa, decisions)
        assert not replay_accepts(sc, dfa, decisions[:-4])

    def test_trace_json_deterministic(self):
        a = run_mission(MissionConfig(HARD_FORMULA, "kitchen", seed=3)).dumps()
        b = run_mission(MissionConfig(HARD_FORMULA, "kitchen", seed=3)).dumps()
        assert a == b
        assert json.loads(a)["status"] == "satisfied"

    def test_infeasible(self):
        with pytest.raises(MissionInfeasible):
            run_mission(MissionConfig("F (p1 & p2)", "case_study_1"))

    def test_case_study_1(self):
        tr = run_case("case_study_1", seed=5)
        assert tr.event_kinds == ["alternative-AP"]
        assert tr.status == "satisfied"
        assert [s["ap"] for s in tr.subtasks] == [2, 1]

    def test_case_study_2(self):
        tr = run_case("case_study_2", scorer="tied", seed=0)
        assert tr.event_kinds == ["cp-trigger", "alternative-state", "human", "cp-trigger", "human"]
        assert tr.status == "human-completed"
        assert {s.actor for s in tr.steps} == {"planner", "human"}

    def test_case_study_2_denied(self):
        with pytest.raises(HumanAssistDenied) as e:
            run_case("case_study_2", scorer="tied", seed=0, human_assist="deny")
        assert e.value.trace.status == "failed"
        assert e.value.trace.event_kinds[-1] == "denied"

    def test_interactive(self):
        sc = get_scenario("case_study_2")
        # go LE, bogus, pick coke1, go LC, put down; then the same with coke2 from LF
        answers = iter(["4", "99", "11", "2", "13", "5", "12", "2", "13"])
        shown = []
        tr = run_mission(MissionConfig(sc.formula, "case_study_2", scorer="tied", human_assist="interactive"),
                         input_fn=lambda _: next(answers), output_fn=shown.append)
        assert [t["answer"] for t in tr.transcript] == ["4", "99", "11", "2", "13", "5", "12", "2", "13"]
        assert any(line.startswith("Prediction set:") for line in shown)
        assert any(line.startswith("Constraints:") for line in shown)
        assert "invalid choice; doing nothing" in shown
        assert tr.status == "human-completed"

    def test_semantic_gating_without_model(self):
        tr = run_mission(MissionConfig(HARD_FORMULA, "kitchen", gating="semantic"))
        assert tr.status == "satisfied"
        assert all(s.set_size is None for s in tr.steps)

    @pytest.mark.parametrize("kw", [dict(delta=0), dict(T=0), dict(gating="x"), dict(human_assist="x"),
                                    dict(cp_method="x")])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            MissionConfig("F p1", **kw)

    def test_config_from_dict_rejects_unknown(self):
        with pytest.raises(ValueError):
            MissionConfig.from_dict({"formula": "F p1", "colour": 1})


class TestCascade:
    def test_second_ap_of_disjunction(self):
        _, _, p = compile_task("F (p1 | p2)", list(get_scenario("case_study_1").atoms))
        st = initial_state(p)
        a = make_assignment(p, st.current, p.accepting, 2)
        st2, nxt, kind = assistance_cascade(st, a, p)
        assert kind == "alternative-AP" and nxt.next_ap.id == 1

    def test_single_option_needs_human(self):
        _, _, p = compile_task("F p1", [PEN_LF])
        st = initial_state(p)
        a = select_subtask(p, st)
        st2, nxt, kind = assistance_cascade(st, a, p)
        assert (nxt, kind) == (None, "human")
        assert p.accepting in st2.exhausted_targets

    def test_alternative_state(self):
        _, _, p = compile_task("F p1 & F p2", [PEN_LF, AP(2, "move", "apple", "LC")])
        st = initial_state(p)
        a = select_subtask(p, st)
        _, nxt, kind = assistance_cascade(st, a, p)
        assert kind == "alternative-state"
        assert nxt.next_ap.id != a.next_ap.id


class TestBaseline:
    def test_oracle_flat_solves_hard(self):
        suite = load_suite()
        m = next(x for x in suite["missions"] if x["formula"] == HARD_FORMULA)
        tr = run_flat_baseline(m["formula"], m["instruction"], "kitchen", OracleScorer(),
                               atoms=atoms_from_json(m["atoms"]))
        assert tr.status == "satisfied"
        assert len(tr.steps) <= 5 * 7


class TestSuite:
    def test_bundled_matches_generator(self):
        assert load_suite() == json.loads(json.dumps(standard_suite()))

    def test_shape(self):
        ms = load_suite()["missions"]
        assert len(ms) >= 30
        assert {m["category"] for m in ms} == {"easy", "medium", "hard"}
        med = {m["formula"] for m in ms if m["category"] == "medium"}
        assert med == {"F p1 & F p2", "F p1 & F p2 & (!p1 U p2)"}
        assert any(m["formula"] == HARD_FORMULA for m in ms if m["category"] == "hard")
        assert all(len(m["atoms"]) >= 4 for m in ms if m["category"] == "hard")

    def test_instruction_rendering(self):
        text = render_instruction("F p1 & F p2 & (!p1 U p2)", [PEN_LF, AP(2, "move", "apple", "LC")])
        assert text == ("Eventually move pen to LF, eventually move apple to LC, "
                        "and don't move pen to LF until you move apple to LC.")

    def test_oracle_report(self):
        rep = run_experiment_suite(categories=["easy"], baseline=True)
        assert rep["categories"]["easy"] == {"missions": 10, "completion": 1.0, "satisfied": 1.0,
                                             "baseline_completion": 1.0}
        assert rep["assistance_events"] == {}
