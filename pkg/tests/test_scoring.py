import json
import threading
from dataclasses import replace
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from ltlplanner.automaton import initial_state, prune, select_subtask
from ltlplanner.ltl import AtomicProposition as AP, parse_ltl, to_dfa
from ltlplanner.scenarios import fig_env, kitchen
from ltlplanner.scoring import (NoPlanWithinBudget, NoisyScorer, OracleScorer, RemoteScorer, ScorerUnavailable,
                                UniformScorer, build_prompt, extend_prompt, noisy_scorer, oracle_plan, score)
from ltlplanner.world import GO_TO, NOTHING, OPEN, PICK_UP, PUT_DOWN, Decision, RobotState, apply


def assignment_for(text, atoms, state=None):
    p = prune(to_dfa(parse_ltl(text, atoms)))
    return select_subtask(p, state or initial_state(p))


PEN_LF = AP(1, "move", "pen", "LF")


def pen_prompt(robot=None, **kw):
    sc = kitchen()
    a = assignment_for("F p1", [PEN_LF])
    return build_prompt(a, sc.world, robot=robot or sc.robot, **kw)


class TestPrompt:
    def test_fresh_history_empty(self):
        assert pen_prompt().history == ()

    def test_history_grows_by_decision_and_feedback(self):
        sc = kitchen()
        p = pen_prompt()
        d = Decision(GO_TO, "LC")
        res = apply(sc.world, sc.robot, d)
        p2 = extend_prompt(p, d, res.feedback)
        assert p2.history == ((str(d), res.feedback.text),)
        assert "Step 1: (1, LC) go to location LC -> object of class Pen exists in location LC" in p2.render()

    def test_deterministic_render(self):
        assert pen_prompt().render() == pen_prompt().render()
        assert pen_prompt().digest() == pen_prompt().digest()

    def test_sections_in_order(self):
        text = pen_prompt().render()
        idx = [text.index(h) for h in ("Environment:", "Task:", "History:", "Options:")]
        assert idx == sorted(idx)
        assert "7 steps" in text

    def test_constraints_listed(self):
        sc = fig_env()
        a = assignment_for(sc.formula, list(sc.atoms))
        text = build_prompt(a, sc.world, robot=sc.robot).task
        assert text.splitlines()[0] == "Deliver Coke to x3."
        assert "Do not deliver water to x3" in text

    def test_history_longer_than_budget_rejected(self):
        with pytest.raises(ValueError):
            pen_prompt(history=[(Decision(NOTHING), "x")] * 7)


class TestScore:
    def test_oracle_goes_to_pen(self):
        sv = score(OracleScorer(), pen_prompt())
        assert sv.decision == Decision(GO_TO, "LC")

    def test_uniform(self):
        sv = score(UniformScorer(), pen_prompt())
        assert np.allclose(sv.probs, 1 / 18)

    def test_length_18(self):
        sv = score(OracleScorer(), pen_prompt())
        assert len(sv.probs) == 18 and abs(sv.probs.sum() - 1) < 1e-12

    def test_ties_go_to_lowest_index(self):
        sv = score(UniformScorer(), pen_prompt())
        assert sv.argmax == 0

    def test_subset_of_decisions(self):
        p = pen_prompt()
        sv = score(OracleScorer(), p, p.decisions[:7])
        assert len(sv.probs) == 7

    def test_scorer_needs_ground(self):
        with pytest.raises(ValueError):
            score(OracleScorer(), replace(pen_prompt(), ground=None))


class TestOraclePlan:
    def test_held_object_to_adjacent(self):
        sc = kitchen()
        w = sc.world.with_object(replace(sc.world.obj("pen"), location="LE", held=True))
        plan = oracle_plan(w, RobotState("LE", "pen"), assignment_for("F p1", [PEN_LF]), 7)
        assert plan[:2] == [Decision(GO_TO, "LF"), Decision(PUT_DOWN)]
        assert plan[2:] == [Decision(NOTHING)] * 5

    def test_coke_first_shape(self):
        sc = fig_env()
        a = assignment_for(sc.formula, list(sc.atoms))
        assert a.next_ap.target == "Coke"
        plan = oracle_plan(sc.world, sc.robot, a, 7, pad=False)
        assert [d.action for d in plan] == [GO_TO, PICK_UP, GO_TO, PUT_DOWN]

    def test_drawer_opened_first(self):
        sc = kitchen()
        a = assignment_for("F p1", [AP(1, "move", "can", "LA")])
        plan = oracle_plan(sc.world, sc.robot, a, 7, pad=False)
        assert plan.index(Decision(OPEN, "drawer")) < plan.index(Decision(PICK_UP, "can"))

    def test_budget_too_small(self):
        sc = kitchen()
        a = assignment_for("F p1", [AP(1, "move", "can", "LA")])
        with pytest.raises(NoPlanWithinBudget):
            oracle_plan(sc.world, sc.robot, a, 3)

    def test_forbidden_ap_never_raised_early(self):
        sc = fig_env()
        a = assignment_for(sc.formula, list(sc.atoms))
        w, r = sc.world, sc.robot
        for d in oracle_plan(w, r, a, 7, pad=False):
            res = apply(w, r, d)
            w, r = res.world, res.robot
            assert w.obj("water").location != "x3"


class TestNoisy:
    def test_zero_confusion_cold_matches_oracle(self):
        s = NoisyScorer(confusion=0.0, temperature=1e-3)
        for seed in range(5):
            p = pen_prompt()
            assert score(replace(s, seed=seed), p).decision == score(OracleScorer(), p).decision

    def test_full_confusion_near_tie(self):
        s = NoisyScorer(confusion=1.0, bias=0.0, sd=0.02)
        for seed in range(10):
            probs = np.sort(score(replace(s, seed=seed), pen_prompt()).probs)
            assert probs[-2] > 0.3

    def test_reproducible(self):
        s = noisy_scorer(seed=11)
        a = score(s, pen_prompt()).probs
        b = score(s, pen_prompt()).probs
        assert np.array_equal(a, b)

    def test_seed_changes_noise(self):
        a = score(NoisyScorer(seed=1), pen_prompt()).raw
        b = score(NoisyScorer(seed=2), pen_prompt()).raw
        assert not np.array_equal(a, b)

    def test_load_grows_with_history(self):
        s = NoisyScorer()
        p = pen_prompt()
        p2 = extend_prompt(p, Decision(NOTHING), apply(kitchen().world, kitchen().robot, Decision(NOTHING)).feedback)
        assert s.load(p2) > s.load(p)

    def test_tied_scorer_splits_drink(self):
        sc = kitchen()
        a = assignment_for("F p1", [AP(1, "bring", "drink", "LC")])
        p = build_prompt(a, sc.world, robot=sc.robot)
        sv = score(OracleScorer(split_ambiguous=True, jitter=0.1), p)
        top = np.sort(sv.probs)[-2:]
        assert top[0] > 0.2 and top.sum() > 0.99
        assert {p.decisions[i].target for i in np.argsort(sv.probs)[-2:]} == {"LD", "LE"}


class _Handler(BaseHTTPRequestHandler):
    calls = 0

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).calls += 1
        auth = self.headers.get("Authorization")
        if auth != "Bearer sekrit":
            self.send_response(401)
            self.end_headers()
            return
        scores = [{"logprob": -1.0 if c == "(1, LC)" else -8.0, "tokens": 2} for c in body["choices"]]
        data = json.dumps({"scores": scores}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *a):
        pass


@pytest.fixture
def server():
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{srv.server_port}/score"
    srv.shutdown()


class TestRemote:
    def test_offline_unavailable(self):
        s = RemoteScorer("http://127.0.0.1:9/score", "m", timeout=0.5)
        with pytest.raises(ScorerUnavailable):
            score(s, pen_prompt())

    def test_live_call(self, server, monkeypatch):
        monkeypatch.setenv("SCORER_API_TOKEN", "sekrit")
        sv = score(RemoteScorer(server, "m"), pen_prompt())
        assert sv.decision == Decision(GO_TO, "LC")
        assert abs(sv.probs.sum() - 1) < 1e-12
        assert sv.raw[sv.argmax] == -0.5

    def test_auth_failure(self, server, monkeypatch):
        monkeypatch.setenv("SCORER_API_TOKEN", "wrong")
        with pytest.raises(ScorerUnavailable) as e:
            score(RemoteScorer(server, "m"), pen_prompt())
        assert e.value.status == 401

    def test_record_then_replay(self, server, monkeypatch, tmp_path):
        monkeypatch.setenv("SCORER_API_TOKEN", "sekrit")
        tape = tmp_path / "tape.json"
        live = score(RemoteScorer(server, "m", cassette=tape, mode="record"), pen_prompt())
        before = _Handler.calls
        again = score(RemoteScorer("http://127.0.0.1:9/x", "m", cassette=tape, mode="replay"), pen_prompt())
        assert _Handler.calls == before
        assert np.array_equal(live.probs, again.probs)

    def test_replay_miss(self, tmp_path):
        s = RemoteScorer("http://127.0.0.1:9/x", "m", cassette=tmp_path / "none.json", mode="replay")
        with pytest.raises(ScorerUnavailable):
            score(s, pen_prompt())
