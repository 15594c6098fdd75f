"""Run the two narrated missions: a blocked route and an ambiguous drink."""
from ltlplanner.mission import MissionConfig, run_mission
from ltlplanner.scenarios import get_scenario

for name, kw in (("case_study_1", dict(seed=5)), ("case_study_2", dict(scorer="tied", seed=0))):
    sc = get_scenario(name)
    trace = run_mission(MissionConfig(sc.formula, sc.name, **kw))
    print(f"== {name}: {sc.formula}")
    for st in trace.steps:
        print(f"  {st.state}->{st.target_state} {st.decision:<16} {st.outcome:<9} {st.actor}")
    for ev in trace.events:
        print("  event:", ev["kind"], ev.get("reason", ""))
    print("  status:", trace.status)
