"""Hierarchical planner against the flat single-prompt baseline on the bundled suite."""
from ltlplanner.experiments import run_experiment_suite, summary_table
from ltlplanner.scoring import NoisyScorer

report = run_experiment_suite(scorer=NoisyScorer(seed=0), gating="semantic", human_assist="deny",
                              baseline=True, seed=0)
print(summary_table(report))
