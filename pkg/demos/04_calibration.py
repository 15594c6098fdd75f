"""Fit vanilla and RAPS quantiles on the noisy scorer and check held-out coverage."""
from ltlplanner.conformal import CalibrationSet, calibrate, joint_confidence
from ltlplanner.experiments import evaluate_cp, simple_task_points
from ltlplanner.scoring import NoisyScorer

scorer = NoisyScorer(seed=0)
cal = simple_task_points(scorer, 50, seed="demo-cal")
test = simple_task_points(scorer, 300, seed="demo-test")
for method in ("vanilla", "raps"):
    model = calibrate(CalibrationSet(tuple(cal), method, 0.05))
    rep = evaluate_cp(model, test)
    print(f"{method:<8} qhat={model.qhat:.4f} coverage={rep.coverage:.3f} "
          f"mean set size={rep.mean_set_size:.3f} non-singleton={rep.non_singleton}")
print("joint confidence for 5 sub-tasks at alpha 0.05:", round(joint_confidence(0.05, 5), 4))
