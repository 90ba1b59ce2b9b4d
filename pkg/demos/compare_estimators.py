"""
Comparing estimators
====================

Draws many independent sketches of one signal and compares the empirical
variance factor k * Var(F_hat) / F**2 of each estimator with its
asymptotic value.
"""

from ccsketch import EstimatorKind, ExactSignal, TurnstileEvent, evaluate, exact_moment, variance_factor
from ccsketch.harness import run_trials

sig = ExactSignal.from_events(4, [TurnstileEvent(1, 3.0), TurnstileEvent(2, 1.0), TurnstileEvent(4, 2.0)])
k, trials = 200, 5000

for alpha, kinds in ((0.5, "gm hm mle op oq"), (1.5, "gm op oq")):
    F = exact_moment(sig, alpha)
    counters = run_trials(sig, alpha, k, trials, seed=1)
    print(f"alpha = {alpha}")
    for name in kinds.split():
        kind = EstimatorKind.parse(name)
        rel = evaluate(kind, counters, alpha) / F
        print(f"  {name:4s} mean {rel.mean():.4f}  var factor {k * rel.var(ddof=1):.3f}"
              f"  (asymptotic {variance_factor(kind, alpha):.3f})")
