"""
Sketching a turnstile stream
============================

Builds a small stream with insertions and deletions, sketches it with k
counters, and estimates the alpha-th frequency moment from the counters.
"""

import numpy as np

from ccsketch import ExactSignal, TurnstileEvent, estimate_gm, exact_moment, sketch_merge, sketch_new

alpha, k, D, seed = 0.8, 200, 1000, 7
rng = np.random.default_rng(0)

# a stream of positive increments, then deletions of part of the mass
events = [TurnstileEvent(int(i), float(a)) for i, a in zip(rng.integers(1, D + 1, 5000), rng.integers(1, 10, 5000))]
events += [TurnstileEvent(ev.index, -0.5 * ev.increment) for ev in events[:2000]]

sk = sketch_new(alpha, k, D, seed)
sk.ingest(events)
exact = exact_moment(ExactSignal.from_events(D, events), alpha)
est = estimate_gm(sk.counters, alpha).value
print(f"F_({alpha}) exact {exact:.1f}, geometric mean estimate {est:.1f} ({100 * (est / exact - 1):+.2f}%)")

# the sketch is linear: two halves sketched apart and merged give the same counters
left, right = sketch_new(alpha, k, D, seed), sketch_new(alpha, k, D, seed)
left.ingest(events[:3000])
right.ingest(events[3000:])
print("merged halves identical to one pass:", np.array_equal(sketch_merge(left, right).counters, sk.counters))
