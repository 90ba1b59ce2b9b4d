"""
A benchmark campaign
====================

Runs the same campaign the ``ccsketch benchmark`` command runs, once on a
clean stream and once on a stream where 60% of events are cancelling
insert/delete pairs.  The two CSV outputs are byte-identical.
"""

import io

from ccsketch.harness import BenchmarkConfig, SignalSpec, cmd_benchmark

outputs = []
for f in (0.0, 0.6):
    cfg = BenchmarkConfig(alphas=[0.5, 1.5], k_values=[50, 200], trials=2000, seed=3,
                          estimators=["gm", "op", "oq"], signal=SignalSpec(domain_size=32, deletion_fraction=f))
    buf = io.StringIO()
    cmd_benchmark(cfg, buf)
    outputs.append(buf.getvalue())

print(outputs[0])
print("identical with deletions:", outputs[0] == outputs[1])
