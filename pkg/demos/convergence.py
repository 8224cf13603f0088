"""Primal and dual objective traces on a 3 x 3 toy for a smooth and a
non-smooth objective, written as CSV plus a gnuplot script.

Run with ``python demos/convergence.py OUTDIR``; then ``gnuplot -p
OUTDIR/eps_1/trace.gp`` plots one of them.
"""

import sys
from pathlib import Path

from approxsp.experiment import build_config, run_experiment

out = Path(sys.argv[1] if len(sys.argv) > 1 else "convergence-demo")
for eps in (1.0, 0.0):
    cfg = build_config(dict(base="halves", height=3, width=3, n_train=4, n_test=2, C=1.0,
                            epsilon=eps, max_iter=300, out=str(out / f"eps_{eps:g}")))
    run = run_experiment(cfg)
    primal, dual = run.trace.column("primal"), run.trace.column("dual")
    print(f"eps={eps:g}: {run.report.iterations} iterations, status {run.report.status}, "
          f"final primal {primal[-1]:.6f}, best dual {dual.max():.6f}, "
          f"gap {run.report.gap:.2e}")
print(f"traces written under {out}/")
