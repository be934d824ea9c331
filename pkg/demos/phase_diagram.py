"""Existence versus nonexistence across the critical integrability exponent.

For f(u) = u^3 with theta = 1.5 in one dimension the threshold is
r = N/theta = 2/3.  Each cell builds the singular datum suited to its r,
scans the necessary condition, looks for a certificate and runs the solver;
the empirical label is compared with the classifier's prediction.

    python demos/phase_diagram.py [workers]
"""

import sys

from fracheat.sweep import SweepPlan, run_sweep

workers = int(sys.argv[1]) if len(sys.argv) > 1 else 1
plan = SweepPlan({"f": ["upow:3"], "theta": [1.5], "N": [1],
                  "r": [0.4, 0.5, 0.55, 0.6, 0.7, 0.8, 0.9, 1.0]},
                 workers=workers, out_dir="demo_output/phase")
result = run_sweep(plan)

print(f"{'r':>5} {'alpha':>6} {'regime':>14} {'tag':>10} {'slope':>8} {'status':>13} "
      f"{'label':>16} agree")
for v in result.verdicts:
    slope = f"{v.scan_slope:8.4f}" if v.scan_slope is not None else " " * 8
    print(f"{v.cell['r']:5.2f} {v.alpha:6.3f} {v.regime['regime']:>14} "
          f"{v.regime['theorem_tag']:>10} {slope} {v.status or '-':>13} {v.empirical:>16} "
          f"{v.agrees}")
print(f"agreement {result.agreement:.0%} in {result.wall_s:.1f} s; CSV in demo_output/phase/")
