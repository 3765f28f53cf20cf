#!/usr/bin/env python3
"""Walk through the finite-difference verification of the layer zoo.

Every layer and loss composite is re-run on float64 models and compared
entry-by-entry against central finite differences.  Isolated primitives
(linear, cross entropy, mse) must agree to 1e-4; norm layers, dropout,
and the full model / edge-loss composites to 1e-3.
"""

from linkdist.verify import gradcheck_suite

reports = gradcheck_suite()
print(f"{'component':<30} {'entries':>7} {'max rel err':>12} {'tolerance':>10}")
for r in reports:
    marker = "" if r.passed else "  <-- FAIL"
    print(f"{r.name:<30} {r.n_checked:>7} {r.max_rel_err:>12.3e} "
          f"{r.tolerance:>10g}{marker}")

worst = max(reports, key=lambda r: r.max_rel_err / r.tolerance)
print(f"\nworst margin: {worst.name} at {worst.max_rel_err:.3e} "
      f"({worst.max_rel_err / worst.tolerance:.1%} of its tolerance)")
print("all passed" if all(r.passed for r in reports) else "FAILURES above")
