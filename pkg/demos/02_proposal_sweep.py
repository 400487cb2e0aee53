"""Sweep the mixing probability and the number of passes.

For a fixed tabular model, print TV and KL between the pass-K proposal and the
ancestral law on a (p, K) grid, and write the grid to CSV. KL is infinite
while the proposal still puts mass on sequences the model itself never emits.
"""

from __future__ import annotations

import sys
from pathlib import Path

from parmix.exactdist import proposal_sweep, theorem_instance, write_sweep_csv

model, gold = theorem_instance(3, 3, seed=0)
rows = proposal_sweep(model, gold, [0.0, 0.25, 0.5, 0.75, 1.0], [1, 2, 3, 4, 5])

print(f"gold {list(gold)}")
print("   p   K      TV        KL")
for r in rows:
    print(f"{r.p:4.2f}  {r.K}  {r.tv:8.5f}  {r.kl:9.5f}")

out = Path(sys.argv[1] if len(sys.argv) > 1 else "proposal_sweep.csv")
write_sweep_csv(rows, out)
print(f"wrote {out}")
