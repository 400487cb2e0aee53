"""How many parallel passes does it take to recover ancestral sampling?

We build a small random tabular model, fix one gold sequence, and compute the
exact law of the mixed conditioning sequence after each pass at p = 1. The
distance to the ancestral law shrinks pass by pass and hits zero (up to
rounding) once the number of passes reaches the sequence length.
"""

from __future__ import annotations

from parmix.exactdist import ancestral, parallel_proposal_passes, theorem_instance, tv_distance

V, T = 3, 4
model, gold = theorem_instance(V, T, seed=0)
target = ancestral(model, T)
print(f"vocab {V}, length {T}, gold {list(gold)}")

for K, q in enumerate(parallel_proposal_passes(model, gold, 1.0, T + 2), start=1):
    # after pass K the first min(K, T) positions already follow the ancestral law
    m = min(K, T)
    prefix_tv = 0.5 * abs(q.prefix_marginal(m) - target.prefix_marginal(m)).sum()
    print(f"K={K}: TV to ancestral {tv_distance(q, target):.3e}   first {m} positions {prefix_tv:.1e}")

# with p < 1 the gold sequence keeps leaking in, so no number of passes is enough
q = parallel_proposal_passes(model, gold, 0.5, T + 2)[-1]
print(f"p=0.5, K={T + 2}: TV {tv_distance(q, target):.3f}")
