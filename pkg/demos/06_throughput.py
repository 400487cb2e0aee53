"""Training steps per second for the three conditioning methods.

Sequential scheduled sampling makes one model call per target position, the
parallel variant one call per pass, so the gap widens with the target length.
"""

from __future__ import annotations

from parmix.harness.benchmark import benchmark, speed_ratios

rows = benchmark(lengths=(16, 32, 64), batch_size=32, passes=1, steps=15, sequential_steps=5)
for r in rows:
    print(f"{r.method:16s} T={r.length:<3d} {r.steps_per_sec:7.2f} steps/s  {r.inference_calls:3d} calls/step")
for length, ratio in sorted(speed_ratios(rows, "parallel-ss", "sequential-ss").items()):
    print(f"T={length}: parallel is {ratio:.1f}x faster than sequential")
