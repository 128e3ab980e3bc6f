"""Why decompose at all: per-cycle solve time as the fleet grows.

The centralized QP's dimension grows with the fleet, so its per-cycle time
climbs steeply.  Each consensus node solves a fixed-size problem regardless
of fleet size, so the max-over-nodes accounting stays flat.  Uses reduced
sizes by default; pass sizes on the command line for the full sweep.

Run:  python demos/scaling_benchmark.py [N1 N2 ...]
"""

import sys

from fleetcoord import run_benchmark, summarize_bench

sizes = [int(a) for a in sys.argv[1:]] or [4, 8, 16, 32]
print(f"benchmarking fleet sizes {sizes} (10 cycles each, both modes)...\n")

records = run_benchmark(sizes, seed=0, cycles=10)
summary = summarize_bench(records)
print(summary.table())
