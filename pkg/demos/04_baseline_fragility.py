"""Why plain max-flooding cannot be trusted with even one liar.

The classic estimator floods one geometric sample per node and reads
log2(n) off the global maximum.  Honest-only, the maximum concentrates
beautifully.  A single Byzantine node flooding a giant value owns the
answer everywhere.
"""

import math

import numpy as np

from byzcount.baseline import run_support_estimation
from byzcount.graph import augment_small_world, generate_h_graph

n = 1024
topo = augment_small_world(generate_h_graph(n, 8, seed=11))

maxima = [run_support_estimation(topo, seed=t).global_max for t in range(200)]
maxima = np.array(maxima)
print(f"n = {n} (log2 = {math.log2(n):.0f}); 200 honest floods")
print(f"global maximum: min {maxima.min()}, median {np.median(maxima):.0f}, "
      f"max {maxima.max()}  (2*log2 n = {2 * math.log2(n):.0f})")

est = run_support_estimation(topo, seed=0)
print(f"per-node distinct forwards: max {est.distinct_forwards.max()} "
      f"(log-sized, as promised); converged in {est.rounds_to_converge} rounds")

forced = run_support_estimation(topo, byz=np.array([17]), byz_value=100, seed=0)
honest = np.ones(n, dtype=bool)
honest[17] = False
print(f"one Byzantine node floods 100: every honest maximum = "
      f"{set(forced.final_max[honest].tolist())} -- the implied size 2^100 "
      "overshoots the real 2^10 by twenty-seven orders of magnitude")
