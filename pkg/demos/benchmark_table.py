"""Joint design against the five reference designs at two target sizes.

Takes a few minutes on one core.
Run: python demos/benchmark_table.py [seed]
"""

import sys

import numpy as np

from risisac.benchmarks import BENCHMARKS, run_benchmark, solve_proposed
from risisac.config import ScenarioConfig

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1

for steps in (1, 4):
    delta = steps * np.pi / 16
    cfg = ScenarioConfig.desk_feasible(seed=seed, delta_theta=delta, delta_phi=delta)
    problem = cfg.problem()
    joint = solve_proposed(problem)
    print(f"\npatch {steps}pi/16 x {steps}pi/16, seed {seed}")
    print(f"{'design':18s} {'SNR dB':>9s} {'echo dBm':>10s} {'Pd':>10s}")
    print(f"{'joint':18s} {joint.snr_db:9.3f} {joint.echo_power_dbm:10.3f} {joint.detection_probability:10.4g}")
    for kind in BENCHMARKS:
        b = run_benchmark(kind, problem, proposed=joint, trials=100, seed=seed)
        print(f"{kind:18s} {b.snr_db:9.3f} {b.echo_power_dbm:10.3f} {b.detection_probability:10.4g}")
