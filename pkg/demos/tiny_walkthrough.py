"""Step through one design on a two-element RIS.

Run: python demos/tiny_walkthrough.py
"""

from pathlib import Path

import numpy as np

from risisac.beamforming import alternating_optimization
from risisac.config import load_scenario
from risisac.feasibility import max_detection_probability, required_T0

cfg = load_scenario(Path(__file__).parent / "scenarios" / "tiny_los.ini")
problem = cfg.problem()
print(f"echo needed for Pd={cfg.gamma}: {10 * np.log10(problem.echo_threshold):.3f} dBm")

# Without a feasible start there is nothing to optimize, so check first.
report = max_detection_probability(problem)
print(f"best achievable echo: {10 * np.log10(report.max_echo_power):.3f} dBm -> U = {report.U:.4f}")
print(f"sensing time that would just reach the target: {required_T0(problem, report=report):.3f} s")
if not report.feasible:
    raise SystemExit("target not detectable with this budget")

sol = alternating_optimization(problem, report.solution)
print("\nouter SNR trace (dB):", " ".join(f"{10 * np.log10(s):.4f}" for s in sol.trace))
print(f"final SNR {sol.snr_db:.4f} dB, echo {sol.echo_power_dbm:.4f} dBm, Pd {sol.detection_probability:.6f}")
print("RIS phases (rad):", np.round(np.angle(sol.omega), 4))
print("power split: |w_c|^2 = %.1f mW, |w_s|^2 = %.1f mW" % (np.vdot(sol.w_c, sol.w_c).real,
                                                            np.vdot(sol.w_s, sol.w_s).real))

# Dropping the detection requirement gives the communication-only ceiling.
free = alternating_optimization(problem.with_(sense_enabled=False), sol)
print(f"without the sensing constraint: SNR {free.snr_db:.4f} dB")
