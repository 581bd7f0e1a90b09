"""
Infinite lattice ramp with NTU
==============================

Neel product state, smooth ramp of J_r t_r = 1, bond dimension capped at 4.
Every gate reports its truncation error; their running sum is the error
measure that decides whether the run can be trusted.
"""

# %%
import time

from kzxx.ipeps import IPEPSState, evolve_ramp
from kzxx.model import ModelParams, RampSchedule

sched = RampSchedule(1.0)
t0 = time.time()
res = evolve_ramp(IPEPSState.neel(), sched, ModelParams(), D_max=4,
                  measure_points=[0.2, 0.45], R_max=5)
print(f"{res.status} in {time.time() - t0:.0f} s, total delta = {res.ledger.total:.2e}")

# %% accumulated error along the ramp (every 10th step)
for t, s, delta, D in res.delta_curve[::10]:
    print(f"t={t:6.3f}  s={s:5.3f}  delta={delta:.2e}  D={D}")

# %% correlators at the measured points
for m in res.measurements:
    print(f"s={m.s:.2f}  E/site={m.energy:+.5f}  chi={m.chi}  C(R):",
          " ".join(f"{r.C:+.4f}" for r in m.records))
