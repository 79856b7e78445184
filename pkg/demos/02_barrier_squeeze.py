"""
Squeezing the limit density between two barriers
=================================================

The lower barrier cuts first and then diffuses and grows; the upper barrier
does the same in the other order.  Halving the step moves both towards the
limit, and the gap between them shrinks like the step.
"""
import warnings

from nbbm_lab import barriers_macro as bm
from nbbm_lab import density as dn
from nbbm_lab import fbp

rho = fbp.traveling_wave().density
t = 0.5

res = bm.squeeze(rho, t, tol=1.5e-2, n_max=6)
for n, gap in res.history:
    print(f"level {n}: step {t / 2**n:.4f}  L1 gap {gap:.5f}")
print("converged:", res.converged, " tail bracket width:", round(res.width(), 5))

# the traveling wave, shifted by sqrt(2) t, lies inside the bracket
for a in (0.8, 1.2, 2.0):
    lo, hi = res.bracket(a)
    exact = fbp.wave_tail(fbp.SQRT2, a - fbp.SQRT2 * t)
    print(f"a={a}:  {float(lo):.5f} <= {float(exact):.5f} <= {float(hi):.5f}")

# asking for more than n_max can deliver is flagged, not hidden
with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always")
    partial = bm.squeeze(rho, t, tol=1e-6, n_max=3)
print("partial result converged:", partial.converged, "|", caught[0].message)

# a single barrier trajectory, with its cut points
traj = bm.evolve(bm.on_barrier_grid(rho, 0.1), 0.1, 5, "-")
print("lower barrier cut points:", [round(float(q), 4) for q in traj.cut_points])
print("masses:", [round(s.mass, 12) for s in traj.snapshots])
print("ordered:", dn.dominates(traj.last, bm.evolve(rho, 0.1, 5, "+").last, 1e-10))
