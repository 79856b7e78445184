"""
Brownian paths killed at the free boundary
==========================================

Start Brownian paths from the traveling wave and kill them when they cross
L_t = sqrt(2) t.  Weighted by e^t, the surviving fraction stays at 1.
"""
from nbbm_lab import fbp

rho = fbp.traveling_wave().density
L = fbp.BoundaryCurve.linear(fbp.SQRT2, 1.0)
curve = fbp.hitting_survival(rho, L, 1.0, n_paths=20000, h=1e-3, seed=0, report_every=100)
for t, est, se in zip(curve.t, curve.estimate, curve.stderr):
    print(f"t={t:.1f}  e^t P(survive) = {est:.4f} +/- {se:.4f}")

# the same paths give the tail of the solution at time t
est, se = fbp.forward_tail_mc(rho, L, a=1.0, t=0.5, n_paths=20000, seed=1)
print(f"tail at a=1, t=0.5: {est:.4f} +/- {se:.4f}  exact "
      f"{float(fbp.wave_tail(fbp.SQRT2, 1.0 - fbp.SQRT2 * 0.5)):.4f}")
