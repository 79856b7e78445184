"""
The traveling wave of the free boundary problem
===============================================

At speed sqrt(2) the wave profile is w(x) = 2x exp(-sqrt(2) x) on x > 0.
We build it as cell averages and check the three things that define it.
"""
import numpy as np

from nbbm_lab import fbp

w = fbp.traveling_wave()
u = w.density
print(f"grid: {u.n} cells of width {u.dx} on [0, {u.x_hi:.1f}]")

# unit mass, up to the tail cut below 1e-14
print("mass               ", u.mass)

# the ODE w''/2 + alpha w' + w = 0 holds to second order in dx
print("ODE residual       ", fbp.wave_residual(w))

# the flux condition at the free boundary: w'(0+) = 2
print("w'(0+)             ", fbp.right_derivative_at_zero(w))

# faster waves exist too; their tails decay more slowly
for alpha in (fbp.SQRT2, 1.6, 2.0):
    print(f"alpha={alpha:.3f}  tail at r=3: {fbp.wave_tail(alpha, 3.0):.4f}")

# the discrete profile matches the closed form
x = u.centers
print("max |cell average - w(center)|", np.max(np.abs(u.values - w(x))))
