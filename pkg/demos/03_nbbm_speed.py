"""
How fast does N-BBM move?
=========================

The leftmost particle of N-BBM moves at a speed that increases with N
towards sqrt(2).  A single particle is just a Brownian path.
"""
import numpy as np

from nbbm_lab import fbp

for n in (1, 10, 100, 500):
    slopes = [fbp.speed_estimate(n, horizon=30.0, burn_in=5.0, seed=s) for s in range(4)]
    print(f"N={n:4d}  speed {np.mean(slopes):+.3f} +/- {np.std(slopes, ddof=1) / 2:.3f}")
print("sqrt(2) =", round(fbp.SQRT2, 4))

# (N-1) times the mean gap behind the leftmost particle counts only the jumps
# of the minimum, so it sits above the speed
print("jump bound at N=100:", round(fbp.stationary_speed(100, 30.0, 5.0, seed=0), 3))
