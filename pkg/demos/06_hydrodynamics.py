"""
N-BBM converges to the squeeze bracket
======================================

The empirical tail of N-BBM at time t approaches the limit tail as N grows.
We measure the sup distance to the bracket the barriers certify.
"""
from nbbm_lab import barriers_macro as bm
from nbbm_lab import fbp
from nbbm_lab.harness import hydro_distance

rho = fbp.traveling_wave().density
t, level = 0.5, 4
bracket = bm.squeeze_level(rho, t, level)
print(f"bracket width at level {level}: {bracket.width():.4f}")
for n in (50, 200, 800, 3200):
    mean, _ = hydro_distance(n, t, t / 2**level, replicas=10, seed=0, rho=rho, bracket=bracket)
    print(f"N={n:5d}  mean sup distance {mean:.4f}")
