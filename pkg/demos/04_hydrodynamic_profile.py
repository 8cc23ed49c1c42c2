"""
Hydrodynamic limit of the density
=================================

On the hydrodynamic clock the smoothed empirical density follows the
reaction-diffusion equation u_t = u_xx - a V'(u). We start from a cosine
profile, run one trajectory and the PDE solver, and compare the two after
box smoothing. The PDE energy then decays below 1/(2t).
"""

# %%
import numpy as np

from glauber_kawasaki.engine import ClockMode, simulate
from glauber_kawasaki.lattice import Params
from glauber_kawasaki.limits import box_smooth, cosine_profile, decay_bound, l1_distance, pde_solve
from glauber_kawasaki.measures import ProductProfile, sample

n, t = 512, 0.05
params = Params(n, a=1.0, theta=0.0)
rng = np.random.default_rng(4)
start = sample(ProductProfile(0.5, 0.3, 1), n, rng)
ts = simulate(params, ClockMode.HYDRODYNAMIC, start, [t], observables=(), seed=rng)
pde = pde_solve(cosine_profile(n), params.a, params.gamma, t)

particles = box_smooth(ts.snapshots[-1], 64)
solution = box_smooth(pde.values, 64)
print(f"L1 distance at t={t}: {l1_distance(particles, solution):.4f}")
for j in range(0, n, 64):
    print(f"x={j / n:.3f} particles {particles[j]:.3f} pde {solution[j]:.3f}")

# %%
times = np.array([0.5, 1.0, 2.0, 5.0, 10.0])
decay = pde_solve(cosine_profile(n), 1.0, 0.5, 10.0, dt=1e-3, record_times=times)
for tt, e, bnd in zip(times, decay.l2_history, decay_bound(times)):
    print(f"t={tt:5.1f} ||u-1/2||^2 = {e:.3e}  bound {bnd:.3e}")
