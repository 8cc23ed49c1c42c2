"""
Magnetisation at the critical point
===================================

The rescaled magnetisation Y = n^{-3/4} sum(eta_i - 1/2) is the one slow
observable of the critical dynamics. This script runs a particle ensemble on
the accelerated clock and compares the law of Y at t = 1 with an
Euler-Maruyama ensemble of the limiting cubic SDE.
"""

# %%
# Run the particle ensemble from the mean-field Ising initial law.
import numpy as np

from glauber_kawasaki.engine import ClockMode, ensemble, stack
from glauber_kawasaki.lattice import Params
from glauber_kawasaki.limits import SdeParams, mu_b_sample, sde_simulate
from glauber_kawasaki.measures import IsingInit
from glauber_kawasaki.stats import ks_two_sample

n, traj = 64, 500
params = Params(n, a=1.0, theta=0.0)
series = ensemble(params, ClockMode.ACCELERATED, IsingInit(0, 2), traj, [0.25, 0.5, 1.0], base_seed=1)
Y = stack(series, "Y")
print(f"gamma = {params.gamma:.4f}, events in first trajectory: {series[0].counters['events']}")

# %%
# The SDE ensemble starts from the matching limit law mu_0.
rng = np.random.default_rng(2)
path = sde_simulate(SdeParams(1.0, 0.0, 1e-3, 1.0), mu_b_sample(0.0, rng, 4 * traj), rng,
                    record_times=[0.25, 0.5, 1.0])

print(f"{'t':>5} {'E[Y^2] particles':>18} {'E[Y^2] SDE':>12}")
for j, t in enumerate(path.times):
    print(f"{t:5.2f} {np.mean(Y[:, j]**2):18.4f} {np.mean(path.values[j]**2):12.4f}")

# %%
# Two-sample KS distance between the final laws.
rep = ks_two_sample(Y[:, -1], path.final, threshold=0.1)
print(rep.line())
