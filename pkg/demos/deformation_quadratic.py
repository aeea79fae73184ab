"""The discrete deformation on an indefinite quadratic model: energy gain is
bounded by ϱ everywhere, and far from critical points the level set
{I ≤ c + ε} is pushed below c − ε/2."""
import numpy as np

from indeflink.deformation import check_property_i, check_property_ii, select_params
from indeflink.energy import QuadraticModel, sample_ball

b = np.zeros(20)
b[0], b[10] = -8.0, 3.0
model = QuadraticModel(10, 10, b)
params = select_params(model, 2.0, rho_gain=0.05, epsilon=0.05)
print(f"k = {params.k}, s = {params.s_count}, M = {params.M:.3f}, delta = {params.delta:.3f}")

rng = np.random.default_rng(0)
rep = check_property_i(model, params, sample_ball(model, params.R + 2, 100, rng))
print("energy gain per t:", {t: f"{g:.2e}" for t, g in rep.per_t_max_gain.items()},
      f"(bound rho = {params.rho_gain})")

c = float(np.median(model.energy(sample_ball(model, params.R / 2, 4000, rng))))
rep2 = check_property_ii(model, params, c, n_starts=50, seed=1)
print(f"c = {c:.4f}: premise {rep2.premise_holds}, conclusion {rep2.conclusion_holds}, "
      f"highest final I = {rep2.final_energies.max():.4f} vs c - eps/2 = "
      f"{c - params.epsilon / 2:.4f}")
