"""Walks conditioned on tau + G_(tau-1) = L under geometric increments.

Checks the exact end-point invariance for small L, then samples by
rejection and looks at |S| at the perturbed-area clock.
"""
import numpy as np

from excursion_lab import oracle
from excursion_lab.increment_laws import make_laplace_law, make_mu_law
from excursion_lab.samplers import IPDSAW, ConditionSpec, derived_observables, rejection_sample

beta = 2.0
law, mu = make_laplace_law(beta), make_mu_law(beta)

for L in (5, 10, 20, 30):
    a = oracle.ipdsaw_conditional_law(law, mu, L, True)
    b = oracle.ipdsaw_conditional_law(law, mu, L, False)
    print(f"L={L:3d}  max |difference| of |S_i| marginals: {np.abs(a.marginals - b.marginals).max():.2e}")

rng = np.random.default_rng(3)
L = 150
ens = rejection_sample(ConditionSpec(IPDSAW, L, law, mu), 1000, rng)
tab = derived_observables(ens, [0.5])
print(f"L={L}: acceptance {ens.acceptance_rate:.3e}, mean tau {tab['N'].mean():.1f}")
print("mean |S| at xi_(L/2) / (sigma^(2/3) L^(1/3)):", tab["absS_xi_scaled_0"].mean())
