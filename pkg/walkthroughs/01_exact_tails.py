"""Exact return and area-return probabilities of the lazy walk.

Prints u_N = P(tau = N, S_N = 0) and v_L = P(A_tau = L, S_tau = 0) and the
fitted log-log slopes (-3/2 and -4/3 in the limit).
"""
import numpy as np

from excursion_lab import oracle
from excursion_lab.increment_laws import make_lazy_law
from excursion_lab.stats import loglog_slope

law = make_lazy_law()

Ns = np.array([16, 23, 32, 45, 64, 91, 128])
u = oracle.return_probabilities(law, Ns.max())
for N in Ns:
    print(f"u_{N:<4d} = {u[N]:.6e}   N^1.5 u_N = {u[N] * N**1.5:.5f}")
print("slope u_N:", loglog_slope(Ns, u[Ns]))

Ls = np.unique(np.round(16 * 2 ** np.linspace(0, 4, 9)).astype(int))
atl = oracle.area_terminal_law(law, Ls.max())
v = atl.v[Ls - 1]
for L, x in zip(Ls, v):
    print(f"v_{L:<4d} = {x:.6e}   L^(4/3) v_L = {x * L ** (4 / 3):.5f}")
print("slope v_L:", loglog_slope(Ls, v))
print("largest tail bound:", atl.tail_bound.max())
