"""|B| run on the inverse of its own area clock versus ((3/2) rho)^(2/3), rho a Bessel(4/3)."""
import numpy as np

from excursion_lab import continuum as cl
from excursion_lab.stats import ks_two_sample

rng = np.random.default_rng(2)
# m = 1024 is coarse; the last-zero statistic carries visible grid bias here,
# which fades at the m = 16384 used by `excursion-lab verify theorem-b`.
m, n = 1024, 2000
thr = 1.5 * np.sqrt(1 / m)

y = np.array([[p.values[m // 2], p.values[m], cl.last_zero_before(p, 1.0, thr)]
              for p in (cl.y_process(m, 4.0, rng) for _ in range(n))])
z = cl.besq_paths(4 / 3, 0.0, m, rng, size=n)
phi = cl.phi_values(np.sqrt(z))
z_stats = np.column_stack((phi[:, m // 2], phi[:, m],
                           [cl.last_zero_before(cl.GridPath(p, 1 / m), 1.0, thr) for p in phi]))

for col, label in enumerate(("value at 1/2", "value at 1", "last zero before 1")):
    r = ks_two_sample(y[:, col], z_stats[:, col])
    print(f"{label:20s} KS {r.statistic:.4f} (critical {r.critical_value:.4f})")
