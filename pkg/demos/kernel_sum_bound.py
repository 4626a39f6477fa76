"""Where the power-form kernel-sum bound breaks, and why the min-exponent form holds.

The complementary kernels P^(n) satisfy sum_j P_{n-j}^(n) c_{j-m,j} = 1.  At
n = 1 this is simply P_0 = 1/c_0.  The bound

    sum_j P_j^(n) <= (1 + 2^r) e^r G_n t_n^{alpha_sup}

fails for small t_n whenever alpha_sup exceeds the exponents actually used
near t = 0: t^{alpha_sup} < t^{alpha*} once t < 1.  Replacing alpha_sup by the
smallest alpha_j^* over the steps restores the inequality on [0, 1].

    python demos/kernel_sum_bound.py
"""

import math

import numpy as np
from scipy.special import gamma

from subdiff.cases import ex1_exponent
from subdiff.temporal import SuperconvPolicy, build_graded_mesh, coefficient_rows, kernel_table, step_schedule

alpha, r, N = ex1_exponent(0.2), 2.0, 16
mesh = build_graded_mesh(1.0, N, r)
sched = step_schedule(alpha, mesh, SuperconvPolicy.offset(0.5))
rows = coefficient_rows(mesh, sched)
kernels = kernel_table(rows)

lN = 1.0 / math.log(N)
G = np.maximum.accumulate([gamma(1 + lN - p.alpha_star) for p in sched]) / gamma(1 + lN)
astar = np.array([p.alpha_star for p in sched])

print(f"{'n':>3} {'t_n':>10} {'sum P':>10} {'power form':>11} {'min form':>10}")
for n in (1, 2, 3, 4, 8, 16):
    base = (1 + 2**r) * math.e**r * G[n - 1]
    t = mesh.nodes[n]
    total = kernels[n - 1].P.sum()
    power = base * t**alpha.alpha_sup
    lowest = base * t ** astar[:n].min()
    flag = "  <- violated" if total > power else ""
    print(f"{n:>3} {t:10.3e} {total:10.4e} {power:11.4e} {lowest:10.4e}{flag}")
