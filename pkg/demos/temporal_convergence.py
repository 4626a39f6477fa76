"""Temporal refinement for the smooth-in-space, weakly singular-in-time case.

Runs ex1 (delta = 0.6) on a graded grid with r = 2 and with r = 1, and
prints the maximum L2 error and log2 orders.  The graded grid reaches order
about 1.9 by N = 64; the uniform grid stays between 0.74 and 0.85.
Small M keeps this under a minute; the spatial error is already below the
temporal one at M = 32, p = 2.

    python demos/temporal_convergence.py
"""

from subdiff.config import RunSpec
from subdiff.study import converge_time
from subdiff.temporal import SuperconvPolicy

for r in (1.0, 2.0):
    spec = RunSpec(case="ex1", delta=0.6, r=r, p=2, N=(8, 16, 32, 64), M=(32,),
                   policy=SuperconvPolicy.offset(0.5), source="discrete")
    print(f"r = {r:g}")
    print(converge_time(spec).table())
    print()
