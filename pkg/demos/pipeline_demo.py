"""Run the four-stage smooth approximation of u = |z|^2 and print the
certificates stage by stage."""
import sys
import time

import numpy as np

from pshdisc.domain import Domain
from pshdisc.envelope import sq_distance
from pshdisc.psh_approx import approximation_pipeline
from pshdisc.structure import QTensor, named_structure, standard_structure

t = float(sys.argv[1]) if len(sys.argv) > 1 else 0.0
ball = Domain(np.zeros(2), 1.0)
J = standard_structure() if t == 0 else named_structure("conjugated", "bump", t, ball)

t0 = time.perf_counter()
seq = approximation_pipeline(sq_distance([0, 0], ball), ball, QTensor(J), 4)
print(f"t = {t}: exhaustion A={seq.rho.A:g} B={seq.rho.B:g}, {time.perf_counter() - t0:.0f}s")
for c in seq.certificates:
    print(f"  k={c.k} {c.name:26s} {'pass' if c.passed else 'FAIL'}  worst={c.worst:+.3e}  {c.detail}")
print("all passed" if seq.passed else "some certificates failed")
