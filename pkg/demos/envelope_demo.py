"""Disc envelope of f = -|z1|^2 on the unit ball.

The envelope at the origin is -1 (attained by the disc in the z1 line);
the computed value approaches it from above.  The same search is repeated
for a perturbed structure.
"""
import numpy as np

from pshdisc.domain import Domain
from pshdisc.envelope import SearchConfig, boundary_mean, neg_sq_z1, poletsky_envelope
from pshdisc.structure import QTensor, named_structure, standard_structure

ball = Domain(np.zeros(2), 1.0)
f = neg_sq_z1(ball)

for name, J in [("standard", standard_structure()),
                ("bump t=0.05", named_structure("conjugated", "bump", 0.05, ball))]:
    Q = QTensor(J)
    for p in ([0, 0], [0.3, 0.2j]):
        res = poletsky_envelope(f, ball, p, Q, SearchConfig(degree=2, n_starts=4, max_evals=150))
        check = boundary_mean(f, res.best_disc)
        print(f"{name:12s} p={np.round(p, 2)}  P f = {res.value:+.5f}  f(p) = {res.upper_bound_f_at_p:+.5f}"
              f"  evals={res.evaluations}  disc mean check {check:+.5f}")
