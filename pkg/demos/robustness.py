"""Why the perturbation matters on unconstrained cubic losses.

With short selling a sample skewness term makes the loss unbounded below, so
the plain relaxation has no optimum.  Adding eps * ||[x]|| restores one.  The
rank ratio shows whether the relaxation at the initial order is also tight;
for most draws it is not, and the returned point is then only a candidate.

    python3 demos/robustness.py
"""
import logging

import numpy as np

from polyport.data import sample_normal
from polyport.portfolio import NormalModel, RiskPreference, build_sample_loss
from polyport.psaa import PsaaFailure, solve_at

logging.disable(logging.WARNING)

model = NormalModel([0.92, 0.64, 0.41], np.diag([1.8, 1.2, 1.4]))
pref = RiskPreference([0.2, 0.5, 0.3])

for seed in range(10):
    f = build_sample_loss(sample_normal(model, 1000, seed), pref)
    try:
        solve_at(f, 0.0, short_selling=True)
        plain = "Optimal"
    except PsaaFailure as exc:
        plain = exc.attempts[-1].status.value
    res = solve_at(f, 0.01, short_selling=True)
    x = ", ".join(f"{v:8.4f}" for v in res.x_star)
    print(f"seed {seed}: eps=0 {plain:<16} eps=0.01 x* = ({x})  rank ratio {res.rank_ratio:.1e}")
