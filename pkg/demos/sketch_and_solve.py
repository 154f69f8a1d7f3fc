"""Sketch-and-precondition on a tall least-squares problem.

Shows how well an SRHT preserves the geometry of a thin basis and how fast
the preconditioned refinement closes the gap to the exact solution.

    python3 demos/sketch_and_solve.py
"""

import numpy as np

from fastmc import SolverConfig, high_precision_reg, srht_apply, srht_new
from fastmc.sketch import sketch_plan

rng = np.random.default_rng(0)
n, d = 1 << 15, 6

# singular values of S U for an orthonormal U stay close to one
u, _ = np.linalg.qr(rng.standard_normal((n, d)))
for m_sk in (64, 256, 1024, 4096):
    s = np.linalg.svd(srht_apply(srht_new(n, m_sk, seed=1), u), compute_uv=False)
    print(f"m_sk={m_sk:5d}  sigma(SU) in [{s.min():.3f}, {s.max():.3f}]")

a = rng.standard_normal((n, d)) @ np.diag(np.logspace(0, 3, d))  # kappa = 1000
b = a @ rng.standard_normal(d) + 0.1 * rng.standard_normal(n)
x_opt = np.linalg.lstsq(a, b, rcond=None)[0]

cfg = SolverConfig(eps1=1e-12, eps_ose=0.1)
m_sk, full = sketch_plan(d, n, cfg.eps_ose, cfg.delta1)
print(f"\nsketch rows {m_sk} of {n} (full transform: {full})")
res = high_precision_reg(a, b, cfg, record=True)
for t, x in enumerate(res.history):
    print(f"  step {t:2d}  ||A(x - x_opt)|| = {np.linalg.norm(a @ (x - x_opt)):.2e}")
opt = np.linalg.norm(a @ x_opt - b)
print(f"cost ratio - 1 = {res.residual_norm / opt - 1:.1e} after {res.iterations} steps")
