"""Walk through the fermionic toy model: CAR relations, discrete Brownian
motion on the Fock vacuum, and the Ito isometry for left integrals.

Run with ``python demos/clifford_brownian_demo.py``.
"""

import numpy as np

from artifact import ModeGrid, brownian_motion, creation, vacuum
from artifact.stochastic_process import left_ito_integral, random_vector_process

n = 4
rng = np.random.default_rng(1)

z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
A, B = creation(z), creation(w)
anti = A.conj().T @ B + B @ A.conj().T
print(f"{{a(z), a*(w)}} - <z, w> I  : {np.abs(anti - np.vdot(z, w) * np.eye(2**n)).max():.2e}")

grid = ModeGrid.uniform(1.0, n)
for j in range(n + 1):
    W = brownian_motion(grid, j)
    err = np.abs(W @ W - grid.times[j] * np.eye(grid.dim)).max()
    print(f"t = {grid.times[j]:.2f}   |W(t)^2 - t I| = {err:.1e}   |W(t) Omega|^2 = "
          f"{np.linalg.norm(W @ vacuum(n))**2:.3f}")

phi = random_vector_process(grid, rng)
x = left_ito_integral(phi)
lhs = np.linalg.norm(x) ** 2
rhs = sum(np.linalg.norm(phi.values[k]) ** 2 * grid.deltas[k] for k in range(n))
print(f"Ito isometry: |int dW phi|^2 = {lhs:.6f}, int |phi|^2 dt = {rhs:.6f}")
