"""Tensor-train desingularization: the map psi, its inverse, and the group action.

A TT tensor is paired with the projectors onto the orthogonal complements of
its right interfaces.  The pair forgets the gauge freedom of the cores, and
``psi_inverse`` rebuilds a right-orthogonal TT from it.
"""

import numpy as np

from tensordesing import tt_geometry as tt
from tensordesing.tensor_core import make_rng

dims, ranks = (4, 3, 5, 3), (2, 3, 2)
u = tt.random_tt(dims, ranks, seed=0)
x = tt.tt_eval(u)
print(f"TT with dims {dims} and ranks {ranks}; ||X|| = {np.linalg.norm(x):.3f}")

for k in range(1, u.ndim):
    err = np.linalg.norm(tt.unfolding(x, k) - tt.interface_leq(u, k) @ tt.interface_geq(u, k).T)
    print(f"  unfolding {k}: ||X_<k> - X_<=k X_>=k+1^T|| = {err:.1e}")

element = tt.psi(u)
back = tt.psi_inverse(element.x, element.bases)
print(f"psi_inverse reproduces X to {np.linalg.norm(tt.tt_eval(back) - x):.1e}")
for c, core in enumerate(back.cores[1:], start=1):
    r = tt.right_unfold(core)
    print(f"  core {c}: ||R R^T - I|| = {np.linalg.norm(r @ r.T - np.eye(r.shape[0])):.1e}")

rng = make_rng(1)
mats = [np.eye(r) + 0.4 * rng.standard_normal((r, r)) for r in ranks]
moved = tt.group_action_tt(u, mats)
print(f"group action changes the cores by {max(np.linalg.norm(a - b) for a, b in zip(moved.cores, u.cores)):.2f} "
      f"but X by {np.linalg.norm(tt.tt_eval(moved) - x):.1e}")
found = tt.recover_group_element(moved, u)
print(f"recovered group elements match to {max(np.linalg.norm(a - b) for a, b in zip(found, mats)):.1e}")
proj_gap = max(np.linalg.norm(a @ a.T - b @ b.T) for a, b in zip(tt.psi(moved).bases, element.bases))
print(f"projectors of the moved TT differ by {proj_gap:.1e}")

print(f"horizontal dimension: counted {tt.horizontal_dimension(u)}, "
      f"formula {tt.horizontal_dimension_formula(dims, ranks)}")
