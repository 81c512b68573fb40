"""A point that passes every second-order test yet is not optimal.

With a linear objective ``f(X) = <X, v_0 o v_1 o v_2>`` the constructed point
has a vanishing Riemannian gradient and a Hessian form that never goes
negative on the desingularized manifold.  Still, a tangent-cone direction of
the rank-bounded tensor set decreases ``f`` at first order.
"""

from tensordesing import tucker_geometry as tg
from tensordesing.stationarity import (
    counterexample_cone_direction, counterexample_construct, first_order_residual, second_order_quadform,
)
from tensordesing.tensor_core import inner, tucker_rank

ce = counterexample_construct(dims=(4, 4, 4), r=(2, 2, 2), r_under=(1, 1, 1), seed=0)
x = ce.point
print(f"Tucker rank of phi(x): {tucker_rank(tg.phi(x))}, parameter rank {x.ranks}")
print(f"||grad f|| = {ce.egrad_norm:.3f}")
print(f"first-order residual = {first_order_residual(x, ce.egrad):.1e}")
print(f"||Riemannian gradient|| = {tg.tangent_norm(tg.riem_grad(x, ce.egrad)):.1e}")

# Sample the Hessian quadratic form on random unit tangent vectors.
vals = []
for seed in range(500):
    xi = tg.random_tangent(x, seed)
    xi = (1.0 / tg.tangent_norm(xi)) * xi
    vals.append(second_order_quadform(x, xi, ce.egrad, None))
print(f"Hessian form over 500 unit tangents: min {min(vals):.1e}, max {max(vals):.1e}")

v = counterexample_cone_direction(ce).dense()
print(f"<grad f, V> along the cone direction = {inner(ce.egrad, v):.4f} "
      f"(expected {-ce.egrad_norm ** 2:.4f})")
for t in (1e-1, 1e-2):
    moved = tg.phi(x) + t * v
    print(f"  f(X + {t:g} V) - f(X) = {inner(ce.egrad, moved) - inner(ce.egrad, tg.phi(x)):.2e}, "
          f"rank of X + tV: {tucker_rank(moved)}")
print(f"X + tV stays in the rank-{x.ranks} set: {all(r <= 2 for r in tucker_rank(tg.phi(x) + 0.1 * v))}")
