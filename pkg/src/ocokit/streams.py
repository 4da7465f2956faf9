"""Loss and saddle streams used by the experiment runner and the test
batteries. Generators are seeded and deterministic; every stream exposes
the structured per-step components the reference solvers understand, plus
its exactly computed structure constants (G, alpha, L)."""

import numpy as np

from .core import LossOracle, SaddleOracle
from .oracle import BilinearSaddle, IsotropicQuadratic, MaxAffine
from .prox import EntropySimplexSetup, balanced_product_setup


class SequenceLoss(LossOracle):
    """Loss stream backed by a list of structured components."""

    def __init__(self, components):
        self.components = list(components)

    @property
    def horizon(self):
        return len(self.components)

    def component(self, t):
        return self.components[t - 1]

    def value(self, t, x):
        return self.components[t - 1].value(x)

    def subgradient(self, t, x):
        return self.components[t - 1].subgradient(x)


def max_affine_stream(rng, T, dim, pieces=4, scale=1.0, jitter=0.35):
    """Random max-of-affine losses on the simplex.

    Every step perturbs a fixed kinked backbone drawn once per stream, so
    the losses vary while the hindsight comparator sits at a stable kink
    and realized regret stays solidly positive. Returns (stream, G) with
    G = max ||a||_inf, the exact l1-dual subgradient bound.
    """
    base_rows = rng.uniform(-scale, scale, size=(pieces, dim))
    base_offs = rng.uniform(-0.2, 0.2, size=pieces) * scale
    comps = []
    for _ in range(T):
        rows = np.clip(base_rows + jitter * rng.uniform(-1, 1, size=(pieces, dim)) * scale,
                       -scale, scale)
        offs = base_offs + jitter * rng.uniform(-0.2, 0.2, size=pieces) * scale
        comps.append(MaxAffine(rows, offs))
    g = max(np.max(np.abs(c.rows)) for c in comps)
    return SequenceLoss(comps), float(g)


def quadratic_stream(rng, T, dim, alpha, setup_radius, center_radius=None):
    """Strongly convex isotropic quadratics alpha/2 ||x - c_t||^2 with
    centers drawn outside the domain so gradients stay active at the
    constrained optimum. Returns (stream, G) with
    G = alpha max_t (R + ||c_t||)."""
    center_radius = 1.6 * setup_radius if center_radius is None else center_radius
    comps = []
    max_c = 0.0
    for _ in range(T):
        d = rng.normal(size=dim)
        d /= np.linalg.norm(d)
        c = d * center_radius * rng.uniform(0.8, 1.0)
        max_c = max(max_c, float(np.linalg.norm(c)))
        comps.append(IsotropicQuadratic.from_center(alpha, c))
    return SequenceLoss(comps), float(alpha * (setup_radius + max_c))


class BilinearGameStream(SaddleOracle):
    """Static zero-sum matrix game phi(x, y) = x'Ay on simplices."""

    def __init__(self, saddle):
        self.saddle = saddle

    def value(self, t, x, y):
        return self.saddle.value(x, y)

    def operator(self, t, x, y):
        return self.saddle.operator(x, y)

    def component_x(self, t, y):
        """phi(., y) as a linear objective in x."""
        return IsotropicQuadratic(0.0, self.saddle.matrix @ y + self.saddle.lin_x,
                                  float(self.saddle.lin_y @ y))

    def component_y(self, t, x):
        """phi(x, .) as a (concave) linear objective in y."""
        return IsotropicQuadratic(0.0, self.saddle.matrix.T @ x + self.saddle.lin_y,
                                  float(self.saddle.lin_x @ x))


def matrix_game(rng, m, n, entries=(-1.0, 1.0)):
    """Random sign-matrix game with the product proximal setup tuned to it.

    Returns (stream, setup, L) where the setup is the width-1 weighted
    product of entropy simplices and L is the exact operator Lipschitz
    constant max |A_ij| cross bound under that norm.
    """
    A = rng.choice(entries, size=(m, n))
    saddle = BilinearSaddle(A)
    l_xy = float(np.max(np.abs(A)))
    setup, big_l = balanced_product_setup(EntropySimplexSetup(m), EntropySimplexSetup(n),
                                          0.0, l_xy, 0.0)
    return BilinearGameStream(saddle), setup, big_l
