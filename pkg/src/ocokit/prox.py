"""Proximal setups for the domains used throughout the toolkit.

A proximal setup bundles a norm, a distance-generating function (d.g.f.)
that is 1-strongly convex with respect to that norm, and the machinery
derived from them:

* Bregman distance   V_z(z') = w(z') - w(z) - <grad w(z), z' - z>
* prox-mapping       Prox_z(xi) = argmin_{z' in Z} { <xi, z'> + V_z(z') }
* center             z_w = argmin_{z in Z} w(z)
* set width          Omega >= max_z V_{z_w}(z)

Supported domains: the standard simplex with the negative-entropy d.g.f.
(l1 norm, prox is a multiplicative update), Euclidean balls and boxes with
the squared-l2 d.g.f. (prox is plain projection), and weighted products of
setups (prox decomposes blockwise).

All setups are immutable after construction and every operation is a pure
function, so instances are safe to share across threads.
"""

import numpy as np
from scipy.special import logsumexp, xlogy

# Simplex coordinates are floored at this value before logs are taken: the
# entropy gradient is undefined at the boundary.
MIN_SIMPLEX_COORD = 1e-15


class DomainError(ValueError):
    """A point violates a domain requirement, e.g. an exact-zero simplex
    coordinate where the entropy gradient does not exist."""


class ProximalSetup:
    """Base interface. Concrete setups implement the geometry-specific
    pieces; ``bregman`` is shared."""

    dim: int

    def norm(self, z):
        raise NotImplementedError

    def dual_norm(self, xi):
        raise NotImplementedError

    def dgf(self, z):
        """Value of the distance-generating function w at z."""
        raise NotImplementedError

    def dgf_grad(self, z):
        """Gradient of w at an interior point z."""
        raise NotImplementedError

    def omega_center(self):
        """Minimizer of w over the domain."""
        raise NotImplementedError

    def set_width(self):
        """Upper bound Omega on V_{z_w}(z) over the domain (exact for the
        canonical domains implemented here)."""
        raise NotImplementedError

    def prox(self, z, xi):
        """Prox-mapping argmin_{z' in Z} { <xi, z'> + V_z(z') }."""
        raise NotImplementedError

    def contains(self, z, tol=1e-9):
        raise NotImplementedError

    def sample(self, rng):
        """Draw a point from the domain (for spot checks and oracles)."""
        raise NotImplementedError

    def bregman(self, z, zp):
        """Bregman distance V_z(z') from prox center z to z'."""
        z = np.asarray(z, dtype=float)
        zp = np.asarray(zp, dtype=float)
        return float(self.dgf(zp) - self.dgf(z) - self.dgf_grad(z) @ (zp - z))


def _check_finite(xi):
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise ValueError("non-finite dual vector passed to prox-mapping")
    return xi


class EntropySimplexSetup(ProximalSetup):
    """Standard simplex with the negative-entropy d.g.f.

    w(z) = sum_i z_i log z_i, 1-strongly convex w.r.t. the l1 norm
    (Pinsker), dual norm l-infinity. The prox-mapping is the normalized
    multiplicative update z_i exp(-xi_i) / sum_j z_j exp(-xi_j) and the set
    width is log(n).
    """

    def __init__(self, dim):
        if dim < 2:
            raise ValueError("simplex setup needs dim >= 2")
        self.dim = int(dim)

    def norm(self, z):
        return float(np.sum(np.abs(z)))

    def dual_norm(self, xi):
        return float(np.max(np.abs(xi)))

    def dgf(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z < 0):
            raise DomainError("negative simplex coordinate")
        return float(np.sum(xlogy(z, z)))

    def dgf_grad(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0.0):
            raise DomainError("entropy gradient undefined at the simplex boundary")
        return np.log(np.maximum(z, MIN_SIMPLEX_COORD)) + 1.0

    def omega_center(self):
        return np.full(self.dim, 1.0 / self.dim)

    def set_width(self):
        return float(np.log(self.dim))

    def prox(self, z, xi):
        xi = _check_finite(xi)
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0.0):
            raise DomainError("prox center must be interior to the simplex")
        logw = np.log(np.maximum(z, MIN_SIMPLEX_COORD)) - xi
        w = np.exp(logw - logsumexp(logw))
        if np.any(w == 0.0):
            # extreme dual vectors can underflow single coordinates
            w = np.maximum(w, 1e-250)
            w = w / np.sum(w)
        return w

    def contains(self, z, tol=1e-9):
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= -tol) and abs(np.sum(z) - 1.0) <= tol)

    def sample(self, rng):
        return rng.dirichlet(np.ones(self.dim))


class EuclideanBallSetup(ProximalSetup):
    """Euclidean ball {||z - center||_2 <= radius} with w(z) = <z, z> / 2.

    The prox-mapping is the projection of z - xi onto the ball. The
    w-center is the projection of the origin, and the set width is the
    exact maximum (||center - z_w|| + radius)^2 / 2, which reduces to
    radius^2 / 2 for a centered ball.
    """

    def __init__(self, dim, radius, center=None):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.dim = int(dim)
        self.radius = float(radius)
        self.center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        if self.center.shape != (self.dim,):
            raise ValueError("center dimension mismatch")

    def norm(self, z):
        return float(np.linalg.norm(z))

    def dual_norm(self, xi):
        return float(np.linalg.norm(xi))

    def dgf(self, z):
        z = np.asarray(z, dtype=float)
        return 0.5 * float(z @ z)

    def dgf_grad(self, z):
        return np.asarray(z, dtype=float).copy()

    def _project(self, w):
        d = w - self.center
        nd = np.linalg.norm(d)
        if nd <= self.radius:
            return w
        return self.center + (self.radius / nd) * d

    def omega_center(self):
        return self._project(np.zeros(self.dim))

    def set_width(self):
        zc = self.omega_center()
        return 0.5 * (np.linalg.norm(self.center - zc) + self.radius) ** 2

    def prox(self, z, xi):
        xi = _check_finite(xi)
        return self._project(np.asarray(z, dtype=float) - xi)

    def contains(self, z, tol=1e-9):
        return bool(np.linalg.norm(np.asarray(z, dtype=float) - self.center) <= self.radius + tol)

    def sample(self, rng):
        d = rng.normal(size=self.dim)
        d /= np.linalg.norm(d)
        r = self.radius * rng.uniform() ** (1.0 / self.dim)
        return self.center + r * d


class EuclideanBoxSetup(ProximalSetup):
    """Axis-aligned box with the squared-l2 d.g.f.; prox is coordinatewise
    clipping of z - xi."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower >= self.upper):
            raise ValueError("box bounds must satisfy lower < upper coordinatewise")
        self.dim = self.lower.shape[0]

    def norm(self, z):
        return float(np.linalg.norm(z))

    def dual_norm(self, xi):
        return float(np.linalg.norm(xi))

    def dgf(self, z):
        z = np.asarray(z, dtype=float)
        return 0.5 * float(z @ z)

    def dgf_grad(self, z):
        return np.asarray(z, dtype=float).copy()

    def omega_center(self):
        return np.clip(np.zeros(self.dim), self.lower, self.upper)

    def set_width(self):
        zc = self.omega_center()
        return 0.5 * float(np.sum(np.maximum((self.lower - zc) ** 2, (self.upper - zc) ** 2)))

    def prox(self, z, xi):
        xi = _check_finite(xi)
        return np.clip(np.asarray(z, dtype=float) - xi, self.lower, self.upper)

    def contains(self, z, tol=1e-9):
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= self.lower - tol) and np.all(z <= self.upper + tol))

    def sample(self, rng):
        return rng.uniform(self.lower, self.upper)


class ProductSetup(ProximalSetup):
    """Weighted product of setups on Z = Z_1 x ... x Z_k.

    With weights beta_i > 0 the composite d.g.f. is
    w(z) = sum_i beta_i w_i(z_i), which is 1-strongly convex w.r.t. the norm
    ||z||^2 = sum_i beta_i ||z_i||_i^2 whose dual is
    ||xi||_*^2 = sum_i ||xi_i||_{i,*}^2 / beta_i. The prox decomposes as
    Prox_z(xi) = [Prox_{z_i}(xi_i / beta_i)]_i and the set width is
    sum_i beta_i Omega_i.
    """

    def __init__(self, parts, betas=None):
        parts = list(parts)
        if len(parts) < 2:
            raise ValueError("product setup needs at least two parts")
        self.parts = parts
        self.betas = np.ones(len(parts)) if betas is None else np.asarray(betas, dtype=float)
        if self.betas.shape != (len(parts),) or np.any(self.betas <= 0):
            raise ValueError("one positive beta per part is required")
        dims = [p.dim for p in parts]
        self.dim = int(sum(dims))
        self._offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)

    def split(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ValueError("point dimension mismatch with product setup")
        return [z[self._offsets[i]:self._offsets[i + 1]] for i in range(len(self.parts))]

    def join(self, blocks):
        return np.concatenate([np.asarray(b, dtype=float) for b in blocks])

    def norm(self, z):
        blocks = self.split(z)
        return float(np.sqrt(sum(b * p.norm(blk) ** 2 for b, p, blk in zip(self.betas, self.parts, blocks))))

    def dual_norm(self, xi):
        blocks = self.split(xi)
        return float(np.sqrt(sum(p.dual_norm(blk) ** 2 / b for b, p, blk in zip(self.betas, self.parts, blocks))))

    def dgf(self, z):
        blocks = self.split(z)
        return float(sum(b * p.dgf(blk) for b, p, blk in zip(self.betas, self.parts, blocks)))

    def dgf_grad(self, z):
        blocks = self.split(z)
        return self.join([b * p.dgf_grad(blk) for b, p, blk in zip(self.betas, self.parts, blocks)])

    def omega_center(self):
        return self.join([p.omega_center() for p in self.parts])

    def set_width(self):
        return float(sum(b * p.set_width() for b, p in zip(self.betas, self.parts)))

    def prox(self, z, xi):
        zb = self.split(z)
        xb = self.split(_check_finite(xi))
        return self.join([p.prox(zi, xii / b) for b, p, zi, xii in zip(self.betas, self.parts, zb, xb)])

    def contains(self, z, tol=1e-9):
        return all(p.contains(blk, tol) for p, blk in zip(self.parts, self.split(z)))

    def sample(self, rng):
        return self.join([p.sample(rng) for p in self.parts])


def product_setup(setup_x, setup_y, beta_x=1.0, beta_y=1.0):
    """Two-block product setup with explicit weights."""
    return ProductSetup([setup_x, setup_y], [beta_x, beta_y])


def balanced_product_setup(setup_x, setup_y, l_xx, l_xy, l_yy=0.0):
    """Product setup tuned for a smooth saddle operator, plus its Lipschitz
    constant in the induced norm.

    Given blockwise Lipschitz bounds for an operator F on X x Y,

        ||F_x(z) - F_x(z')||_{x,*} <= l_xx ||dx||_x + l_xy ||dy||_y
        ||F_y(z) - F_y(z')||_{y,*} <= l_xy ||dx||_x + l_yy ||dy||_y,

    the weights

        beta_i = (sum_j l_ij sqrt(Omega_i Omega_j)) / (Omega_i L),
        L = l_xx Omega_x + 2 l_xy sqrt(Omega_x Omega_y) + l_yy Omega_y,

    make the composite set width exactly 1 while F is L-Lipschitz with
    respect to the composite norm (Schur bound on the scaled block matrix).
    Returns ``(setup, L)``.
    """
    if l_xy < 0 or l_xx < 0 or l_yy < 0:
        raise ValueError("Lipschitz bounds must be nonnegative")
    ox, oy = setup_x.set_width(), setup_y.set_width()
    cross = l_xy * np.sqrt(ox * oy)
    big_l = l_xx * ox + 2.0 * cross + l_yy * oy
    if big_l <= 0:
        raise ValueError("at least one Lipschitz bound must be positive")
    beta_x = (l_xx * ox + cross) / (ox * big_l)
    beta_y = (l_yy * oy + cross) / (oy * big_l)
    return ProductSetup([setup_x, setup_y], [beta_x, beta_y]), float(big_l)
