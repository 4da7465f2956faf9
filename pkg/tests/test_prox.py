import numpy as np
import pytest

from ocokit.prox import (DomainError, EntropySimplexSetup, EuclideanBallSetup,
                         EuclideanBoxSetup, ProductSetup, balanced_product_setup,
                         product_setup)

SETUPS = [
    EntropySimplexSetup(5),
    EuclideanBallSetup(4, 1.5),
    EuclideanBallSetup(3, 2.0, center=np.array([0.5, -0.25, 1.0])),
    EuclideanBoxSetup([-1.0, -2.0, 0.5], [1.0, 0.0, 2.0]),
]


def test_bregman_euclidean_matches_half_squared_distance():
    s = EuclideanBallSetup(2, 2.0)
    assert s.bregman(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0)


@pytest.mark.parametrize("setup", SETUPS, ids=lambda s: type(s).__name__)
def test_bregman_zero_at_center_point(setup):
    rng = np.random.default_rng(1)
    for _ in range(5):
        z = setup.sample(rng)
        z = np.maximum(z, 1e-9) if isinstance(setup, EntropySimplexSetup) else z
        if isinstance(setup, EntropySimplexSetup):
            z = z / z.sum()
        assert abs(setup.bregman(z, z)) < 1e-14


def test_entropy_bregman_is_kl_divergence():
    s = EntropySimplexSetup(2)
    z = np.array([0.5, 0.5])
    zp = np.array([0.25, 0.75])
    kl = float(np.sum(zp * np.log(zp / z)))
    assert s.bregman(z, zp) == pytest.approx(kl, abs=1e-14)


def test_entropy_boundary_center_rejected():
    s = EntropySimplexSetup(3)
    bad = np.array([0.0, 0.5, 0.5])
    with pytest.raises(DomainError):
        s.bregman(bad, np.full(3, 1 / 3))
    with pytest.raises(DomainError):
        s.prox(bad, np.zeros(3))


def test_prox_zero_dual_vector_is_identity():
    rng = np.random.default_rng(2)
    for setup in SETUPS:
        z = setup.sample(rng)
        if isinstance(setup, EntropySimplexSetup):
            z = np.maximum(z, 1e-6)
            z = z / z.sum()
        assert np.allclose(setup.prox(z, np.zeros(setup.dim)), z, atol=1e-12)


def test_euclidean_prox_is_projection():
    s = EuclideanBallSetup(3, 1.0)
    z = np.array([0.2, 0.1, -0.3])
    xi = np.array([-2.0, 0.5, 0.0])
    w = z - xi
    expected = w / np.linalg.norm(w)
    assert np.allclose(s.prox(z, xi), expected, atol=1e-14)


def test_entropy_prox_closed_form():
    s = EntropySimplexSetup(3)
    out = s.prox(np.full(3, 1 / 3), np.array([1.0, 0.0, 0.0]))
    want = np.array([np.exp(-1.0), 1.0, 1.0])
    want = want / want.sum()
    assert np.allclose(out, want, atol=1e-14)


def test_non_finite_dual_vector_rejected():
    s = EuclideanBallSetup(2, 1.0)
    with pytest.raises(ValueError):
        s.prox(np.zeros(2), np.array([np.nan, 0.0]))


def test_omega_centers():
    assert np.allclose(EntropySimplexSetup(4).omega_center(), 0.25)
    assert np.allclose(EuclideanBallSetup(3, 1.0).omega_center(), 0.0)
    # center outside the ball: the w-center sits on the boundary toward 0
    far = EuclideanBallSetup(2, 1.0, center=np.array([3.0, 0.0]))
    assert np.allclose(far.omega_center(), [2.0, 0.0])
    p = product_setup(EntropySimplexSetup(2), EuclideanBallSetup(2, 1.0))
    assert np.allclose(p.omega_center(), [0.5, 0.5, 0.0, 0.0])


def test_set_width_entropy_simplex():
    assert EntropySimplexSetup(7).set_width() == pytest.approx(np.log(7))


@pytest.mark.parametrize("setup", SETUPS, ids=lambda s: type(s).__name__)
def test_set_width_bounds_bregman_from_center(setup):
    rng = np.random.default_rng(3)
    zc = setup.omega_center()
    if isinstance(setup, EntropySimplexSetup):
        width = setup.set_width()
        # vertices attain log(n) in the limit; sampled interior points stay below
        for _ in range(200):
            assert setup.bregman(zc, setup.sample(rng)) <= width + 1e-12
    else:
        width = setup.set_width()
        worst = max(setup.bregman(zc, setup.sample(rng)) for _ in range(2000))
        assert worst <= width + 1e-12
        # multi-start numerical maximization approaches the returned width
        if isinstance(setup, EuclideanBallSetup):
            direction = setup.center - zc
            nd = np.linalg.norm(direction)
            far = setup.center + (direction / nd if nd > 0 else np.eye(setup.dim)[0]) * setup.radius
            assert setup.bregman(zc, far) == pytest.approx(width, rel=1e-12)


def test_set_width_centered_ball_is_half_radius_squared():
    s = EuclideanBallSetup(6, 2.0)
    assert s.set_width() == pytest.approx(2.0)


def test_strong_convexity_modulus_one():
    rng = np.random.default_rng(4)
    for setup in SETUPS:
        for _ in range(200):
            z = setup.sample(rng)
            zp = setup.sample(rng)
            if isinstance(setup, EntropySimplexSetup):
                z = np.maximum(z, 1e-12)
                z = z / z.sum()
            lhs = setup.bregman(z, zp)
            rhs = 0.5 * setup.norm(z - zp) ** 2
            assert lhs >= rhs - 1e-10 * max(1.0, abs(lhs))


def test_prox_first_order_optimality():
    rng = np.random.default_rng(5)
    for setup in SETUPS:
        for _ in range(40):
            z = setup.sample(rng)
            if isinstance(setup, EntropySimplexSetup):
                z = np.maximum(z, 1e-9)
                z = z / z.sum()
            xi = rng.normal(size=setup.dim)
            zp = setup.prox(z, xi)
            g = xi + setup.dgf_grad(zp) - setup.dgf_grad(z)
            for _ in range(20):
                comp = setup.sample(rng)
                assert g @ (comp - zp) >= -1e-8


def test_simplex_prox_normalized_and_positive():
    rng = np.random.default_rng(6)
    s = EntropySimplexSetup(10)
    z = s.omega_center()
    for _ in range(200):
        z = s.prox(z, rng.normal(size=10))
        assert abs(z.sum() - 1.0) <= 1e-12
        assert np.all(z > 0)


def test_product_prox_decomposes_exactly():
    rng = np.random.default_rng(7)
    sx = EuclideanBallSetup(3, 1.0)
    sy = EntropySimplexSetup(4)
    p = ProductSetup([sx, sy], [2.0, 0.5])
    x = sx.sample(rng)
    y = np.maximum(sy.sample(rng), 1e-9)
    y = y / y.sum()
    xi = rng.normal(size=7)
    joint = p.prox(np.concatenate([x, y]), xi)
    manual = np.concatenate([sx.prox(x, xi[:3] / 2.0), sy.prox(y, xi[3:] / 0.5)])
    assert np.array_equal(joint, manual)


def test_product_width_and_center():
    sx = EuclideanBallSetup(2, 1.0)
    sy = EntropySimplexSetup(3)
    p = product_setup(sx, sy, 1.0, 1.0)
    assert p.set_width() == pytest.approx(sx.set_width() + sy.set_width())
    assert np.allclose(p.omega_center(),
                       np.concatenate([sx.omega_center(), sy.omega_center()]))


def test_balanced_product_has_unit_width():
    sx = EuclideanBallSetup(5, 1.3)
    sy = EntropySimplexSetup(3)
    p, big_l = balanced_product_setup(sx, sy, 2.0, 1.5, 0.0)
    assert p.set_width() == pytest.approx(1.0)
    ox, oy = sx.set_width(), sy.set_width()
    assert big_l == pytest.approx(2.0 * ox + 2 * 1.5 * np.sqrt(ox * oy))


def test_balanced_product_lipschitz_bound_is_valid():
    # Lipschitz operators with the declared block bounds stay L-Lipschitz
    # in the composite norm: exercise with a bilinear operator.
    rng = np.random.default_rng(8)
    m, n = 4, 3
    A = rng.normal(size=(m, n))
    sx = EuclideanBallSetup(m, 1.0)
    sy = EuclideanBallSetup(n, 1.0)
    l_xy = float(np.linalg.norm(A, 2))
    p, big_l = balanced_product_setup(sx, sy, 0.0, l_xy, 0.0)

    def op(z):
        x, y = z[:m], z[m:]
        return np.concatenate([A @ y, -A.T @ x])

    for _ in range(300):
        z1 = p.sample(rng)
        z2 = p.sample(rng)
        lhs = p.dual_norm(op(z1) - op(z2))
        assert lhs <= big_l * p.norm(z1 - z2) + 1e-10


def test_product_dimension_mismatch():
    p = product_setup(EuclideanBallSetup(2, 1.0), EntropySimplexSetup(2))
    with pytest.raises(ValueError):
        p.prox(np.zeros(3), np.zeros(3))


def test_unit_weight_euclidean_product_is_joint_projection():
    rng = np.random.default_rng(9)
    a = EuclideanBallSetup(3, 1.0)
    b = EuclideanBallSetup(2, 0.5)
    p = product_setup(a, b, 1.0, 1.0)
    z = np.concatenate([a.sample(rng), b.sample(rng)])
    xi = rng.normal(size=5)
    w = z - xi
    joint = np.concatenate([a._project(w[:3]), b._project(w[3:])])
    assert np.allclose(p.prox(z, xi), joint, atol=1e-15)


def test_setups_are_thread_safe():
    from concurrent.futures import ThreadPoolExecutor
    s = EntropySimplexSetup(8)
    rng = np.random.default_rng(10)
    z = s.omega_center()
    xis = [rng.normal(size=8) for _ in range(64)]
    serial = [s.prox(z, xi) for xi in xis]
    with ThreadPoolExecutor(max_workers=8) as pool:
        threaded = list(pool.map(lambda xi: s.prox(z, xi), xis))
    for a, b in zip(serial, threaded):
        assert np.array_equal(a, b)
