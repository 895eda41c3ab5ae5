import mpmath as mp
import numpy as np
import pytest
from numpy.polynomial import legendre as npleg
from scipy import special

from mpi_isr.emmath import (
    WaveContext,
    dipole_field,
    dipole_spectrum,
    legendre,
    legendre_all,
    spherical_hankel2,
    spherical_hankel2_all,
    spherical_quadrature,
    translation_coefficients,
    translation_matrix,
    translation_operator,
    translation_order,
)
from mpi_isr.exceptions import GeometryError, ParameterError, SingularityError

mp.mp.dps = 40


def hankel2_mp(l, x):
    x = mp.mpf(x)
    pref = mp.sqrt(mp.pi / (2 * x))
    return complex(pref * (mp.besselj(l + 0.5, x) - 1j * mp.bessely(l + 0.5, x)))


def factorization_error(kd, digits=3.0, n_trials=12, seed=0):
    """Worst relative error of the quadrature-factorized Green's function.

    Offsets lie on the box surface and the translation is as short as the
    separation ratio 0.3 allows.
    """
    rng = np.random.default_rng(seed)
    k = 1.0
    L = translation_order(k, kd, digits)
    grid = spherical_quadrature(L)
    worst = 0.0
    for _ in range(n_trials):
        u = rng.normal(size=3)
        v = rng.normal(size=3)
        d = 0.5 * kd * v / np.linalg.norm(v)
        X = (np.linalg.norm(d) / 0.3) * u / np.linalg.norm(u)
        T = translation_operator(grid, k, X)
        approx = (-1j * k / (4 * np.pi)) * grid.integrate(T * np.exp(-1j * k * grid.directions @ d))
        R = np.linalg.norm(X + d)
        exact = np.exp(-1j * k * R) / R
        worst = max(worst, abs(approx - exact) / abs(exact))
    return worst


class TestLegendre:
    def test_trivial_values(self):
        assert legendre(0, 0.3) == 1.0
        assert legendre(1, -0.5) == -0.5

    def test_against_power_series_coefficients(self):
        coeffs = npleg.leg2poly([0] * 10 + [1])
        expected = np.polynomial.polynomial.polyval(0.7, coeffs)
        assert abs(legendre(10, 0.7) - expected) / abs(expected) < 1e-12

    def test_endpoint_values(self):
        P = legendre_all(30, np.array([1.0, -1.0]))
        assert np.allclose(P[:, 0], 1.0)
        assert np.allclose(P[:, 1], (-1.0) ** np.arange(31))

    def test_out_of_domain(self):
        with pytest.raises(ParameterError):
            legendre(3, 1.5)
        with pytest.raises(ParameterError):
            legendre(-1, 0.0)


class TestHankel:
    def test_order_zero(self):
        assert abs(spherical_hankel2(0, np.pi) - (-1j / np.pi)) < 1e-15

    def test_order_one_closed_form(self):
        x = 2.0
        closed = np.exp(-1j * x) * (-1.0 / x + 1j / x**2)
        assert abs(spherical_hankel2(1, x) - closed) / abs(closed) < 1e-12

    def test_series_oracle(self):
        ref = hankel2_mp(5, 3.0)
        assert abs(spherical_hankel2(5, 3.0) - ref) / abs(ref) < 1e-10

    @pytest.mark.parametrize("x", [0.05, 0.7, 3.0, 12.5, 40.0, 150.0])
    def test_all_orders_against_mpmath(self, x):
        lmax = int(x) + 25
        h = spherical_hankel2_all(lmax, np.array(x))
        for l in range(0, lmax + 1, 3):
            ref = hankel2_mp(l, x)
            assert abs(h[l] - ref) / abs(ref) < 1e-10

    def test_bessel_part_matches_scipy(self):
        x = np.linspace(0.1, 60.0, 200)
        h = spherical_hankel2_all(40, x)
        for l in (0, 7, 20, 40):
            assert np.allclose(h[l].real, special.spherical_jn(l, x), rtol=1e-9, atol=1e-13)

    def test_rejects_non_positive(self):
        with pytest.raises(ParameterError):
            spherical_hankel2(2, 0.0)


class TestQuadrature:
    def test_order_zero(self):
        g = spherical_quadrature(0)
        assert g.count == 2
        assert abs(g.weights.sum() - 4 * np.pi) < 1e-13

    def test_second_moment(self):
        g = spherical_quadrature(2)
        assert abs(g.integrate(g.directions[:, 2] ** 2) - 4 * np.pi / 3) < 1e-12

    def test_spherical_harmonic_orthonormality(self):
        L = 6
        g = spherical_quadrature(L)
        Y = []
        for n in range(L + 1):
            for m in range(-n, n + 1):
                Y.append(special.sph_harm_y(n, m, g.theta, g.phi))
        Y = np.array(Y)
        gram = (Y.conj() * g.weights) @ Y.T
        assert np.max(np.abs(gram - np.eye(len(Y)))) < 1e-9

    def test_tangential_frame_round_trip(self, rng):
        g = spherical_quadrature(5)
        jt = rng.normal(size=g.count) + 1j * rng.normal(size=g.count)
        jp = rng.normal(size=g.count) + 1j * rng.normal(size=g.count)
        vec = g.tangential_to_cartesian(jt, jp)
        assert np.allclose(np.einsum("nk,nk->n", vec, g.directions), 0, atol=1e-12)
        back = g.cartesian_to_tangential(vec)
        assert np.allclose(back[0], jt) and np.allclose(back[1], jp)


class TestTranslationOrder:
    def test_tiny_box(self):
        L = translation_order(1.0, 1e-9)
        assert 1 <= L <= 10

    def test_monotone_in_diameter(self):
        ds = np.geomspace(1e-3, 50, 60)
        Ls = [translation_order(1.0, d) for d in ds]
        assert all(b >= a for a, b in zip(Ls, Ls[1:]))

    @pytest.mark.parametrize("kd", [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 15.0, 20.0])
    def test_factorization_accuracy(self, kd):
        assert factorization_error(kd) < 1e-3

    def test_rejects_bad_input(self):
        with pytest.raises(ParameterError):
            translation_order(0.0, 1.0)


class TestTranslationOperator:
    def test_order_zero_is_constant(self):
        g = spherical_quadrature(0)
        X = np.array([0.3, -1.2, 2.0])
        T = translation_operator(g, 2.0, X)
        assert np.allclose(T, spherical_hankel2(0, 2.0 * np.linalg.norm(X)))

    def test_forward_direction(self):
        g = spherical_quadrature(8)
        X = 3.0 * g.directions[17]
        T = translation_operator(g, 1.5, X)
        expected = translation_coefficients(8, 1.5 * 3.0).sum()
        assert abs(T[17] - expected) / abs(expected) < 1e-12

    def test_matrix_matches_single(self, rng):
        g = spherical_quadrature(6)
        X = rng.normal(size=(5, 3)) * 3
        M = translation_matrix(g, 1.0, X)
        for i in range(5):
            assert np.allclose(M[i], translation_operator(g, 1.0, X[i]))

    def test_geometry_error(self):
        g = spherical_quadrature(3)
        with pytest.raises(GeometryError):
            translation_matrix(g, 1.0, [[0.1, 0, 0]], source_radius=0.2)


class TestDipole:
    def test_linearity(self):
        ctx = WaveContext(9e9)
        obs = np.array([[0.1, 0.2, 1.0], [-0.4, 0.0, 0.7]])
        p = np.array([0.3, 1.0 - 0.5j, 0.2j])
        assert np.allclose(dipole_field(2 * p, [0, 0, 0], obs, ctx), 2 * dipole_field(p, [0, 0, 0], obs, ctx))

    def test_image_pair_nulls_tangential_field(self):
        ctx = WaveContext(9e9)
        x, y = np.meshgrid(np.linspace(-1, 1, 21), np.linspace(-1, 1, 21))
        obs = np.stack([x.ravel(), y.ravel(), np.zeros(x.size)], axis=1)
        E = dipole_field([0, 1, 0], [0, 0, 0.1], obs, ctx) + dipole_field([0, -1, 0], [0, 0, -0.1], obs, ctx)
        ref = np.abs(dipole_field([0, 1, 0], [0, 0, 0.1], obs, ctx)).max()
        assert np.abs(E[:, :2]).max() < 1e-10 * ref

    def test_far_zone_magnitude(self):
        ctx = WaveContext(9e9)
        R = 100.0 / ctx.k
        E = dipole_field([0, 0, 1.0], [0, 0, 0], [R, 0, 0], ctx)
        far = ctx.eta * ctx.k * 1.0 / (4 * np.pi * R)
        assert abs(np.linalg.norm(E) - far) / far < 0.01

    def test_against_green_function_derivatives(self):
        # E = -j k eta (I + grad grad / k^2) g p with g = exp(-jkR) / (4 pi R)
        ctx = WaveContext(3e8 / 0.7)
        k, eta = ctx.k, ctx.eta
        p = np.array([0.2, 1.0, -0.4j])
        r = np.array([0.31, -0.12, 0.23])

        def g(x, y, z):
            R = mp.sqrt(x * x + y * y + z * z)
            return mp.exp(-1j * k * R) / (4 * mp.pi * R)

        H = np.zeros((3, 3), dtype=complex)
        for a in range(3):
            for b in range(3):
                orders = [0, 0, 0]
                orders[a] += 1
                orders[b] += 1
                H[a, b] = complex(mp.diff(g, tuple(mp.mpf(v) for v in r), tuple(orders)))
        g0 = complex(g(*[mp.mpf(v) for v in r]))
        expected = -1j * k * eta * (g0 * p + H @ p / k**2)
        E = dipole_field(p, [0, 0, 0], r, ctx)
        assert np.allclose(E, expected, rtol=1e-10)

    def test_singularity(self):
        with pytest.raises(SingularityError):
            dipole_field([0, 1, 0], [0, 0, 0], [[0, 0, 0]], WaveContext(1e9))

    def test_spectrum_reproduces_field(self):
        ctx = WaveContext(9e9)
        radius = 0.05
        L = translation_order(ctx.k, 2 * radius)
        g = spherical_quadrature(L)
        offset = np.array([0.01, -0.02, 0.015])
        p = np.array([0.1, 1.0, 0.3j])
        J = dipole_spectrum(p, offset, g, ctx)
        rng = np.random.default_rng(3)
        obs = rng.normal(size=(20, 3))
        obs *= (0.6 + rng.uniform(size=(20, 1))) / np.linalg.norm(obs, axis=1, keepdims=True)
        T = translation_matrix(g, ctx.k, obs, source_radius=radius)
        E = (-1j / (4 * np.pi)) * (T * g.weights) @ J
        ref = dipole_field(p, offset, obs, ctx)
        assert np.linalg.norm(E - ref) / np.linalg.norm(ref) < 1e-2


def test_wave_context():
    ctx = WaveContext(1e9)
    assert abs(ctx.k * ctx.wavelength - 2 * np.pi) < 1e-12
    assert abs(ctx.eta - 376.730313) < 1e-3
    with pytest.raises(ParameterError):
        WaveContext(-1.0)
