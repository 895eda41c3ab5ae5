"""
Electromagnetic math kernels.

Special functions (Legendre polynomials, spherical Hankel functions of the
second kind), the Gauss-Legendre x uniform-azimuth sphere quadrature, the
fast multipole translation operator and the analytic Hertzian dipole field.

All kernels use the ``exp(+j w t)`` time convention, so outgoing waves carry
``exp(-j k R)``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import constants

from .exceptions import GeometryError, ParameterError, SingularityError

C0 = constants.c
MU0 = constants.mu_0
EPS0 = constants.epsilon_0
ETA0 = float(np.sqrt(MU0 / EPS0))

# ratio |offset| / |translation| assumed when sizing L for small boxes
_WORST_SEPARATION_RATIO = 0.3


@dataclass(frozen=True)
class WaveContext:
    """Free-space wave parameters for a single frequency."""

    frequency: float

    def __post_init__(self):
        if not np.isfinite(self.frequency) or self.frequency <= 0:
            raise ParameterError(f"frequency must be positive, got {self.frequency}")

    @property
    def c(self):
        return C0

    @property
    def eta(self):
        return ETA0

    @property
    def omega(self):
        return 2.0 * np.pi * self.frequency

    @property
    def k(self):
        return self.omega / C0

    @property
    def wavelength(self):
        return C0 / self.frequency


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

def legendre_all(lmax, x):
    """Legendre polynomials ``P_0 .. P_lmax`` by upward recurrence.

    Returns an array of shape ``(lmax + 1,) + np.shape(x)``.
    """
    if lmax < 0:
        raise ParameterError("lmax must be >= 0")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise ParameterError("Legendre argument outside [-1, 1]")
    out = np.empty((lmax + 1,) + x.shape)
    out[0] = 1.0
    if lmax >= 1:
        out[1] = x
    for l in range(1, lmax):
        out[l + 1] = ((2 * l + 1) * x * out[l] - l * out[l - 1]) / (l + 1)
    return out


def legendre(l, x):
    """Legendre polynomial ``P_l(x)``; ``x`` may be an array."""
    if l < 0:
        raise ParameterError("l must be >= 0")
    return legendre_all(l, x)[l]


def _spherical_jn_miller(lmax, x):
    # downward recurrence seeded well above max(lmax, x), normalised by the
    # sum rule sum_l (2l + 1) j_l(x)^2 = 1, which never hits a zero of j_0
    xmax = float(np.max(x))
    start = int(max(lmax, xmax)) + 20 + int(4.0 * max(xmax, 1.0) ** (1.0 / 3.0))
    jp1 = np.zeros_like(x)
    j = np.full_like(x, 1e-10)
    out = np.empty((lmax + 1,) + x.shape)
    norm = np.zeros_like(x)
    for l in range(start, 0, -1):
        norm += (2 * l + 1) * j * j
        if l <= lmax:
            out[l] = j
        jm1 = (2 * l + 1) / x * j - jp1
        jp1, j = j, jm1
        big = np.abs(j) > 1e100
        if np.any(big):
            scale = np.where(big, 1e-100, 1.0)
            j = j * scale
            jp1 = jp1 * scale
            norm = norm * scale * scale
            if l <= lmax:
                out[l:] *= scale
    norm += j * j
    out[0] = j
    return out / np.sqrt(norm)


def _spherical_yn_upward(lmax, x):
    out = np.empty((lmax + 1,) + x.shape)
    out[0] = -np.cos(x) / x
    if lmax >= 1:
        out[1] = -np.cos(x) / x**2 - np.sin(x) / x
    for l in range(1, lmax):
        out[l + 1] = (2 * l + 1) / x * out[l] - out[l - 1]
    return out


def spherical_hankel2_all(lmax, x):
    """Spherical Hankel functions ``h_0^(2) .. h_lmax^(2)`` at ``x > 0``.

    ``j_l`` comes from Miller's downward recurrence and ``y_l`` from the
    stable upward recurrence; ``h_l^(2) = j_l - j y_l``.
    """
    if lmax < 0:
        raise ParameterError("lmax must be >= 0")
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ParameterError("spherical Hankel argument must be > 0")
    flat = np.atleast_1d(x).ravel()
    jl = _spherical_jn_miller(lmax, flat)
    yl = _spherical_yn_upward(lmax, flat)
    return (jl - 1j * yl).reshape((lmax + 1,) + x.shape)


def spherical_hankel2(l, x):
    """Spherical Hankel function of the second kind ``h_l^(2)(x)``."""
    if l < 0:
        raise ParameterError("l must be >= 0")
    return spherical_hankel2_all(l, x)[l]


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """Product quadrature on the unit sphere.

    ``L + 1`` Gauss-Legendre nodes in ``cos(theta)`` times ``2L + 2``
    uniform azimuths; exact for polynomials in the direction of total
    degree ``<= 2L + 1``. Directions are stored theta-major.
    """

    order: int
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray

    @property
    def count(self):
        return self.weights.size

    @cached_property
    def directions(self):
        st = np.sin(self.theta)
        return np.stack([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)], axis=-1)

    @cached_property
    def theta_hat(self):
        ct = np.cos(self.theta)
        return np.stack([ct * np.cos(self.phi), ct * np.sin(self.phi), -np.sin(self.theta)], axis=-1)

    @cached_property
    def phi_hat(self):
        return np.stack([-np.sin(self.phi), np.cos(self.phi), np.zeros_like(self.phi)], axis=-1)

    def integrate(self, values):
        """Quadrature sum over the last axis of ``values``."""
        return np.asarray(values) @ self.weights

    def tangential_to_cartesian(self, j_theta, j_phi):
        """Expand ``(..., N)`` theta/phi components to ``(..., N, 3)`` Cartesian."""
        return (np.asarray(j_theta)[..., None] * self.theta_hat
                + np.asarray(j_phi)[..., None] * self.phi_hat)

    def cartesian_to_tangential(self, vec):
        """Project ``(..., N, 3)`` Cartesian vectors onto theta/phi."""
        vec = np.asarray(vec)
        return (np.einsum("...nk,nk->...n", vec, self.theta_hat),
                np.einsum("...nk,nk->...n", vec, self.phi_hat))


def spherical_quadrature(L):
    """Build the :class:`SphericalGrid` of order ``L`` (``(L+1)(2L+2)`` nodes)."""
    if L < 0:
        raise ParameterError("quadrature order must be >= 0")
    mu, w_mu = leggauss(L + 1)
    nphi = 2 * L + 2
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    theta = np.arccos(mu)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    w = np.outer(w_mu, np.full(nphi, 2.0 * np.pi / nphi))
    return SphericalGrid(L, th.ravel(), ph.ravel(), w.ravel())


# ---------------------------------------------------------------------------
# translation operator
# ---------------------------------------------------------------------------

def translation_order(k, box_diameter, digits=3.0):
    """Truncation order ``L`` of the translation operator.

    Excess-bandwidth rule on the radius of the spherical box,
    ``kr + 1.8 d0^(2/3) (kr)^(1/3)``, with a floor that keeps the
    static multipole tail ``0.3^(L+1)`` below ``10^-d0`` for electrically
    tiny boxes.
    """
    kr = k * box_diameter / 2.0
    if not kr > 0:
        raise ParameterError("k * box_diameter must be positive")
    ebf = kr + 1.8 * digits ** (2.0 / 3.0) * kr ** (1.0 / 3.0)
    floor = digits * np.log(10.0) / np.log(1.0 / _WORST_SEPARATION_RATIO)
    return max(1, int(np.ceil(max(ebf, floor))))


def translation_coefficients(L, kx):
    """Radial factors ``(-j)^l (2l+1) h_l^(2)(kx)``, shape ``(L+1,) + shape(kx)``."""
    l = np.arange(L + 1)
    h = spherical_hankel2_all(L, kx)
    fac = ((-1j) ** l) * (2 * l + 1)
    return fac.reshape((-1,) + (1,) * np.ndim(kx)) * h


def translation_matrix(grid, k, X, source_radius=0.0, observation_radius=0.0):
    """Translation operator for many translation vectors.

    Parameters
    ----------
    grid : SphericalGrid
        Quadrature grid; its order is the truncation order ``L``.
    k : float
        Wavenumber.
    X : array_like, shape (M, 3) or (3,)
        Translation vectors (observation minus box center).
    source_radius, observation_radius : float
        Radii of the grouped regions; ``|X|`` must exceed their sum.

    Returns
    -------
    ndarray, shape (M, N) or (N,)
        ``T_L(k_hat_n, X_m) = sum_l (-j)^l (2l+1) h_l^(2)(k|X|) P_l(k_hat . X_hat)``.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    dist = np.linalg.norm(X, axis=1)
    limit = source_radius + observation_radius
    bad = ~(dist > limit) | (dist == 0)
    if np.any(bad):
        raise GeometryError(
            f"translation distance {dist[bad].min():.4g} m does not exceed the "
            f"separation limit {limit:.4g} m"
        )
    L = grid.order
    coef = translation_coefficients(L, k * dist)  # (L+1, M)
    cosg = np.clip((X / dist[:, None]) @ grid.directions.T, -1.0, 1.0)  # (M, N)
    out = coef[0][:, None] * np.ones_like(cosg)
    p_prev = np.ones_like(cosg)
    p_cur = cosg
    if L >= 1:
        out = out + coef[1][:, None] * p_cur
    for l in range(1, L):
        p_next = ((2 * l + 1) * cosg * p_cur - l * p_prev) / (l + 1)
        out += coef[l + 1][:, None] * p_next
        p_prev, p_cur = p_cur, p_next
    return out[0] if single else out


def translation_operator(grid, k, X, source_radius=0.0, observation_radius=0.0):
    """``T_L(k_hat, X)`` at every direction of ``grid`` for one vector ``X``."""
    X = np.asarray(X, dtype=float)
    if X.shape != (3,):
        raise ParameterError("X must be a single 3-vector")
    return translation_matrix(grid, k, X, source_radius, observation_radius)


# ---------------------------------------------------------------------------
# Hertzian dipole
# ---------------------------------------------------------------------------

def dipole_field(moment, src, obs, ctx):
    """Electric field of a Hertzian dipole, all near- and far-zone terms.

    Parameters
    ----------
    moment : array_like, shape (3,)
        Complex current moment ``I l`` in A m.
    src : array_like, shape (3,)
        Dipole position.
    obs : array_like, shape (M, 3) or (3,)
        Observation points.
    ctx : WaveContext

    Returns
    -------
    ndarray, complex, same leading shape as ``obs`` with a trailing 3
    """
    moment = np.asarray(moment, dtype=complex)
    obs = np.asarray(obs, dtype=float)
    single = obs.ndim == 1
    obs = np.atleast_2d(obs)
    d = obs - np.asarray(src, dtype=float)
    R = np.linalg.norm(d, axis=1)
    if np.any(R < 1e-9):
        raise SingularityError("observation point coincides with a dipole")
    k = ctx.k
    rhat = d / R[:, None]
    kr = k * R
    a = 1.0 + 1.0 / (1j * kr) - 1.0 / kr**2
    b = 1.0 + 3.0 / (1j * kr) - 3.0 / kr**2
    pr = rhat @ moment
    pref = (-1j * k * ctx.eta / (4.0 * np.pi)) * np.exp(-1j * kr) / R
    E = pref[:, None] * (a[:, None] * moment[None, :] - (b * pr)[:, None] * rhat)
    return E[0] if single else E


def dipole_spectrum(moment, offset, grid, ctx):
    """Plane-wave spectrum of a point dipole relative to a box center.

    Cartesian, tangential by construction, shape ``(N, 3)``; fed to the
    translation-operator field representation it reproduces
    :func:`dipole_field` outside the box.
    """
    moment = np.asarray(moment, dtype=complex)
    khat = grid.directions
    k = ctx.k
    tang = moment[None, :] - (khat @ moment)[:, None] * khat
    phase = np.exp(1j * k * (khat @ np.asarray(offset, dtype=float)))
    return (-1j * ctx.eta * k**2 / (4.0 * np.pi)) * phase[:, None] * tang
