"""
Inverse source reconstruction with plane-wave-spectrum unknowns.

Every source box ``i`` carries a tangential spectrum on a sphere quadrature
grid; the field at a sample point is

    E(r_m) = (-j / 4 pi) sum_n w_n sum_i T_L(k_n, r_m - c_i) J_i(k_n)

with ``T_L`` the translation operator. Spectra are referenced to their own
box center. Frequencies are solved independently by conjugate gradients on
the normal equations (CGLS).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .emmath import WaveContext, spherical_quadrature, translation_matrix, translation_order
from .exceptions import GeometryError, ParameterError
from .forward import COMPONENTS
from .scene import Reflection, enumerate_reflections
from .validation import check_is_fitted, check_measurements, check_points

log = logging.getLogger(__name__)

_FIELD_SCALE = -1j / (4.0 * np.pi)


@dataclass(frozen=True, eq=False)
class SourceBox:
    """Spherical region holding one group of (original or image) sources.

    ``reflection`` is ``None`` for the original box; for an image box it is
    the mirror map taking original-box points to image-box points.
    """

    center: np.ndarray
    radius: float
    role: str = "original"
    order: int = 0
    reflection: Reflection = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if not self.radius > 0:
            raise ParameterError("box radius must be positive")
        if self.role not in ("original", "image", "auxiliary"):
            raise ParameterError(f"unknown box role {self.role!r}")

    @property
    def signs(self):
        if self.reflection is None:
            return np.ones(3, dtype=int)
        return self.reflection.signs

    @property
    def moment_map(self):
        if self.reflection is None:
            return np.eye(3)
        return self.reflection.moment_map

    @property
    def point_map(self):
        if self.reflection is None:
            return np.eye(3)
        return self.reflection.point_map


def make_boxes(planes, center, radius, max_order):
    """Original box at ``center`` plus one box per distinct mirror image."""
    center = np.asarray(center, dtype=float)
    boxes = [SourceBox(center, radius, "original", 0, None, "original")]
    for refl in enumerate_reflections(planes, max_order):
        boxes.append(SourceBox(refl.apply_point(center), radius, "image", refl.order, refl,
                               "".join(refl.sequence) or "image"))
    return boxes


def check_boxes(boxes, points=None, margin=0.0):
    """Fail fast on overlapping boxes or boxes too close to sample points."""
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            gap = np.linalg.norm(boxes[i].center - boxes[j].center)
            if gap <= boxes[i].radius + boxes[j].radius:
                raise GeometryError(f"source boxes {i} and {j} overlap")
    if points is not None:
        for i, box in enumerate(boxes):
            dmin = np.min(np.linalg.norm(points - box.center, axis=1))
            if dmin <= box.radius + margin:
                raise GeometryError(
                    f"source box {i} at {box.center} is within {dmin:.4g} m of a sample point"
                )


@dataclass(eq=False)
class PlaneWaveSpectrum:
    """Tangential plane-wave spectrum of one box at one frequency."""

    box: SourceBox
    frequency: float
    grid: object
    j_theta: np.ndarray
    j_phi: np.ndarray

    @property
    def order(self):
        return self.grid.order

    def cartesian(self):
        return self.grid.tangential_to_cartesian(self.j_theta, self.j_phi)

    def energy(self):
        return float(self.grid.weights @ (np.abs(self.j_theta) ** 2 + np.abs(self.j_phi) ** 2))


@dataclass
class SolverConfig:
    max_iter: int = 200
    tol: float = 1e-6
    digits: float = 3.0
    damping: float = 0.0
    min_data_ratio: float = 0.05

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ParameterError("tolerance must lie in (0, 1)")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")
        if self.damping < 0:
            raise ParameterError("damping must be >= 0")


class IsrOperator:
    """Matrix-free forward/adjoint pair for one frequency.

    The scalar translation kernel of every ``(point, box, direction)`` is
    tabulated once (``M x B N`` complex); both applications are then dense
    products with it.
    """

    def __init__(self, points, boxes, ctx, components=("x", "y"), digits=3.0, order=None,
                 chunk=2048):
        self.points = check_points(points)
        self.boxes = list(boxes)
        self.ctx = ctx
        self.components = tuple(components)
        radius = max(b.radius for b in self.boxes)
        self.L = order if order is not None else translation_order(ctx.k, 2.0 * radius, digits)
        self.grid = spherical_quadrature(self.L)
        self.n_dir = self.grid.count
        M, B, N = self.points.shape[0], len(self.boxes), self.n_dir
        self.shape = (M * len(self.components), B * 2 * N)
        T = np.empty((M, B * N), dtype=complex)
        for b, box in enumerate(self.boxes):
            for s in range(0, M, chunk):
                X = self.points[s:s + chunk] - box.center
                T[s:s + chunk, b * N:(b + 1) * N] = translation_matrix(
                    self.grid, ctx.k, X, source_radius=box.radius)
        self._T = T
        idx = [COMPONENTS.index(c) for c in self.components]
        self._that = self.grid.theta_hat[:, idx]  # (N, C)
        self._phat = self.grid.phi_hat[:, idx]
        self._w = self.grid.weights

    @property
    def n_boxes(self):
        return len(self.boxes)

    def unpack(self, x):
        """Flat unknown vector to ``(B, 2, N)``."""
        return np.asarray(x).reshape(self.n_boxes, 2, self.n_dir)

    def matvec(self, x):
        """Fields ``(M, C)`` flattened, from spectra shaped ``(B, 2, N)`` or flat."""
        x = self.unpack(x)
        wt = self._w * x[:, 0, :]
        wp = self._w * x[:, 1, :]
        # (B, N, C) Cartesian weighted spectra
        U = wt[:, :, None] * self._that[None] + wp[:, :, None] * self._phat[None]
        E = _FIELD_SCALE * (self._T @ U.reshape(-1, len(self.components)))
        return E.ravel()

    def rmatvec(self, y):
        """Adjoint action; returns a flat spectra vector."""
        y = np.asarray(y).reshape(-1, len(self.components))
        V = np.conj(_FIELD_SCALE) * (y.conj().T @ self._T).conj().T  # (B N, C)
        V = V.reshape(self.n_boxes, self.n_dir, len(self.components))
        out = np.empty((self.n_boxes, 2, self.n_dir), dtype=complex)
        out[:, 0, :] = self._w * np.einsum("bnc,nc->bn", V, self._that)
        out[:, 1, :] = self._w * np.einsum("bnc,nc->bn", V, self._phat)
        return out.ravel()

    def dense(self):
        """Explicit matrix; only for tiny verification problems."""
        eye = np.eye(self.shape[1])
        return np.stack([self.matvec(e) for e in eye], axis=1)


@dataclass
class CgResult:
    x: np.ndarray
    iterations: int
    residual: float
    normal_residual: float
    converged: bool
    history: list


def cgls(op, b, max_iter=200, tol=1e-6, damping=0.0):
    """Conjugate gradients on ``(A^H A + damping I) x = A^H b``.

    Stops when ``|b - A x| / |b| <= tol`` or when the residual is
    numerically orthogonal to the range of ``A``:
    ``|A^H r| / |r| <= tol |A^H b| / |b|`` (stagnation on inconsistent
    data). ``history`` holds the relative data residual after
    initialization and after every iteration.
    """
    b = np.asarray(b, dtype=complex)
    x = np.zeros(op.shape[1], dtype=complex)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return CgResult(x, 0, 0.0, 0.0, True, [0.0])
    r = b.copy()
    s = op.rmatvec(r)
    s0 = np.linalg.norm(s)
    p = s.copy()
    gamma = np.vdot(s, s).real
    history = [1.0]
    it = 0
    converged = False
    snorm = s0
    while it < max_iter:
        q = op.matvec(p)
        delta = np.vdot(q, q).real + damping * np.vdot(p, p).real
        if delta <= 0:
            break
        alpha = gamma / delta
        x += alpha * p
        r -= alpha * q
        s = op.rmatvec(r) - damping * x
        gamma_new = np.vdot(s, s).real
        it += 1
        rel = np.linalg.norm(r) / bnorm
        history.append(rel)
        snorm = np.sqrt(gamma_new)
        if rel <= tol or snorm <= tol * s0 * rel:
            converged = True
            break
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    return CgResult(x, it, history[-1], snorm / s0 if s0 else 0.0, converged, history)


@dataclass
class FrequencyDiagnostics:
    frequency: float
    order: int
    iterations: int
    residual: float
    normal_residual: float
    converged: bool
    box_energy: list
    history: list


class InverseSourceReconstruction(BaseEstimator):
    """Separated plane-wave spectra of source boxes from measured fields.

    Parameters
    ----------
    boxes : list of SourceBox
        Original and image boxes; must not overlap.
    max_iter, tol, damping : CGLS controls (``damping`` is a Tikhonov weight).
    digits : float
        Accuracy parameter of the translation order rule.
    min_data_ratio : float
        Minimum ratio of scalar measurements to unknowns per frequency.
    order : int, optional
        Fixed translation order; by default chosen per frequency.

    Attributes
    ----------
    spectra_ : dict
        Frequency -> list of :class:`PlaneWaveSpectrum` (box order).
    diagnostics_ : list of FrequencyDiagnostics
    """

    def __init__(self, boxes=(), max_iter=200, tol=1e-6, digits=3.0, damping=0.0,
                 min_data_ratio=0.05, order=None):
        self.boxes = boxes
        self.max_iter = max_iter
        self.tol = tol
        self.digits = digits
        self.damping = damping
        self.min_data_ratio = min_data_ratio
        self.order = order

    def _config(self):
        return SolverConfig(self.max_iter, self.tol, self.digits, self.damping, self.min_data_ratio)

    def fit(self, ms):
        ms = check_measurements(ms)
        cfg = self._config()
        boxes = list(self.boxes)
        if not boxes:
            raise ParameterError("at least one source box is required")
        check_boxes(boxes, ms.points)
        self.spectra_ = {}
        self.diagnostics_ = []
        self.components_ = ms.components
        for fi, f in enumerate(ms.frequencies):
            ctx = WaveContext(f)
            op = IsrOperator(ms.points, boxes, ctx, ms.components, cfg.digits, self.order)
            ratio = op.shape[0] / op.shape[1]
            if ratio < cfg.min_data_ratio:
                raise ParameterError(
                    f"{op.shape[0]} measurements for {op.shape[1]} unknowns at {f:.4g} Hz "
                    f"(ratio {ratio:.3g} < {cfg.min_data_ratio})"
                )
            res = cgls(op, ms.fields[fi].ravel(), cfg.max_iter, cfg.tol, cfg.damping)
            x = op.unpack(res.x)
            spectra = [PlaneWaveSpectrum(box, float(f), op.grid, x[b, 0].copy(), x[b, 1].copy())
                       for b, box in enumerate(boxes)]
            self.spectra_[float(f)] = spectra
            diag = FrequencyDiagnostics(float(f), op.L, res.iterations, res.residual,
                                        res.normal_residual, res.converged,
                                        [s.energy() for s in spectra], res.history)
            self.diagnostics_.append(diag)
            log.info("f=%.4g Hz L=%d iters=%d residual=%.3e", f, op.L, res.iterations, res.residual)
        return self

    def predict(self, points):
        """Fields re-radiated by the fitted spectra, shape ``(F, M, C)``."""
        check_is_fitted(self, "spectra_")
        return np.stack([radiate(spectra, points, self.components_)
                         for spectra in self.spectra_.values()])

    def relative_error(self, ms):
        """Relative RMS mismatch between predicted and measured fields."""
        pred = self.predict(ms.points)
        return float(np.linalg.norm(pred - ms.fields) / np.linalg.norm(ms.fields))


def radiate(spectra, points, components=("x", "y")):
    """Forward application of a list of same-frequency spectra at ``points``."""
    spectra = list(spectra)
    if not spectra:
        raise ParameterError("no spectra to radiate")
    ctx = WaveContext(spectra[0].frequency)
    grid = spectra[0].grid
    op = IsrOperator(points, [s.box for s in spectra], ctx, components, order=grid.order)
    x = np.stack([np.stack([s.j_theta, s.j_phi]) for s in spectra])
    return op.matvec(x).reshape(-1, len(components))


def forward_apply(spectra, points, ctx=None, components=("x", "y")):
    """Quadrature-discretized field representation of box spectra."""
    if ctx is not None and any(abs(s.frequency - ctx.frequency) > 0 for s in spectra):
        raise ParameterError("spectra frequency does not match the wave context")
    return radiate(spectra, points, components)


def adjoint_apply(residual, points, boxes, ctx, order, components=("x", "y")):
    """Adjoint of :func:`forward_apply`; returns ``(B, 2, N)`` spectra arrays."""
    op = IsrOperator(points, boxes, ctx, components, order=order)
    return op.unpack(op.rmatvec(np.asarray(residual).ravel()))


def solve_isr(ms, boxes, cfg=None):
    """Functional wrapper: returns ``(spectra_by_frequency, diagnostics)``."""
    cfg = cfg or SolverConfig()
    est = InverseSourceReconstruction(boxes, cfg.max_iter, cfg.tol, cfg.digits, cfg.damping,
                                      cfg.min_data_ratio).fit(ms)
    return est.spectra_, est.diagnostics_
