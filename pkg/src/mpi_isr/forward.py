"""
Synthetic multipath measurements from image theory.

The measured field is the free-space superposition of the original dipoles
and their image sources, evaluated on a planar sampling surface.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .emmath import WaveContext, dipole_field
from .exceptions import MissingComponentError, ParameterError
from .scene import enumerate_image_sources

COMPONENTS = ("x", "y", "z")


def _in_plane_axes(normal):
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = ref - (ref @ n) * n
    u /= np.linalg.norm(u)
    return u, np.cross(n, u)


@dataclass(frozen=True, eq=False)
class SamplePlane:
    """Rectangular sampling surface.

    ``extents`` and ``counts`` refer to the in-plane axes ``u`` and ``v``;
    for a z-normal plane these are x and y. Regular samples sit at cell
    centers; ``random=True`` draws uniformly distributed points instead.
    """

    center: np.ndarray
    extents: tuple
    counts: tuple
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    random: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float).reshape(3))
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.extents) != 2 or min(self.extents) <= 0:
            raise ParameterError("sample plane extents must be two positive lengths")
        if len(self.counts) != 2 or min(self.counts) < 2:
            raise ParameterError("sample plane counts must be two integers >= 2")

    @property
    def axes(self):
        return _in_plane_axes(self.normal)

    @property
    def size(self):
        return self.counts[0] * self.counts[1]

    @property
    def cell_area(self):
        return self.extents[0] * self.extents[1] / self.size

    def points(self):
        u, v = self.axes
        if self.random:
            rng = np.random.default_rng(self.seed)
            a = rng.uniform(-0.5, 0.5, self.size) * self.extents[0]
            b = rng.uniform(-0.5, 0.5, self.size) * self.extents[1]
        else:
            a1 = (np.arange(self.counts[0]) + 0.5) / self.counts[0] - 0.5
            b1 = (np.arange(self.counts[1]) + 0.5) / self.counts[1] - 0.5
            a, b = np.meshgrid(a1 * self.extents[0], b1 * self.extents[1], indexing="ij")
            a, b = a.ravel(), b.ravel()
        return self.center + a[:, None] * u + b[:, None] * v


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Complex field samples.

    ``fields`` has shape ``(F, M, C)`` where ``C`` follows ``components``;
    unrecorded components are simply absent.
    """

    points: np.ndarray
    frequencies: np.ndarray
    fields: np.ndarray
    components: tuple = ("x", "y")
    cell_area: float = 1.0
    noise: dict = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        freqs = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        vals = np.asarray(self.fields, dtype=complex)
        comps = tuple(self.components)
        if pts.shape[1] != 3:
            raise ParameterError("points must have shape (M, 3)")
        if vals.shape != (freqs.size, pts.shape[0], len(comps)):
            raise ParameterError(
                f"fields shape {vals.shape} inconsistent with "
                f"{freqs.size} frequencies, {pts.shape[0]} points, {len(comps)} components"
            )
        if not set(comps) <= set(COMPONENTS) or len(set(comps)) != len(comps):
            raise ParameterError(f"invalid component list {comps}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "fields", vals)
        object.__setattr__(self, "components", comps)

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def component_index(self):
        return [COMPONENTS.index(c) for c in self.components]

    def component(self, p):
        """Field of Cartesian component ``p`` with shape ``(F, M)``."""
        if p not in self.components:
            raise MissingComponentError(f"component {p!r} was not recorded (have {self.components})")
        return self.fields[:, :, self.components.index(p)]

    def subset(self, index):
        """Measurement set restricted to the sample indices ``index``."""
        index = np.asarray(index)
        return replace(self, points=self.points[index], fields=self.fields[:, index, :])

    def select_frequencies(self, index):
        index = np.atleast_1d(np.asarray(index))
        return replace(self, frequencies=self.frequencies[index], fields=self.fields[index])


def simulate_measurements(scene, max_image_order, plane, components=("x", "y"), points=None):
    """Image-theory measurement synthesis.

    Sums the original dipoles and all image sources up to
    ``max_image_order`` at the sample points of ``plane`` (or at explicit
    ``points``) for every scene frequency, then keeps ``components``.
    """
    pts = plane.points() if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    radiators = [(s.position, s.moment) for s in scene.sources]
    radiators += [(im.position, im.moment) for im in enumerate_image_sources(scene, max_image_order)]
    for pos, _ in radiators:
        if np.min(np.linalg.norm(pts - pos, axis=1)) < 1e-6:
            raise ParameterError(f"sample points come within 1e-6 m of a radiator at {pos}")
    idx = [COMPONENTS.index(c) for c in components]
    out = np.zeros((scene.frequencies.size, pts.shape[0], len(idx)), dtype=complex)
    for fi, f in enumerate(scene.frequencies):
        ctx = WaveContext(f)
        total = np.zeros((pts.shape[0], 3), dtype=complex)
        for pos, mom in radiators:
            total += dipole_field(mom, pos, pts, ctx)
        out[fi] = total[:, idx]
    area = plane.cell_area if plane is not None else 1.0
    return MeasurementSet(pts, scene.frequencies.copy(), out, tuple(components), area)


def add_noise(ms, snr_db, seed=0):
    """Add complex circular white Gaussian noise at an aggregate SNR.

    ``snr_db = inf`` returns the measurement set unchanged.
    """
    if np.isposinf(snr_db):
        return ms
    if not np.isfinite(snr_db):
        raise ParameterError("snr_db must be finite or +inf")
    rng = np.random.default_rng(seed)
    signal_power = np.mean(np.abs(ms.fields) ** 2)
    sigma = np.sqrt(signal_power / 10.0 ** (snr_db / 10.0) / 2.0)
    noise = sigma * (rng.standard_normal(ms.fields.shape) + 1j * rng.standard_normal(ms.fields.shape))
    return replace(ms, fields=ms.fields + noise, noise={"snr_db": float(snr_db), "seed": int(seed)})
