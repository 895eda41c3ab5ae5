"""
Per-source back-propagation of plane-wave spectra and phase-corrected
coherent combination over sources and frequencies.
"""

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .emmath import WaveContext
from .exceptions import GridMismatchError, MissingComponentError, ParameterError
from .forward import COMPONENTS
from .validation import check_unit

FILTER_KINDS = ("none", "cone", "raised-cosine")


@dataclass(frozen=True, eq=False)
class FilterSpec:
    kind: str
    center: np.ndarray
    param: float = None


def make_filter(kind="none", center=(0.0, 0.0, 1.0), param=None):
    """Angular window around ``center``.

    ``param`` is the half-angle in radians for ``"cone"`` and
    ``"raised-cosine"``; ``"none"`` is the forward-hemisphere indicator.
    """
    if kind not in FILTER_KINDS:
        raise ParameterError(f"unknown filter kind {kind!r}")
    center = check_unit(center, "filter center")
    if kind != "none":
        if param is None or not 0 < param <= np.pi / 2:
            raise ParameterError("filter half-angle must lie in (0, pi/2]")
        param = float(param)
    return FilterSpec(kind, center, param)


def evaluate_filter(spec, khat):
    """Filter weight for one direction ``(3,)`` or many ``(N, 3)``."""
    t = np.asarray(khat, dtype=float) @ spec.center
    if spec.kind == "none":
        return (t > 0).astype(float)
    ca = np.cos(spec.param)
    inside = (t > ca) & (t > 0)
    if spec.kind == "cone":
        return inside.astype(float)
    w = 0.5 * (1.0 + np.cos(np.pi * (1.0 - t) / (1.0 - ca)))
    return np.where(inside, w, 0.0)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Regular axis-aligned grid; a count of 1 gives a planar slice."""

    origin: np.ndarray
    spacing: np.ndarray
    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "spacing", np.broadcast_to(np.asarray(self.spacing, dtype=float), (3,)).copy())
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if np.any(self.spacing <= 0):
            raise ParameterError("voxel spacing must be positive")
        if len(self.counts) != 3 or min(self.counts) < 1:
            raise ParameterError("voxel counts must be three integers >= 1")

    @classmethod
    def from_bounds(cls, lo, hi, spacing):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        sp = np.broadcast_to(np.asarray(spacing, dtype=float), (3,))
        counts = tuple(int(round((h - l) / s)) + 1 for l, h, s in zip(lo, hi, sp))
        return cls(lo, sp, counts)

    @property
    def axes(self):
        return [self.origin[i] + self.spacing[i] * np.arange(self.counts[i]) for i in range(3)]

    @property
    def shape(self):
        return self.counts

    def points(self):
        X, Y, Z = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def position(self, index):
        return self.origin + self.spacing * np.asarray(index)

    def index_of(self, position):
        idx = np.round((np.asarray(position, dtype=float) - self.origin) / self.spacing).astype(int)
        return tuple(np.clip(idx, 0, np.array(self.counts) - 1))

    def same_as(self, other):
        return (self.counts == other.counts and np.allclose(self.origin, other.origin, atol=1e-12)
                and np.allclose(self.spacing, other.spacing, atol=1e-15))


@dataclass(frozen=True, eq=False)
class VoxelImage:
    """Complex per-component values on a :class:`VoxelGrid`.

    ``values`` has shape ``counts + (C,)`` following ``components``.
    """

    grid: VoxelGrid
    values: np.ndarray
    components: tuple = COMPONENTS

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != tuple(self.grid.counts) + (len(self.components),):
            raise ParameterError(f"image values shape {vals.shape} does not match grid")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "components", tuple(self.components))

    def component(self, p):
        if p not in self.components:
            raise MissingComponentError(f"image has no component {p!r}")
        return self.values[..., self.components.index(p)]

    def magnitude(self, p):
        return np.abs(self.component(p))

    def __add__(self, other):
        if not self.grid.same_as(other.grid) or self.components != other.components:
            raise GridMismatchError("images do not share a grid and component set")
        return replace(self, values=self.values + other.values)

    def __mul__(self, c):
        return replace(self, values=self.values * c)

    __rmul__ = __mul__


def default_filter_center(box_center, aperture_center):
    d = np.asarray(aperture_center, dtype=float) - np.asarray(box_center, dtype=float)
    return d / np.linalg.norm(d)


def backpropagate(spectrum, grid, anchor, filt=None, relocation="shift", ctx=None):
    """Single-frequency, single-box image of a plane-wave spectrum.

    Evaluates ``sum_n w_n F(k_n) J(k_n) exp(j k k_n . (r0 - ri)) exp(-j k k_n . r)``
    with the spectrum expressed relative to the global origin, ``ri`` its box
    center and ``r0 = anchor``; the Fourier shift moves the source to the
    anchor. ``relocation="mirror"`` additionally undoes the box's mirror map
    on the directions, which relocates off-center sources exactly.
    """
    ctx = ctx or WaveContext(spectrum.frequency)
    if abs(ctx.frequency - spectrum.frequency) > 0:
        raise ParameterError("wave context does not match the spectrum frequency")
    sg = spectrum.grid
    khat = sg.directions
    weight = sg.weights.copy()
    if filt is not None:
        weight = weight * evaluate_filter(filt, khat)
    amp = weight[:, None] * spectrum.cartesian()  # (N, 3)
    anchor = np.asarray(anchor, dtype=float)
    if relocation == "shift":
        dirs = khat
    elif relocation == "mirror":
        dirs = khat @ spectrum.box.point_map  # rows are A^T k
    else:
        raise ParameterError(f"unknown relocation {relocation!r}")
    k = ctx.k
    # box-relative spectrum re-referenced to the origin and Fourier-shifted
    # from its box center to the anchor; the center phases cancel
    amp = amp * np.exp(1j * k * (dirs @ anchor))[:, None]
    xs, ys, zs = grid.axes
    ex = np.exp(-1j * k * np.outer(xs, dirs[:, 0]))
    ey = np.exp(-1j * k * np.outer(ys, dirs[:, 1]))
    ez = np.exp(-1j * k * np.outer(zs, dirs[:, 2]))
    out = np.empty(tuple(grid.counts) + (3,), dtype=complex)
    for iz in range(len(zs)):
        a = amp * ez[iz][:, None]
        for c in range(3):
            out[:, :, iz, c] = (ex * a[:, c]) @ ey.T
    return VoxelImage(grid, out, COMPONENTS)


def combine(images, psi=None):
    """Coherent sum ``J_p = sum_i psi_{i,p} J_{i,p}`` over sources and frequencies.

    ``psi[i]`` is a per-component sign vector ``(3,)`` or a full ``(3, 3)``
    correction matrix; ``None`` means identity for every image.
    """
    images = list(images)
    if not images:
        raise ParameterError("nothing to combine")
    psi = [None] * len(images) if psi is None else list(psi)
    if len(psi) != len(images):
        raise ParameterError("one psi entry is required per image")
    ref = images[0]
    total = np.zeros_like(ref.values)
    for img, s in zip(images, psi):
        if not img.grid.same_as(ref.grid) or img.components != ref.components:
            raise GridMismatchError("all images must share one grid and component set")
        if s is None:
            total += img.values
            continue
        s = np.asarray(s, dtype=float)
        if s.shape == (3, 3):
            if img.components != COMPONENTS:
                raise ParameterError("matrix correction needs all three components")
            total += img.values @ s.T
        else:
            idx = [COMPONENTS.index(c) for c in img.components]
            total += img.values * s[idx]
    return VoxelImage(ref.grid, total, ref.components)


class MultipathImager(BaseEstimator, TransformerMixin):
    """Images fitted box spectra with phase-corrected multipath combination.

    Parameters
    ----------
    grid : VoxelGrid
    anchor : array_like
        True source (original box) position the images are relocated to.
    max_order : int
        Highest reflection order of image boxes included (0: original only).
    filter_kind, filter_param : angular window settings.
    aperture_center : array_like
        Physical measurement-plane center; sets each box's window direction.
    relocation : {"shift", "mirror"}
    """

    def __init__(self, grid=None, anchor=(0.0, 0.0, 0.0), max_order=0, filter_kind="none",
                 filter_param=None, aperture_center=(0.0, 0.0, 1.0), relocation="shift"):
        self.grid = grid
        self.anchor = anchor
        self.max_order = max_order
        self.filter_kind = filter_kind
        self.filter_param = filter_param
        self.aperture_center = aperture_center
        self.relocation = relocation

    def fit(self, X=None, y=None):
        return self

    def _spectra(self, X):
        spectra = getattr(X, "spectra_", X)
        if not isinstance(spectra, dict):
            raise ParameterError("expected a fitted reconstruction or a frequency -> spectra mapping")
        return spectra

    def per_source_images(self, X):
        """``[(image, psi)]`` for every included box and frequency, in (f, i) order."""
        out = []
        for f, spectra in sorted(self._spectra(X).items()):
            for spec in spectra:
                box = spec.box
                if box.role == "auxiliary" or box.order > self.max_order:
                    continue
                filt = make_filter(self.filter_kind,
                                   default_filter_center(box.center, self.aperture_center),
                                   self.filter_param)
                img = backpropagate(spec, self.grid, self.anchor, filt, self.relocation)
                psi = box.moment_map.T if self.relocation == "mirror" and box.reflection is not None \
                    and not box.reflection.axis_aligned else box.signs
                out.append((img, psi))
        return out

    def transform(self, X):
        pairs = self.per_source_images(X)
        return combine([p[0] for p in pairs], [p[1] for p in pairs])
