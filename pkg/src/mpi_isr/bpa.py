"""
Back-projection baseline and its reflection-path-enhanced variant.

The kernel is phase only, ``exp(+j k |r_m - r|)``, applied to the total
co-polarized field; the enhanced variant adds one term per mirror path with
the path's polarization sign. Mirror-image enumeration is exact for
infinite planar reflectors and stands in for ray shooting.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .emmath import C0
from .imaging import VoxelImage
from .scene import Reflection, enumerate_reflections
from .validation import check_measurements

_IDENTITY = Reflection((), np.eye(3), np.zeros(3))


def enumerate_paths(planes, max_order):
    """LOS identity followed by every distinct mirror path up to ``max_order``."""
    return [_IDENTITY] + enumerate_reflections(planes, max_order)


def _backproject(ms, grid, p, paths, chunk=1024):
    field = ms.component(p)  # (F, M)
    weight = getattr(ms, "cell_area", 1.0)
    ks = 2.0 * np.pi * ms.frequencies / C0
    dk = np.diff(ks)
    uniform = dk.size > 0 and np.allclose(dk, dk[0], rtol=1e-9, atol=0)
    pidx = "xyz".index(p)
    vox = grid.points()
    out = np.zeros(vox.shape[0], dtype=complex)
    for path in paths:
        sign = path.signs[pidx]
        mapped = path.apply_point(vox)
        for s in range(0, vox.shape[0], chunk):
            blk = mapped[s:s + chunk]
            R = np.sqrt(((blk[:, None, :] - ms.points[None, :, :]) ** 2).sum(-1))
            acc = np.zeros(blk.shape[0], dtype=complex)
            phase = np.exp(1j * ks[0] * R)
            step = np.exp(1j * dk[0] * R) if uniform else None
            for fi in range(ks.size):
                if fi > 0:
                    phase = phase * step if uniform else np.exp(1j * ks[fi] * R)
                acc += phase @ field[fi]
            out[s:s + chunk] += sign * weight * acc
    return VoxelImage(grid, out.reshape(tuple(grid.counts) + (1,)), (p,))


def bpa_image(ms, grid, component="y"):
    """Plain back-projection of one recorded component, coherent over frequency."""
    ms = check_measurements(ms)
    return _backproject(ms, grid, component, [_IDENTITY])


def rt_bpa_image(ms, planes, max_order, grid, component="y"):
    """Back-projection summed over LOS and mirror paths with sign ``psi_path``."""
    ms = check_measurements(ms)
    return _backproject(ms, grid, component, enumerate_paths(planes, max_order))


class BackProjection(BaseEstimator, TransformerMixin):
    """Estimator wrapper: ``transform(measurements) -> VoxelImage``.

    ``max_order=0`` (or no planes) is the plain back-projection.
    """

    def __init__(self, grid=None, component="y", planes=(), max_order=0):
        self.grid = grid
        self.component = component
        self.planes = planes
        self.max_order = max_order

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return rt_bpa_image(X, list(self.planes), self.max_order, self.grid, self.component)
