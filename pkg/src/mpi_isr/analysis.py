"""
Image metrics: main-lobe width, peak detection, artifact floor and the
ghost check. All metrics work on max-normalized magnitudes, so they are
invariant under a global complex scaling of the image.
"""

from dataclasses import dataclass, field
import itertools

import numpy as np
from scipy.ndimage import maximum_filter

from .exceptions import ParameterError

_AXES = {"x": 0, "y": 1, "z": 2}


def _normalized(img, component):
    mag = np.abs(img.component(component))
    peak = mag.max() if mag.size else 0.0
    return mag / peak if peak > 0 else np.zeros_like(mag)


def _db(v):
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(v)


def _one_side(line, i0, level, direction):
    i = i0
    while 0 <= i + direction < line.size:
        nxt = i + direction
        if line[nxt] < level:
            return abs(i - i0) + (line[i] - level) / (line[i] - line[nxt])
        i = nxt
    return None


def psf_half_widths(img, component="y", axis="x", level_db=-3.0):
    """Left and right half-widths (m) of the main lobe through the global peak.

    Crossings are linearly interpolated in normalized magnitude between
    neighbouring voxels.
    """
    ax = _AXES[axis] if isinstance(axis, str) else int(axis)
    mag = _normalized(img, component)
    if not np.any(mag > 0):
        raise ParameterError("image is identically zero")
    peak = np.unravel_index(np.argmax(mag), mag.shape)
    sl = list(peak)
    sl[ax] = slice(None)
    line = mag[tuple(sl)]
    level = 10.0 ** (level_db / 20.0)
    sides = [_one_side(line, peak[ax], level, d) for d in (-1, +1)]
    if any(s is None for s in sides):
        raise ParameterError(f"main lobe does not fall below {level_db} dB inside the grid")
    h = img.grid.spacing[ax]
    return sides[0] * h, sides[1] * h


def psf_width(img, component="y", axis="x", level_db=-3.0):
    """Main-lobe width along ``axis`` through the global peak at ``level_db``."""
    left, right = psf_half_widths(img, component, axis, level_db)
    return left + right


def prominence_map(mag):
    """Topographic prominence of every local maximum of ``mag``.

    Union-find over voxels in descending order (26-connectivity); when two
    regions meet, the lower summit's prominence is its height minus the
    meeting level. The global summit gets its height minus the minimum.
    """
    # flat indices are unchanged by dropping singleton axes
    mag = mag.reshape([s for s in mag.shape if s > 1] or [1])
    shape = mag.shape
    flat = mag.ravel()
    order = np.lexsort((np.arange(flat.size), -flat))
    parent = -np.ones(flat.size, dtype=np.int64)
    summit = np.arange(flat.size)
    prom = {}
    offsets = [o for o in itertools.product((-1, 0, 1), repeat=mag.ndim) if any(o)]

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for i in order:
        parent[i] = i
        idx = np.unravel_index(i, shape)
        roots = set()
        for o in offsets:
            nb = tuple(a + b for a, b in zip(idx, o))
            if all(0 <= a < s for a, s in zip(nb, shape)):
                j = np.ravel_multi_index(nb, shape)
                if parent[j] >= 0:
                    roots.add(find(j))
        if not roots:
            continue
        roots = sorted(roots, key=lambda r: (-flat[summit[r]], summit[r]))
        keep = roots[0]
        for r in roots[1:]:
            prom[summit[r]] = flat[summit[r]] - flat[i]
            parent[r] = keep
        parent[i] = keep
    for i in range(flat.size):
        if parent[i] == i:
            prom[summit[i]] = flat[summit[i]] - flat.min()
    return prom


@dataclass
class PeakReport:
    positions: np.ndarray
    magnitudes: np.ndarray
    prominences: np.ndarray
    threshold_db: float
    indices: list = field(default_factory=list)

    def __len__(self):
        return len(self.magnitudes)


def find_peaks(img, component="y", threshold_db=-6.0, min_separation=0.0, min_prominence_db=0.5):
    """Local maxima above ``threshold_db`` pruned greedily by ``min_separation``.

    Magnitudes are normalized to the global peak. A maximum must also rise
    ``min_prominence_db`` above the col connecting it to higher terrain;
    this rejects ripples on a merged main lobe. Ties break by voxel index.
    """
    mag = _normalized(img, component)
    if not np.any(mag > 0):
        return PeakReport(np.zeros((0, 3)), np.zeros(0), np.zeros(0), threshold_db)
    level = 10.0 ** (threshold_db / 20.0)
    local = (mag == maximum_filter(mag, size=3, mode="nearest")) & (mag >= level)
    cand = np.flatnonzero(local.ravel())
    prom = prominence_map(mag)
    flat = mag.ravel()
    keep = []
    for i in cand:
        col = flat[i] - prom.get(i, 0.0)
        if col > 0 and _db(flat[i]) - _db(col) < min_prominence_db:
            continue
        keep.append(i)
    keep.sort(key=lambda i: (-flat[i], i))
    chosen = []
    positions = []
    for i in keep:
        pos = img.grid.position(np.unravel_index(i, mag.shape))
        if all(np.linalg.norm(pos - q) >= min_separation for q in positions):
            chosen.append(i)
            positions.append(pos)
    return PeakReport(
        np.array(positions).reshape(-1, 3),
        flat[chosen],
        np.array([prom.get(i, 0.0) for i in chosen]),
        threshold_db,
        [np.unravel_index(i, mag.shape) for i in chosen],
    )


def artifact_floor(img, component="y", exclusion_radius=0.0, true_positions=()):
    """Highest normalized magnitude (dB) outside exclusion balls around the truth."""
    mag = _normalized(img, component)
    pts = img.grid.points()
    outside = np.ones(pts.shape[0], dtype=bool)
    for t in np.atleast_2d(np.asarray(true_positions, dtype=float)).reshape(-1, 3):
        outside &= np.linalg.norm(pts - t, axis=1) > exclusion_radius
    vals = mag.ravel()[outside]
    if vals.size == 0 or not np.any(vals > 0):
        return -np.inf
    return float(_db(vals.max()))


@dataclass
class GhostCheck:
    present: bool
    level_db: float
    local_max: bool

    def __bool__(self):
        return self.present


def ghost_check(img, position, threshold_db=-6.0, component="y"):
    """Does the image show a response at ``position`` above ``threshold_db``?

    Uses the largest normalized magnitude over the one-voxel neighbourhood
    of the nearest voxel; ``local_max`` reports whether that neighbourhood
    contains a local maximum of the full image.
    """
    mag = _normalized(img, component)
    if not np.any(mag > 0):
        return GhostCheck(False, -np.inf, False)
    idx = img.grid.index_of(position)
    sl = tuple(slice(max(i - 1, 0), i + 2) for i in idx)
    level = float(_db(mag[sl].max()))
    local = (mag == maximum_filter(mag, size=3, mode="nearest"))
    return GhostCheck(level >= threshold_db, level, bool(local[sl].any()))
