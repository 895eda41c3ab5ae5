"""
Scenario model: dipole sources, infinite PEC planes and the frequency sweep,
plus image-source enumeration with polarization sign bookkeeping.

A reflection sequence acts on points as an affine isometry ``r -> A r + t``
and on current moments as ``m -> M m`` with ``M = (-1)^order A``; PEC image
theory flips tangential and keeps normal current components.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError

_DEDUP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PecPlane:
    """Infinite perfectly conducting plane.

    ``normal`` points into the physical region; sources must satisfy
    ``(r - anchor) . normal > 0``.
    """

    anchor: np.ndarray
    normal: np.ndarray
    label: str = ""

    def __post_init__(self):
        anchor = np.asarray(self.anchor, dtype=float).reshape(3)
        normal = np.asarray(self.normal, dtype=float).reshape(3)
        n = np.linalg.norm(normal)
        if not n > 0:
            raise ParameterError(f"plane {self.label!r} has a zero normal")
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "normal", normal / n)

    @property
    def householder(self):
        return np.eye(3) - 2.0 * np.outer(self.normal, self.normal)

    def signed_distance(self, p):
        return (np.asarray(p, dtype=float) - self.anchor) @ self.normal


@dataclass(frozen=True, eq=False)
class DipoleSource:
    position: np.ndarray
    moment: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        mom = np.asarray(self.moment, dtype=complex).reshape(3)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(mom))):
            raise ParameterError("dipole position and moment must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "moment", mom)


@dataclass(frozen=True, eq=False)
class Reflection:
    """Composite mirror map of a reflection sequence."""

    sequence: tuple
    point_map: np.ndarray
    offset: np.ndarray

    @property
    def order(self):
        return len(self.sequence)

    @property
    def moment_map(self):
        return (-1.0) ** self.order * self.point_map

    @property
    def axis_aligned(self):
        M = self.point_map
        return bool(np.allclose(M, np.diag(np.diag(M)), atol=1e-12))

    @property
    def signs(self):
        """Per-Cartesian-component sign ``psi`` (exact when axis-aligned)."""
        return np.sign(np.diag(self.moment_map)).astype(int)

    def apply_point(self, p):
        return np.asarray(p, dtype=float) @ self.point_map.T + self.offset

    def apply_moment(self, m):
        return np.asarray(m) @ self.moment_map.T


@dataclass(frozen=True, eq=False)
class ImageSource:
    position: np.ndarray
    moment: np.ndarray
    order: int
    signs: np.ndarray
    sequence: tuple
    parent: int
    reflection: Reflection = field(repr=False)


@dataclass(frozen=True, eq=False)
class Scene:
    sources: tuple
    planes: tuple = ()
    frequencies: np.ndarray = field(default_factory=lambda: np.array([1e10]))

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "planes", tuple(self.planes))
        object.__setattr__(self, "frequencies", np.atleast_1d(np.asarray(self.frequencies, dtype=float)))
        problems = self.violations()
        if problems:
            raise ParameterError("; ".join(problems))

    def violations(self):
        out = []
        f = self.frequencies
        if f.size == 0:
            out.append("frequencies: at least one frequency is required")
        elif np.any(~(f > 0)):
            out.append("frequencies: all frequencies must be strictly positive")
        elif np.any(np.diff(f) <= 0):
            out.append("frequencies: must be strictly increasing")
        labels = [p.label for p in self.planes]
        if len(set(labels)) != len(labels):
            out.append("planes: labels must be unique")
        for i, src in enumerate(self.sources):
            for plane in self.planes:
                if not plane.signed_distance(src.position) > 0:
                    out.append(f"sources[{i}]: not on the interior side of plane {plane.label!r}")
        return out

    @property
    def label_index(self):
        return {p.label: i for i, p in enumerate(self.planes)}


def mirror_point(plane, p):
    """Mirror ``p`` (shape ``(3,)`` or ``(M, 3)``) across ``plane``."""
    p = np.asarray(p, dtype=float)
    d = (p - plane.anchor) @ plane.normal
    return p - 2.0 * np.multiply.outer(d, plane.normal)


def mirror_moment(plane, m):
    """Image-theory moment: tangential part negated, normal part kept."""
    m = np.asarray(m)
    n = plane.normal
    mn = np.multiply.outer(m @ n, n)
    return mn - (m - mn)


def _compose(refl, plane):
    H = plane.householder
    return Reflection(
        refl.sequence + (plane.label,),
        H @ refl.point_map,
        H @ refl.offset + 2.0 * (plane.anchor @ plane.normal) * plane.normal,
    )


def _key(*arrays):
    return tuple(np.round(np.concatenate([np.ravel(a) for a in arrays]) / _DEDUP_TOL).astype(np.int64))


def enumerate_reflections(planes, max_order):
    """Distinct mirror maps of reflection sequences of length ``1..max_order``.

    Sequences never repeat a plane consecutively. Maps are deduplicated by
    their affine action; the shortest sequence is kept, so a map's order is
    its minimal reflection count. The identity is never returned.
    """
    if max_order < 0:
        raise ParameterError("max_order must be >= 0")
    identity = Reflection((), np.eye(3), np.zeros(3))
    seen = {_key(identity.point_map, identity.offset)}
    out = []
    frontier = [identity]
    for _ in range(max_order):
        nxt = []
        for refl in frontier:
            for plane in planes:
                if refl.sequence and refl.sequence[-1] == plane.label:
                    continue
                new = _compose(refl, plane)
                key = _key(new.point_map, new.offset)
                if key in seen:
                    continue
                seen.add(key)
                out.append(new)
                nxt.append(new)
        frontier = nxt
    return out


def enumerate_image_sources(scene, max_order):
    """All distinct image sources of every scene source up to ``max_order``.

    Images are deduplicated per source by position (1e-9 m) and moment
    (1e-9 relative); an image coinciding with its parent is dropped.
    """
    reflections = enumerate_reflections(scene.planes, max_order)
    images = []
    for idx, src in enumerate(scene.sources):
        scale = max(np.max(np.abs(src.moment)), 1e-300)
        seen = {_key(src.position, src.moment.real / scale, src.moment.imag / scale)}
        for refl in reflections:
            pos = refl.apply_point(src.position)
            mom = refl.apply_moment(src.moment)
            key = _key(pos, mom.real / scale, mom.imag / scale)
            if key in seen:
                continue
            seen.add(key)
            images.append(ImageSource(pos, mom, refl.order, refl.signs, refl.sequence, idx, refl))
    return images


def box_geometry(planes):
    """Convenience constructor for axis-aligned plates.

    ``planes`` maps labels such as ``"x+"`` to the plate coordinate; the
    normal points back toward the origin side.
    """
    out = []
    for label, coord in planes.items():
        axis = "xyz".index(label[0])
        sign = 1.0 if label[1] == "+" else -1.0
        anchor = np.zeros(3)
        anchor[axis] = coord
        normal = np.zeros(3)
        normal[axis] = -sign
        out.append(PecPlane(anchor, normal, label))
    return out
