"""
File formats.

* measurements: CSV ``x_m,y_m,z_m,freq_hz,re_ex,im_ex,...`` (absent
  components omitted) or a little-endian binary twin;
* spectra: binary only, directions implied by ``L`` and the grid convention;
* images: CSV ``x_m,y_m,z_m,re_jx,im_jx,...`` plus 8-bit PGM heatmaps;
* metrics: one ``name,value,units`` line per metric.

Every data file gets a ``<name>.meta.json`` sidecar carrying the config hash.
"""

import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .emmath import spherical_quadrature
from .exceptions import StageInputError
from .forward import COMPONENTS, MeasurementSet
from .imaging import VoxelGrid, VoxelImage
from .isr import PlaneWaveSpectrum, SourceBox
from .scene import Reflection

MEAS_MAGIC = b"MPIISR-MEAS\0"
PWS_MAGIC = b"MPIISR-PWS\0\0"
FORMAT_VERSION = 1
GRID_CONVENTION = b"gauss-legendre(L+1) x uniform-phi(2L+2), theta-major"
HEATMAP_FLOOR_DB = -40.0

_F8 = np.dtype("<f8")
_C16 = np.dtype("<c16")


# -- sidecars -----------------------------------------------------------------

def write_meta(path, config_hash, kind, **extra):
    meta = {"config_sha256": config_hash, "kind": kind, "writer": f"mpi_isr {__version__}"}
    meta.update(extra)
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_meta(path):
    side = Path(str(path) + ".meta.json")
    if not side.exists():
        return {}
    return json.loads(side.read_text())


def _require(path):
    path = Path(path)
    if not path.exists():
        raise StageInputError(f"missing input file {path}")
    return path


# -- measurements ---------------------------------------------------------------

def measurement_header(components):
    cols = ["x_m", "y_m", "z_m", "freq_hz"]
    for c in components:
        cols += [f"re_e{c}", f"im_e{c}"]
    return cols


def write_measurements_csv(path, ms):
    F, M, C = ms.fields.shape
    rows = np.empty((F * M, 4 + 2 * C))
    rows[:, :3] = np.tile(ms.points, (F, 1))
    rows[:, 3] = np.repeat(ms.frequencies, M)
    flat = ms.fields.reshape(F * M, C)
    rows[:, 4::2] = flat.real
    rows[:, 5::2] = flat.imag
    np.savetxt(path, rows, delimiter=",", fmt="%.17g", header=",".join(measurement_header(ms.components)),
               comments="")


def read_measurements_csv(path, cell_area=None):
    path = _require(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[:4] != ["x_m", "y_m", "z_m", "freq_hz"]:
        raise StageInputError(f"{path}: unexpected measurement header {header[:4]}")
    comps = tuple(h[-1] for h in header[4::2])
    if header != measurement_header(comps):
        raise StageInputError(f"{path}: malformed component columns")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    freqs, first = np.unique(data[:, 3], return_index=True)
    freqs = data[np.sort(first), 3]
    F = freqs.size
    M = data.shape[0] // F
    points = data[:M, :3]
    vals = (data[:, 4::2] + 1j * data[:, 5::2]).reshape(F, M, len(comps))
    area = cell_area if cell_area is not None else read_meta(path).get("cell_area_m2", 1.0)
    return MeasurementSet(points, freqs, vals, comps, area)


def write_measurements_bin(path, ms):
    F, M, C = ms.fields.shape
    mask = "".join(ms.components).ljust(3, "-").encode()
    with open(path, "wb") as fh:
        fh.write(MEAS_MAGIC)
        fh.write(struct.pack("<IIII3sd", FORMAT_VERSION, F, M, C, mask, ms.cell_area))
        fh.write(ms.frequencies.astype(_F8).tobytes())
        fh.write(ms.points.astype(_F8).tobytes())
        fh.write(ms.fields.astype(_C16).tobytes())


def read_measurements_bin(path):
    path = _require(path)
    raw = path.read_bytes()
    if not raw.startswith(MEAS_MAGIC):
        raise StageInputError(f"{path}: not a measurement file")
    off = len(MEAS_MAGIC)
    hdr = struct.Struct("<IIII3sd")
    version, F, M, C, mask, area = hdr.unpack_from(raw, off)
    if version != FORMAT_VERSION:
        raise StageInputError(f"{path}: unsupported version {version}")
    off += hdr.size
    freqs = np.frombuffer(raw, _F8, F, off).copy()
    off += 8 * F
    pts = np.frombuffer(raw, _F8, 3 * M, off).reshape(M, 3).copy()
    off += 24 * M
    vals = np.frombuffer(raw, _C16, F * M * C, off).reshape(F, M, C).copy()
    comps = tuple(c for c in mask.decode() if c != "-")
    return MeasurementSet(pts, freqs, vals, comps, area)


def write_measurements(path, ms):
    path = Path(path)
    if path.suffix == ".bin":
        write_measurements_bin(path, ms)
    else:
        write_measurements_csv(path, ms)


def read_measurements(path):
    path = Path(path)
    return read_measurements_bin(path) if path.suffix == ".bin" else read_measurements_csv(path)


# -- spectra ------------------------------------------------------------------

def _pack_str(s):
    b = s.encode()
    return struct.pack("<I", len(b)) + b


def _unpack_str(raw, off):
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    return raw[off:off + n].decode(), off + n


_ROLES = ("original", "image", "auxiliary")


def write_spectra(path, spectra_by_freq):
    """Binary spectrum file; ``spectra_by_freq`` maps frequency -> list of spectra."""
    freqs = sorted(spectra_by_freq)
    boxes = [s.box for s in spectra_by_freq[freqs[0]]]
    with open(path, "wb") as fh:
        fh.write(PWS_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, len(freqs), len(boxes)))
        fh.write(_pack_str(GRID_CONVENTION.decode()))
        for box in boxes:
            refl = box.reflection
            pmap = np.eye(3) if refl is None else refl.point_map
            offset = np.zeros(3) if refl is None else refl.offset
            seq = "" if refl is None else "\x1f".join(refl.sequence)
            fh.write(struct.pack("<4diii", *box.center, box.radius, box.order, _ROLES.index(box.role),
                                 int(refl is not None)))
            fh.write(np.asarray(pmap, dtype=_F8).tobytes())
            fh.write(np.asarray(offset, dtype=_F8).tobytes())
            fh.write(_pack_str(seq))
            fh.write(_pack_str(box.label))
        for f in freqs:
            spectra = spectra_by_freq[f]
            fh.write(struct.pack("<dI", f, spectra[0].grid.order))
            for s in spectra:
                fh.write(np.asarray(s.j_theta, dtype=_C16).tobytes())
                fh.write(np.asarray(s.j_phi, dtype=_C16).tobytes())


def read_spectra(path):
    path = _require(path)
    raw = path.read_bytes()
    if not raw.startswith(PWS_MAGIC):
        raise StageInputError(f"{path}: not a spectrum file")
    off = len(PWS_MAGIC)
    version, nf, nb = struct.unpack_from("<III", raw, off)
    if version != FORMAT_VERSION:
        raise StageInputError(f"{path}: unsupported version {version}")
    off += 12
    _, off = _unpack_str(raw, off)
    boxes = []
    rec = struct.Struct("<4diii")
    for _ in range(nb):
        cx, cy, cz, radius, order, role, has_refl = rec.unpack_from(raw, off)
        off += rec.size
        pmap = np.frombuffer(raw, _F8, 9, off).reshape(3, 3).copy()
        off += 72
        offset = np.frombuffer(raw, _F8, 3, off).copy()
        off += 24
        seq, off = _unpack_str(raw, off)
        label, off = _unpack_str(raw, off)
        refl = Reflection(tuple(seq.split("\x1f")) if seq else (), pmap, offset) if has_refl else None
        boxes.append(SourceBox([cx, cy, cz], radius, _ROLES[role], order, refl, label))
    out = {}
    for _ in range(nf):
        f, L = struct.unpack_from("<dI", raw, off)
        off += 12
        grid = spherical_quadrature(L)
        N = grid.count
        spectra = []
        for box in boxes:
            jt = np.frombuffer(raw, _C16, N, off).copy()
            off += 16 * N
            jp = np.frombuffer(raw, _C16, N, off).copy()
            off += 16 * N
            spectra.append(PlaneWaveSpectrum(box, f, grid, jt, jp))
        out[f] = spectra
    return out


# -- images -------------------------------------------------------------------

def write_image_csv(path, img):
    pts = img.grid.points()
    vals = img.values.reshape(-1, len(img.components))
    rows = np.empty((pts.shape[0], 3 + 2 * vals.shape[1]))
    rows[:, :3] = pts
    rows[:, 3::2] = vals.real
    rows[:, 4::2] = vals.imag
    cols = ["x_m", "y_m", "z_m"]
    for c in img.components:
        cols += [f"re_j{c}", f"im_j{c}"]
    np.savetxt(path, rows, delimiter=",", fmt="%.17g", header=",".join(cols), comments="")


def read_image_csv(path):
    path = _require(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    comps = tuple(h[-1] for h in header[3::2])
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    axes = [np.unique(data[:, i]) for i in range(3)]
    origin = [a[0] for a in axes]
    spacing = [float(np.mean(np.diff(a))) if a.size > 1 else 1.0 for a in axes]
    grid = VoxelGrid(origin, spacing, tuple(a.size for a in axes))
    vals = (data[:, 3::2] + 1j * data[:, 4::2]).reshape(tuple(grid.counts) + (len(comps),))
    return VoxelImage(grid, vals, comps)


def heatmap_bytes(img, component, floor_db=HEATMAP_FLOOR_DB):
    """Binary PGM of normalized dB magnitude; 3-D grids are max-projected over z."""
    mag = np.abs(img.component(component)).max(axis=2)  # (nx, ny)
    peak = mag.max()
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag / peak) if peak > 0 else np.full(mag.shape, floor_db)
    level = np.clip((db - floor_db) / -floor_db, 0.0, 1.0)
    pix = np.round(255 * level).astype(np.uint8)
    # rows run from +y (top) down, columns along +x
    pix = pix.T[::-1]
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode() + pix.tobytes()


def write_heatmaps(stem, img):
    paths = []
    for c in img.components:
        p = Path(f"{stem}_j{c}.pgm")
        p.write_bytes(heatmap_bytes(img, c))
        paths.append(p)
    return paths


def read_pgm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], np.uint8, w * h).reshape(h, w)


# -- metrics ------------------------------------------------------------------

def write_metrics(path, metrics):
    """``metrics`` is an iterable of ``(name, value, units)``."""
    lines = ["name,value,units"]
    for name, value, units in metrics:
        lines.append(f"{name},{value!r},{units}" if isinstance(value, float) else f"{name},{value},{units}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics(path):
    path = _require(path)
    out = {}
    for line in path.read_text().splitlines()[1:]:
        name, value, units = line.split(",")
        try:
            out[name] = (float(value), units)
        except ValueError:
            out[name] = (value, units)
    return out


__all__ = [
    "COMPONENTS", "write_meta", "read_meta", "write_measurements", "read_measurements",
    "write_measurements_csv", "read_measurements_csv", "write_measurements_bin", "read_measurements_bin",
    "write_spectra", "read_spectra", "write_image_csv", "read_image_csv", "write_heatmaps",
    "heatmap_bytes", "read_pgm", "write_metrics", "read_metrics",
]
