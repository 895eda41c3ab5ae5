"""
End-to-end stage runner: simulate -> invert -> image -> bpa -> metrics.

Each stage reads the previous stage's files from the output directory and
writes its own, tagged with the config hash. ``manifest.json`` records the
hash, library versions and per-stage wall time.
"""

import json
import logging
import platform
import time
from pathlib import Path

import numpy as np
import scipy
import sklearn

from . import __version__
from . import io
from .analysis import artifact_floor, find_peaks, ghost_check, psf_width
from .bpa import bpa_image, rt_bpa_image
from .exceptions import NumericalError, ParameterError, StageInputError
from .forward import add_noise, simulate_measurements
from .imaging import MultipathImager
from .isr import InverseSourceReconstruction

log = logging.getLogger(__name__)

STAGES = ("simulate", "invert", "image", "bpa", "metrics")


def _measurement_path(out, config):
    return out / ("measurements.bin" if config["output_format"] == "binary" else "measurements.csv")


def _check_hash(path, config, force):
    meta = io.read_meta(path)
    got = meta.get("config_sha256")
    if got != config.hash and not force:
        raise StageInputError(
            f"{path.name} was produced by config {str(got)[:12]}..., current is {config.hash[:12]}... "
            "(use --force to override)"
        )


def stage_simulate(config, out, force=False):
    scene = config.scene()
    plane = config.sample_plane()
    ms = simulate_measurements(scene, config["data_max_order"], plane, tuple(config["components"]))
    snr = config["snr_db"]
    if snr is not None:
        ms = add_noise(ms, float(snr), config["seed"])
    path = _measurement_path(out, config)
    io.write_measurements(path, ms)
    io.write_meta(path, config.hash, "measurements", cell_area_m2=ms.cell_area,
                  n_points=int(ms.n_points), n_frequencies=int(ms.frequencies.size))
    return [path]


def stage_invert(config, out, force=False):
    mpath = _measurement_path(out, config)
    if not mpath.exists():
        raise StageInputError(f"invert needs {mpath.name}; run the simulate stage first")
    _check_hash(mpath, config, force)
    ms = io.read_measurements(mpath)
    cfg = config.solver_config()
    est = InverseSourceReconstruction(config.boxes(), cfg.max_iter, cfg.tol, cfg.digits, cfg.damping,
                                      cfg.min_data_ratio).fit(ms)
    for spectra in est.spectra_.values():
        for s in spectra:
            if not (np.all(np.isfinite(s.j_theta)) and np.all(np.isfinite(s.j_phi))):
                raise NumericalError("inverse solver produced non-finite spectra")
    spath = out / "spectra.bin"
    io.write_spectra(spath, est.spectra_)
    io.write_meta(spath, config.hash, "spectra")
    dpath = out / "invert_diagnostics.json"
    diags = [{
        "frequency_hz": d.frequency, "translation_order": d.order, "iterations": d.iterations,
        "relative_residual": d.residual, "normal_residual": d.normal_residual,
        "converged": d.converged, "box_energy": d.box_energy,
    } for d in est.diagnostics_]
    dpath.write_text(json.dumps(diags, indent=2))
    return [spath, dpath]


def stage_image(config, out, force=False):
    spath = out / "spectra.bin"
    if not spath.exists():
        raise StageInputError("image needs spectra.bin; run the invert stage first")
    _check_hash(spath, config, force)
    spectra = io.read_spectra(spath)
    grid = config.image_grid()
    aperture = config["sample_plane"]["center_m"]
    anchor = config["box"]["center_m"]
    filt = config["filter"]
    written = []
    for order in config.image_orders():
        imager = MultipathImager(grid, anchor, order, filt["kind"], filt["half_angle_rad"], aperture,
                                 config["relocation"])
        img = imager.transform(spectra)
        path = out / f"image_order{order}.csv"
        io.write_image_csv(path, img)
        io.write_meta(path, config.hash, "image", max_order=order)
        written += [path] + io.write_heatmaps(out / f"image_order{order}", img)
    return written


def stage_bpa(config, out, force=False):
    mpath = _measurement_path(out, config)
    if not mpath.exists():
        raise StageInputError(f"bpa needs {mpath.name}; run the simulate stage first")
    _check_hash(mpath, config, force)
    ms = io.read_measurements(mpath)
    grid = config.image_grid("bpa")
    comp = config["bpa"]["component"]
    written = []
    img = bpa_image(ms, grid, comp)
    path = out / "bpa.csv"
    io.write_image_csv(path, img)
    io.write_meta(path, config.hash, "bpa")
    written += [path] + io.write_heatmaps(out / "bpa", img)
    k = config["bpa"]["max_order"]
    if k > 0:
        img = rt_bpa_image(ms, config.planes(), k, grid, comp)
        path = out / f"rt_bpa_order{k}.csv"
        io.write_image_csv(path, img)
        io.write_meta(path, config.hash, "rt_bpa", max_order=k)
        written += [path] + io.write_heatmaps(out / f"rt_bpa_order{k}", img)
    return written


def image_metrics(prefix, img, config):
    m = config["metrics"]
    comp = m["component"]
    truth = config.true_positions()
    rows = []
    for axis in ("x", "y"):
        try:
            w = psf_width(img, comp, axis, m["level_db"])
        except ParameterError:
            w = float("nan")
        rows.append((f"{prefix}_width_{axis}", float(w), "m"))
    rows.append((f"{prefix}_artifact_floor", artifact_floor(img, comp, m["exclusion_radius_m"], truth), "dB"))
    peaks = find_peaks(img, comp, m["peak_threshold_db"], m["min_separation_m"])
    rows.append((f"{prefix}_peak_count", len(peaks), "count"))
    if len(truth):
        hits = sum(bool(len(peaks)) and np.min(np.linalg.norm(peaks.positions - t, axis=1)) <= m["min_separation_m"]
                   for t in truth)
        rows.append((f"{prefix}_sources_detected", int(hits), "count"))
    for gi, pos in enumerate(m["ghost_positions_m"]):
        g = ghost_check(img, pos, m["ghost_threshold_db"], comp)
        rows.append((f"{prefix}_ghost{gi}_level", g.level_db, "dB"))
        rows.append((f"{prefix}_ghost{gi}_present", int(g.present), "bool"))
        rows.append((f"{prefix}_ghost{gi}_local_max", int(g.local_max), "bool"))
    return rows


def stage_metrics(config, out, force=False):
    images = []
    for order in config.image_orders():
        images.append((f"isr_order{order}", out / f"image_order{order}.csv"))
    images.append(("bpa", out / "bpa.csv"))
    if config["bpa"]["max_order"] > 0:
        images.append((f"rt_bpa_order{config['bpa']['max_order']}", out / f"rt_bpa_order{config['bpa']['max_order']}.csv"))
    present = [(n, p) for n, p in images if p.exists()]
    if not present:
        raise StageInputError("metrics needs image files; run the image and/or bpa stages first")
    rows = []
    widths = {}
    for name, path in present:
        _check_hash(path, config, force)
        img = io.read_image_csv(path)
        r = image_metrics(name, img, config)
        widths[name] = dict((k, v) for k, v, _ in r)[f"{name}_width_x"]
        rows += r
    orders = [o for o in config.image_orders() if f"isr_order{o}" in widths]
    if 0 in orders:
        for o in orders[1:]:
            rows.append((f"isr_width_ratio_order{o}", widths[f"isr_order{o}"] / widths["isr_order0"], "1"))
    path = out / "metrics.txt"
    io.write_metrics(path, rows)
    io.write_meta(path, config.hash, "metrics")
    return [path]


_RUNNERS = {
    "simulate": stage_simulate,
    "invert": stage_invert,
    "image": stage_image,
    "bpa": stage_bpa,
    "metrics": stage_metrics,
}


def _versions():
    return {"mpi_isr": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "python": platform.python_version()}


def run_pipeline(config, out_dir, stages=STAGES, force=False):
    """Run ``stages`` in canonical order; returns ``{stage: [files]}``.

    Raises the stage's own exception, annotated with the stage name.
    """
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ParameterError(f"unknown stages {sorted(unknown)}")
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mpath = out / "manifest.json"
    manifest = json.loads(mpath.read_text()) if mpath.exists() else {}
    if manifest.get("config_sha256") != config.hash:
        manifest = {"config_sha256": config.hash, "stages": {}}
    manifest["versions"] = _versions()
    outputs = {}
    for stage in STAGES:
        if stage not in stages:
            continue
        t0 = time.perf_counter()
        try:
            files = _RUNNERS[stage](config, out, force)
        except Exception as exc:
            exc.stage = stage
            raise
        dt = time.perf_counter() - t0
        log.info("stage %s finished in %.2f s", stage, dt)
        outputs[stage] = files
        manifest["stages"][stage] = {"wall_time_s": dt, "outputs": [Path(f).name for f in files]}
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return outputs
