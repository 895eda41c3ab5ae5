"""
Scenario configuration: JSON schema with explicit units in field names,
validation that reports every offending field, and builders for the
domain objects used by the pipeline stages.
"""

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, GeometryError, ParameterError
from .forward import SamplePlane
from .imaging import FILTER_KINDS, VoxelGrid
from .isr import SolverConfig, check_boxes, make_boxes
from .scene import DipoleSource, PecPlane, Scene

DEFAULTS = {
    "name": "scenario",
    "description": "",
    "components": ["x", "y"],
    "data_max_order": 8,
    "image_max_order": 1,
    "image_orders": None,
    "relocation": "shift",
    "seed": 0,
    "snr_db": None,
    "output_format": "csv",
    "solver": {"max_iter": 200, "tol": 1e-6, "digits": 3.0, "damping": 0.0, "min_data_ratio": 0.05},
    "filter": {"kind": "none", "half_angle_rad": None},
    "bpa": {"max_order": 1, "component": "y", "grid": None},
    "metrics": {
        "component": "y",
        "level_db": -3.0,
        "peak_threshold_db": -10.0,
        "min_separation_m": 0.015,
        "exclusion_radius_m": 0.05,
        "ghost_positions_m": [],
        "ghost_threshold_db": -6.0,
        "true_positions_m": None,
    },
}

REQUIRED = ("scene", "sample_plane", "box", "image_grid")


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _frequencies(spec):
    if isinstance(spec, dict):
        start, stop, step = spec["start"], spec["stop"], spec["step"]
        n = int(round((stop - start) / step)) + 1
        return [float(start + i * step) for i in range(n)]
    return [float(f) for f in spec]


@dataclass
class ScenarioConfig:
    """Validated-on-demand scenario; ``data`` is the normalized JSON tree."""

    data: dict

    @classmethod
    def from_dict(cls, raw):
        missing = [k for k in REQUIRED if k not in raw]
        if missing:
            raise ConfigError("missing sections", [f"{k}: section is required" for k in missing])
        data = _merge(DEFAULTS, raw)
        problems = [f"scene.{k}: field is required" for k in ("sources", "frequencies_hz")
                    if k not in data["scene"]]
        if problems:
            raise ConfigError("missing fields", problems)
        try:
            data["scene"]["frequencies_hz"] = _frequencies(data["scene"]["frequencies_hz"])
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise ConfigError("bad frequency list", [f"scene.frequencies_hz: {exc!r}"]) from exc
        return cls(data)

    def to_dict(self):
        return copy.deepcopy(self.data)

    def to_json(self):
        return json.dumps(self.data, indent=2, sort_keys=True)

    @property
    def hash(self):
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def __getitem__(self, key):
        return self.data[key]

    # -- builders ---------------------------------------------------------
    def planes(self):
        return [PecPlane(p["anchor_m"], p["normal"], p["label"]) for p in self.data["scene"].get("planes", [])]

    def sources(self):
        out = []
        for s in self.data["scene"]["sources"]:
            re = np.asarray(s["moment_re_am"], dtype=float)
            im = np.asarray(s.get("moment_im_am", [0.0, 0.0, 0.0]), dtype=float)
            out.append(DipoleSource(s["position_m"], re + 1j * im))
        return out

    def scene(self):
        return Scene(self.sources(), self.planes(), self.data["scene"]["frequencies_hz"])

    def sample_plane(self):
        sp = self.data["sample_plane"]
        return SamplePlane(sp["center_m"], sp["extent_m"], sp["counts"], sp.get("normal", [0, 0, 1]),
                           sp.get("random", False), self.data["seed"])

    def boxes(self):
        b = self.data["box"]
        return make_boxes(self.planes(), b["center_m"], b["radius_m"], self.data["image_max_order"])

    def solver_config(self):
        s = self.data["solver"]
        return SolverConfig(s["max_iter"], s["tol"], s["digits"], s["damping"], s["min_data_ratio"])

    def image_grid(self, key="image_grid"):
        g = self.data[key] if key == "image_grid" else self.data["bpa"]["grid"] or self.data["image_grid"]
        return VoxelGrid.from_bounds(g["min_m"], g["max_m"], g["spacing_m"])

    def image_orders(self):
        orders = self.data["image_orders"]
        return list(range(self.data["image_max_order"] + 1)) if orders is None else list(orders)

    def true_positions(self):
        tp = self.data["metrics"]["true_positions_m"]
        if tp is None:
            tp = [s["position_m"] for s in self.data["scene"]["sources"]]
        return np.asarray(tp, dtype=float).reshape(-1, 3)

    # -- validation -------------------------------------------------------
    def violations(self):
        """Human-readable problems; empty when the scenario is runnable."""
        out = []
        d = self.data

        def guard(prefix, fn):
            try:
                return fn()
            except (ParameterError, ValueError, KeyError, TypeError) as exc:
                out.append(f"{prefix}: {exc}")
                return None

        planes = guard("scene.planes", self.planes) or []
        sources = guard("scene.sources", self.sources)
        freqs = np.asarray(d["scene"]["frequencies_hz"], dtype=float)
        if freqs.size == 0 or np.any(~(freqs > 0)):
            out.append("scene.frequencies_hz: frequencies must be strictly positive")
        elif np.any(np.diff(freqs) <= 0):
            out.append("scene.frequencies_hz: frequencies must be sorted strictly increasing")
        if sources:
            for i, src in enumerate(sources):
                for p in planes:
                    if not p.signed_distance(src.position) > 0:
                        out.append(f"scene.sources[{i}]: outside the region bounded by plane {p.label!r}")
        plane = guard("sample_plane", self.sample_plane)
        pts = None
        if plane is not None:
            pts = plane.points()
            for p in planes:
                if np.any(p.signed_distance(pts) <= 0):
                    out.append(f"sample_plane: samples intersect or cross plane {p.label!r}")
        comps = d["components"]
        if not comps or not set(comps) <= {"x", "y", "z"} or len(set(comps)) != len(comps):
            out.append(f"components: invalid component list {comps}")
        for key in ("data_max_order", "image_max_order"):
            if not isinstance(d[key], int) or d[key] < 0:
                out.append(f"{key}: must be a non-negative integer")
        if isinstance(d["image_max_order"], int) and isinstance(d["data_max_order"], int) \
                and d["image_max_order"] > d["data_max_order"]:
            out.append("image_max_order: exceeds data_max_order")
        guard("solver", self.solver_config)
        if d["box"].get("radius_m", 0) <= 0:
            out.append("box.radius_m: must be positive")
        elif not out:
            try:
                check_boxes(self.boxes(), pts)
            except (GeometryError, KeyError, TypeError, ValueError) as exc:
                out.append(f"box: {exc}")
        if d["filter"]["kind"] not in FILTER_KINDS:
            out.append(f"filter.kind: must be one of {FILTER_KINDS}")
        elif d["filter"]["kind"] != "none":
            a = d["filter"]["half_angle_rad"]
            if a is None or not 0 < a <= np.pi / 2:
                out.append("filter.half_angle_rad: must lie in (0, pi/2]")
        if d["relocation"] not in ("shift", "mirror"):
            out.append("relocation: must be 'shift' or 'mirror'")
        guard("image_grid", self.image_grid)
        if d["bpa"]["component"] not in comps:
            out.append(f"bpa.component: {d['bpa']['component']!r} is not recorded")
        if d["output_format"] not in ("csv", "binary"):
            out.append("output_format: must be 'csv' or 'binary'")
        return out

    def validate(self):
        problems = self.violations()
        if problems:
            raise ConfigError(f"{len(problems)} configuration error(s)", problems)
        return self


def load_config(path):
    """Parse a scenario JSON file (``bundled:<name>`` reads a packaged scenario)."""
    path = str(path)
    try:
        if path.startswith("bundled:"):
            text = resources.files("mpi_isr.configs").joinpath(path.split(":", 1)[1]).read_text()
        else:
            text = Path(path).read_text()
        raw = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}", [str(exc)]) from exc
    if not isinstance(raw, dict):
        raise ConfigError("scenario root must be a JSON object", ["root: not an object"])
    return ScenarioConfig.from_dict(raw)


def validate(config):
    """List of violations (empty when valid)."""
    return config.violations()


def bundled_configs():
    return sorted(p.name for p in resources.files("mpi_isr.configs").iterdir() if p.name.endswith(".json"))
