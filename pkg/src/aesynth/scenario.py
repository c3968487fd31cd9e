"""Scenario files: a YAML mapping that fully determines one experiment run.

Lengths in scenario files are millimeters (suffix ``_mm``); everything else
is SI (Hz, s, V, Pa).  Values are kept in file units on the ``Scenario``
dataclasses so a parse -> serialize -> parse round trip is exact; the
``build_*`` helpers convert to SI domain objects.  Unknown or missing fields
raise :class:`ScenarioError` carrying the offending field path.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .acquisition import AcquisitionSpec
from .core import (
    ArrayGeometry,
    Medium,
    PixelGrid,
    PulseSpec,
    SFieldGrid,
    default_pixel_grid,
)
from .errors import ScenarioError
from .forward import PressureModel, focused_sequence, single_element_sequence
from .metrics import Rect, TargetSpec

MM = 1e-3
WEIGHTINGS = ("none", "cf", "cfpl")

_REQUIRED = object()


def _mapping(node, path: str) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ScenarioError(path, "expected a mapping")
    return dict(node)


def _take(d: dict, key: str, path: str, kind, default=_REQUIRED):
    if key not in d:
        if default is _REQUIRED:
            raise ScenarioError(f"{path}.{key}", "required field is missing")
        return default
    v = d.pop(key)
    full = f"{path}.{key}"
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioError(full, f"expected a number, got {v!r}")
        return float(v)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ScenarioError(full, f"expected an integer, got {v!r}")
        return v
    if kind is bool:
        if not isinstance(v, bool):
            raise ScenarioError(full, f"expected a boolean, got {v!r}")
        return v
    if kind is str:
        if not isinstance(v, str):
            raise ScenarioError(full, f"expected a string, got {v!r}")
        return v
    raise AssertionError(kind)


def _no_extras(d: dict, path: str) -> None:
    if d:
        raise ScenarioError(path, f"unknown field(s): {', '.join(sorted(d))}")


def _roi(node, path: str) -> tuple[float, float, float, float]:
    if (
        not isinstance(node, (list, tuple))
        or len(node) != 4
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in node)
    ):
        raise ScenarioError(path, "expected [x0, x1, z0, z1] in mm")
    return tuple(float(v) for v in node)


@dataclass(frozen=True)
class GeometryScenario:
    num_elements: int = 64
    pitch_mm: float = 0.315
    center_x_mm: float = 0.0


@dataclass(frozen=True)
class MediumScenario:
    sos: float = 1480.0
    k_i: float = 1.0
    p0: float = 1.0


@dataclass(frozen=True)
class PulseScenario:
    center_frequency: float = 2.0e6
    num_cycles: float = 1.0
    sample_rate: float = 16.0e6
    kind: str = "tone"


@dataclass(frozen=True)
class PressureScenario:
    decay: str = "none"
    r_min_mm: float = 0.1
    directivity: str = "omni"


@dataclass(frozen=True)
class AcquisitionScenario:
    averages: int = 1
    noise_power: float = 0.0
    common_mode_amplitude: float = 0.0
    rf_gain: float = 1.0


@dataclass(frozen=True)
class SimulationScenario:
    # None -> physical constant k_i * p0 * cell_area; a number folds all of
    # that (including the cell area) into one normalization constant.
    amplitude_scale: float | None = 1.0


@dataclass(frozen=True)
class SourceScenario:
    kind: str
    x_mm: float = 0.0
    z_mm: float = 0.0
    amplitude: float = 1.0
    radius_mm: float | None = None
    path: str | None = None


@dataclass(frozen=True)
class TransmitScenario:
    scheme: str = "sa"
    focal_depth_mm: float = 22.0
    line_centers: str | tuple[float, ...] = "elements"


@dataclass(frozen=True)
class GridScenario:
    x0_mm: float
    z0_mm: float
    dx_mm: float
    dz_mm: float
    nx: int
    nz: int


@dataclass(frozen=True)
class ReconstructionScenario:
    f_number: float = 1.5
    max_depth_mm: float = 50.0
    weighting: str = "none"
    amplitude_correct: bool = False
    cfpl_centered: bool = False
    grid: GridScenario | None = None


@dataclass(frozen=True)
class TargetScenario:
    label: str
    x_mm: float
    z_mm: float
    signal_roi_mm: tuple[float, float, float, float]
    noise_roi_mm: tuple[float, float, float, float]
    group: str | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    description: str = ""
    geometry: GeometryScenario = GeometryScenario()
    medium: MediumScenario = MediumScenario()
    pulse: PulseScenario = PulseScenario()
    pressure_model: PressureScenario = PressureScenario()
    acquisition: AcquisitionScenario = AcquisitionScenario()
    simulation: SimulationScenario = SimulationScenario()
    sources: tuple[SourceScenario, ...] = ()
    transmit: TransmitScenario = TransmitScenario()
    reconstruction: ReconstructionScenario = ReconstructionScenario()
    targets: tuple[TargetScenario, ...] = ()


def scenario_from_dict(doc: dict, path: str = "scenario") -> Scenario:
    doc = _mapping(doc, path)
    name = _take(doc, "name", path, str)
    seed = _take(doc, "seed", path, int)
    description = _take(doc, "description", path, str, "")

    g = _mapping(doc.pop("geometry", None), f"{path}.geometry")
    geometry = GeometryScenario(
        num_elements=_take(g, "num_elements", f"{path}.geometry", int, 64),
        pitch_mm=_take(g, "pitch_mm", f"{path}.geometry", float, 0.315),
        center_x_mm=_take(g, "center_x_mm", f"{path}.geometry", float, 0.0),
    )
    _no_extras(g, f"{path}.geometry")
    if geometry.num_elements < 1:
        raise ScenarioError(f"{path}.geometry.num_elements", "must be >= 1")
    if geometry.pitch_mm <= 0:
        raise ScenarioError(f"{path}.geometry.pitch_mm", "must be > 0")

    m = _mapping(doc.pop("medium", None), f"{path}.medium")
    medium = MediumScenario(
        sos=_take(m, "sos", f"{path}.medium", float, 1480.0),
        k_i=_take(m, "k_i", f"{path}.medium", float, 1.0),
        p0=_take(m, "p0", f"{path}.medium", float, 1.0),
    )
    _no_extras(m, f"{path}.medium")
    if medium.sos <= 0:
        raise ScenarioError(f"{path}.medium.sos", "must be > 0")

    p = _mapping(doc.pop("pulse", None), f"{path}.pulse")
    pulse = PulseScenario(
        center_frequency=_take(p, "center_frequency", f"{path}.pulse", float, 2.0e6),
        num_cycles=_take(p, "num_cycles", f"{path}.pulse", float, 1.0),
        sample_rate=_take(p, "sample_rate", f"{path}.pulse", float, 16.0e6),
        kind=_take(p, "kind", f"{path}.pulse", str, "tone"),
    )
    _no_extras(p, f"{path}.pulse")
    if pulse.kind not in ("tone", "impulse"):
        raise ScenarioError(f"{path}.pulse.kind", "must be 'tone' or 'impulse'")
    if pulse.sample_rate < 8 * pulse.center_frequency:
        raise ScenarioError(
            f"{path}.pulse.sample_rate", "must be >= 8 x center_frequency"
        )

    pm = _mapping(doc.pop("pressure_model", None), f"{path}.pressure_model")
    pressure_model = PressureScenario(
        decay=_take(pm, "decay", f"{path}.pressure_model", str, "none"),
        r_min_mm=_take(pm, "r_min_mm", f"{path}.pressure_model", float, 0.1),
        directivity=_take(pm, "directivity", f"{path}.pressure_model", str, "omni"),
    )
    _no_extras(pm, f"{path}.pressure_model")
    if pressure_model.decay not in ("none", "inverse_sqrt", "inverse"):
        raise ScenarioError(f"{path}.pressure_model.decay", "unknown decay mode")
    if pressure_model.directivity not in ("omni", "cosine"):
        raise ScenarioError(f"{path}.pressure_model.directivity", "unknown directivity")
    if pressure_model.r_min_mm <= 0:
        raise ScenarioError(f"{path}.pressure_model.r_min_mm", "must be > 0")

    a = _mapping(doc.pop("acquisition", None), f"{path}.acquisition")
    acquisition = AcquisitionScenario(
        averages=_take(a, "averages", f"{path}.acquisition", int, 1),
        noise_power=_take(a, "noise_power", f"{path}.acquisition", float, 0.0),
        common_mode_amplitude=_take(
            a, "common_mode_amplitude", f"{path}.acquisition", float, 0.0
        ),
        rf_gain=_take(a, "rf_gain", f"{path}.acquisition", float, 1.0),
    )
    _no_extras(a, f"{path}.acquisition")
    if acquisition.averages < 1:
        raise ScenarioError(f"{path}.acquisition.averages", "must be >= 1")
    if acquisition.noise_power < 0:
        raise ScenarioError(f"{path}.acquisition.noise_power", "must be >= 0")

    sim = _mapping(doc.pop("simulation", None), f"{path}.simulation")
    if "amplitude_scale" in sim and sim["amplitude_scale"] is None:
        sim.pop("amplitude_scale")
        amplitude_scale = None
    else:
        amplitude_scale = _take(sim, "amplitude_scale", f"{path}.simulation", float, 1.0)
    simulation = SimulationScenario(amplitude_scale=amplitude_scale)
    _no_extras(sim, f"{path}.simulation")

    sources = []
    src_nodes = doc.pop("sources", [])
    if not isinstance(src_nodes, list):
        raise ScenarioError(f"{path}.sources", "expected a list")
    for i, node in enumerate(src_nodes):
        spath = f"{path}.sources[{i}]"
        s = _mapping(node, spath)
        kind = _take(s, "kind", spath, str)
        if kind not in ("point", "disc", "file"):
            raise ScenarioError(f"{spath}.kind", "must be point, disc or file")
        src = SourceScenario(
            kind=kind,
            x_mm=_take(s, "x_mm", spath, float, 0.0),
            z_mm=_take(s, "z_mm", spath, float, 0.0),
            amplitude=_take(s, "amplitude", spath, float, 1.0),
            radius_mm=_take(s, "radius_mm", spath, float, None)
            if kind == "disc" or "radius_mm" in s
            else None,
            path=_take(s, "path", spath, str, None) if kind == "file" or "path" in s else None,
        )
        _no_extras(s, spath)
        if kind == "disc" and (src.radius_mm is None or src.radius_mm <= 0):
            raise ScenarioError(f"{spath}.radius_mm", "disc sources need a radius > 0")
        if kind == "file" and not src.path:
            raise ScenarioError(f"{spath}.path", "file sources need a path")
        sources.append(src)

    t = _mapping(doc.pop("transmit", None), f"{path}.transmit")
    scheme = _take(t, "scheme", f"{path}.transmit", str, "sa")
    if scheme not in ("sa", "fus"):
        raise ScenarioError(f"{path}.transmit.scheme", "must be 'sa' or 'fus'")
    lc = t.pop("line_centers", "elements")
    if isinstance(lc, str):
        if lc != "elements":
            raise ScenarioError(
                f"{path}.transmit.line_centers", "must be 'elements' or a list of mm"
            )
        line_centers = "elements"
    elif isinstance(lc, list) and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in lc
    ):
        line_centers = tuple(float(v) for v in lc)
    else:
        raise ScenarioError(
            f"{path}.transmit.line_centers", "must be 'elements' or a list of mm"
        )
    transmit = TransmitScenario(
        scheme=scheme,
        focal_depth_mm=_take(t, "focal_depth_mm", f"{path}.transmit", float, 22.0),
        line_centers=line_centers,
    )
    _no_extras(t, f"{path}.transmit")
    if transmit.focal_depth_mm <= 0:
        raise ScenarioError(f"{path}.transmit.focal_depth_mm", "must be > 0")

    r = _mapping(doc.pop("reconstruction", None), f"{path}.reconstruction")
    grid_node = r.pop("grid", None)
    grid = None
    if grid_node is not None:
        gpath = f"{path}.reconstruction.grid"
        gd = _mapping(grid_node, gpath)
        grid = GridScenario(
            x0_mm=_take(gd, "x0_mm", gpath, float),
            z0_mm=_take(gd, "z0_mm", gpath, float),
            dx_mm=_take(gd, "dx_mm", gpath, float),
            dz_mm=_take(gd, "dz_mm", gpath, float),
            nx=_take(gd, "nx", gpath, int),
            nz=_take(gd, "nz", gpath, int),
        )
        _no_extras(gd, gpath)
    reconstruction = ReconstructionScenario(
        f_number=_take(r, "f_number", f"{path}.reconstruction", float, 1.5),
        max_depth_mm=_take(r, "max_depth_mm", f"{path}.reconstruction", float, 50.0),
        weighting=_take(r, "weighting", f"{path}.reconstruction", str, "none"),
        amplitude_correct=_take(
            r, "amplitude_correct", f"{path}.reconstruction", bool, False
        ),
        cfpl_centered=_take(r, "cfpl_centered", f"{path}.reconstruction", bool, False),
        grid=grid,
    )
    _no_extras(r, f"{path}.reconstruction")
    if reconstruction.weighting not in WEIGHTINGS:
        raise ScenarioError(
            f"{path}.reconstruction.weighting", f"must be one of {WEIGHTINGS}"
        )
    if reconstruction.f_number <= 0:
        raise ScenarioError(f"{path}.reconstruction.f_number", "must be > 0")
    if reconstruction.max_depth_mm <= 0:
        raise ScenarioError(f"{path}.reconstruction.max_depth_mm", "must be > 0")

    targets = []
    tgt_nodes = doc.pop("targets", [])
    if not isinstance(tgt_nodes, list):
        raise ScenarioError(f"{path}.targets", "expected a list")
    for i, node in enumerate(tgt_nodes):
        tpath = f"{path}.targets[{i}]"
        td = _mapping(node, tpath)
        group = td.pop("group", None)
        if group is not None and not isinstance(group, str):
            raise ScenarioError(f"{tpath}.group", "expected a string")
        tgt = TargetScenario(
            label=_take(td, "label", tpath, str),
            x_mm=_take(td, "x_mm", tpath, float),
            z_mm=_take(td, "z_mm", tpath, float),
            signal_roi_mm=_roi(td.pop("signal_roi_mm", None), f"{tpath}.signal_roi_mm"),
            noise_roi_mm=_roi(td.pop("noise_roi_mm", None), f"{tpath}.noise_roi_mm"),
            group=group,
        )
        _no_extras(td, tpath)
        targets.append(tgt)

    _no_extras(doc, path)
    return Scenario(
        name=name,
        seed=seed,
        description=description,
        geometry=geometry,
        medium=medium,
        pulse=pulse,
        pressure_model=pressure_model,
        acquisition=acquisition,
        simulation=simulation,
        sources=tuple(sources),
        transmit=transmit,
        reconstruction=reconstruction,
        targets=tuple(targets),
    )


def scenario_to_dict(s: Scenario) -> dict:
    doc = asdict(s)
    doc["sources"] = [
        {k: v for k, v in src.items() if v is not None} for src in doc["sources"]
    ]
    doc["targets"] = [
        {k: v for k, v in t.items() if v is not None} for t in doc["targets"]
    ]
    for t in doc["targets"]:
        t["signal_roi_mm"] = list(t["signal_roi_mm"])
        t["noise_roi_mm"] = list(t["noise_roi_mm"])
    lc = doc["transmit"]["line_centers"]
    if not isinstance(lc, str):
        doc["transmit"]["line_centers"] = list(lc)
    if doc["reconstruction"]["grid"] is None:
        del doc["reconstruction"]["grid"]
    if doc["simulation"]["amplitude_scale"] is None:
        doc["simulation"]["amplitude_scale"] = None
    if not doc["description"]:
        del doc["description"]
    return doc


def load_scenario(path) -> Scenario:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(str(path), f"not valid YAML: {exc}") from exc
    if doc is None:
        raise ScenarioError(str(path), "scenario file is empty")
    return scenario_from_dict(doc)


def save_scenario(path, s: Scenario) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(s), sort_keys=False))


# ---------------------------------------------------------------------------
# SI builders


def build_geometry(s: Scenario) -> ArrayGeometry:
    g = s.geometry
    return ArrayGeometry(
        num_elements=g.num_elements,
        pitch=g.pitch_mm * MM,
        center_x=g.center_x_mm * MM,
    )


def build_medium(s: Scenario) -> Medium:
    return Medium(
        sos=s.medium.sos,
        k_i=s.medium.k_i,
        p0=s.medium.p0,
        noise_power=s.acquisition.noise_power,
    )


def build_pulse(s: Scenario) -> PulseSpec:
    p = s.pulse
    return PulseSpec(
        center_frequency=p.center_frequency,
        num_cycles=p.num_cycles,
        sample_rate=p.sample_rate,
        kind=p.kind,
    )


def build_pressure_model(s: Scenario) -> PressureModel:
    pm = s.pressure_model
    return PressureModel(
        decay=pm.decay, r_min=pm.r_min_mm * MM, directivity=pm.directivity
    )


def build_acquisition(s: Scenario, no_noise: bool = False) -> AcquisitionSpec:
    a = s.acquisition
    return AcquisitionSpec(
        k=a.averages,
        noise_power=0.0 if no_noise else a.noise_power,
        common_mode_amplitude=a.common_mode_amplitude,
        rf_gain=a.rf_gain,
    )


def build_pixel_grid(s: Scenario) -> PixelGrid:
    r = s.reconstruction
    if r.grid is not None:
        g = r.grid
        return PixelGrid(
            origin=(g.x0_mm * MM, g.z0_mm * MM),
            dx=g.dx_mm * MM,
            dz=g.dz_mm * MM,
            nx=g.nx,
            nz=g.nz,
        )
    return default_pixel_grid(
        build_geometry(s), build_medium(s), build_pulse(s), r.max_depth_mm * MM
    )


def build_s_field(s: Scenario, base_dir=None) -> SFieldGrid:
    """Rasterize the scenario's sources onto the reconstruction grid.

    Point sources add their amplitude to the nearest cell; discs add it to
    every cell whose center lies inside the circle.  A ``file`` source loads
    a complete field from an ``.npz`` archive (keys ``values``, ``origin_x``,
    ``origin_z``, ``dx``, ``dz``; SI units) and must be the only source.
    """
    files = [src for src in s.sources if src.kind == "file"]
    if files:
        if len(s.sources) != 1:
            raise ScenarioError(
                "scenario.sources", "a file source cannot be combined with others"
            )
        p = Path(files[0].path)
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        with np.load(p) as npz:
            return SFieldGrid(
                origin=(float(npz["origin_x"]), float(npz["origin_z"])),
                dx=float(npz["dx"]),
                dz=float(npz["dz"]),
                values=np.asarray(npz["values"], dtype=float),
            )

    grid = build_pixel_grid(s)
    values = np.zeros((grid.nz, grid.nx))
    xs = grid.x_coords()
    zs = grid.z_coords()
    for i, src in enumerate(s.sources):
        x = src.x_mm * MM
        z = src.z_mm * MM
        if src.kind == "point":
            ix = int(np.floor((x - grid.origin[0]) / grid.dx + 0.5))
            iz = int(np.floor((z - grid.origin[1]) / grid.dz + 0.5))
            if not (0 <= ix < grid.nx and 0 <= iz < grid.nz):
                raise ScenarioError(
                    f"scenario.sources[{i}]", "point source lies outside the grid"
                )
            values[iz, ix] += src.amplitude
        else:
            r = src.radius_mm * MM
            mask = (xs[None, :] - x) ** 2 + (zs[:, None] - z) ** 2 <= r * r
            if not mask.any():
                raise ScenarioError(
                    f"scenario.sources[{i}]", "disc covers no grid cells"
                )
            values[mask] += src.amplitude
    return SFieldGrid(origin=grid.origin, dx=grid.dx, dz=grid.dz, values=values)


def build_events(s: Scenario):
    geometry = build_geometry(s)
    if s.transmit.scheme == "sa":
        return single_element_sequence(geometry)
    if s.transmit.line_centers == "elements":
        centers = geometry.element_positions()
    else:
        centers = np.asarray(s.transmit.line_centers, dtype=float) * MM
    return focused_sequence(
        geometry, build_medium(s), s.transmit.focal_depth_mm * MM, centers
    )


def build_targets(s: Scenario) -> list[TargetSpec]:
    out = []
    for t in s.targets:
        sig = Rect(
            t.signal_roi_mm[0] * MM,
            t.signal_roi_mm[1] * MM,
            t.signal_roi_mm[2] * MM,
            t.signal_roi_mm[3] * MM,
        )
        noi = Rect(
            t.noise_roi_mm[0] * MM,
            t.noise_roi_mm[1] * MM,
            t.noise_roi_mm[2] * MM,
            t.noise_roi_mm[3] * MM,
        )
        out.append(
            TargetSpec(
                position=(t.x_mm * MM, t.z_mm * MM),
                signal_roi=sig,
                noise_roi=noi,
                label=t.label,
                group=t.group,
            )
        )
    return out


def shift_depth(s: Scenario, dz_mm: float, rename: bool = True) -> Scenario:
    """Scenario with sources, targets and signal ROIs moved deeper by ``dz_mm``.

    Noise ROIs stay put (they describe source-free background).  File-backed
    s-fields cannot be shifted.
    """
    if any(src.kind == "file" for src in s.sources):
        raise ScenarioError("scenario.sources", "cannot depth-shift a file s-field")
    sources = tuple(replace(src, z_mm=src.z_mm + dz_mm) for src in s.sources)
    targets = tuple(
        replace(
            t,
            z_mm=t.z_mm + dz_mm,
            signal_roi_mm=(
                t.signal_roi_mm[0],
                t.signal_roi_mm[1],
                t.signal_roi_mm[2] + dz_mm,
                t.signal_roi_mm[3] + dz_mm,
            ),
        )
        for t in s.targets
    )
    name = f"{s.name}+{dz_mm:g}mm" if rename and dz_mm else s.name
    return replace(s, name=name, sources=sources, targets=targets)
