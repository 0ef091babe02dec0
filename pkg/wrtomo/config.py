"""Run configuration: one JSON document that fully determines a pipeline run.

Every section maps onto a dataclass. Lengths may be given as numbers in
microns or as strings with units, for example ``"50 um"`` or ``"0.05 mm"``,
and wavelengths as numbers in Angstrom or strings like ``"0.3 nm"``.
"""

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import joblib

from .core.types import ViewGeometry, WavelengthGrid
from .projector.fbp import FilterKind
from .rmbir.options import RmbirParams, RmbirParamsError
from .signature.options import SignatureParams, SignatureParamsError
from .simulator.material import (
    DEFAULT_CRYSTAL_BASELINE,
    DEFAULT_POWDER_KNOTS,
    Material,
    ReflectionTrace,
    crystal_material,
    default_traces,
    powder_material,
)
from .simulator.phantom import PhantomParams, PhantomParamsError
from .units import to_angstrom, to_microns

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent / "configs"


class ConfigError(ValueError):
    pass


@dataclass
class GeometryConfig:
    nx: int = 64
    ny: int = 64
    nz: int = 8
    n_views: int = 90
    angle_start: float = 0.0
    angle_stop: float = 180.0
    detector_rows: Optional[int] = None
    detector_cols: Optional[int] = None
    voxel_pitch: Union[float, str] = 50.0
    pixel_pitch: Union[float, str, None] = None

    def build(self) -> ViewGeometry:
        try:
            return ViewGeometry.uniform(
                self.n_views,
                nx=self.nx,
                ny=self.ny,
                nz=self.nz,
                voxel_pitch=to_microns(self.voxel_pitch),
                pixel_pitch=(
                    None if self.pixel_pitch is None else to_microns(self.pixel_pitch)
                ),
                detector_rows=self.detector_rows,
                detector_cols=self.detector_cols,
                angle_start=self.angle_start,
                angle_stop=self.angle_stop,
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"geometry: {e}") from e


@dataclass
class WavelengthConfig:
    start: Union[float, str] = 2.25
    stop: Union[float, str] = 4.0
    count: int = 40

    def build(self) -> WavelengthGrid:
        try:
            return WavelengthGrid.linspace(
                to_angstrom(self.start), to_angstrom(self.stop), self.count
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"wavelengths: {e}") from e


@dataclass
class PhantomConfig:
    """Phantom geometry and materials. Radii are in voxels.

    ``traces`` lists reflection traces as dicts of :class:`ReflectionTrace`
    fields; None selects the default copper-like reflections with
    ``amplitude``. ``grain_traces`` optionally overrides the traces of
    individual grains, keyed by label.
    """

    n_grains: int = 4
    grain_radius: Tuple[float, float] = (5.0, 8.0)
    cylinder_radius: float = 28.0
    min_gap: float = 2.0
    max_attempts: int = 1000
    amplitude: float = 1e-3
    crystal_baseline: float = DEFAULT_CRYSTAL_BASELINE
    powder_knots: List[Tuple[float, float]] = field(
        default_factory=lambda: [list(k) for k in DEFAULT_POWDER_KNOTS]
    )
    traces: Optional[List[Dict[str, Any]]] = None
    grain_traces: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)

    def params(self) -> PhantomParams:
        return PhantomParams(
            n_grains=self.n_grains,
            grain_radius=tuple(self.grain_radius),
            cylinder_radius=self.cylinder_radius,
            min_gap=self.min_gap,
            max_attempts=self.max_attempts,
        )

    def _traces(self, specs: Optional[Sequence[Mapping[str, Any]]]):
        if specs is None:
            return default_traces(self.amplitude)
        try:
            return tuple(ReflectionTrace(**spec) for spec in specs)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"phantom.traces: {e}") from e

    def materials(self, grid: WavelengthGrid) -> Tuple[Material, Material, Dict[int, Material]]:
        """The powder, the shared crystal, and per-grain overrides."""
        try:
            powder = powder_material(grid, self.powder_knots)
            crystal = crystal_material(
                grid, self._traces(self.traces), self.crystal_baseline
            )
            overrides = {
                int(label): crystal_material(
                    grid, self._traces(specs), self.crystal_baseline
                )
                for label, specs in self.grain_traces.items()
            }
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"phantom: {e}") from e
        return powder, crystal, overrides


@dataclass
class SimulationConfig:
    incident_flux: float = 500.0
    noise: bool = True
    bragg_fraction: float = 0.1
    min_excess: float = 0.0


@dataclass
class FbpConfig:
    filter: str = FilterKind.RAMLAK.value


@dataclass
class RunConfig:
    """Everything that determines a run.

    Args:
        geometry: Volume and detector geometry.
        wavelengths: The wavelength grid.
        phantom: Phantom generation.
        simulation: Measurement simulation.
        fbp: Filtered back projection.
        solver: Robust reconstruction options.
        signature: Segmentation and matching options.
        seed: Seed of the phantom and the noise.
        workers: Number of worker processes. None uses all cores.
        name: A label for the run.
    """

    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    wavelengths: WavelengthConfig = field(default_factory=WavelengthConfig)
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    fbp: FbpConfig = field(default_factory=FbpConfig)
    solver: RmbirParams = field(default_factory=RmbirParams)
    signature: SignatureParams = field(default_factory=SignatureParams)
    seed: int = 1
    workers: Optional[int] = None
    name: str = "run"

    @property
    def n_workers(self) -> int:
        return joblib.cpu_count() if self.workers is None else self.workers

    def validate(self) -> None:
        """Raises :class:`ConfigError` naming the first invalid field."""
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer (got {self.seed}).")
        if self.workers is not None and (
            int(self.workers) != self.workers or self.workers < 1
        ):
            raise ConfigError(f"workers must be a positive integer (got {self.workers}).")
        if not self.simulation.incident_flux > 0:
            raise ConfigError(
                "simulation.incident_flux must be > 0"
                f" (got {self.simulation.incident_flux})."
            )
        if not self.simulation.bragg_fraction > 0:
            raise ConfigError(
                "simulation.bragg_fraction must be > 0"
                f" (got {self.simulation.bragg_fraction})."
            )
        if not self.simulation.min_excess >= 0:
            raise ConfigError(
                "simulation.min_excess must be >= 0"
                f" (got {self.simulation.min_excess})."
            )
        try:
            FilterKind(self.fbp.filter)
        except ValueError:
            valid = [k.value for k in FilterKind]
            raise ConfigError(f"fbp.filter must be one of {valid!r} (got {self.fbp.filter!r}).")
        geometry = self.geometry.build()
        grid = self.wavelengths.build()
        for section, check in (
            ("phantom", self.phantom.params().validate),
            ("solver", lambda: self.solver.validate(n_channels=grid.count)),
            ("signature", self.signature.validate),
        ):
            try:
                check()
            except (PhantomParamsError, RmbirParamsError, SignatureParamsError) as e:
                raise ConfigError(f"{section}: {e}") from e
        self.phantom.materials(grid)
        radius = self.phantom.cylinder_radius
        if 2 * radius > min(geometry.nx, geometry.ny):
            raise ConfigError(
                f"phantom.cylinder_radius {radius} does not fit in an"
                f" {geometry.ny} x {geometry.nx} slice."
            )

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        init = d["solver"]["init"]
        d["solver"]["init"] = getattr(init, "value", init)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        return _from_dict(cls, d, "")


def _from_dict(cls, d: Any, path: str):
    where = path or "config"
    if not isinstance(d, Mapping):
        raise ConfigError(f"{where} must be a JSON object (got {d!r}).")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d).difference(fields))
    if unknown:
        dotted = ", ".join(f"{path}.{k}" if path else k for k in unknown)
        raise ConfigError(f"Unknown config key(s): {dotted}.")
    defaults = cls()
    kwargs = {}
    for name, value in d.items():
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            value = _from_dict(type(current), value, f"{path}.{name}" if path else name)
        kwargs[name] = value
    return cls(**kwargs)


def resolve_config_path(name: Union[str, Path]) -> Path:
    """A path to an existing file, or the name of a packaged config."""
    path = Path(name)
    if path.is_file():
        return path
    packaged = CONFIG_DIR / (path.stem + ".json")
    if packaged.is_file():
        return packaged
    available = sorted(p.stem for p in CONFIG_DIR.glob("*.json"))
    raise ConfigError(
        f"No config file {str(name)!r}, and no packaged config of that name"
        f" (available: {available})."
    )


def load_config(path: Union[str, Path, None] = None) -> RunConfig:
    """Loads a config file, or the defaults if ``path`` is None."""
    if path is None:
        return RunConfig()
    path = resolve_config_path(path)
    try:
        with open(path, encoding="utf-8") as f:
            d = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Malformed config {path}: {e}") from e
    logger.debug(f"Loaded config {path}.")
    return RunConfig.from_dict(d)


def parse_value(text: str) -> Any:
    """A JSON value if ``text`` parses as one, else the string itself."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """Returns a copy of ``config`` with dotted-path overrides applied.

    Args:
        config: The base config.
        overrides: Mapping like ``{"solver.max_outer": 5, "seed": 3}``.
    """
    d = config.to_dict()
    for dotted, value in overrides.items():
        keys = dotted.split(".")
        node = d
        for i, key in enumerate(keys[:-1]):
            if not isinstance(node.get(key), dict):
                raise ConfigError(
                    f"Unknown config section {'.'.join(keys[: i + 1])!r}."
                )
            node = node[key]
        if keys[-1] not in node:
            raise ConfigError(f"Unknown config key {dotted!r}.")
        node[keys[-1]] = value
    return RunConfig.from_dict(d)
