"""Command-line pipeline: simulate, reconstruct, extract signatures, evaluate.

Each stage reads its inputs from and writes its outputs to the run directory
given by ``--out``::

    wrtomo simulate --config desk --out run
    wrtomo reconstruct-fbp --out run
    wrtomo reconstruct-rmbir --out run
    wrtomo signatures --out run
    wrtomo evaluate --out run
"""

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numba
import numpy as np

from . import plotting
from .config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    load_config,
    parse_value,
)
from .core.container import (
    ContainerFormatError,
    Manifest,
    array_spec,
    load_container,
    load_sidecar,
    save_container,
)
from .core.types import (
    BraggMapStack,
    HyperSinogram,
    HyperVolume,
    SinogramKind,
    counts_to_projection,
)
from .metrics import evaluate
from .projector import SystemModel, fbp_reconstruct
from .rmbir import ChannelError, RmbirDivergenceError, RmbirParamsError, reconstruct_all
from .signature import SignatureParamsError, extract_signatures
from .simulator import PhantomParamsError, generate_phantom, simulate_measurements
from .version import __version__

logger = logging.getLogger("wrtomo.cli")

LOG_ENV_VAR = "WRT_LOG"

SIMULATE = "simulate.wrt"
FBP = "fbp.wrt"
RMBIR = "rmbir.wrt"
SIGNATURES = "signatures.wrt"
REPORT = "report.json"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4


def _manifest(config: RunConfig, source: Manifest, stage: str, specs) -> Manifest:
    return Manifest(
        arrays=list(specs),
        wavelength_grid=source.wavelength_grid,
        geometry=source.geometry,
        incident_flux=source.incident_flux,
        seed=config.seed,
        config=config.to_dict(),
        version=__version__,
        attrs={"stage": stage},
    )


def _stage_config(args: argparse.Namespace, source: Optional[Manifest]) -> RunConfig:
    """The config of a stage: ``--config`` if given, else the one stored with
    the stage's input, then command-line overrides.
    """
    if args.config is not None or source is None or source.config is None:
        config = load_config(args.config)
    else:
        config = RunConfig.from_dict(source.config)
    overrides = dict(args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = apply_overrides(config, overrides)
    config.validate()
    numba.set_num_threads(min(config.n_workers, numba.config.NUMBA_NUM_THREADS))
    return config


def _input(args: argparse.Namespace, name: str) -> Path:
    path = Path(args.out) / name
    if not path.is_dir():
        raise FileNotFoundError(
            f"Missing input {path}. Run the stage that produces it first."
        )
    return path


def cmd_simulate(args: argparse.Namespace) -> Path:
    """Generates a phantom and simulated counts."""
    config = _stage_config(args, None)
    geometry = config.geometry.build()
    grid = config.wavelengths.build()
    powder, crystal, overrides = config.phantom.materials(grid)
    p = config.phantom.params()
    phantom = generate_phantom(
        config.seed,
        p.n_grains,
        p.grain_radius,
        p.cylinder_radius,
        shape=geometry.volume_shape,
        grid=grid,
        powder=powder,
        crystal=crystal,
        grain_materials=overrides,
        voxel_pitch=geometry.voxel_pitch,
        min_gap=p.min_gap,
        max_attempts=p.max_attempts,
    )
    sim = simulate_measurements(
        phantom,
        geometry,
        grid,
        config.simulation.incident_flux,
        config.seed,
        noise=config.simulation.noise,
        bragg_fraction=config.simulation.bragg_fraction,
        min_excess=config.simulation.min_excess,
        workers=config.n_workers,
        progress=True,
    )
    arrays = {
        "counts": sim.counts.data,
        "ground_truth_volume": sim.truth_volume.data,
        "labels": phantom.labels.labels,
        "support": phantom.support,
        "bragg_mask_truth": sim.bragg_truth.data,
        "signature_truth": sim.signature_truth,
    }
    specs = [
        array_spec("counts", arrays["counts"], "f32", ("k", "view", "row", "col"), "counts"),
        array_spec(
            "ground_truth_volume", arrays["ground_truth_volume"], "f32",
            ("k", "z", "y", "x"), "1/um",
        ),
        array_spec("labels", arrays["labels"], "i32", ("z", "y", "x")),
        array_spec("support", arrays["support"], "u8", ("z", "y", "x")),
        array_spec(
            "bragg_mask_truth", arrays["bragg_mask_truth"], "u8",
            ("k", "view", "row", "col"),
        ),
        array_spec("signature_truth", arrays["signature_truth"], "u8", ("grain", "view", "k")),
    ]
    manifest = Manifest(
        arrays=specs,
        wavelength_grid=grid,
        geometry=geometry,
        incident_flux=config.simulation.incident_flux,
        seed=config.seed,
        config=config.to_dict(),
        version=__version__,
        attrs={"stage": "simulate", "n_grains": phantom.n_grains},
    )
    path = save_container(Path(args.out) / SIMULATE, manifest, arrays)
    logger.info(f"Wrote {path}.")
    return path


def _load_projections(path: Path) -> Tuple[Manifest, HyperSinogram]:
    manifest, arrays = load_container(path)
    if manifest.geometry is None or manifest.wavelength_grid is None:
        raise ContainerFormatError(f"{path} has no geometry or wavelength grid.")
    if "counts" not in arrays or manifest.incident_flux is None:
        raise ContainerFormatError(f"{path} holds no counts.")
    sino = HyperSinogram(arrays["counts"], SinogramKind.COUNTS, manifest.incident_flux)
    sino.check_consistent(manifest.wavelength_grid, manifest.geometry)
    return manifest, sino


def cmd_fbp(args: argparse.Namespace) -> Path:
    """Filtered back projection of every wavelength channel."""
    source, counts = _load_projections(_input(args, SIMULATE))
    config = _stage_config(args, source)
    model = SystemModel(source.geometry)
    projections = counts_to_projection(counts, floor=config.solver.weight_floor)
    volume = np.stack(
        [
            fbp_reconstruct(projections, model, config.fbp.filter, channel=k)
            for k in range(projections.shape[0])
        ]
    )
    spec = array_spec("volume", volume, "f32", ("k", "z", "y", "x"), "1/um")
    manifest = _manifest(config, source, "reconstruct-fbp", [spec])
    path = save_container(Path(args.out) / FBP, manifest, {"volume": volume})
    logger.info(f"Wrote {path}.")
    return path


def cmd_rmbir(args: argparse.Namespace) -> Path:
    """Robust reconstruction and Bragg maps of every wavelength channel."""
    source, counts = _load_projections(_input(args, SIMULATE))
    config = _stage_config(args, source)
    model = SystemModel(source.geometry)
    result = reconstruct_all(
        counts, model, config.solver, workers=config.n_workers, progress=True
    )
    arrays = {"volume": result.volumes.data, "bragg_map": result.bragg_maps.data}
    specs = [
        array_spec("volume", arrays["volume"], "f32", ("k", "z", "y", "x"), "1/um"),
        array_spec("bragg_map", arrays["bragg_map"], "u8", ("k", "view", "row", "col")),
    ]
    trace = {
        "traces": [t.tolist() for t in result.traces],
        "thresholds": result.thresholds.tolist(),
        "runtimes": result.runtimes.tolist(),
    }
    manifest = _manifest(config, source, "reconstruct-rmbir", specs)
    path = save_container(
        Path(args.out) / RMBIR, manifest, arrays, sidecars={"trace.json": trace}
    )
    logger.info(f"Wrote {path}.")
    return path


def cmd_signatures(args: argparse.Namespace) -> Path:
    """Segments domains and matches them with the Bragg-map anomalies."""
    source, arrays = load_container(_input(args, RMBIR))
    config = _stage_config(args, source)
    if source.geometry is None or not {"volume", "bragg_map"} <= set(arrays):
        raise ContainerFormatError("The reconstruction container is incomplete.")
    model = SystemModel(source.geometry)
    result = extract_signatures(
        HyperVolume(arrays["volume"]),
        BraggMapStack(arrays["bragg_map"]),
        model,
        config.signature,
    )
    V, K = source.geometry.n_views, arrays["bragg_map"].shape[0]
    matrices = np.array(
        [s.matrix for s in result.signatures], dtype=np.uint8
    ).reshape(len(result.signatures), V, K)
    out = {
        "classes": result.classes.labels,
        "domains": result.domains.labels,
        "signatures": matrices,
    }
    specs = [
        array_spec("classes", out["classes"], "i32", ("z", "y", "x")),
        array_spec("domains", out["domains"], "i32", ("z", "y", "x")),
        array_spec("signatures", out["signatures"], "u8", ("domain", "view", "k")),
    ]
    matches = {
        "domain_sizes": result.sizes.tolist(),
        "n_anomalies": len(result.anomalies),
        "records": [r.to_dict() for r in result.records],
    }
    manifest = _manifest(config, source, "signatures", specs)
    path = save_container(
        Path(args.out) / SIGNATURES, manifest, out, sidecars={"matches.json": matches}
    )
    logger.info(f"Wrote {path} with {len(result.signatures)} signatures.")
    return path


def _optional(path: Path) -> Optional[Dict[str, np.ndarray]]:
    if not path.is_dir():
        logger.info(f"Skipping missing {path}.")
        return None
    return load_container(path)[1]


def _write_json_atomic(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.tmp-", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(obj, f, indent=2)
            f.write("\n")
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def cmd_evaluate(args: argparse.Namespace) -> Path:
    """Compares every available stage output with the ground truth."""
    out = Path(args.out)
    source, truth = load_container(_input(args, SIMULATE))
    fbp = _optional(out / FBP)
    rmbir = _optional(out / RMBIR)
    sigs = _optional(out / SIGNATURES)
    runtimes = None
    if rmbir is not None:
        runtimes = load_sidecar(out / RMBIR, "trace.json")["runtimes"]
    report = evaluate(
        truth["ground_truth_volume"],
        truth["labels"],
        support=truth["support"],
        bragg_truth=truth["bragg_mask_truth"],
        signature_truth=truth["signature_truth"],
        rmbir_volume=None if rmbir is None else rmbir["volume"],
        fbp_volume=None if fbp is None else fbp["volume"],
        bragg_maps=None if rmbir is None else rmbir["bragg_map"],
        domains=None if sigs is None else sigs["domains"],
        signatures=None if sigs is None else sigs["signatures"],
        runtimes=runtimes,
    )
    d = report.to_dict()
    d["version"] = __version__
    d["config"] = source.config
    path = out / REPORT
    _write_json_atomic(path, d)
    for line in report.summary().splitlines():
        logger.info(line)
    logger.info(f"Wrote {path}.")
    return path


def cmd_plot(args: argparse.Namespace) -> List[Path]:
    """Saves figures of the available stage outputs as PNG files."""
    out = Path(args.out)
    source, truth = load_container(_input(args, SIMULATE))
    wavelengths = source.wavelength_grid.values
    angles = source.geometry.angles
    k = None if args.wavelength is None else source.wavelength_grid.index_of(args.wavelength)
    if k is None:
        k = int(np.argmax(truth["bragg_mask_truth"].reshape(len(wavelengths), -1).mean(1)))
    view = source.geometry.view_index(args.angle)
    figdir = out / "figures"
    figdir.mkdir(parents=True, exist_ok=True)
    recons = {}
    for name, file in (("FBP", FBP), ("R-MBIR", RMBIR)):
        arrays = _optional(out / file)
        if arrays is not None:
            recons[name] = arrays
    written = []
    with plotting.non_gui_backend():
        import matplotlib.pyplot as plt

        figures = [
            (
                "cross_sections.png",
                plotting.plot_cross_sections(
                    truth["ground_truth_volume"],
                    {name: a["volume"] for name, a in recons.items()},
                    k,
                    wavelengths=wavelengths,
                )[0],
            )
        ]
        if "R-MBIR" in recons:
            figures.append(
                (
                    "bragg_maps.png",
                    plotting.plot_bragg_maps(
                        recons["R-MBIR"]["bragg_map"], k, view,
                        truth=truth["bragg_mask_truth"],
                    )[0],
                )
            )
        sigs = _optional(out / SIGNATURES)
        if sigs is not None and len(sigs["signatures"]):
            figures.append(
                (
                    "signatures.png",
                    plotting.plot_signatures(sigs["signatures"], angles, wavelengths)[0],
                )
            )
        if (out / REPORT).is_file():
            profiles = json.loads((out / REPORT).read_text(encoding="utf-8"))["profiles"]
            if profiles:
                figures.append(
                    ("spectra.png", plotting.plot_spectra(profiles, wavelengths)[0])
                )
        for name, fig in figures:
            path = figdir / name
            fig.savefig(path, dpi=args.dpi, bbox_inches="tight")
            plt.close(fig)
            written.append(path)
    logger.info(f"Wrote {len(written)} figures to {figdir}.")
    return written


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-c",
        "--config",
        type=str,
        default=None,
        help="Config file, or the name of a packaged config (desk, full).",
    )
    common.add_argument(
        "-o", "--out", type=str, default="wrtomo-run", help="Run directory."
    )
    common.add_argument(
        "-w", "--workers", type=int, default=None, help="Number of workers."
    )
    common.add_argument("--seed", type=int, default=None, help="Override the seed.")
    common.add_argument(
        "--set",
        dest="sets",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config field by dotted path, e.g. solver.max_outer=5.",
    )
    common.add_argument(
        "-v", "--verbose", action="store_true", help="Run in verbose mode."
    )

    parser = argparse.ArgumentParser(
        description="Robust wavelength-resolved neutron tomography."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, func, help in (
        ("simulate", cmd_simulate, "Simulate a grain phantom and its counts."),
        ("reconstruct-fbp", cmd_fbp, "Reconstruct every wavelength with FBP."),
        ("reconstruct-rmbir", cmd_rmbir, "Robust reconstruction and Bragg maps."),
        ("signatures", cmd_signatures, "Extract per-domain crystal signatures."),
        ("evaluate", cmd_evaluate, "Compare the outputs with the ground truth."),
    ):
        sub = subparsers.add_parser(name, parents=[common], help=help)
        sub.set_defaults(func=func)
    plot_parser = subparsers.add_parser(
        "plot", parents=[common], help="Save figures of the stage outputs."
    )
    plot_parser.add_argument(
        "--wavelength", type=float, default=None, help="Wavelength in Angstrom."
    )
    plot_parser.add_argument(
        "--angle", type=float, default=40.0, help="View angle in degrees."
    )
    plot_parser.add_argument(
        "-d", "--dpi", type=float, default=150, help="Resolution in dots per inch."
    )
    plot_parser.set_defaults(func=cmd_plot)
    return parser


def parse_overrides(sets: Sequence[str], extra: Sequence[str]) -> Dict[str, Any]:
    """Parses ``--set key=value`` options and ``--key.path value`` tokens."""
    overrides = {}
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"Expected --set KEY=VALUE, got {item!r}.")
        overrides[key.strip()] = parse_value(value)
    tokens = list(extra)
    while tokens:
        token = tokens.pop(0)
        if not token.startswith("--") or "." not in token:
            raise ConfigError(f"Unrecognized argument {token!r}.")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        elif tokens:
            value = tokens.pop(0)
        else:
            raise ConfigError(f"Missing value for {token!r}.")
        overrides[key] = parse_value(value)
    return overrides


def _log_level(verbose: bool) -> int:
    if verbose:
        return logging.DEBUG
    name = os.environ.get(LOG_ENV_VAR, "INFO").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.INFO


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Runs one pipeline stage and returns the process exit code."""
    parser = make_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(
        level=_log_level(args.verbose),
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )
    try:
        args.overrides = parse_overrides(args.sets, extra)
        args.func(args)
    except (
        ConfigError,
        RmbirParamsError,
        SignatureParamsError,
        PhantomParamsError,
    ) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except (RmbirDivergenceError, ChannelError) as e:
        logger.error(f"Solver failure: {e}")
        return EXIT_SOLVER
    except (ContainerFormatError, FileNotFoundError, ValueError) as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA
    return EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
