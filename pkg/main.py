"""Command-line front end: permittivity dumps, single forces, scans, Hamaker fits and the reference table.

Exit codes: 0 success (possibly with warnings), 2 configuration error, 3 data or fit error,
4 numerical failure on every requested point.
"""
import argparse
import asyncio
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import ValidationError

from config import Config
from src.core.exceptions import ConfigError, DomainError, FitError, NumericalError, OpticalDataError
from src.core.models import Command, Geometry, GeometryKind, OutputFormat, RunConfig, ScanResult
from src.core.units import parse_energy_ev, parse_length_nm, parse_length_um
from src.services.analysis import (
    ScanService, combine_hamaker, fit_hamaker, default_vdw_grid, parse_grid, scan_from_csv,
    scan_to_csv, scan_to_json, table1_frame,
)
from src.services.lifshitz_core import CasimirCalculator, MaterialStack
from src.services.materials import parse_material_spec

logging.basicConfig(
    level=Config.LOG_LEVEL,
    format=Config.LOG_FORMAT,
    datefmt=Config.LOG_DATE_FORMAT
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

# flag name (as in --config files) -> argparse dest
OPTIONS = {
    "geom": "geom", "a": "a", "R": "R", "material": "material", "coating": "coating", "d": "d",
    "grid": "grid", "tol": "tol", "xi": "xi", "window": "window", "from-csv": "from_csv",
    "al": "al", "au": "au", "out": "out", "format": "format", "threads": "threads",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="casimir",
        description="Casimir and van der Waals forces between real metals from Lifshitz theory.",
    )
    parser.add_argument("--verbose", action="store_true", help="log debug messages")
    parser.add_argument("--quiet", action="store_true", help="log errors only")
    parser.add_argument("--config", type=Path, help="JSON file whose keys are flag names; explicit flags win")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--geom", choices=[kind.value for kind in GeometryKind], help="ss (plates) or sl (sphere-plate)")
    common.add_argument("--a", help="separation, e.g. 500nm")
    common.add_argument("--R", help="sphere radius, e.g. 100um")
    common.add_argument("--material", help="material spec, e.g. drude:al, table:au:gold.csv")
    common.add_argument("--coating", help="coating material spec")
    common.add_argument("--d", help="coating thickness, e.g. 20nm")
    common.add_argument("--grid", help="paper-vdw, paper-casimir, 1nm,2nm, lin:lo:hi:step or log:lo:hi:count")
    common.add_argument("--tol", type=float, help=f"relative tolerance in [{Config.MIN_TOL}, {Config.MAX_TOL}]")
    common.add_argument("--xi", help="imaginary frequency, e.g. 12.5eV")
    common.add_argument("--window", help="Hamaker fit window, e.g. 0.5nm,2nm")
    common.add_argument("--from-csv", dest="from_csv", action="append", help="scan CSV to fit (repeatable)")
    common.add_argument("--al", help="material spec used for Al cells")
    common.add_argument("--au", help="material spec used for Au cells")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=[fmt.value for fmt in OutputFormat])
    common.add_argument("--threads", type=int, help="worker threads for scans")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser(Command.EPS.value, parents=[common], help="dump eps(i xi) for a material")
    commands.add_parser(Command.FORCE.value, parents=[common], help="force at one separation")
    commands.add_parser(Command.SCAN.value, parents=[common], help="force over a separation grid")
    commands.add_parser(Command.HAMAKER.value, parents=[common], help="scan, fit and combine Hamaker constants")
    commands.add_parser(Command.TABLE1.value, parents=[common], help="reference correction factors side by side")
    return parser


def _load_config_file(path: Optional[Path]) -> Dict[str, Any]:
    if path is None:
        return {}
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    unknown = sorted(set(data) - set(OPTIONS))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    return {OPTIONS[key]: value for key, value in data.items()}


def _merged(args: argparse.Namespace) -> Dict[str, Any]:
    values = _load_config_file(args.config)
    for dest in OPTIONS.values():
        explicit = getattr(args, dest, None)
        if explicit is not None:
            values[dest] = explicit
    if isinstance(values.get("from_csv"), str):
        values["from_csv"] = [values["from_csv"]]
    return values


def _window(text: str):
    parts = [item for item in str(text).split(",") if item.strip()]
    if len(parts) != 2:
        raise ConfigError(f"window '{text}': expected <lo>,<hi> with units, e.g. 0.5nm,2nm")
    return parse_length_nm(parts[0]), parse_length_nm(parts[1])


def build_run_config(command: str, values: Dict[str, Any]) -> RunConfig:
    """Convert unit-suffixed flag values into a validated RunConfig."""
    fields: Dict[str, Any] = {"command": command}
    if values.get("geom") is not None:
        fields["geometry"] = values["geom"]
    if values.get("a") is not None:
        fields["a_nm"] = parse_length_nm(values["a"])
    if values.get("R") is not None:
        fields["sphere_radius_um"] = parse_length_um(values["R"])
    if values.get("d") is not None:
        fields["thickness_d_nm"] = parse_length_nm(values["d"])
    if values.get("xi") is not None:
        fields["xi_ev"] = parse_energy_ev(values["xi"])
    if values.get("window") is not None:
        fields["fit_window_nm"] = _window(values["window"])
    if values.get("from_csv"):
        fields["from_csv"] = [Path(path) for path in values["from_csv"]]
    if values.get("al") is not None:
        fields["al_material"] = values["al"]
    if values.get("au") is not None:
        fields["au_material"] = values["au"]
    if values.get("out") is not None:
        fields["out"] = Path(values["out"])
    threads = values.get("threads")
    fields["threads"] = Config.DEFAULT_THREADS if threads is None else threads
    for key in ("material", "coating", "grid", "tol", "format"):
        if values.get(key) is not None:
            fields[key] = values[key]
    try:
        return RunConfig(**fields)
    except ValidationError as e:
        error = e.errors()[0]
        location = ".".join(str(part) for part in error["loc"])
        raise ConfigError(f"{location + ': ' if location else ''}{error['msg']}")


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        out.write_text(text, encoding="utf-8")
        logger.info(f"Wrote {out}")


def _frame_text(frame: pd.DataFrame, fmt: OutputFormat) -> str:
    if fmt == OutputFormat.JSON:
        return frame.to_json(orient="records", indent=2)
    return frame.to_csv(index=False, lineterminator="\n")


def _geometry(config: RunConfig, a_nm: float) -> Geometry:
    if config.geometry == GeometryKind.SPHERE_PLATE:
        radius = config.sphere_radius_um or Config.DEFAULT_SPHERE_RADIUS_UM
        return Geometry(kind=config.geometry, separation_a_nm=a_nm, sphere_radius_um=radius)
    return Geometry(kind=config.geometry, separation_a_nm=a_nm)


def _stack(config: RunConfig) -> MaterialStack:
    substrate = parse_material_spec(config.material)
    if config.coating is None:
        return MaterialStack(substrate=substrate)
    return MaterialStack(substrate=substrate, coating=parse_material_spec(config.coating),
                         thickness_d_nm=config.thickness_d_nm)


def run_eps(config: RunConfig) -> int:
    material = parse_material_spec(config.material)
    if config.xi_ev is not None:
        frame = pd.DataFrame({"xi_eV": [config.xi_ev], "eps": [material(config.xi_ev)]})
    else:
        frame = material.cache_frame()
    _emit(_frame_text(frame, config.format), config.out)
    return EXIT_OK


def run_force(config: RunConfig) -> int:
    calculator = CasimirCalculator()
    geom = _geometry(config, config.a_nm)
    status = EXIT_OK
    try:
        result = calculator.force(_stack(config), geom, config.tol)
    except NumericalError as e:
        if e.partial is None:
            raise
        logger.warning(f"force did not converge, reporting best estimate: {e}")
        result, status = e.partial, EXIT_NUMERICAL
    if config.format == OutputFormat.JSON:
        text = result.model_dump_json(indent=2)
    else:
        text = pd.DataFrame([{
            "geometry": geom.kind.value, "a_nm": geom.separation_a_nm, "force": result.value,
            "ideal_force": result.ideal_value, "correction_factor": result.correction_factor,
            "quad_error": result.quad_error, "converged": result.converged,
        }]).to_csv(index=False, lineterminator="\n")
    _emit(text, config.out)
    for warning in result.warnings:
        sys.stderr.write(f"warning: {warning}\n")
    return status


def _run_scan(config: RunConfig, geom_kind: GeometryKind, grid: List[float]) -> ScanResult:
    geom = _geometry(config.model_copy(update={"geometry": geom_kind}), grid[0])
    service = ScanService(CasimirCalculator(), threads=config.threads)
    return asyncio.run(service.scan(_stack(config), geom, grid, config.tol))


def _scan_status(result: ScanResult) -> int:
    for warning in result.warnings:
        sys.stderr.write(f"warning: {warning}\n")
    unconverged = [point.a_nm for point in result.points if not point.converged]
    if unconverged:
        sys.stderr.write(f"warning: {len(unconverged)} point(s) did not converge: {unconverged}\n")
    if not any(point.converged for point in result.points):
        return EXIT_NUMERICAL
    return EXIT_OK


def run_scan(config: RunConfig) -> int:
    grid = parse_grid(config.grid) if config.grid else default_vdw_grid()
    result = _run_scan(config, config.geometry, grid)
    buffer = io.StringIO()
    if config.format == OutputFormat.JSON:
        scan_to_json(result, buffer)
    else:
        scan_to_csv(result, buffer)
    _emit(buffer.getvalue(), config.out)
    return _scan_status(result)


def run_hamaker(config: RunConfig) -> int:
    status = EXIT_OK
    if config.from_csv:
        scans = [scan_from_csv(path, sphere_radius_um=config.sphere_radius_um, default_geometry=config.geometry)
                 for path in config.from_csv]
    else:
        lo, hi = config.fit_window_nm
        grid = parse_grid(config.grid) if config.grid else [a for a in default_vdw_grid() if lo <= a <= hi]
        scans = [_run_scan(config, kind, grid) for kind in GeometryKind]
        status = max(_scan_status(result) for result in scans)
    fits = [fit_hamaker(result, config.fit_window_nm) for result in scans]

    rows = [{"geometry": fit.geometry.value, "H": fit.H, "H_sigma": fit.H_sigma, "n": fit.n,
             "n_sigma": fit.n_sigma, "n_points": fit.n_points} for fit in fits]
    combined = None
    if len(fits) >= 2:
        combined = combine_hamaker(fits)
        rows.append({"geometry": "combined", "H": combined.H_rounded, "H_sigma": combined.half_width_rounded,
                     "n": None, "n_sigma": None, "n_points": sum(fit.n_points for fit in fits)})
        for warning in combined.warnings:
            sys.stderr.write(f"warning: {warning}\n")

    if config.format == OutputFormat.JSON:
        text = json.dumps({
            "fits": [fit.model_dump(mode="json") for fit in fits],
            "combined": combined.model_dump(mode="json") if combined else None,
        }, indent=2)
    else:
        text = pd.DataFrame(rows).to_csv(index=False, lineterminator="\n")
    _emit(text, config.out)
    return status


def run_table1(config: RunConfig) -> int:
    materials = {"al": parse_material_spec(config.al_material), "au": parse_material_spec(config.au_material)}
    service = ScanService(CasimirCalculator(), threads=config.threads)
    entries = asyncio.run(service.table1(materials, config.tol))
    _emit(_frame_text(table1_frame(entries), config.format), config.out)
    if not any(entry.converged for entry in entries):
        return EXIT_NUMERICAL
    return EXIT_OK


HANDLERS = {
    Command.EPS: run_eps,
    Command.FORCE: run_force,
    Command.SCAN: run_scan,
    Command.HAMAKER: run_hamaker,
    Command.TABLE1: run_table1,
}


def run(config: RunConfig) -> int:
    return HANDLERS[config.command](config)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif args.quiet:
        logging.getLogger().setLevel(logging.ERROR)

    try:
        config = build_run_config(args.command, _merged(args))
        logger.info(f"Running '{config.command.value}' ({config.geometry.value}, material={config.material}).")
        return run(config)
    except (ConfigError, DomainError) as e:
        logger.error(f"Configuration error: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_CONFIG
    except (OpticalDataError, FitError) as e:
        logger.error(f"Data error: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_DATA
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_NUMERICAL
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        sys.stderr.write(f"error: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
