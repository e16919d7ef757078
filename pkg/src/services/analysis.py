"""Separation scans, van der Waals asymptotics and Hamaker constant extraction."""
import asyncio
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import linregress

from config import Config
from src.core.exceptions import ConfigError, DomainError, FitError, NumericalError
from src.core.models import (
    CombinedHamaker, DrudeParams, DrudeSensitivity, Geometry, GeometryKind, HamakerFit,
    ReferenceCell, ScanPoint, ScanResult, Table1Entry,
)
from src.core.units import NM, UM, parse_length_nm
from src.services.lifshitz_core import CasimirCalculator, MaterialStack, default_calculator
from src.services.perturbation import perturbative_factor
from src.services.permittivity import PermittivityFunction

logger = logging.getLogger(__name__)

SCAN_COLUMNS = ("a_nm", "force", "correction_factor", "quad_error")

# Published correction factors F/F0: (geometry, metal, a in um, computed, perturbation, earlier computation)
TABLE1_REFERENCE: Tuple[ReferenceCell, ...] = tuple(
    ReferenceCell(geometry=g, metal=m, a_um=a, reference=ref, perturbation=pert, literature=lit)
    for g, m, a, ref, pert, lit in (
        (GeometryKind.PLATE_PLATE, "al", 0.1, 0.55, 0.56, 0.55),
        (GeometryKind.SPHERE_PLATE, "al", 0.1, 0.62, 0.61, 0.63),
        (GeometryKind.PLATE_PLATE, "au", 0.1, 0.49, 0.62, 0.48),
        (GeometryKind.SPHERE_PLATE, "au", 0.1, 0.56, 0.60, 0.55),
        (GeometryKind.PLATE_PLATE, "al", 0.5, 0.84, 0.84, 0.85),
        (GeometryKind.SPHERE_PLATE, "al", 0.5, 0.87, 0.88, 0.88),
        (GeometryKind.PLATE_PLATE, "au", 0.5, 0.81, 0.81, 0.81),
        (GeometryKind.SPHERE_PLATE, "au", 0.5, 0.85, 0.85, 0.85),
        (GeometryKind.SPHERE_PLATE, "au", 0.6, 0.87, 0.87, 0.87),
        (GeometryKind.PLATE_PLATE, "al", 3.0, 0.96, 0.97, 0.96),
        (GeometryKind.SPHERE_PLATE, "al", 3.0, 0.97, 0.98, 0.97),
        (GeometryKind.PLATE_PLATE, "au", 3.0, 0.95, 0.96, 0.96),
        (GeometryKind.SPHERE_PLATE, "au", 3.0, 0.96, 0.97, 0.97),
    )
)

# Au coating on Al at a = 300 nm: coating thickness (nm, None = bare substrate, inf = pure Au) -> F/F0
LAYERED_REFERENCE: Dict[GeometryKind, Tuple[Tuple[Optional[float], float], ...]] = {
    GeometryKind.PLATE_PLATE: ((None, 0.773), (20.0, 0.727), (30.0, 0.723), (math.inf, 0.720)),
    GeometryKind.SPHERE_PLATE: ((None, 0.817), (20.0, 0.780), (30.0, 0.776), (math.inf, 0.774)),
}
LAYERED_REFERENCE_A_NM = 300.0

# Hamaker constants (J) with standard deviations fitted on [0.5, 2] nm
HAMAKER_REFERENCE: Dict[Tuple[GeometryKind, str], Tuple[float, float, float, float]] = {
    (GeometryKind.PLATE_PLATE, "al"): (3.67e-19, 0.02e-19, 3.02, 0.01),
    (GeometryKind.PLATE_PLATE, "au"): (4.49e-19, 0.07e-19, 3.04, 0.02),
    (GeometryKind.SPHERE_PLATE, "al"): (3.60e-19, 0.06e-19, 2.04, 0.02),
    (GeometryKind.SPHERE_PLATE, "au"): (4.31e-19, 0.14e-19, 2.08, 0.03),
}

ALTERNATIVE_AL_DRUDE = DrudeParams(omega_p=11.5, gamma=0.05)


# -- grids --------------------------------------------------------------

def _steps(lo: float, hi: float, step: float) -> List[float]:
    count = int(round((hi - lo) / step))
    return [round(lo + i * step, 10) for i in range(count + 1)]


def default_vdw_grid() -> List[float]:
    """0.1 nm steps on [0.5, 2], 0.2 on [2, 4], 1 on [4, 10] and 5 on [10, 100] nm."""
    points = _steps(0.5, 2.0, 0.1) + _steps(2.0, 4.0, 0.2) + _steps(4.0, 10.0, 1.0) + _steps(10.0, 100.0, 5.0)
    return sorted(set(points))


def default_casimir_grid() -> List[float]:
    """100 nm to 1 um in 10 nm steps."""
    return _steps(100.0, 1000.0, 10.0)


NAMED_GRIDS = {
    "paper-vdw": default_vdw_grid,
    "paper-casimir": default_casimir_grid,
    "vdw": default_vdw_grid,
    "casimir": default_casimir_grid,
}


def parse_grid(spec: str) -> List[float]:
    """A name from NAMED_GRIDS, ``100nm,200nm``, ``lin:<lo>:<hi>:<step>`` or ``log:<lo>:<hi>:<count>``."""
    text = spec.strip()
    if text in NAMED_GRIDS:
        return NAMED_GRIDS[text]()
    if text.startswith("lin:") or text.startswith("log:"):
        parts = text.split(":")
        if len(parts) != 4:
            raise ConfigError(f"grid '{spec}': expected {parts[0]}:<lo>:<hi>:<{'step' if parts[0] == 'lin' else 'count'}>")
        lo, hi = parse_length_nm(parts[1]), parse_length_nm(parts[2])
        if not 0 < lo < hi:
            raise ConfigError(f"grid '{spec}': need 0 < lo < hi")
        if parts[0] == "lin":
            step = parse_length_nm(parts[3])
            if step <= 0:
                raise ConfigError(f"grid '{spec}': step must be positive")
            return _steps(lo, hi, step)
        try:
            count = int(parts[3])
        except ValueError:
            raise ConfigError(f"grid '{spec}': count must be an integer")
        if count < 2:
            raise ConfigError(f"grid '{spec}': need at least 2 points")
        return [float(a) for a in np.geomspace(lo, hi, count)]
    return [parse_length_nm(item) for item in text.split(",") if item.strip()]


# -- scans ----------------------------------------------------------------

class ScanService:
    """Evaluates forces over a separation grid on a thread pool; output order follows the grid."""

    def __init__(self, calculator: Optional[CasimirCalculator] = None, threads: int = Config.DEFAULT_THREADS):
        if threads < 1:
            raise ConfigError(f"threads must be >= 1, got {threads}")
        self.calculator = calculator or default_calculator()
        self.threads = threads
        logger.info(f"ScanService initialized: threads={threads}.")

    def _point(self, stack: MaterialStack, geom: Geometry, tol: float) -> Tuple[Optional[ScanPoint], Optional[str]]:
        try:
            result = self.calculator.force(stack, geom, tol)
        except NumericalError as e:
            if e.partial is None:
                logger.error(f"ScanService: no estimate at a={geom.separation_a_nm} nm: {e}")
                return None, f"a={geom.separation_a_nm:g} nm dropped: {e}"
            logger.warning(f"ScanService: a={geom.separation_a_nm} nm did not converge, keeping best estimate")
            result = e.partial
        point = ScanPoint(a_nm=geom.separation_a_nm, force=result.value, correction_factor=result.correction_factor,
                          quad_error=result.quad_error, converged=result.converged, warnings=result.warnings)
        return point, None

    @staticmethod
    def _validated_grid(grid: Iterable[float]) -> List[float]:
        values = [float(a) for a in grid]
        if not values:
            raise ConfigError("empty separation grid")
        if len(set(values)) != len(values):
            raise ConfigError("separation grid contains duplicate values")
        too_close = [a for a in values if a < Config.MIN_VDW_SEPARATION_NM]
        if too_close:
            raise DomainError(f"separation {min(too_close)} nm is below {Config.MIN_VDW_SEPARATION_NM} nm, "
                              f"where repulsive exchange forces dominate")
        return sorted(values)

    async def scan(self, stack: MaterialStack, geom: Geometry, grid: Iterable[float],
                   tol: float = Config.DEFAULT_TOL) -> ScanResult:
        values = self._validated_grid(grid)
        logger.info(f"ScanService: scanning {len(values)} separations ({geom.kind.value}, {stack.describe()}) "
                    f"on {self.threads} thread(s).")
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            outcomes = await asyncio.gather(*(
                loop.run_in_executor(executor, partial(self._point, stack, geom.at(a), tol)) for a in values
            ))
        points = [point for point, _ in outcomes if point is not None]
        dropped = [message for _, message in outcomes if message is not None]
        failed = sum(1 for point in points if not point.converged)
        logger.info(f"ScanService: scan finished, {len(points)} points, {failed} unconverged, {len(dropped)} dropped.")
        return ScanResult(geometry=geom.kind, sphere_radius_um=geom.sphere_radius_um, stack=stack.describe(),
                          points=points, warnings=dropped)

    async def table1(self, materials: Dict[str, PermittivityFunction], tol: float = Config.DEFAULT_TOL,
                     radius_um: float = Config.DEFAULT_SPHERE_RADIUS_UM) -> List[Table1Entry]:
        """Correction factors for every reference cell whose metal is in ``materials``."""
        cells = [cell for cell in TABLE1_REFERENCE if cell.metal in materials]
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            outcomes = await asyncio.gather(*(
                loop.run_in_executor(executor, partial(self._cell, cell, materials[cell.metal], tol, radius_um))
                for cell in cells
            ))
        return list(outcomes)

    def _cell(self, cell: ReferenceCell, material: PermittivityFunction, tol: float, radius_um: float) -> Table1Entry:
        a_nm = cell.a_um * 1e3
        geom = (Geometry(kind=cell.geometry, separation_a_nm=a_nm) if cell.geometry == GeometryKind.PLATE_PLATE
                else Geometry(kind=cell.geometry, separation_a_nm=a_nm, sphere_radius_um=radius_um))
        point, message = self._point(MaterialStack(substrate=material), geom, tol)
        drude = material.drude_params
        series = perturbative_factor(cell.geometry, drude.penetration_depth_nm, a_nm) if drude is not None else None
        return Table1Entry(
            geometry=cell.geometry, metal=cell.metal, a_um=cell.a_um,
            computed=None if point is None else point.correction_factor,
            reference=cell.reference, perturbation=series, perturbation_reference=cell.perturbation,
            converged=point is not None and point.converged,
            warnings=[message] if point is None else point.warnings,
        )


def scan(stack: MaterialStack, geom: Geometry, grid: Iterable[float], tol: float = Config.DEFAULT_TOL,
         threads: int = 1, calculator: Optional[CasimirCalculator] = None) -> ScanResult:
    """Blocking wrapper around ``ScanService.scan``."""
    return asyncio.run(ScanService(calculator, threads).scan(stack, geom, grid, tol))


def table1(materials: Dict[str, PermittivityFunction], tol: float = Config.DEFAULT_TOL, threads: int = 1,
           calculator: Optional[CasimirCalculator] = None) -> List[Table1Entry]:
    return asyncio.run(ScanService(calculator, threads).table1(materials, tol))


def table1_frame(entries: Sequence[Table1Entry]) -> pd.DataFrame:
    return pd.DataFrame([
        {"geometry": e.geometry.value, "metal": e.metal, "a_um": e.a_um, "computed": e.computed,
         "reference": e.reference, "perturbation": e.perturbation, "perturbation_reference": e.perturbation_reference}
        for e in entries
    ])


# -- van der Waals fits -----------------------------------------------------

def _nominal_exponent(kind: GeometryKind) -> float:
    return 3.0 if kind == GeometryKind.PLATE_PLATE else 2.0


def vdw_asymptote(H: float, geom: Geometry, a: Optional[float] = None) -> float:
    """Non-retarded force -H/(6 pi a^3) (N/m^2) or -H R/(6 a^2) (N); ``a`` in nm defaults to the geometry's."""
    if H < 0:
        raise DomainError(f"Hamaker constant must be non-negative, got {H}")
    a_m = (geom.separation_a_nm if a is None else a) * NM
    if not a_m > 0:
        raise DomainError(f"separation must be positive, got {a_m / NM} nm")
    if geom.kind == GeometryKind.PLATE_PLATE:
        return -H / (6.0 * math.pi * a_m ** 3)
    return -H * geom.radius_m / (6.0 * a_m ** 2)


def hamaker_from_force(kind: GeometryKind, a_nm: np.ndarray, force: np.ndarray,
                       sphere_radius_um: Optional[float] = None) -> np.ndarray:
    """Invert the non-retarded force law point by point."""
    a_m = np.asarray(a_nm, dtype=float) * NM
    force = np.asarray(force, dtype=float)
    if kind == GeometryKind.PLATE_PLATE:
        return -6.0 * math.pi * a_m ** 3 * force
    if sphere_radius_um is None:
        raise FitError("sphere-plate data needs the sphere radius")
    return -6.0 * a_m ** 2 * force / (sphere_radius_um * UM)


def _window(result: ScanResult, window: Tuple[float, float]) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = window
    if lo >= hi:
        raise FitError(f"fit window ({lo}, {hi}) is empty")
    a = result.separations
    if a.size == 0 or lo < a[0] * (1 - 1e-12) or hi > a[-1] * (1 + 1e-12):
        span = "empty scan" if a.size == 0 else f"[{a[0]}, {a[-1]}] nm"
        raise FitError(f"fit window [{lo}, {hi}] nm lies outside the scanned range {span}")
    inside = (a >= lo * (1 - 1e-12)) & (a <= hi * (1 + 1e-12))
    if inside.sum() < 3:
        raise FitError(f"need at least 3 points inside [{lo}, {hi}] nm, got {int(inside.sum())}")
    return a[inside], result.forces[inside]


def _pair_slopes(a: np.ndarray, force: np.ndarray) -> np.ndarray:
    magnitude = np.abs(force)
    if np.any(magnitude == 0) or np.any(np.diff(magnitude) >= 0):
        raise FitError("force magnitude must decrease strictly with separation inside the fit window")
    return np.abs(np.diff(np.log(magnitude)) / np.diff(np.log(a)))


def fit_hamaker(result: ScanResult, window: Tuple[float, float] = Config.DEFAULT_FIT_WINDOW_NM) -> HamakerFit:
    """Power index from adjacent-pair log-log slopes; H as the mean of the pointwise inversions."""
    a, force = _window(result, window)
    slopes = _pair_slopes(a, force)
    values = hamaker_from_force(result.geometry, a, force, result.sphere_radius_um)
    if np.any(values <= 0):
        raise FitError("forces inside the fit window are not attractive")
    fit = HamakerFit(
        geometry=result.geometry, H=float(np.mean(values)), H_sigma=float(np.std(values, ddof=1)),
        n=float(np.mean(slopes)), n_sigma=float(np.std(slopes, ddof=1)) if slopes.size > 1 else 0.0,
        fit_window=(float(window[0]), float(window[1])), n_points=int(a.size),
    )
    logger.info(f"Hamaker fit ({result.geometry.value}, {result.stack}) on {fit.fit_window} nm: "
                f"H=({fit.H:.4e} +/- {fit.H_sigma:.2e}) J, n={fit.n:.3f} +/- {fit.n_sigma:.3f}")
    return fit


def least_squares_exponent(result: ScanResult, window: Tuple[float, float] = Config.DEFAULT_FIT_WINDOW_NM
                           ) -> Tuple[float, float]:
    """(n, standard error) from a straight-line fit of ln|F| against ln a."""
    a, force = _window(result, window)
    _pair_slopes(a, force)
    line = linregress(np.log(a), np.log(np.abs(force)))
    return float(-line.slope), float(line.stderr)


def detect_asymptotic_window(result: ScanResult, max_deviation: float = 0.02) -> Optional[Tuple[float, float]]:
    """Longest run of adjacent pairs whose slope stays within ``max_deviation`` of the nominal exponent."""
    a, force = result.separations, result.forces
    if a.size < 3:
        return None
    magnitude = np.abs(force)
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = np.abs(np.diff(np.log(magnitude)) / np.diff(np.log(a)))
    nominal = _nominal_exponent(result.geometry)
    good = np.isfinite(slopes) & (np.abs(slopes - nominal) <= max_deviation * nominal) & (np.diff(magnitude) < 0)

    best, start = (0, 0), None
    for i, ok in enumerate(list(good) + [False]):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    if best[1] - best[0] < 2:
        return None
    return float(a[best[0]]), float(a[best[1]])


def _round_significant(value: float, digits: int) -> Tuple[float, float]:
    """Round to ``digits`` significant figures; also return the decimal unit of the last kept digit."""
    if value == 0:
        return 0.0, 0.0
    unit = 10.0 ** (math.floor(math.log10(abs(value))) - digits + 1)
    return round(value / unit) * unit, unit


def combine_hamaker(fits: Sequence[HamakerFit]) -> CombinedHamaker:
    """Interval covering every [H - sigma, H + sigma]; the rounded form keeps two significant figures."""
    if len(fits) < 2:
        raise FitError(f"combining needs at least 2 fits, got {len(fits)}")
    lows = [fit.H - fit.H_sigma for fit in fits]
    highs = [fit.H + fit.H_sigma for fit in fits]
    lo, hi = min(lows), max(highs)
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)

    warnings = []
    if max(lows) > min(highs):
        warnings.append("fit intervals are disjoint; the envelope covers a gap between them")
        logger.warning(f"combine_hamaker: disjoint intervals {list(zip(lows, highs))}")
    center_rounded, unit = _round_significant(center, 2)
    half_rounded = math.ceil(half / unit - 1e-9) * unit if unit else half
    return CombinedHamaker(H=center, half_width=half, H_rounded=center_rounded,
                           half_width_rounded=half_rounded, warnings=warnings)


# -- experiments ------------------------------------------------------------

def drude_sensitivity(geom: Geometry, base: DrudeParams, alternative: DrudeParams = ALTERNATIVE_AL_DRUDE,
                      tol: float = Config.DEFAULT_TOL, calculator: Optional[CasimirCalculator] = None
                      ) -> DrudeSensitivity:
    """Correction factor under two Drude parameter sets and their relative difference."""
    calculator = calculator or default_calculator()
    factors = [
        calculator.force(MaterialStack(substrate=PermittivityFunction.drude(params)), geom, tol).correction_factor
        for params in (base, alternative)
    ]
    return DrudeSensitivity(geometry=geom.kind, a_nm=geom.separation_a_nm, base=base, alternative=alternative,
                            base_factor=factors[0], alternative_factor=factors[1],
                            relative_change=(factors[1] - factors[0]) / factors[0])


# -- serialization ----------------------------------------------------------

def scan_frame(result: ScanResult) -> pd.DataFrame:
    return pd.DataFrame([{column: getattr(point, column) for column in SCAN_COLUMNS} for point in result.points],
                        columns=list(SCAN_COLUMNS))


def _metadata(result: ScanResult) -> str:
    fields = {"geometry": result.geometry.value, "stack": result.stack}
    if result.sphere_radius_um is not None:
        fields["sphere_radius_um"] = repr(result.sphere_radius_um)
    return "".join(f"# {key}={value}\n" for key, value in fields.items())


def scan_to_csv(result: ScanResult, destination: Union[str, Path, io.TextIOBase]) -> None:
    """Write ``a_nm,force,correction_factor,quad_error`` preceded by ``# key=value`` metadata lines."""
    text = _metadata(result) + scan_frame(result).to_csv(index=False, lineterminator="\n")
    if isinstance(destination, (str, Path)):
        Path(destination).write_text(text, encoding="utf-8")
    else:
        destination.write(text)


def scan_to_json(result: ScanResult, destination: Union[str, Path, io.TextIOBase]) -> None:
    text = result.model_dump_json(indent=2)
    if isinstance(destination, (str, Path)):
        Path(destination).write_text(text, encoding="utf-8")
    else:
        destination.write(text)


def scan_from_csv(path: Union[str, Path], geometry: Optional[GeometryKind] = None,
                  sphere_radius_um: Optional[float] = None,
                  default_geometry: GeometryKind = GeometryKind.PLATE_PLATE) -> ScanResult:
    """Read a scan written by ``scan_to_csv``; explicit arguments override the metadata lines,
    ``default_geometry`` applies when the file carries none."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scan file not found: {path}")
    text = path.read_text(encoding="utf-8")
    metadata = {}
    for line in text.splitlines():
        if line.startswith("#") and "=" in line:
            key, _, value = line[1:].strip().partition("=")
            metadata[key.strip()] = value.strip()
    frame = pd.read_csv(io.StringIO(text), comment="#", float_precision="round_trip")
    missing = [column for column in SCAN_COLUMNS if column not in frame.columns]
    if missing:
        raise ConfigError(f"{path}: missing columns {missing}")

    try:
        kind = geometry or GeometryKind(metadata.get("geometry", default_geometry.value))
    except ValueError:
        raise ConfigError(f"{path}: unknown geometry '{metadata.get('geometry')}'")
    radius = sphere_radius_um
    if radius is None and "sphere_radius_um" in metadata:
        radius = float(metadata["sphere_radius_um"])
    if kind == GeometryKind.PLATE_PLATE:
        radius = None
    elif radius is None:
        raise ConfigError(f"{path}: sphere-plate data needs a sphere radius (--R)")
    points = [ScanPoint(a_nm=row.a_nm, force=row.force, correction_factor=row.correction_factor,
                        quad_error=row.quad_error) for row in frame.itertuples()]
    return ScanResult(geometry=kind, sphere_radius_um=radius, stack=metadata.get("stack", path.stem), points=points)


def scan_from_json(path: Union[str, Path]) -> ScanResult:
    return ScanResult.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
