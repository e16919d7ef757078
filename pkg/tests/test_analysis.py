import io
import math
from unittest.mock import MagicMock

import numpy as np
import pytest

from src.core.exceptions import ConfigError, DomainError, FitError, NumericalError
from src.core.models import DrudeParams, ForceResult, Geometry, GeometryKind, HamakerFit, ScanPoint, ScanResult
from src.services.analysis import (
    ALTERNATIVE_AL_DRUDE, HAMAKER_REFERENCE, TABLE1_REFERENCE, ScanService, combine_hamaker,
    detect_asymptotic_window, drude_sensitivity, fit_hamaker, hamaker_from_force, least_squares_exponent,
    default_casimir_grid, default_vdw_grid, parse_grid, scan, scan_from_csv, scan_from_json, scan_to_csv,
    scan_to_json, table1, table1_frame, vdw_asymptote,
)
from src.services.lifshitz_core import CasimirCalculator, MaterialStack, ideal_force
from src.services.perturbation import perturbative_factor
from src.services.permittivity import PermittivityFunction

H_AL = 3.67e-19
RADIUS_UM = 100.0


def synthetic_scan(kind, law=lambda a: 1.0, grid=None, H=H_AL):
    """Non-retarded force over the grid, multiplied by ``law(a)``."""
    radius = RADIUS_UM if kind == GeometryKind.SPHERE_PLATE else None
    geom = Geometry(kind=kind, separation_a_nm=1.0, sphere_radius_um=radius)
    points = [ScanPoint(a_nm=a, force=vdw_asymptote(H, geom, a) * law(a), correction_factor=1.0, quad_error=0.0)
              for a in (grid or default_vdw_grid())]
    return ScanResult(geometry=kind, sphere_radius_um=radius, stack="synthetic", points=points)


def fit(kind, H, sigma):
    return HamakerFit(geometry=kind, H=H, H_sigma=sigma, n=3.0, n_sigma=0.0, fit_window=(0.5, 2.0), n_points=16)


@pytest.fixture(scope="module")
def calculator():
    return CasimirCalculator(check_window=False)


@pytest.fixture(scope="module")
def ideal():
    return MaterialStack(substrate=PermittivityFunction.ideal())


def converged(geom, factor=0.9):
    ideal_value = ideal_force(geom)
    return ForceResult(geometry=geom, value=factor * ideal_value, ideal_value=ideal_value, correction_factor=factor,
                       quad_error=1e-6)


# -- grids ------------------------------------------------------------------

def test_named_grids():
    grid = default_vdw_grid()
    assert len(grid) == 50
    assert grid[0] == 0.5 and grid[-1] == 100.0
    assert grid[:3] == [0.5, 0.6, 0.7]
    assert grid == sorted(set(grid))
    casimir = default_casimir_grid()
    assert len(casimir) == 91
    assert casimir[0] == 100.0 and casimir[-1] == 1000.0


@pytest.mark.parametrize("name, builder", [
    ("paper-vdw", default_vdw_grid), ("vdw", default_vdw_grid),
    ("paper-casimir", default_casimir_grid), ("casimir", default_casimir_grid),
])
def test_parse_grid_names(name, builder):
    assert parse_grid(f" {name} ") == builder()


@pytest.mark.parametrize("spec, expected", [
    ("100nm,0.2um", [100.0, 200.0]),
    ("lin:1nm:2nm:0.5nm", [1.0, 1.5, 2.0]),
    ("log:1nm:100nm:3", [1.0, 10.0, 100.0]),
])
def test_parse_grid(spec, expected):
    assert parse_grid(spec) == pytest.approx(expected)


@pytest.mark.parametrize("spec", ["lin:2nm:1nm:0.1nm", "lin:1nm:2nm", "log:1nm:2nm:x", "log:1nm:2nm:1", "100"])
def test_parse_grid_rejects(spec):
    with pytest.raises(ConfigError):
        parse_grid(spec)


# -- scans ------------------------------------------------------------------

def test_ideal_scan_follows_inverse_fourth_power(calculator, ideal):
    result = scan(ideal, Geometry(kind=GeometryKind.PLATE_PLATE, separation_a_nm=1000.0), [2000.0, 1000.0],
                  calculator=calculator)
    assert result.separations.tolist() == [1000.0, 2000.0]
    assert result.forces[0] / result.forces[1] == pytest.approx(16.0, rel=1e-4)
    assert all(point.converged for point in result.points)


def test_scan_matches_direct_evaluation_for_any_thread_count(calculator, ideal):
    geom = Geometry(kind=GeometryKind.SPHERE_PLATE, separation_a_nm=100.0, sphere_radius_um=RADIUS_UM)
    grid = [300.0, 100.0, 150.0, 200.0]
    single = scan(ideal, geom, grid, threads=1, calculator=calculator)
    pooled = scan(ideal, geom, grid, threads=3, calculator=calculator)
    assert single == pooled
    direct = calculator.force(ideal, geom.at(150.0))
    assert single.points[1].force == direct.value
    assert single.stack == "ideal"
    assert single.sphere_radius_um == RADIUS_UM


@pytest.mark.parametrize("grid, error", [
    ([], ConfigError),
    ([1.0, 2.0, 1.0], ConfigError),
    ([0.4, 1.0], DomainError),
])
def test_scan_rejects_bad_grids(calculator, ideal, grid, error):
    with pytest.raises(error):
        scan(ideal, Geometry(kind=GeometryKind.PLATE_PLATE, separation_a_nm=1.0), grid, calculator=calculator)


def test_scan_keeps_partial_results_and_drops_hopeless_points(ideal):
    def force(stack, geom, tol):
        a = geom.separation_a_nm
        if a == 200.0:
            raise NumericalError("no estimate")
        if a == 300.0:
            partial = converged(geom, 0.5).model_copy(update={"converged": False, "warnings": ["budget spent"]})
            raise NumericalError("budget spent", best_estimate=partial.value, partial=partial)
        return converged(geom)

    calculator = MagicMock()
    calculator.force.side_effect = force
    result = scan(ideal, Geometry(kind=GeometryKind.PLATE_PLATE, separation_a_nm=100.0), [100.0, 200.0, 300.0],
                  threads=2, calculator=calculator)
    assert result.separations.tolist() == [100.0, 300.0]
    assert [point.converged for point in result.points] == [True, False]
    assert result.points[1].correction_factor == 0.5
    assert len(result.warnings) == 1 and "200" in result.warnings[0]
    assert calculator.force.call_count == 3


@pytest.mark.asyncio
async def test_scan_service_is_awaitable(ideal):
    calculator = MagicMock()
    calculator.force.side_effect = lambda stack, geom, tol: converged(geom)
    service = ScanService(calculator, threads=4)
    result = await service.scan(ideal, Geometry(kind=GeometryKind.PLATE_PLATE, separation_a_nm=1.0),
                                [5.0, 1.0, 3.0], tol=1e-3)
    assert result.separations.tolist() == [1.0, 3.0, 5.0]
    for call in calculator.force.call_args_list:
        assert call.args[2] == 1e-3


def test_scan_service_needs_a_thread():
    with pytest.raises(ConfigError):
        ScanService(MagicMock(), threads=0)


def test_table1_with_mocked_calculator():
    calculator = MagicMock()
    calculator.force.side_effect = lambda stack, geom, tol: converged(geom, 0.8)
    al = DrudeParams(omega_p=12.5, gamma=0.063)
    entries = table1({"al": PermittivityFunction.drude(al), "au": PermittivityFunction.ideal()}, calculator=calculator)
    assert len(entries) == len(TABLE1_REFERENCE)
    for entry, cell in zip(entries, TABLE1_REFERENCE):
        assert (entry.geometry, entry.metal, entry.a_um) == (cell.geometry, cell.metal, cell.a_um)
        assert entry.computed == 0.8
        assert entry.perturbation_reference == cell.perturbation
        if entry.metal == "al":
            expected = perturbative_factor(cell.geometry, al.penetration_depth_nm, cell.a_um * 1e3)
            assert entry.perturbation == pytest.approx(expected)
        else:
            assert entry.perturbation is None

    frame = table1_frame(entries)
    assert list(frame.columns) == ["geometry", "metal", "a_um", "computed", "reference", "perturbation",
                                   "perturbation_reference"]
    assert len(frame) == 13


# -- van der Waals fits -------------------------------------------------------

def test_vdw_asymptote():
    plate = Geometry(kind=GeometryKind.PLATE_PLATE, separation_a_nm=1.0)
    assert vdw_asymptote(H_AL, plate) == pytest.approx(-1.947e7, rel=1e-3)
    assert vdw_asymptote(H_AL, plate, 2.0) == pytest.approx(vdw_asymptote(H_AL, plate) / 8.0)
    ball = Geometry(kind=GeometryKind.SPHERE_PLATE, separation_a_nm=1.0, sphere_radius_um=RADIUS_UM)
    assert vdw_asymptote(H_AL, ball) == pytest.approx(-H_AL * 1e-4 / (6.0 * 1e-18))
    with pytest.raises(DomainError):
        vdw_asymptote(-1.0, plate)


@pytest.mark.parametrize("kind, exponent", [(GeometryKind.PLATE_PLATE, 3.0), (GeometryKind.SPHERE_PLATE, 2.0)])
def test_fit_recovers_power_law(kind, exponent):
    result = fit_hamaker(synthetic_scan(kind))
    assert result.H == pytest.approx(H_AL, rel=1e-10)
    assert result.H_sigma <= 1e-10 * H_AL
    assert result.n == pytest.approx(exponent, rel=1e-10)
    assert result.n_points == 16
    n, stderr = least_squares_exponent(synthetic_scan(kind))
    assert n == pytest.approx(exponent, rel=1e-10)


def test_fit_spread_reflects_retardation():
    result = fit_hamaker(synthetic_scan(GeometryKind.PLATE_PLATE, law=lambda a: 1.0 / (1.0 + a / 20.0)))
    assert result.n > 3.0
    assert result.H_sigma > 0
    assert result.n_sigma > 0


def test_hamaker_inversion_needs_radius():
    with pytest.raises(FitError):
        hamaker_from_force(GeometryKind.SPHERE_PLATE, np.array([1.0]), np.array([-1.0]))


@pytest.mark.parametrize("window", [(0.3, 2.0), (50.0, 200.0), (2.0, 0.5), (0.5, 0.65)])
def test_fit_window_checks(window):
    with pytest.raises(FitError):
        fit_hamaker(synthetic_scan(GeometryKind.PLATE_PLATE), window)


def test_fit_rejects_non_monotone_forces():
    bumpy = synthetic_scan(GeometryKind.PLATE_PLATE, law=lambda a: 10.0 if a == 1.0 else 1.0)
    with pytest.raises(FitError):
        fit_hamaker(bumpy)


def test_detect_asymptotic_window():
    assert detect_asymptotic_window(synthetic_scan(GeometryKind.PLATE_PLATE)) == (0.5, 100.0)
    window = detect_asymptotic_window(synthetic_scan(GeometryKind.PLATE_PLATE, law=lambda a: 1.0 / (1.0 + a / 20.0)))
    assert window[0] == 0.5
    assert 1.0 <= window[1] <= 1.5
    assert detect_asymptotic_window(synthetic_scan(GeometryKind.SPHERE_PLATE, grid=[1.0, 2.0])) is None


@pytest.mark.parametrize("metal, center, half", [("al", 3.6e-19, 0.1e-19), ("au", 4.4e-19, 0.2e-19)])
def test_combined_reference_constants(metal, center, half):
    fits = [fit(kind, H, sigma) for (kind, m), (H, sigma, _, _) in HAMAKER_REFERENCE.items() if m == metal]
    combined = combine_hamaker(fits)
    assert combined.H_rounded == pytest.approx(center, rel=1e-12)
    assert combined.half_width_rounded == pytest.approx(half, rel=1e-12)
    assert combined.warnings == []


def test_combine_identical_fits():
    combined = combine_hamaker([fit(GeometryKind.PLATE_PLATE, 4e-19, 1e-21)] * 2)
    assert combined.H == pytest.approx(4e-19)
    assert combined.half_width == pytest.approx(1e-21)


def test_combine_disjoint_fits_warns():
    combined = combine_hamaker([fit(GeometryKind.PLATE_PLATE, 3e-19, 1e-21), fit(GeometryKind.SPHERE_PLATE, 4e-19, 1e-21)])
    assert combined.H == pytest.approx(3.5e-19)
    assert combined.warnings


def test_combine_needs_two_fits():
    with pytest.raises(FitError):
        combine_hamaker([fit(GeometryKind.PLATE_PLATE, 3e-19, 1e-21)])


# -- experiments and files ------------------------------------------------------

def test_lower_plasma_frequency_lowers_correction(calculator):
    geom = Geometry(kind=GeometryKind.PLATE_PLATE, separation_a_nm=500.0)
    sensitivity = drude_sensitivity(geom, DrudeParams(omega_p=12.5, gamma=0.063), ALTERNATIVE_AL_DRUDE,
                                    calculator=calculator)
    assert sensitivity.alternative_factor < sensitivity.base_factor
    assert -0.03 < sensitivity.relative_change < 0


def test_csv_round_trip(tmp_path):
    original = synthetic_scan(GeometryKind.SPHERE_PLATE)
    path = tmp_path / "scan.csv"
    scan_to_csv(original, path)
    text = path.read_text()
    assert text.startswith("# geometry=sl\n# stack=synthetic\n# sphere_radius_um=100.0\na_nm,force,")
    loaded = scan_from_csv(path)
    assert loaded.geometry == GeometryKind.SPHERE_PLATE
    assert loaded.sphere_radius_um == RADIUS_UM
    np.testing.assert_array_equal(loaded.forces, original.forces)
    assert fit_hamaker(loaded) == fit_hamaker(original)


def test_csv_without_metadata(tmp_path):
    buffer = io.StringIO()
    scan_to_csv(synthetic_scan(GeometryKind.SPHERE_PLATE), buffer)
    body = "".join(line + "\n" for line in buffer.getvalue().splitlines() if not line.startswith("#"))
    path = tmp_path / "bare.csv"
    path.write_text(body)
    assert scan_from_csv(path).geometry == GeometryKind.PLATE_PLATE
    with pytest.raises(ConfigError):
        scan_from_csv(path, default_geometry=GeometryKind.SPHERE_PLATE)
    loaded = scan_from_csv(path, geometry=GeometryKind.SPHERE_PLATE, sphere_radius_um=50.0)
    assert loaded.sphere_radius_um == 50.0


def test_csv_errors(tmp_path):
    with pytest.raises(ConfigError):
        scan_from_csv(tmp_path / "absent.csv")
    path = tmp_path / "wrong.csv"
    path.write_text("a_nm,force\n1.0,-2.0\n")
    with pytest.raises(ConfigError):
        scan_from_csv(path)


def test_json_round_trip(tmp_path):
    original = synthetic_scan(GeometryKind.PLATE_PLATE, grid=[1.0, 2.0, 3.0])
    original = original.model_copy(update={"warnings": ["a=4 nm dropped: no estimate"]})
    path = tmp_path / "scan.json"
    scan_to_json(original, path)
    assert scan_from_json(path) == original
    assert math.isclose(scan_from_json(path).points[0].force, original.points[0].force)
