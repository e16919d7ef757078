import pytest

from src.core.exceptions import ConfigError, OpticalDataError
from src.core.models import DrudeParams, OpticalEntry, OpticalTable
from src.services.materials import builtin_drude, parse_material_spec
from src.services.optical_data import drude_table, write_optical_csv
from src.services.permittivity import PermittivityKind


@pytest.fixture(scope="module")
def al_table(tmp_path_factory):
    path = tmp_path_factory.mktemp("nk") / "al.csv"
    write_optical_csv(drude_table(builtin_drude("al"), lo=1e-2, hi=1e2, points_per_decade=40), path)
    return path


def test_builtin_metals():
    assert builtin_drude("AL") == DrudeParams(omega_p=12.5, gamma=0.063)
    assert builtin_drude("au", relaxation=False).gamma == 0.0
    with pytest.raises(ConfigError):
        builtin_drude("cu")


@pytest.mark.parametrize("spec, kind", [
    ("ideal", PermittivityKind.IDEAL_METAL),
    ("drude:al", PermittivityKind.ANALYTIC_DRUDE),
    ("PLASMA:Au", PermittivityKind.ANALYTIC_DRUDE),
    ("drude:9eV,35meV", PermittivityKind.ANALYTIC_DRUDE),
    ("const:11.7", PermittivityKind.CONSTANT),
])
def test_analytic_specs(spec, kind):
    assert parse_material_spec(spec).kind == kind


def test_spec_parameters():
    assert parse_material_spec("plasma:Au").drude_params == DrudeParams(omega_p=9.0, gamma=0.0)
    assert parse_material_spec("plasma:Au").name == "plasma:au"
    assert parse_material_spec("drude:9eV,35meV").drude_params == DrudeParams(omega_p=9.0, gamma=0.035)
    assert parse_material_spec("const:11.7")(1.0) == 11.7


def test_specs_are_memoized():
    assert parse_material_spec("drude:au") is parse_material_spec("drude:au")


@pytest.mark.parametrize("spec", [
    "", "copper", "ideal:al", "drude:", "drude:cu", "drude:9eV", "drude:9eV,35meV,0.1eV", "drude:-9eV,35meV",
    "const:0.5", "const:inf", "const:glass", "table:al", "table:al:/no/such/file.csv",
])
def test_rejected_specs(spec):
    with pytest.raises(ConfigError):
        parse_material_spec(spec)


def test_custom_table_needs_crossover(al_table):
    with pytest.raises(ConfigError):
        parse_material_spec(f"table:12.5eV,63meV:{al_table}")


def test_builtin_table(al_table):
    eps = parse_material_spec(f"table:al:{al_table}")
    assert eps.kind == PermittivityKind.TABULATED_KK
    assert eps.name == "table:al"
    assert eps.sampler.crossover == 0.04
    assert eps(1.0) == pytest.approx(builtin_drude("al").epsilon_i_xi(1.0), rel=1e-3)


def test_custom_table(al_table):
    eps = parse_material_spec(f"table:12.5eV,63meV,0.05eV:{al_table}")
    assert eps.drude_params == DrudeParams(omega_p=12.5, gamma=0.063)
    assert eps.sampler.crossover == 0.05


def test_inconsistent_table_is_a_data_error(tmp_path):
    table = drude_table(builtin_drude("au"), lo=1e-2, hi=1e2, points_per_decade=10)
    scaled = OpticalTable(material_name="au", entries=tuple(
        OpticalEntry(omega=e.omega, n=3.0 * e.n, k=e.k) for e in table.entries))
    path = tmp_path / "au.csv"
    write_optical_csv(scaled, path)
    with pytest.raises(OpticalDataError):
        parse_material_spec(f"table:au:{path}")
