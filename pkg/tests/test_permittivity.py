import math

import numpy as np
import pandas as pd
import pytest

from src.core.exceptions import DomainError
from src.core.models import DrudeParams
from src.services.optical_data import ImEpsilonSampler, drude_table
from src.services.permittivity import (
    PermittivityFunction, PermittivityKind, epsilon_i_xi, kk_transform, kk_transform_grid, kk_trapezoid,
)


class LorentzLoss:
    """Single oscillator: eps(i xi) = 1 + f / (w0^2 + xi^2 + g xi)."""

    def __init__(self, strength=10.0, w0=5.0, width=0.5):
        self.strength, self.w0, self.width = strength, w0, width

    def im_epsilon(self, omega):
        omega = np.asarray(omega, dtype=float)
        return self.strength * self.width * omega / ((self.w0 ** 2 - omega ** 2) ** 2 + self.width ** 2 * omega ** 2)

    def breakpoints(self):
        return (self.w0,)

    def exact(self, xi):
        return 1.0 + self.strength / (self.w0 ** 2 + xi ** 2 + self.width * xi)


@pytest.fixture(scope="module")
def al_drude():
    return DrudeParams(omega_p=12.5, gamma=0.063)


@pytest.fixture(scope="module")
def dense_sampler(al_drude):
    return ImEpsilonSampler(drude_table(al_drude, lo=1e-2, hi=1e3, points_per_decade=100), al_drude)


@pytest.fixture(scope="module")
def tabulated(dense_sampler):
    return PermittivityFunction.tabulated(dense_sampler, name="synthetic-al")


def test_drude_closed_form():
    eps = PermittivityFunction.drude(DrudeParams(omega_p=12.5, gamma=0.063))
    assert eps(12.5) == pytest.approx(1.995, abs=5e-4)
    assert eps.kind == PermittivityKind.ANALYTIC_DRUDE
    assert epsilon_i_xi(eps, 1.0) == eps(1.0)


def test_ideal_and_constant():
    assert PermittivityFunction.ideal()(3.0) == math.inf
    assert PermittivityFunction.ideal().is_ideal
    assert PermittivityFunction.constant(4.0)(1e-3) == 4.0


@pytest.mark.parametrize("value", [0.5, math.inf, float("nan")])
def test_constant_must_be_finite_and_at_least_one(value):
    with pytest.raises(ValueError):
        PermittivityFunction.constant(value)


@pytest.mark.parametrize("xi", [0.0, -1.0])
def test_non_positive_frequency_rejected(xi, tabulated):
    with pytest.raises(DomainError):
        PermittivityFunction.drude(DrudeParams(omega_p=9.0, gamma=0.035)).direct(xi)
    with pytest.raises(DomainError):
        kk_transform(LorentzLoss(), xi)
    with pytest.raises(DomainError):
        tabulated(xi)


@pytest.mark.parametrize("xi", [0.01, 0.5, 2.0, 5.0, 7.5, 40.0, 1e3])
def test_kk_reproduces_lorentz_oscillator(xi):
    loss = LorentzLoss()
    assert kk_transform(loss, xi, rel_tol=1e-9) == pytest.approx(loss.exact(xi), rel=1e-7)


def test_kk_of_analytic_drude_loss(al_drude):
    # the model object itself supplies Im eps and its kink at gamma
    for xi in np.geomspace(1e-3, 1e3, 21):
        assert kk_transform(al_drude, float(xi)) == pytest.approx(al_drude.epsilon_i_xi(xi), rel=1e-4)


def test_kk_of_tabulated_drude_data(al_drude, dense_sampler):
    for xi in np.geomspace(1e-3, 1e3, 21):
        assert kk_transform(dense_sampler, float(xi)) == pytest.approx(al_drude.epsilon_i_xi(xi), rel=1e-4)


def test_grid_transform_matches_single_nodes(al_drude, dense_sampler):
    xis = np.geomspace(1e-6, 1e4, 31)
    np.testing.assert_allclose(kk_transform_grid(al_drude, xis), al_drude.epsilon_i_xi(xis), rtol=1e-4)
    picks = xis[::10]
    batched = kk_transform_grid(dense_sampler, picks)
    for xi, value in zip(picks, batched):
        assert value == pytest.approx(kk_transform(dense_sampler, float(xi)), rel=1e-4)


def test_grid_transform_domain():
    with pytest.raises(DomainError):
        kk_transform_grid(LorentzLoss(), [1.0, 0.0])


def test_trapezoid_cross_check(dense_sampler):
    for xi in (0.05, 1.0, 20.0):
        adaptive = kk_transform(dense_sampler, xi)
        assert kk_trapezoid(dense_sampler, xi) == pytest.approx(adaptive, rel=5e-3)


def test_cache_matches_direct_evaluation(tabulated, al_drude):
    assert tabulated.kind == PermittivityKind.TABULATED_KK
    assert tabulated.drude_params == al_drude
    for xi in (1.3e-6, 2.7e-4, 0.063, 0.9, 12.5, 333.0, 9.9e3):
        assert tabulated(xi) == pytest.approx(tabulated.direct(xi), rel=1e-4)
        assert tabulated(xi) == pytest.approx(al_drude.epsilon_i_xi(xi), rel=2e-4)


def test_cache_nodes_are_exact(tabulated):
    nodes, values = tabulated.cache_nodes, tabulated.cache_values
    assert nodes[0] == pytest.approx(1e-6)
    assert nodes[-1] == pytest.approx(1e4)
    for i in (0, 100, 400, len(nodes) - 1):
        assert tabulated(float(nodes[i])) == pytest.approx(values[i], rel=1e-12)
    with pytest.raises(ValueError):
        values[0] = 1.0


def test_outside_cache_uses_direct_path(tabulated):
    assert tabulated(5e4) == tabulated.direct(5e4)


def test_epsilon_decreases_along_imaginary_axis(tabulated):
    assert np.all(np.diff(tabulated.cache_values) < 0)
    assert np.all(tabulated.cache_values > 1)


def test_cache_dump(tabulated, tmp_path):
    path = tmp_path / "eps.csv"
    tabulated.dump_csv(path)
    frame = pd.read_csv(path, float_precision="round_trip")
    assert list(frame.columns) == ["xi_eV", "eps"]
    np.testing.assert_array_equal(frame["eps"].to_numpy(), tabulated.cache_values)


def test_cache_frame_for_analytic_kind():
    frame = PermittivityFunction.drude(DrudeParams(omega_p=9.0, gamma=0.035)).cache_frame(1e-2, 1e2, 4)
    assert len(frame) == 17
    assert frame["eps"].iloc[0] == pytest.approx(1.0 + 81.0 / (1e-2 * (1e-2 + 0.035)))
