"""Regularized Casimir energy density and forces between (optionally coated) semi-spaces.

Variables follow the imaginary-frequency representation: xi in eV, the dimensionless
p >= 1 (k^2 = xi^2 (p^2 - 1) / c^2), K_alpha = sqrt(p^2 - 1 + eps_alpha(i xi)).
Q1 is the TM factor, Q2 the TE factor, Q = 1 - r^2 exp(-2 xi p a / c).
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import Config
from src.core.exceptions import ConfigError, DomainError, NumericalError
from src.core.models import ForceResult, Geometry, GeometryKind, QuadSpec
from src.core.units import C_LIGHT, EV_TO_RAD_S, HBAR, HBAR_C_EV_NM, NM
from src.services.permittivity import PermittivityFunction, PermittivityKind
from src.services.quadrature import integrate

logger = logging.getLogger(__name__)

_LN2 = math.log(2.0)
# E = ENERGY_PREFACTOR * int p dp int xi^2 dxi [...] with xi in eV; result in J/m^2
ENERGY_PREFACTOR = HBAR / (4.0 * math.pi ** 2 * C_LIGHT ** 2) * EV_TO_RAD_S ** 3
# F = -FORCE_PREFACTOR * int p^2 dp int xi^3 dxi [...]; result in N/m^2
FORCE_PREFACTOR = HBAR / (2.0 * math.pi ** 2 * C_LIGHT ** 3) * EV_TO_RAD_S ** 4


class MaterialStack(BaseModel):
    """Substrate eps2, optionally covered by a layer eps1 of thickness d; both bodies alike."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    substrate: PermittivityFunction
    coating: Optional[PermittivityFunction] = None
    thickness_d_nm: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def coating_has_thickness(self):
        if (self.coating is None) != (self.thickness_d_nm is None):
            raise ValueError("a coating and its thickness must be given together")
        return self

    def describe(self) -> str:
        if self.coating is None:
            return self.substrate.name
        return f"{self.coating.name} {self.thickness_d_nm:g}nm on {self.substrate.name}"


def _vacuum_interface(eps: float, p):
    """(r_TM, r_TE) = ((K - eps p)/(K + eps p), (K - p)/(K + p)), written without cancellation.

    ``p`` may be a float or an array.
    """
    if math.isinf(eps):
        return -1.0 + 0.0 * p, 1.0 + 0.0 * p
    k = (p * p - 1.0 + eps) ** 0.5
    tm_den = k + eps * p
    te_den = k + p
    r_tm = (eps - 1.0) * (1.0 - (1.0 + eps) * p * p) / (tm_den * tm_den)
    r_te = (eps - 1.0) / (te_den * te_den)
    return r_tm, r_te


def _layer_interface(eps1: float, eps2: float, p):
    """Coating/substrate ratios ((eps2 K1 - eps1 K2)/(eps2 K1 + eps1 K2), (K1 - K2)/(K1 + K2))."""
    if math.isinf(eps2):
        return 1.0 + 0.0 * p, -1.0 + 0.0 * p
    q = p * p - 1.0
    k1 = (q + eps1) ** 0.5
    k2 = (q + eps2) ** 0.5
    tm_den = eps2 * k1 + eps1 * k2
    te_den = k1 + k2
    rho_tm = (eps2 - eps1) * (q * (eps1 + eps2) + eps1 * eps2) / (tm_den * tm_den)
    rho_te = (eps1 - eps2) / (te_den * te_den)
    return rho_tm, rho_te


def _effective_reflection(substrate: float, coating: Optional[float], thickness_nm: Optional[float], xi: float, p):
    if coating is None:
        return _vacuum_interface(substrate, p)
    r01 = _vacuum_interface(coating, p)
    if math.isinf(coating):
        return r01
    rho = _layer_interface(coating, substrate, p)
    phase = np.exp(-2.0 * xi / HBAR_C_EV_NM * (p * p - 1.0 + coating) ** 0.5 * thickness_nm)
    r_tm, r_te = ((r - rh * phase) / (1.0 - r * rh * phase) for r, rh in zip(r01, rho))
    return r_tm, r_te


def reflection_coefficients(stack: MaterialStack, xi: float, p) -> Tuple[np.ndarray, np.ndarray]:
    """Effective (TM, TE) reflection ratios seen from the gap; only their squares enter Q."""
    p = np.asarray(p, dtype=float)
    coating = None if stack.coating is None else stack.coating(xi)
    return _effective_reflection(stack.substrate(xi), coating, stack.thickness_d_nm, xi, p)


def _log_q(r: np.ndarray, x: np.ndarray) -> np.ndarray:
    """ln(r^2 e^-x); -inf where r = 0."""
    with np.errstate(divide="ignore"):
        return np.log(r * r) - x


def _log1mexp(y: float) -> float:
    """ln(1 - e^y) for y < 0."""
    return math.log(-math.expm1(y)) if y > -_LN2 else math.log1p(-math.exp(y))


def _force_ratio(y: float) -> float:
    """(1 - Q)/Q = q/(1 - q) with ln q = y."""
    return math.exp(y) / -math.expm1(y)


def q_factors(stack: MaterialStack, xi: float, p, a: float) -> Tuple[np.ndarray, np.ndarray]:
    """(Q1, Q2) at imaginary frequency xi (eV), p >= 1 and separation a (nm)."""
    p = np.asarray(p, dtype=float)
    if not xi > 0 or not a > 0 or np.any(p < 1.0):
        raise DomainError(f"q_factors needs xi > 0, a > 0 and p >= 1 (xi={xi}, a={a})")
    r_tm, r_te = reflection_coefficients(stack, xi, p)
    x = 2.0 * xi * p * a / HBAR_C_EV_NM
    return -np.expm1(_log_q(r_tm, x)), -np.expm1(_log_q(r_te, x))


def ideal_force(geom: Geometry) -> float:
    """-pi^2 hbar c / (240 a^4) (N/m^2) or -pi^3 R hbar c / (360 a^3) (N)."""
    a = geom.separation_m
    if geom.kind == GeometryKind.PLATE_PLATE:
        return -math.pi ** 2 * HBAR * C_LIGHT / (240.0 * a ** 4)
    return -math.pi ** 3 * geom.radius_m * HBAR * C_LIGHT / (360.0 * a ** 3)


def ideal_energy_density(a_nm: float) -> float:
    return -math.pi ** 2 * HBAR * C_LIGHT / (720.0 * (a_nm * NM) ** 3)


class _Estimate(BaseModel):
    value: float
    rel_error: float
    converged: bool
    warnings: List[str] = Field(default_factory=list)


class CasimirCalculator:
    """Evaluates the double integrals over xi (outer) and p (inner) for one stack at a time."""

    def __init__(self, xi_window: Tuple[float, float] = (Config.XI_MIN_EV, Config.XI_MAX_EV),
                 check_window: bool = Config.CHECK_XI_WINDOW,
                 max_subdivisions: int = Config.MAX_SUBDIVISIONS,
                 inner_max_subdivisions: int = Config.INNER_MAX_SUBDIVISIONS):
        if not 0 < xi_window[0] < xi_window[1]:
            raise ConfigError(f"invalid xi window {xi_window}")
        self.xi_window = (float(xi_window[0]), float(xi_window[1]))
        self.check_window = check_window
        self.max_subdivisions = max_subdivisions
        self.inner_max_subdivisions = inner_max_subdivisions
        logger.info(f"CasimirCalculator initialized: xi window={self.xi_window} eV, check_window={check_window}.")

    # -- integrands -------------------------------------------------------

    def _inner(self, stack: MaterialStack, xi: float, a: float, tol: float, energy: bool, failures: List[float]) -> float:
        """int over p of p ln Q (energy) or p^2 (1-Q)/Q (force), both polarizations."""
        e_fold = HBAR_C_EV_NM / (2.0 * xi * a)
        p_cut = Config.EXP_UNDERFLOW * e_fold
        if p_cut <= 1.0:
            return 0.0
        substrate = stack.substrate(xi)
        coating = None if stack.coating is None else stack.coating(xi)

        def integrand(p: float) -> float:
            x = p / e_fold
            total = 0.0
            for r in _effective_reflection(substrate, coating, stack.thickness_d_nm, xi, p):
                if r == 0.0:
                    continue
                y = 2.0 * math.log(abs(r)) - x
                total += _log1mexp(y) if energy else _force_ratio(y)
            return p * total if energy else p * p * total

        spec = QuadSpec(lo=1.0, hi=p_cut, scale=e_fold, rel_tol=tol * Config.INNER_TOL_FACTOR,
                        abs_floor=Config.QUAD_ABS_FLOOR, max_subdivisions=self.inner_max_subdivisions)
        result = integrate(integrand, spec)
        if not result.converged:
            failures.append(xi)
        return result.value

    def _outer(self, stack: MaterialStack, a: float, tol: float, energy: bool, window: Tuple[float, float],
               failures: List[float]):
        power = 2 if energy else 3

        def integrand(xi: float) -> float:
            return xi ** power * self._inner(stack, xi, a, tol, energy, failures)

        spec = QuadSpec(lo=window[0], hi=window[1], scale=HBAR_C_EV_NM / (2.0 * a), rel_tol=tol,
                        abs_floor=Config.QUAD_ABS_FLOOR, max_subdivisions=self.max_subdivisions)
        return integrate(integrand, spec)

    def _integrate(self, stack: MaterialStack, a: float, tol: float, energy: bool) -> _Estimate:
        if not a > 0:
            raise ConfigError(f"separation must be positive, got {a} nm")
        if not Config.MIN_TOL <= tol <= Config.MAX_TOL:
            raise ConfigError(f"tolerance {tol} outside [{Config.MIN_TOL}, {Config.MAX_TOL}]")

        failures: List[float] = []
        main = self._outer(stack, a, tol, energy, self.xi_window, failures)
        warnings: List[str] = []
        rel_error = main.error / abs(main.value) if main.value != 0 else 0.0
        if failures:
            warnings.append(f"inner p-integral budget exhausted at {len(failures)} xi nodes "
                            f"(first at xi={failures[0]:.3g} eV)")
        if self.check_window and main.value != 0:
            lo, hi = self.xi_window
            tails = [self._outer(stack, a, tol, energy, window, []) for window in ((lo / 10.0, lo), (hi, hi * 10.0))]
            sensitivity = abs(sum(t.value for t in tails)) / abs(main.value)
            if sensitivity > Config.XI_WINDOW_SENSITIVITY:
                warnings.append(f"widening the xi window tenfold changes the result by {sensitivity:.2%}")
        if not main.converged:
            raise NumericalError(
                f"{'energy' if energy else 'force'} integral at a={a} nm did not reach tol={tol} "
                f"(relative error estimate {rel_error:.2e})",
                best_estimate=main.value, error_bound=main.error,
            )
        return _Estimate(value=main.value, rel_error=rel_error, converged=main.converged, warnings=warnings)

    def _validity_warnings(self, stack: MaterialStack, geom: Geometry) -> List[str]:
        warnings = []
        if (stack.coating is not None and stack.coating.kind != PermittivityKind.CONSTANT
                and stack.thickness_d_nm < Config.COATING_MIN_THICKNESS_NM):
            warnings.append(f"coating thickness {stack.thickness_d_nm:g} nm < {Config.COATING_MIN_THICKNESS_NM:g} nm: "
                            f"spatial dispersion is not negligible, bulk optical data may not apply")
        if geom.separation_a_nm > Config.THERMAL_WARNING_A_NM:
            warnings.append(f"a = {geom.separation_a_nm:g} nm > {Config.THERMAL_WARNING_A_NM:g} nm: "
                            f"room-temperature corrections become significant (zero-temperature result)")
        if geom.kind == GeometryKind.SPHERE_PLATE and geom.radius_to_separation < Config.PFT_MIN_RATIO:
            warnings.append(f"R/a = {geom.radius_to_separation:.3g} < {Config.PFT_MIN_RATIO:g}: "
                            f"proximity force approximation loses accuracy")
        return warnings

    # -- public operations ----------------------------------------------

    def energy_density(self, stack: MaterialStack, a: float, tol: float = Config.DEFAULT_TOL) -> float:
        """Regularized energy per unit area (J/m^2) at separation a (nm); negative."""
        estimate = self._integrate(stack, a, tol, energy=True)
        return ENERGY_PREFACTOR * estimate.value

    def _result(self, stack: MaterialStack, geom: Geometry, tol: float) -> ForceResult:
        energy = geom.kind == GeometryKind.SPHERE_PLATE
        a = geom.separation_a_nm
        try:
            estimate = self._integrate(stack, a, tol, energy=energy)
        except NumericalError as e:
            ideal = ideal_force(geom)
            value = self._scale(geom, e.best_estimate)
            partial = ForceResult(
                geometry=geom, value=value, ideal_value=ideal, correction_factor=abs(value / ideal),
                quad_error=e.error_bound / abs(e.best_estimate) if e.best_estimate else math.inf,
                converged=False, warnings=[str(e)] + self._validity_warnings(stack, geom),
            )
            raise NumericalError(str(e), best_estimate=value, error_bound=e.error_bound, partial=partial) from e

        value = self._scale(geom, estimate.value)
        ideal = ideal_force(geom)
        warnings = estimate.warnings + self._validity_warnings(stack, geom)
        if estimate.rel_error > tol:
            warnings.append(f"quadrature error estimate {estimate.rel_error:.2e} exceeds tol={tol}")
        for message in warnings:
            logger.warning(f"{geom.kind.value} a={a:g} nm ({stack.describe()}): {message}")
        result = ForceResult(
            geometry=geom, value=value, ideal_value=ideal, correction_factor=abs(value / ideal),
            quad_error=estimate.rel_error, converged=True, warnings=warnings,
        )
        logger.info(f"{geom.kind.value} a={a:g} nm ({stack.describe()}): F={value:.6e}, "
                    f"F/F0={result.correction_factor:.5f}")
        return result

    @staticmethod
    def _scale(geom: Geometry, integral: float) -> float:
        if geom.kind == GeometryKind.PLATE_PLATE:
            return -FORCE_PREFACTOR * integral
        return 2.0 * math.pi * geom.radius_m * ENERGY_PREFACTOR * integral

    def force_plate_plate(self, stack: MaterialStack, a: float, tol: float = Config.DEFAULT_TOL) -> ForceResult:
        """Force per unit area (N/m^2) between the two semi-spaces."""
        return self._result(stack, Geometry(kind=GeometryKind.PLATE_PLATE, separation_a_nm=a), tol)

    def force_sphere_plate(self, stack: MaterialStack, geom: Geometry, tol: float = Config.DEFAULT_TOL) -> ForceResult:
        """Proximity-force result F = 2 pi R E(a) (N)."""
        if geom.kind != GeometryKind.SPHERE_PLATE:
            raise ConfigError("force_sphere_plate needs a sphere-plate geometry")
        return self._result(stack, geom, tol)

    def force(self, stack: MaterialStack, geom: Geometry, tol: float = Config.DEFAULT_TOL) -> ForceResult:
        return self._result(stack, geom, tol)

    def force_energy_discrepancy(self, stack: MaterialStack, a: float, tol: float = Config.DEFAULT_TOL,
                                 step: Optional[float] = None) -> float:
        """Relative difference between the force and -dE/da by central difference (h = a/1000)."""
        h = a / 1000.0 if step is None else step
        force = self.force_plate_plate(stack, a, tol).value
        derivative = -(self.energy_density(stack, a + h, tol) - self.energy_density(stack, a - h, tol)) / (2.0 * h * NM)
        return abs(derivative - force) / abs(force)


_default_calculator: Optional[CasimirCalculator] = None


def default_calculator() -> CasimirCalculator:
    global _default_calculator
    if _default_calculator is None:
        _default_calculator = CasimirCalculator()
    return _default_calculator


def energy_density(stack: MaterialStack, a: float, tol: float = Config.DEFAULT_TOL) -> float:
    return default_calculator().energy_density(stack, a, tol)


def force_plate_plate(stack: MaterialStack, a: float, tol: float = Config.DEFAULT_TOL) -> ForceResult:
    return default_calculator().force_plate_plate(stack, a, tol)


def force_sphere_plate(stack: MaterialStack, geom: Geometry, tol: float = Config.DEFAULT_TOL) -> ForceResult:
    return default_calculator().force_sphere_plate(stack, geom, tol)
