"""Finite-conductivity corrections to the ideal-metal Casimir force as a series in delta0/a.

Valid for the plasma model (no relaxation) and a well above the plasma wavelength.
"""
import logging
import math
from typing import Tuple

from config import Config
from src.core.exceptions import DomainError
from src.core.models import DrudeParams, GeometryKind, PenetrationDepth

logger = logging.getLogger(__name__)

_PI2 = math.pi ** 2

# coefficients of (delta0/a)^k, k = 0..4
SS_COEFFICIENTS: Tuple[float, ...] = (
    1.0,
    -16.0 / 3.0,
    24.0,
    -640.0 / 7.0 * (1.0 - _PI2 / 210.0),
    2800.0 / 9.0 * (1.0 - 163.0 * _PI2 / 7350.0),
)
SL_COEFFICIENTS: Tuple[float, ...] = (
    1.0,
    -4.0,
    72.0 / 5.0,
    -320.0 / 7.0 * (1.0 - _PI2 / 210.0),
    400.0 / 3.0 * (1.0 - 163.0 * _PI2 / 7350.0),
)


def _ratio(delta0: float, a: float) -> float:
    if not a > 0:
        raise DomainError(f"separation must be positive, got {a} nm")
    if delta0 < 0:
        raise DomainError(f"penetration depth must be non-negative, got {delta0} nm")
    x = delta0 / a
    if x > Config.SERIES_MAX_DELTA_RATIO:
        logger.warning(f"delta0/a = {x:.3f} > {Config.SERIES_MAX_DELTA_RATIO}: the series is outside its range "
                       f"of validity (a should exceed the plasma wavelength)")
    return x


def _terms(coefficients: Tuple[float, ...], delta0: float, a: float) -> Tuple[float, ...]:
    x = _ratio(delta0, a)
    return tuple(c * x ** k for k, c in enumerate(coefficients))


def perturbative_terms_ss(delta0: float, a: float) -> Tuple[float, ...]:
    """The five series terms for two plates, zeroth order first."""
    return _terms(SS_COEFFICIENTS, delta0, a)


def perturbative_terms_sl(delta0: float, a: float) -> Tuple[float, ...]:
    return _terms(SL_COEFFICIENTS, delta0, a)


def perturbative_factor_ss(delta0: float, a: float) -> float:
    """F_ss / F_ss(ideal) to fourth order in delta0/a (delta0, a in nm)."""
    return math.fsum(perturbative_terms_ss(delta0, a))


def perturbative_factor_sl(delta0: float, a: float) -> float:
    """F_sl / F_sl(ideal) to fourth order in delta0/a (delta0, a in nm)."""
    return math.fsum(perturbative_terms_sl(delta0, a))


def perturbative_factor(kind: GeometryKind, delta0: float, a: float) -> float:
    if kind == GeometryKind.PLATE_PLATE:
        return perturbative_factor_ss(delta0, a)
    return perturbative_factor_sl(delta0, a)


def penetration_depth(params: DrudeParams) -> PenetrationDepth:
    return PenetrationDepth.from_plasma_frequency(params.omega_p)
