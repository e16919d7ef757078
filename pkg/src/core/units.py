"""Physical constants and unit-suffixed quantity parsing.

Frequencies are carried in eV (photon energy) throughout; lengths in nm unless
a name says otherwise.
"""
import math
import re

from scipy.constants import c, e, hbar

from src.core.exceptions import ConfigError

HBAR = hbar
C_LIGHT = c
EV = e

HBAR_EV_S = hbar / e
# hbar*c in eV*nm (~197.327); xi[eV] / HBAR_C_EV_NM is a wave number in 1/nm.
HBAR_C_EV_NM = hbar * c / e * 1e9
# eV -> rad/s
EV_TO_RAD_S = e / hbar

NM = 1e-9
UM = 1e-6

_LENGTH_UNITS = {"nm": 1.0, "um": 1e3, "µm": 1e3, "mm": 1e6, "m": 1e9}
_ENERGY_UNITS = {"mev": 1e-3, "ev": 1.0, "kev": 1e3}

_QUANTITY = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([a-zA-Zµ]+)\s*$")


def _split(text: str) -> tuple[float, str]:
    match = _QUANTITY.match(str(text))
    if not match:
        raise ConfigError(f"'{text}' is not a number with a unit suffix (e.g. 500nm, 12.5eV)")
    return float(match.group(1)), match.group(2)


def parse_length_nm(text: str) -> float:
    value, unit = _split(text)
    if unit not in _LENGTH_UNITS:
        raise ConfigError(f"'{text}': unknown length unit '{unit}' (use nm, um, mm or m)")
    return value * _LENGTH_UNITS[unit]


def parse_length_um(text: str) -> float:
    return parse_length_nm(text) / 1e3


def parse_energy_ev(text: str) -> float:
    value, unit = _split(text)
    if unit.lower() not in _ENERGY_UNITS:
        raise ConfigError(f"'{text}': unknown energy unit '{unit}' (use meV, eV or keV)")
    return value * _ENERGY_UNITS[unit.lower()]


def plasma_wavelength_nm(omega_p_ev: float) -> float:
    """lambda_p = 2 pi c / omega_p."""
    return 2.0 * math.pi * HBAR_C_EV_NM / omega_p_ev


def plasma_frequency_ev(lambda_p_nm: float) -> float:
    return 2.0 * math.pi * HBAR_C_EV_NM / lambda_p_nm
