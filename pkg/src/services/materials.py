"""Material specifications accepted on the command line.

    ideal                         perfect conductor
    drude:al | drude:au           builtin Drude metals
    plasma:al | plasma:au         builtin plasma frequency, no relaxation
    drude:<wp>eV,<gamma>eV        custom Drude metal
    const:<eps>                   frequency-independent dielectric
    table:al:<path> | table:au:<path>
    table:<wp>eV,<gamma>eV,<crossover>eV:<path>
"""
import logging
from functools import lru_cache
from pathlib import Path
from typing import Optional, Tuple

from config import Config
from src.core.exceptions import ConfigError
from src.core.models import DrudeParams
from src.core.units import parse_energy_ev
from src.services.optical_data import ImEpsilonSampler, load_optical_csv
from src.services.permittivity import PermittivityFunction

logger = logging.getLogger(__name__)


def builtin_drude(name: str, relaxation: bool = True) -> DrudeParams:
    try:
        entry = Config.BUILTIN_DRUDE[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown builtin metal '{name}' (known: {', '.join(sorted(Config.BUILTIN_DRUDE))})")
    return DrudeParams(omega_p=entry["omega_p"], gamma=entry["gamma"] if relaxation else 0.0)


def _custom_drude(text: str) -> Tuple[DrudeParams, Optional[float]]:
    fields = [field.strip() for field in text.split(",")]
    if len(fields) not in (2, 3):
        raise ConfigError(f"'{text}': expected <wp>eV,<gamma>eV[,<crossover>eV]")
    values = [parse_energy_ev(field) for field in fields]
    if values[0] <= 0 or values[1] < 0:
        raise ConfigError(f"'{text}': plasma frequency must be positive and relaxation non-negative")
    return DrudeParams(omega_p=values[0], gamma=values[1]), (values[2] if len(values) == 3 else None)


def _table(rest: str) -> PermittivityFunction:
    head, sep, path = rest.partition(":")
    if not sep or not path:
        raise ConfigError(f"'table:{rest}': expected table:<metal>:<path> or table:<wp>eV,<gamma>eV,<crossover>eV:<path>")
    if head.lower() in Config.BUILTIN_DRUDE:
        drude = builtin_drude(head)
        crossover = Config.BUILTIN_DRUDE[head.lower()]["crossover"]
        name = head.lower()
    else:
        drude, crossover = _custom_drude(head)
        if crossover is None:
            raise ConfigError(f"'table:{rest}': a custom table spec needs a crossover energy")
        name = None
    if not Path(path).is_file():
        raise ConfigError(f"optical data file not found: {path}")
    table = load_optical_csv(path, material_name=name)
    sampler = ImEpsilonSampler(table, drude, crossover=crossover)
    return PermittivityFunction.tabulated(sampler, name=f"table:{table.material_name}")


@lru_cache(maxsize=32)
def parse_material_spec(spec: str) -> PermittivityFunction:
    """Build (and memoize) the permittivity function named by ``spec``."""
    text = spec.strip()
    kind, _, rest = text.partition(":")
    kind = kind.lower()
    if kind == "ideal" and not rest:
        return PermittivityFunction.ideal()
    if kind in ("drude", "plasma") and rest:
        if rest.lower() in Config.BUILTIN_DRUDE:
            return PermittivityFunction.drude(builtin_drude(rest, relaxation=kind == "drude"), name=text.lower())
        if kind == "drude":
            params, crossover = _custom_drude(rest)
            if crossover is not None:
                raise ConfigError(f"'{spec}': a crossover only applies to table specs")
            return PermittivityFunction.drude(params, name=text)
    if kind == "const" and rest:
        try:
            value = float(rest)
        except ValueError:
            raise ConfigError(f"'{spec}': constant permittivity must be a number")
        if not 1.0 <= value < float("inf"):
            raise ConfigError(f"'{spec}': constant permittivity must be finite and >= 1")
        return PermittivityFunction.constant(value)
    if kind == "table" and rest:
        logger.info(f"Loading tabulated material '{spec}'")
        return _table(rest)
    raise ConfigError(f"unknown material spec '{spec}'")
