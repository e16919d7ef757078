"""Dielectric permittivity on the imaginary frequency axis.

eps(i xi) = 1 + (2/pi) * int_0^inf omega Im eps(omega) / (omega^2 + xi^2) d omega
"""
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Optional, Protocol, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from scipy.interpolate import PchipInterpolator

from config import Config
from src.core.exceptions import DomainError, NumericalError
from src.core.models import DrudeParams, QuadSpec
from src.services.optical_data import ImEpsilonSampler
from src.services.quadrature import integrate, integrate_components, trapezoid_log_grid

logger = logging.getLogger(__name__)


class LossFunction(Protocol):
    def im_epsilon(self, omega): ...

    def breakpoints(self) -> Tuple[float, ...]: ...


def kk_transform(sampler: LossFunction, xi: float, rel_tol: float = Config.KK_REL_TOL,
                 max_subdivisions: int = Config.KK_MAX_SUBDIVISIONS) -> float:
    """eps(i xi) by the dispersion relation; the omega axis is split at xi and at every
    kink of the loss function, integrated linearly below the first cut, in ln(omega)
    between cuts, and with a decay transform above the last one."""
    if not xi > 0:
        raise DomainError(f"eps(i xi) needs xi > 0, got {xi}")
    xi = float(xi)
    xi2 = xi * xi
    cuts = sorted({xi, *(float(b) for b in sampler.breakpoints() if b > 0)})

    def linear(w):
        return w * sampler.im_epsilon(w) / (w * w + xi2)

    def logarithmic(s):
        w = math.exp(s)
        return w * w * sampler.im_epsilon(w) / (w * w + xi2)

    log_cuts = np.log(cuts)
    specs = (
        (linear, QuadSpec(lo=0.0, hi=cuts[0], rel_tol=rel_tol, max_subdivisions=max_subdivisions)),
        (logarithmic, QuadSpec(lo=float(log_cuts[0]), hi=float(log_cuts[-1]), breakpoints=tuple(map(float, log_cuts[1:-1])),
                               rel_tol=rel_tol, max_subdivisions=max_subdivisions)),
        (linear, QuadSpec(lo=cuts[-1], hi=math.inf, scale=cuts[-1], rel_tol=rel_tol, max_subdivisions=max_subdivisions)),
    )
    pieces = [integrate(f, spec) for f, spec in specs]
    value = 1.0 + 2.0 / math.pi * math.fsum(piece.value for piece in pieces)
    if not all(piece.converged for piece in pieces):
        error = 2.0 / math.pi * sum(piece.error for piece in pieces)
        raise NumericalError(
            f"dispersion integral at xi={xi} eV did not converge (estimate {value:.8g} +/- {error:.2e})",
            best_estimate=value, error_bound=error,
        )
    return value


def kk_trapezoid(sampler: LossFunction, xi: float, lo: float = 1e-10, hi: float = 1e8,
                 points_per_decade: int = 100) -> float:
    """Fixed log-grid trapezoid evaluation of the dispersion relation (cross-check only)."""
    if not xi > 0:
        raise DomainError(f"eps(i xi) needs xi > 0, got {xi}")
    integral = trapezoid_log_grid(lambda w: w * sampler.im_epsilon(w) / (w * w + xi * xi), lo, hi, points_per_decade)
    return 1.0 + 2.0 / math.pi * integral


def kk_transform_grid(sampler: LossFunction, xis, rel_tol: float = Config.KK_REL_TOL,
                      max_subdivisions: int = Config.KK_MAX_SUBDIVISIONS) -> np.ndarray:
    """eps(i xi) at every xi of ``xis`` from shared panels.

    Each component is divided by its trapezoid estimate before integration, so the
    common absolute tolerance acts as a relative one per node.
    """
    xis = np.asarray(xis, dtype=float)
    if not np.all(xis > 0):
        raise DomainError(f"eps(i xi) needs xi > 0, got {xis[~(xis > 0)][0]}")
    xi2 = xis * xis

    grid = np.geomspace(1e-10, 1e8, 1801)
    weighted = grid * grid * sampler.im_epsilon(grid)
    scale = trapezoid(weighted[None, :] / (grid[None, :] ** 2 + xi2[:, None]), np.log(grid), axis=1)
    scale = np.where(scale > 0, scale, 1.0)

    cuts = sorted({float(xis.min()), float(xis.max()), *(float(b) for b in sampler.breakpoints() if b > 0)})

    def linear(w):
        return w * sampler.im_epsilon(w) / (w * w + xi2) / scale

    def logarithmic(s):
        w = math.exp(s)
        return w * w * sampler.im_epsilon(w) / (w * w + xi2) / scale

    log_cuts = np.log(cuts)
    specs = (
        (linear, QuadSpec(lo=0.0, hi=cuts[0], rel_tol=rel_tol, abs_floor=rel_tol, max_subdivisions=max_subdivisions)),
        (logarithmic, QuadSpec(lo=float(log_cuts[0]), hi=float(log_cuts[-1]), breakpoints=tuple(map(float, log_cuts[1:-1])),
                               rel_tol=rel_tol, abs_floor=rel_tol, max_subdivisions=max_subdivisions)),
        (linear, QuadSpec(lo=cuts[-1], hi=math.inf, scale=cuts[-1], rel_tol=rel_tol, abs_floor=rel_tol,
                          max_subdivisions=max_subdivisions)),
    )
    pieces = [integrate_components(f, spec) for f, spec in specs]
    values = 1.0 + 2.0 / math.pi * scale * sum(piece[0] for piece in pieces)
    if not all(piece[2] for piece in pieces):
        raise NumericalError(
            f"dispersion integrals on [{xis.min():g}, {xis.max():g}] eV did not converge "
            f"(normalized error {sum(piece[1] for piece in pieces):.2e})",
        )
    return values


class PermittivityKind(str, Enum):
    TABULATED_KK = "tabulated-kk"
    ANALYTIC_DRUDE = "analytic-drude"
    IDEAL_METAL = "ideal-metal"
    CONSTANT = "constant"


class PermittivityFunction:
    """Uniform eps(i xi) evaluator. Tabulated kinds precompute a log-spaced cache
    (monotone cubic in ln xi vs ln(eps - 1)); queries outside it are evaluated directly."""

    def __init__(self, kind: PermittivityKind, *, sampler: Optional[ImEpsilonSampler] = None,
                 drude: Optional[DrudeParams] = None, value: Optional[float] = None,
                 name: Optional[str] = None, cache: bool = True,
                 cache_range: Tuple[float, float] = (Config.CACHE_XI_MIN_EV, Config.CACHE_XI_MAX_EV),
                 points_per_decade: int = Config.CACHE_POINTS_PER_DECADE,
                 rel_tol: float = Config.KK_REL_TOL):
        self.kind = PermittivityKind(kind)
        if self.kind == PermittivityKind.TABULATED_KK and sampler is None:
            raise ValueError("tabulated permittivity needs an ImEpsilonSampler")
        if self.kind == PermittivityKind.ANALYTIC_DRUDE and drude is None:
            raise ValueError("Drude permittivity needs DrudeParams")
        if self.kind == PermittivityKind.CONSTANT and (value is None or not value >= 1.0 or math.isinf(value)):
            raise ValueError(f"constant permittivity must be a finite value >= 1, got {value}")

        self._sampler = sampler
        self._drude = drude if drude is not None else (sampler.drude if sampler is not None else None)
        self._value = None if value is None else float(value)
        self._rel_tol = rel_tol
        self.name = name or self._default_name()

        self._cache_nodes: Optional[np.ndarray] = None
        self._cache_values: Optional[np.ndarray] = None
        self._spline = None
        self._log_excess = False
        if self.kind == PermittivityKind.TABULATED_KK and cache:
            self._build_cache(cache_range, points_per_decade)

    @classmethod
    def tabulated(cls, sampler: ImEpsilonSampler, name: Optional[str] = None, **kwargs) -> "PermittivityFunction":
        return cls(PermittivityKind.TABULATED_KK, sampler=sampler, name=name, **kwargs)

    @classmethod
    def drude(cls, params: DrudeParams, name: Optional[str] = None) -> "PermittivityFunction":
        return cls(PermittivityKind.ANALYTIC_DRUDE, drude=params, name=name)

    @classmethod
    def ideal(cls) -> "PermittivityFunction":
        return cls(PermittivityKind.IDEAL_METAL)

    @classmethod
    def constant(cls, value: float) -> "PermittivityFunction":
        return cls(PermittivityKind.CONSTANT, value=value)

    def _default_name(self) -> str:
        if self.kind == PermittivityKind.TABULATED_KK:
            return f"table({self._sampler.table.material_name})"
        if self.kind == PermittivityKind.ANALYTIC_DRUDE:
            return f"drude({self._drude.omega_p}eV,{self._drude.gamma}eV)"
        if self.kind == PermittivityKind.CONSTANT:
            return f"const({self._value})"
        return "ideal"

    def _build_cache(self, cache_range: Tuple[float, float], points_per_decade: int) -> None:
        lo, hi = cache_range
        count = int(round(math.log10(hi / lo) * points_per_decade)) + 1
        nodes = np.geomspace(lo, hi, count)
        values = kk_transform_grid(self._sampler, nodes, self._rel_tol)
        excess = values - 1.0
        self._log_excess = bool(np.all(excess > 0))
        ordinate = np.log(excess) if self._log_excess else values
        self._spline = PchipInterpolator(np.log(nodes), ordinate)
        self._cache_nodes = nodes
        self._cache_values = values
        nodes.flags.writeable = False
        values.flags.writeable = False
        logger.debug(f"Built eps(i xi) cache for {self.name}: {count} nodes over [{lo:g}, {hi:g}] eV")

    @property
    def is_ideal(self) -> bool:
        return self.kind == PermittivityKind.IDEAL_METAL

    @property
    def drude_params(self) -> Optional[DrudeParams]:
        return self._drude

    @property
    def sampler(self) -> Optional[ImEpsilonSampler]:
        return self._sampler

    @property
    def cache_nodes(self) -> Optional[np.ndarray]:
        return self._cache_nodes

    @property
    def cache_values(self) -> Optional[np.ndarray]:
        return self._cache_values

    def direct(self, xi: float) -> float:
        """eps(i xi) bypassing the cache."""
        if not xi > 0:
            raise DomainError(f"eps(i xi) needs xi > 0, got {xi}")
        if self.kind == PermittivityKind.IDEAL_METAL:
            return math.inf
        if self.kind == PermittivityKind.CONSTANT:
            return self._value
        if self.kind == PermittivityKind.ANALYTIC_DRUDE:
            return float(self._drude.epsilon_i_xi(float(xi)))
        return kk_transform(self._sampler, float(xi), self._rel_tol)

    def __call__(self, xi: float) -> float:
        if self._spline is not None and self._cache_nodes[0] <= xi <= self._cache_nodes[-1]:
            y = float(self._spline(np.log(xi)))
            return 1.0 + math.exp(y) if self._log_excess else y
        return self.direct(xi)

    def cache_frame(self, lo: float = Config.CACHE_XI_MIN_EV, hi: float = Config.CACHE_XI_MAX_EV,
                    points_per_decade: int = Config.CACHE_POINTS_PER_DECADE) -> pd.DataFrame:
        """(xi_eV, eps) samples: the cache itself when present, otherwise a fresh log grid."""
        if self._cache_nodes is not None:
            return pd.DataFrame({"xi_eV": self._cache_nodes, "eps": self._cache_values})
        count = int(round(math.log10(hi / lo) * points_per_decade)) + 1
        nodes = np.geomspace(lo, hi, count)
        return pd.DataFrame({"xi_eV": nodes, "eps": [self(float(xi)) for xi in nodes]})

    def dump_csv(self, destination: Union[str, Path]) -> None:
        self.cache_frame().to_csv(destination, index=False, lineterminator="\n")

    def __repr__(self) -> str:
        return f"PermittivityFunction(kind={self.kind.value}, name={self.name!r})"


def epsilon_i_xi(f: PermittivityFunction, xi: float) -> float:
    return f(xi)
