import math
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.core.units import NM, UM, HBAR_C_EV_NM, plasma_wavelength_nm


class OpticalEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    omega: float = Field(..., gt=0, description="photon energy, eV")
    n: float = Field(..., ge=0)
    k: float = Field(..., ge=0)


class OpticalTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    material_name: str = "unnamed"
    entries: Tuple[OpticalEntry, ...] = Field(..., min_length=2)

    @field_validator("entries")
    @classmethod
    def strictly_increasing(cls, v):
        for previous, current in zip(v, v[1:]):
            if current.omega <= previous.omega:
                raise ValueError(f"photon energies must be strictly increasing ({previous.omega} eV then {current.omega} eV)")
        return v

    @cached_property
    def omega(self) -> np.ndarray:
        return np.array([entry.omega for entry in self.entries])

    @cached_property
    def im_epsilon(self) -> np.ndarray:
        """Im eps = 2nk at every node."""
        return np.array([2.0 * entry.n * entry.k for entry in self.entries])


class DrudeParams(BaseModel):
    """Free-electron model; eps(i xi) = 1 + omega_p^2 / (xi (xi + gamma))."""
    model_config = ConfigDict(frozen=True)

    omega_p: float = Field(..., gt=0, description="plasma frequency, eV")
    gamma: float = Field(0.0, ge=0, description="relaxation frequency, eV")

    @property
    def plasma_wavelength_nm(self) -> float:
        return plasma_wavelength_nm(self.omega_p)

    @property
    def penetration_depth_nm(self) -> float:
        return HBAR_C_EV_NM / self.omega_p

    def epsilon_i_xi(self, xi):
        return 1.0 + self.omega_p ** 2 / (xi * (xi + self.gamma))

    def epsilon(self, omega):
        """Complex eps(omega) on the real axis."""
        omega = np.asarray(omega, dtype=float)
        return 1.0 - self.omega_p ** 2 / (omega * (omega + 1j * self.gamma))

    def im_epsilon(self, omega):
        omega = np.asarray(omega, dtype=float)
        return self.omega_p ** 2 * self.gamma / (omega * (omega ** 2 + self.gamma ** 2))

    def breakpoints(self) -> Tuple[float, ...]:
        return (self.gamma,) if self.gamma > 0 else ()


class GeometryKind(str, Enum):
    PLATE_PLATE = "ss"
    SPHERE_PLATE = "sl"


class Geometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: GeometryKind
    separation_a_nm: float = Field(..., gt=0)
    sphere_radius_um: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def radius_matches_kind(self):
        if self.kind == GeometryKind.SPHERE_PLATE and self.sphere_radius_um is None:
            raise ValueError("sphere-plate geometry needs a sphere radius")
        if self.kind == GeometryKind.PLATE_PLATE and self.sphere_radius_um is not None:
            raise ValueError("plate-plate geometry takes no sphere radius")
        return self

    @property
    def separation_m(self) -> float:
        return self.separation_a_nm * NM

    @property
    def radius_m(self) -> float:
        return self.sphere_radius_um * UM

    @property
    def radius_to_separation(self) -> float:
        return self.sphere_radius_um * 1e3 / self.separation_a_nm

    def at(self, a_nm: float) -> "Geometry":
        return self.model_copy(update={"separation_a_nm": float(a_nm)})


class ForceResult(BaseModel):
    geometry: Geometry
    value: float
    ideal_value: float
    correction_factor: float
    quad_error: float
    converged: bool = True
    warnings: List[str] = Field(default_factory=list)


class PenetrationDepth(BaseModel):
    model_config = ConfigDict(frozen=True)

    delta0_nm: float = Field(..., gt=0)

    @classmethod
    def from_plasma_frequency(cls, omega_p_ev: float) -> "PenetrationDepth":
        return cls(delta0_nm=HBAR_C_EV_NM / omega_p_ev)

    @classmethod
    def from_plasma_wavelength(cls, lambda_p_nm: float) -> "PenetrationDepth":
        return cls(delta0_nm=lambda_p_nm / (2.0 * math.pi))

    @property
    def plasma_wavelength_nm(self) -> float:
        return 2.0 * math.pi * self.delta0_nm


class ScanPoint(BaseModel):
    a_nm: float = Field(..., gt=0)
    force: float
    correction_factor: float
    quad_error: float
    converged: bool = True
    warnings: List[str] = Field(default_factory=list)

    @field_validator("force")
    @classmethod
    def finite_force(cls, v):
        if not math.isfinite(v):
            raise ValueError("force must be finite")
        return v


class ScanResult(BaseModel):
    geometry: GeometryKind
    sphere_radius_um: Optional[float] = None
    stack: str = ""
    points: List[ScanPoint]
    # separations dropped because no estimate at all was available
    warnings: List[str] = Field(default_factory=list)

    @field_validator("points")
    @classmethod
    def increasing_separations(cls, v):
        for previous, current in zip(v, v[1:]):
            if current.a_nm <= previous.a_nm:
                raise ValueError(f"separations must be strictly increasing ({previous.a_nm} nm then {current.a_nm} nm)")
        return v

    @property
    def separations(self) -> np.ndarray:
        return np.array([point.a_nm for point in self.points])

    @property
    def forces(self) -> np.ndarray:
        return np.array([point.force for point in self.points])


class HamakerFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    geometry: GeometryKind
    H: float = Field(..., gt=0, description="Hamaker constant, J")
    H_sigma: float = Field(..., ge=0)
    n: float
    n_sigma: float = Field(..., ge=0)
    fit_window: Tuple[float, float]
    n_points: int = Field(..., ge=3)

    @field_validator("fit_window")
    @classmethod
    def ordered_window(cls, v):
        if v[0] >= v[1]:
            raise ValueError(f"fit window ({v[0]}, {v[1]}) is empty")
        return v


class CombinedHamaker(BaseModel):
    H: float
    half_width: float
    H_rounded: float
    half_width_rounded: float
    warnings: List[str] = Field(default_factory=list)


class ReferenceCell(BaseModel):
    """One published correction factor with its perturbation-theory counterpart."""
    model_config = ConfigDict(frozen=True)

    geometry: GeometryKind
    metal: str
    a_um: float = Field(..., gt=0)
    reference: float
    perturbation: float
    literature: Optional[float] = None


class Table1Entry(BaseModel):
    geometry: GeometryKind
    metal: str
    a_um: float
    computed: Optional[float] = None
    reference: float
    perturbation: Optional[float] = None
    perturbation_reference: float
    converged: bool = True
    warnings: List[str] = Field(default_factory=list)


class DrudeSensitivity(BaseModel):
    geometry: GeometryKind
    a_nm: float
    base: DrudeParams
    alternative: DrudeParams
    base_factor: float
    alternative_factor: float
    relative_change: float


class QuadSpec(BaseModel):
    """Domain [lo, hi]; with ``scale`` set the engine integrates in
    u = (x - lo) / (x - lo + scale), which also admits hi = inf."""
    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float
    scale: Optional[float] = Field(None, gt=0)
    breakpoints: Tuple[float, ...] = ()
    rel_tol: float = Field(1e-10, gt=0)
    abs_floor: float = Field(1e-300, ge=0)
    max_subdivisions: int = Field(2000, ge=1)

    @model_validator(mode="after")
    def valid_domain(self):
        if math.isnan(self.lo) or math.isnan(self.hi) or not math.isfinite(self.lo):
            raise ValueError("lower limit must be finite")
        if self.hi < self.lo:
            raise ValueError(f"empty domain [{self.lo}, {self.hi}]")
        if math.isinf(self.hi) and self.scale is None:
            raise ValueError("a semi-infinite domain needs a transform scale")
        return self


class QuadResult(BaseModel):
    value: float
    error: float
    converged: bool
    n_panels: int
    n_evaluations: int


class Command(str, Enum):
    EPS = "eps"
    FORCE = "force"
    SCAN = "scan"
    HAMAKER = "hamaker"
    TABLE1 = "table1"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class RunConfig(BaseModel):
    command: Command
    geometry: GeometryKind = GeometryKind.PLATE_PLATE
    a_nm: Optional[float] = Field(None, gt=0)
    sphere_radius_um: Optional[float] = Field(None, gt=0)
    material: str = "drude:al"
    coating: Optional[str] = None
    thickness_d_nm: Optional[float] = Field(None, gt=0)
    grid: Optional[str] = None
    tol: float = Field(1e-4, ge=1e-8, le=1e-2)
    xi_ev: Optional[float] = Field(None, gt=0)
    fit_window_nm: Tuple[float, float] = (0.5, 2.0)
    from_csv: List[Path] = Field(default_factory=list)
    al_material: str = "drude:al"
    au_material: str = "drude:au"
    out: Optional[Path] = None
    format: OutputFormat = OutputFormat.CSV
    threads: int = Field(1, ge=1)

    @model_validator(mode="after")
    def consistent(self):
        if (self.coating is None) != (self.thickness_d_nm is None):
            raise ValueError("a coating needs a thickness (--d) and vice versa")
        if self.command == Command.FORCE and self.a_nm is None:
            raise ValueError("force needs a separation (--a)")
        for path in self.from_csv:
            if not path.is_file():
                raise ValueError(f"file not found: {path}")
        if self.fit_window_nm[0] >= self.fit_window_nm[1]:
            raise ValueError(f"fit window {self.fit_window_nm} is empty")
        return self
