"""Tabulated n, k data: CSV ingestion and an Im eps(omega) sampler valid for all omega > 0.

CSV schema: UTF-8, header ``energy_eV,n,k``, one sample per line, ``#`` lines ignored.
"""
import io
import logging
import math
from pathlib import Path
from typing import BinaryIO, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from config import Config
from src.core.exceptions import DomainError, OpticalDataError
from src.core.models import DrudeParams, OpticalEntry, OpticalTable

logger = logging.getLogger(__name__)

COLUMNS = ("energy_eV", "n", "k")


def _decode(source: Union[BinaryIO, bytes, str]) -> str:
    raw = source.read() if hasattr(source, "read") else source
    if isinstance(raw, bytes):
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise OpticalDataError(f"optical data is not UTF-8: {e}") from e
    return raw


def parse_optical_csv(source: Union[BinaryIO, bytes, str], material_name: str = "unnamed") -> OpticalTable:
    """Parse ``energy_eV,n,k`` rows into a validated table sorted by energy."""
    lines = _decode(source).splitlines()
    numbered = [(number, line) for number, line in enumerate(lines, start=1)
                if line.strip() and not line.lstrip().startswith("#")]
    if not numbered:
        raise OpticalDataError("no header line found")

    header_line, header = numbered[0]
    if tuple(field.strip() for field in header.split(",")) != COLUMNS:
        raise OpticalDataError(f"expected header '{','.join(COLUMNS)}', got '{header.strip()}'", line=header_line)

    body = numbered[1:]
    if len(body) < 2:
        raise OpticalDataError(f"an optical table needs at least 2 rows, got {len(body)}")
    for number, line in body:
        if line.count(",") != len(COLUMNS) - 1:
            raise OpticalDataError(f"expected {len(COLUMNS)} comma-separated fields, got '{line.strip()}'", line=number)

    frame = pd.read_csv(
        io.StringIO("\n".join(line for _, line in body)),
        header=None, names=list(COLUMNS), dtype=str, skip_blank_lines=False,
    )
    frame["line"] = [number for number, _ in body]
    for column in COLUMNS:
        frame[column] = pd.to_numeric(frame[column].str.strip(), errors="coerce")

    malformed = frame[frame[list(COLUMNS)].isna().any(axis=1) | ~np.isfinite(frame[list(COLUMNS)]).all(axis=1)]
    if not malformed.empty:
        number = int(malformed["line"].iloc[0])
        raise OpticalDataError("malformed row: every field must be a finite decimal number", line=number)
    for column, bound in (("energy_eV", "positive"), ("n", "non-negative"), ("k", "non-negative")):
        bad = frame[frame[column] <= 0] if bound == "positive" else frame[frame[column] < 0]
        if not bad.empty:
            number = int(bad["line"].iloc[0])
            raise OpticalDataError(f"{column} must be {bound}, got {bad[column].iloc[0]}", line=number)

    frame = frame.sort_values("energy_eV", kind="stable").reset_index(drop=True)
    duplicated = frame[frame["energy_eV"].duplicated()]
    if not duplicated.empty:
        number = int(duplicated["line"].iloc[0])
        raise OpticalDataError(f"energy {duplicated['energy_eV'].iloc[0]} eV is not strictly increasing (repeated)", line=number)

    try:
        table = OpticalTable(
            material_name=material_name,
            entries=tuple(OpticalEntry(omega=row.energy_eV, n=row.n, k=row.k) for row in frame.itertuples()),
        )
    except ValidationError as e:
        raise OpticalDataError(f"invalid optical table: {e.errors()[0]['msg']}") from e
    logger.info(f"Parsed optical table '{material_name}': {len(table.entries)} rows, "
                f"{table.omega[0]:.4g}-{table.omega[-1]:.4g} eV")
    return table


def load_optical_csv(path: Union[str, Path], material_name: Optional[str] = None) -> OpticalTable:
    path = Path(path)
    if not path.is_file():
        raise OpticalDataError(f"optical data file not found: {path}")
    with path.open("rb") as source:
        return parse_optical_csv(source, material_name or path.stem)


def write_optical_csv(table: OpticalTable, destination: Union[str, Path, io.TextIOBase]) -> None:
    frame = pd.DataFrame(
        {"energy_eV": table.omega, "n": [e.n for e in table.entries], "k": [e.k for e in table.entries]}
    )
    frame.to_csv(destination, index=False, lineterminator="\n")


def drude_table(params: DrudeParams, lo: float = 1e-2, hi: float = 1e4, points_per_decade: int = 50,
                material_name: str = "drude") -> OpticalTable:
    """Synthetic table with n + ik = sqrt(eps_Drude(omega)) on a log grid, so 2nk is the Drude loss."""
    count = int(round(math.log10(hi / lo) * points_per_decade)) + 1
    omega = np.geomspace(lo, hi, count)
    index = np.sqrt(params.epsilon(omega))
    entries = tuple(
        OpticalEntry(omega=float(w), n=float(max(m.real, 0.0)), k=float(max(m.imag, 0.0)))
        for w, m in zip(omega, index)
    )
    return OpticalTable(material_name=material_name, entries=entries)


class ImEpsilonSampler:
    """Im eps(omega) from a table, Drude-extrapolated below ``crossover`` and decaying as
    omega^(-high_tail) above the last node. Immutable once built."""

    def __init__(self, table: OpticalTable, drude: DrudeParams, crossover: Optional[float] = None,
                 high_tail: float = Config.HIGH_TAIL_EXPONENT,
                 crossover_tolerance: float = Config.CROSSOVER_TOLERANCE):
        omega = table.omega
        crossover = float(omega[0]) if crossover is None else float(crossover)
        if not omega[0] <= crossover < omega[-1]:
            raise OpticalDataError(
                f"crossover {crossover} eV must lie inside the table range [{omega[0]}, {omega[-1]}) eV"
            )
        if high_tail <= 0:
            raise OpticalDataError(f"high-frequency tail exponent must be positive, got {high_tail}")

        self._table = table
        self._drude = drude
        self._crossover = crossover
        self._high_tail = float(high_tail)
        self._omega = omega.copy()
        self._log_omega = np.log(omega)
        self._values = table.im_epsilon.copy()
        with np.errstate(divide="ignore"):
            self._log_values = np.log(self._values)
        for array in (self._omega, self._log_omega, self._values, self._log_values):
            array.flags.writeable = False

        tabulated = float(self._interpolate(np.array([crossover]))[0])
        extrapolated = float(drude.im_epsilon(crossover))
        scale = max(tabulated, extrapolated)
        self._mismatch = 0.0 if scale == 0 else abs(extrapolated - tabulated) / scale
        if self._mismatch > crossover_tolerance:
            raise OpticalDataError(
                f"Drude extrapolation (Im eps = {extrapolated:.4g}) and table ({tabulated:.4g}) differ by "
                f"{self._mismatch:.1%} at the {crossover} eV crossover (allowed {crossover_tolerance:.0%})"
            )
        logger.info(f"ImEpsilonSampler for '{table.material_name}': crossover={crossover} eV, "
                    f"mismatch={self._mismatch:.2%}, high_tail={self._high_tail}")

    @property
    def table(self) -> OpticalTable:
        return self._table

    @property
    def drude(self) -> DrudeParams:
        return self._drude

    @property
    def crossover(self) -> float:
        return self._crossover

    @property
    def high_tail(self) -> float:
        return self._high_tail

    @property
    def mismatch(self) -> float:
        return self._mismatch

    def breakpoints(self) -> Tuple[float, ...]:
        """Kinks of the sampled function: the crossover and every table node above it."""
        nodes = self._omega[self._omega > self._crossover]
        return (self._crossover, *map(float, nodes))

    def _interpolate(self, w: np.ndarray) -> np.ndarray:
        i = np.clip(np.searchsorted(self._omega, w, side="right") - 1, 0, self._omega.size - 2)
        t = (np.log(w) - self._log_omega[i]) / (self._log_omega[i + 1] - self._log_omega[i])
        y0, y1 = self._values[i], self._values[i + 1]
        with np.errstate(invalid="ignore", over="ignore"):
            log_log = np.exp(self._log_values[i] + t * (self._log_values[i + 1] - self._log_values[i]))
        # an interval touching Im eps = 0 falls back to linear-in-log(omega)
        return np.where((y0 > 0) & (y1 > 0), log_log, y0 + t * (y1 - y0))

    def im_epsilon(self, omega):
        scalar = np.ndim(omega) == 0
        w = np.atleast_1d(np.asarray(omega, dtype=float))
        if not np.all(w > 0):
            raise DomainError(f"Im eps(omega) needs omega > 0, got {w[~(w > 0)][0]}")
        out = np.empty_like(w)
        below = w < self._crossover
        above = w > self._omega[-1]
        inside = ~(below | above)
        if below.any():
            out[below] = self._drude.im_epsilon(w[below])
        if above.any():
            out[above] = self._values[-1] * (w[above] / self._omega[-1]) ** (-self._high_tail)
        if inside.any():
            out[inside] = self._interpolate(w[inside])
        return float(out[0]) if scalar else out


def im_epsilon(sampler: ImEpsilonSampler, omega):
    return sampler.im_epsilon(omega)
