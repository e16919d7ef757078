"""Convert handbook-style n,k listings into the ``energy_eV,n,k`` schema.

The input is any delimited text with three numeric columns (abscissa, n, k);
the abscissa may be a photon energy or a wavelength. Rows are re-sorted by energy.

    python -m scripts.convert_optical_data palik_al.txt al.csv --x-unit um
"""
import argparse
import io
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from config import Config
from src.core.exceptions import CasimirError, ConfigError
from src.core.units import HBAR_C_EV_NM
from src.services.optical_data import COLUMNS, load_optical_csv

logger = logging.getLogger(__name__)

# abscissa unit -> (is wavelength, factor to eV or nm)
UNITS = {"eV": (False, 1.0), "meV": (False, 1e-3), "nm": (True, 1.0), "um": (True, 1e3), "A": (True, 0.1)}


def to_energy_ev(x: np.ndarray, unit: str) -> np.ndarray:
    if unit not in UNITS:
        raise ConfigError(f"unknown abscissa unit '{unit}' (use {', '.join(UNITS)})")
    wavelength, factor = UNITS[unit]
    x = np.asarray(x, dtype=float) * factor
    return 2.0 * np.pi * HBAR_C_EV_NM / x if wavelength else x


def convert(source: Path, destination: Path, unit: str = "eV", delimiter: Optional[str] = None,
            skiprows: int = 0) -> pd.DataFrame:
    """Read ``source``, convert the abscissa to eV and write a validated CSV to ``destination``."""
    if not Path(source).is_file():
        raise ConfigError(f"input file not found: {source}")
    lines = [line.strip() for line in Path(source).read_text(encoding="utf-8", errors="replace").splitlines()[skiprows:]]
    body = "\n".join(line for line in lines if line and not line.startswith("#"))
    frame = pd.read_csv(io.StringIO(body), sep=delimiter or r"[\s,;]+", engine="python", header=None)
    if frame.shape[1] < 3:
        raise ConfigError(f"{source}: expected at least 3 columns, got {frame.shape[1]}")
    frame = frame.iloc[:, :3].set_axis(list(COLUMNS), axis=1)
    frame = frame.apply(pd.to_numeric, errors="coerce").dropna()
    if frame.empty:
        raise ConfigError(f"{source}: no numeric rows found")
    frame["energy_eV"] = to_energy_ev(frame["energy_eV"].to_numpy(), unit)
    frame = frame.sort_values("energy_eV", kind="stable").drop_duplicates("energy_eV")
    frame.to_csv(destination, index=False, lineterminator="\n")
    load_optical_csv(destination)
    logger.info(f"Converted {len(frame)} rows: {source} -> {destination}")
    return frame


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=Config.LOG_LEVEL, format=Config.LOG_FORMAT, datefmt=Config.LOG_DATE_FORMAT)
    parser = argparse.ArgumentParser(description="Convert n,k data to the energy_eV,n,k CSV schema.")
    parser.add_argument("source", type=Path)
    parser.add_argument("destination", type=Path)
    parser.add_argument("--x-unit", default="eV", choices=sorted(UNITS), help="unit of the first column")
    parser.add_argument("--delimiter", help="column separator (default: whitespace, comma or semicolon)")
    parser.add_argument("--skiprows", type=int, default=0, help="leading lines to skip")
    args = parser.parse_args(argv)
    try:
        convert(args.source, args.destination, args.x_unit, args.delimiter, args.skiprows)
    except CasimirError as e:
        sys.stderr.write(f"error: {e}\n")
        return 2 if isinstance(e, ConfigError) else 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
