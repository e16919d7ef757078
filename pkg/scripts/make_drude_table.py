"""Write a synthetic n,k table whose loss is exactly the Drude model.

    python -m scripts.make_drude_table --metal al --out al_drude.csv
    python -m scripts.make_drude_table --omega-p 9eV --gamma 35meV --lo 10meV --hi 10keV --out au.csv
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from config import Config
from src.core.exceptions import CasimirError
from src.core.models import DrudeParams
from src.core.units import parse_energy_ev
from src.services.materials import builtin_drude
from src.services.optical_data import drude_table, write_optical_csv

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Write a Drude-model n,k table (energy_eV,n,k).")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--metal", choices=sorted(Config.BUILTIN_DRUDE), help="builtin Drude parameters")
    source.add_argument("--omega-p", help="plasma frequency, e.g. 12.5eV")
    parser.add_argument("--gamma", default="0eV", help="relaxation frequency (with --omega-p)")
    parser.add_argument("--lo", default="10meV", help="lowest photon energy")
    parser.add_argument("--hi", default="10keV", help="highest photon energy")
    parser.add_argument("--points-per-decade", type=int, default=50)
    parser.add_argument("--out", required=True, help="destination CSV")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=Config.LOG_LEVEL, format=Config.LOG_FORMAT, datefmt=Config.LOG_DATE_FORMAT)
    args = build_parser().parse_args(argv)
    try:
        if args.metal:
            params, name = builtin_drude(args.metal), args.metal
        else:
            params = DrudeParams(omega_p=parse_energy_ev(args.omega_p), gamma=parse_energy_ev(args.gamma))
            name = "drude"
        table = drude_table(params, parse_energy_ev(args.lo), parse_energy_ev(args.hi),
                            args.points_per_decade, material_name=name)
        write_optical_csv(table, args.out)
    except (CasimirError, ValueError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 2
    logger.info(f"Wrote {len(table.entries)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
