import logging
import os

class Config:
    # Imaginary-frequency integration window (eV)
    XI_MIN_EV = 1e-6
    XI_MAX_EV = 1e4
    CHECK_XI_WINDOW = True
    XI_WINDOW_SENSITIVITY = 0.005

    # Quadrature settings
    DEFAULT_TOL = 1e-4
    MIN_TOL = 1e-8
    MAX_TOL = 1e-2
    INNER_TOL_FACTOR = 0.1
    MAX_SUBDIVISIONS = 2000
    INNER_MAX_SUBDIVISIONS = 400
    QUAD_ABS_FLOOR = 1e-300
    EXP_UNDERFLOW = 700.0

    # Dispersion relation and epsilon(i xi) cache
    KK_REL_TOL = 1e-5
    KK_MAX_SUBDIVISIONS = 4000
    CACHE_XI_MIN_EV = 1e-6
    CACHE_XI_MAX_EV = 1e4
    CACHE_POINTS_PER_DECADE = 64

    # Optical data extrapolation
    HIGH_TAIL_EXPONENT = 3.0
    CROSSOVER_TOLERANCE = 0.05

    # Builtin Drude materials: plasma frequency, relaxation frequency, table crossover (eV)
    BUILTIN_DRUDE = {
        "al": {"omega_p": 12.5, "gamma": 0.063, "crossover": 0.04},
        "au": {"omega_p": 9.0, "gamma": 0.035, "crossover": 0.1},
    }

    # Validity warnings
    PFT_MIN_RATIO = 100.0
    COATING_MIN_THICKNESS_NM = 30.0
    THERMAL_WARNING_A_NM = 1000.0
    SERIES_MAX_DELTA_RATIO = 0.2

    # van der Waals analysis
    MIN_VDW_SEPARATION_NM = 0.5
    DEFAULT_FIT_WINDOW_NM = (0.5, 2.0)
    DEFAULT_SPHERE_RADIUS_UM = 100.0
    DEFAULT_THREADS = os.cpu_count() or 1

    # Logging settings
    LOG_LEVEL = getattr(logging, os.environ.get("CASIMIR_LOG_LEVEL", "INFO").upper(), logging.INFO)
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
