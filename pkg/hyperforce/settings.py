import os
import pathlib

DEFAULT_HYPERFORCE_LOG_LEVEL = os.getenv('HYPERFORCE_LOG_LEVEL', 'INFO')
DEFAULT_OUTPUT_DIR = 'hyperforce-out'
DEFAULT_REPORT_FILENAME = 'report.json'
DEFAULT_PROFILES_FILENAME = 'profiles.csv'
DEFAULT_SCENARIOS_DIR = pathlib.Path(__file__).parent / 'definitions' / 'scenarios'
DEFAULT_SCENARIO_SCHEMA_VERSION = 1
DEFAULT_WORKERS = 4
DEFAULT_SEED = 20240101

DEFAULT_MOMENTUM_ORDER = 32
DEFAULT_POSITION_ORDER = 16
DEFAULT_MAX_DEPTH = 12
DEFAULT_MAX_PANELS = 2048
DEFAULT_QUADRATURE_TOL_ABS = 1e-10
DEFAULT_QUADRATURE_TOL_REL = 1e-8
DEFAULT_TAIL_THRESHOLD = 40.0

DEFAULT_VERDICT_TOL_ABS = 1e-8
DEFAULT_VERDICT_TOL_REL = 1e-6
DEFAULT_ERROR_MULTIPLIER = 3.0

DEFAULT_MC_SAMPLES = 20000
DEFAULT_MC_BURN_IN = 2000
DEFAULT_MC_CHAINS = 16
DEFAULT_MC_ACCEPTANCE_WINDOW = (0.1, 0.9)

DEFAULT_FD_RELATIVE_STEP = 1e-5
DEFAULT_GRADIENT_CHECK_STEP = 1e-6
DEFAULT_DISTRIBUTION_FD_STEP = 1e-3
DEFAULT_T_DERIVATIVE_SCALE = 1e-3

DEFAULT_ADMISSIBILITY_GRID = 41
DEFAULT_ADMISSIBILITY_GRID_HIGH_DIMENSION = 11
DEFAULT_ADMISSIBILITY_SAFETY = 1.05
DEFAULT_INVERSION_TOL = 1e-12
DEFAULT_INVERSION_MAX_ITERATIONS = 200
DEFAULT_GEOMETRY_TOL_ABS = 1e-8
DEFAULT_EQUIVARIANCE_TOL_ABS = 1e-10

DEFAULT_SCHWARTZ_SHELLS = 10
DEFAULT_SCHWARTZ_DIRECTIONS = 8
DEFAULT_SCHWARTZ_GROWTH = 1.1
DEFAULT_SCHWARTZ_ORDERS = ((0, 0), (2, 0), (2, 1), (4, 2))

DEFAULT_SITE_COUNT = 5
DEFAULT_WITNESS_COUNT = 5
DEFAULT_INVARIANCE_FRACTION = 0.25
DEFAULT_REGROUPING_TOL = 1e-12
