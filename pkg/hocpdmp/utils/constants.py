"""
Numeric defaults for hocpdmp
"""

# Integrator
DEFAULT_STEP = 1e-3
DEFAULT_QUAD_STEP = 1e-2
DEFAULT_MAX_TIME = 1e3
DEFAULT_TRUNC_EPS = 1e-8

# Drift Jacobian fallback: central differences, step FD_DRIFT_REL * max(1, |x|)
FD_DRIFT_REL = 1e-6

# Finite-difference oracles
FD_ORACLE_STEP = 1e-5
FD_JACOBIAN_TOL = 1e-4

# Kappa / inverse maps
KAPPA_BRACKET_START = 1.0
KAPPA_XTOL = 1e-12
BISECTION_MAX_ITER = 200

# Estimators
DEFAULT_BATCHES = 30
DEFAULT_BURN_IN = 0.1
DEFAULT_STRIDE = 1.0
SE_MULTIPLIER = 3.0
DEFAULT_HORIZON = 2000.0
DEFAULT_MEASURE_SAMPLES = 10000

# Goodness certificates
GOOD_REL_THRESHOLD = 1e-8
GOOD_SAMPLE_BOX = 5.0
GOOD_SAMPLE_COUNT = 1000
MAX_ENUMERATION_N = 6

# Quadrature for C(f_i, nu)
COAREA_QUAD_EPSABS = 1e-10
COAREA_SURVIVAL_NODES = 129

# Artifacts
CSV_SIGNIFICANT_DIGITS = 17

# Validation sampling
VALIDATION_SAMPLES = 200
VALIDATION_BOX = 10.0
NON_INTERACTING_KMAX = 2

# Exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
