DEFAULT_ALPHAS = (1.5, 2.0, 3.0)
SHANNON_ONLY_ALPHAS = (0.5, 1.0)
ORDERING_ALPHAS = (1.1, 1.5, 2.0, 3.0, 5.0)
DILATION_LAMBDAS = (0.5, 2.0, 10.0)

DEFAULT_PRESETS = (
    "abelian:1",
    "abelian:2",
    "abelian:3",
    "anisotropic:1,2@max",
    "heisenberg",
)
DEFAULT_FUNCTIONS = (
    "extremizer",
    "kos-profile",
    "gaussian:c=1",
    "gaussian:c=3",
    "stretched:c=1,beta=1",
    "bump",
    "mixture",
    "perturbed:eps=0.1",
)

SIGNIFICANT_DIGITS = 12
RECORD_CSV_HEADER = (
    "inequality",
    "function_id",
    "alpha",
    "deficit",
    "error_estimate",
    "passed",
)
SCAN_CSV_HEADER = (
    "preset",
    "function_id",
    "alpha",
    "inequality",
    "lhs",
    "rhs",
    "deficit",
    "error_estimate",
    "passed",
    "status",
)
CONSTANTS_CSV_HEADER = (
    "preset",
    "q",
    "alpha",
    "sphere",
    "a",
    "c",
    "b",
    "shannon_scale",
    "ratio",
)
SPHERE_CSV_HEADER = (
    "preset",
    "q",
    "norm",
    "analytic",
    "ball_volume_mc",
    "ball_volume_std_error",
    "gauss_weight_mc",
    "gauss_weight_std_error",
    "agreement",
)

EXIT_OK = 0
EXIT_FAILED_RECORDS = 1
EXIT_CONFIGURATION = 2
EXIT_BUDGET = 3
