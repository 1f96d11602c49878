ARTIFACT_NAME = "thermaleq"
ARTIFACT_VERSION = "1.0.0"

# Product space
MAX_DIMENSION = 4096
DEFAULT_LEVEL_ENERGIES = (0.0, 1.0)

# Density-matrix invariants
TRACE_TOL = 1e-10
HERMITICITY_TOL = 1e-10
POSITIVITY_TOL = 1e-10

# Hamiltonian / eigensolver
HAMILTONIAN_HERMITICITY_RTOL = 1e-12
COUPLING_NORM_TOL = 1e-12
DEGENERACY_RTOL = 1e-9

# Thermal weights
MAX_BETA = 1e6
PROBABILITY_EDGE_TOL = 1e-14    # P0 this close to 0 or 1 has no finite effective beta

# Time-average oracle
TIME_AVERAGE_HORIZON_FACTOR = 1e4
TIME_AVERAGE_MAX_SAMPLES = 4_000_000
TIME_AVERAGE_CHUNK = 4096

# Residue analysis
POLE_COLLISION_TOL = 1e-10
MODEL_POLE_TOL = 1e-8
RESIDUE_CIRCLE_POINTS = 64
RESIDUE_AGREEMENT_RTOL = 1e-8
RESIDUE_MAX_HALVINGS = 20
RESIDUE_ZERO_TOL = 1e-14
POLE_ZERO_TOL = 1e-10
SYMMETRY_CANCEL_RTOL = 1e-8
DEFAULT_REFERENCE_BETA = 1.0

# Oracle check
ORACLE_MAX_DIMENSION = 64

# Runtime
THREADS_ENV_VAR = "THERMALEQ_THREADS"
SLOW_OPERATION_S = 5.0

SIMULATION_PARAMETERS = {
    'max_dimension': MAX_DIMENSION,
    'degeneracy_rtol': DEGENERACY_RTOL,
    'max_beta': MAX_BETA,
    'time_average_horizon_factor': TIME_AVERAGE_HORIZON_FACTOR,
    'time_average_max_samples': TIME_AVERAGE_MAX_SAMPLES,
    'reference_beta': DEFAULT_REFERENCE_BETA,
    'density_tolerances': (TRACE_TOL, HERMITICITY_TOL, POSITIVITY_TOL),
}
