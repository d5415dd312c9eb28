DEFAULT_SEED = 0
FORMAT_VERSION = 1

# Targets and capacity
TARGET_MAGNITUDE = 0.9
CONSERVATIVE_THETA = 1.0

# Sparse autoencoder
KL_RHO = 0.05
KL_CLAMP = 1e-12
SAE_HIDDEN = 196
SPARSITY_EPS = 0.01

# Data preparation
MISSING_TOKEN = "?"
IMPUTE_NEIGHBORS = 5
CV_FOLDS = 5
CV_REPEATS = 10
MNIST_TRAIN_SIZE = 10_000
MNIST_TEST_SIZE = 2_000

# Gradient checking
GRADCHECK_STEP = 1e-5
GRADCHECK_SUBSET = 200
GRADCHECK_TOLERANCE = 1e-5
RELU_KINK = 1e-4

# Grids (decade steps)
C_GRID = [10.0**p for p in range(-3, 2)]
D_GRID = [10.0**p for p in range(-9, -2)]
FNN_WEIGHT_DECAY_GRID = [10.0**p for p in range(-4, 1)]
FNN_LAST_LAYER_D_GRID = [10.0**p for p in range(-9, -2)]
HIDDEN_WIDTH_GRID = [8, 16, 32]

# Reporting
P_VALUE_FLOOR = 1e-12
SIGNIFICANCE_LEVEL = 0.05
WILCOXON_EXACT_MAX_N = 12
WILCOXON_MIN_N = 5
SHOW_PROGRESS = True

# CLI exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_DIVERGED = 3
