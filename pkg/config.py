"""
Configuration settings for the Churn Lab application.
"""

import os

# Application configuration
APP_NAME = "Churn Lab"
APP_VERSION = "1.0.0"

# Output and logging configuration
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
OUTPUT_DIR = os.environ.get("CHURNLAB_OUTPUT_DIR", os.path.join(BASE_DIR, "runs"))
LOGS_DIR = os.environ.get("CHURNLAB_LOG_DIR", os.path.join(BASE_DIR, "logs"))
LOG_LEVEL = os.environ.get("CHURNLAB_LOG_LEVEL", "INFO")

# Network and optimiser defaults
HIDDEN_DIMS = (256, 256)
LEARNING_RATE = 1e-3
WEIGHT_DECAY = 1e-4
CLIP_NORM = 1.0
BATCH_SIZE = 64
EPOCHS = 30
MC_DROPOUT_P = 0.2
MC_PASSES = 20
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
PROB_CLAMP = 1e-12

# Method defaults
ENSEMBLE_K = 5
LAMBDA_GRID = (1.0, 3.0, 10.0, 30.0, 100.0, 300.0)
REGRESSION_LAMBDA_GRID = (1.0, 3.0)
LAMBDA_TOLERANCE = 0.02
REGRESSION_MAE_TOLERANCE = 0.04

# Measurement protocol defaults
N_SEEDS = 10
CANONICAL_SEEDS = (99, 7, 42)
TEST_FRAC = 0.2
CI_RESAMPLES = 10000
CI_LEVEL = 0.95

# Majority-class filter thresholds (percentage points / test-set sizes)
FILTER_PASS_GAP_PP = 5.0
FILTER_PASS_MIN_TEST = 60
FILTER_BORDERLINE_GAP_PP = 3.0
FILTER_BORDERLINE_MIN_TEST = 50

# Bayesian optimisation defaults
BO_TRIALS = 50
BO_INIT_TRIALS = 5
BO_FOLDS = 3
BO_FOLD_SEED = 99
BO_DELTA = 0.02
BO_PENALTY = 100.0
BO_BOUNDS = (1e-3, 1e4)
BO_GRID_POINTS = 512
GP_LENGTHSCALE = 1.0
GP_SIGNAL_VARIANCE = 1.0
GP_NOISE = 1e-4
GP_MAX_JITTER = 1e-2
TRAJECTORY_BUDGET = 10
TRAJECTORY_INIT_SIZE = 50
TRAJECTORY_SEED_STRIDE = 10 ** 6

# Triage defaults
TRIAGE_SUBSET_SIZES = (2, 3, 5, 10)
TRIAGE_SUBSETS = 30
TRIAGE_REVIEW_FRAC = 0.3
TOPK = 10
