"""
QSDA: Central Configuration
All numerical tolerances, caps and experiment defaults in one place.
Values can be overridden through environment variables or a .env file.
"""

import os
from dotenv import load_dotenv

load_dotenv()

VERSION = "1.0.0"

# ─── Logging ──────────────────────────────────────────────────────────────────

LOG_LEVEL = os.getenv("SDA_LOG", "WARNING").upper()

# ─── Numerical Tolerances ────────────────────────────────────────────────────

TAIL_TOL = float(os.getenv("SDA_TAIL_TOL", "1e-9"))        # Residual mass allowed past T_max
FP_EPS = float(os.getenv("SDA_FP_EPS", "1e-12"))           # Floating point slack on probabilities
PLATEAU_TOL = float(os.getenv("SDA_PLATEAU_TOL", "1e-6"))  # Distance from 1/2 that counts as a limit
MONOTONE_TOL = 1e-10                                       # Slack for monotone chain checks

# ─── Horizons & Caps ─────────────────────────────────────────────────────────

INITIAL_HORIZON = int(os.getenv("SDA_INITIAL_HORIZON", "64"))
HORIZON_CAP = int(os.getenv("SDA_HORIZON_CAP", "100000"))
QUIET_STEPS = int(os.getenv("SDA_QUIET_STEPS", "10"))     # Consecutive negligible steps before stopping
ENUM_CAP = int(float(os.getenv("SDA_ENUM_CAP", "1e7")))   # Max joint outcomes for exact enumeration
MIN_CHAIN_STATES = 5

# ─── Monte Carlo ─────────────────────────────────────────────────────────────

MC_BLOCK = int(os.getenv("SDA_MC_BLOCK", "10000"))        # Replicates per RNG substream
MC_DEFAULT_REPLICATES = 100000
MC_DEFAULT_SEED = 20100915
WORKERS = int(os.getenv("SDA_WORKERS", "1"))

# ─── Calibration ─────────────────────────────────────────────────────────────

CALIB_PW_TOL = 1e-4
CALIB_ETA_TOL = 1e-6
CALIB_MAX_ITER = 60
CALIB_BRACKET = (0.05, 8.0)     # Symmetric threshold magnitude, nats
CALIB_DEGENERATE_ETA = 0.1      # Below this the calibrated test is close to uninformative

# ─── Experiment Defaults ─────────────────────────────────────────────────────

DEFAULT_P_MD = 0.1
DEFAULT_P_FA = 0.1
DEFAULT_GAUSS_THETA0 = 0.0
DEFAULT_GAUSS_THETA1 = 1.0
DEFAULT_BINOM_TRIALS = 5
DEFAULT_BINOM_EPS = 0.05
DELTA_SCALE = 0.01              # Chain step for thresholds at +/- log 9

# ─── File Schemas ────────────────────────────────────────────────────────────

SCHEMAS = {
    "profile": "sda-profile/1",
    "group": "sda-group/1",
    "empirical": "sda-empirical/1",
    "sweep": "sda-sweep/1",
    "compare": "sda-compare/1",
    "calibrate": "sda-calibrate/1",
    "monotonicity": "sda-monotonicity/1",
}
