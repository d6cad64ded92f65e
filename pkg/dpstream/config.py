import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Experiment defaults
DPSTREAM_SEED = int(os.getenv("DPSTREAM_SEED", "0"))
TRIAL_WORKERS = int(os.getenv("TRIAL_WORKERS", "1"))

# Data Directories
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
RESULTS_DIR = os.getenv("RESULTS_DIR", os.path.join(BASE_DIR, "results"))
ERROR_BOUNDS_FILE = os.getenv(
    "ERROR_BOUNDS_FILE", os.path.join(RESULTS_DIR, "error_bounds.csv")
)

# Create directories if they don't exist
os.makedirs(RESULTS_DIR, exist_ok=True)

# Error-bound calibration
CALIBRATION_PATHS = int(os.getenv("CALIBRATION_PATHS", "100000"))
CALIBRATION_CHUNK = int(os.getenv("CALIBRATION_CHUNK", "2000"))
CALIBRATION_SEED = int(os.getenv("CALIBRATION_SEED", "20240601"))

# Per-counter sensitivity of the degree histogram (8 or 4)
DEGREE_COUNTER_SENSITIVITY = int(os.getenv("DEGREE_COUNTER_SENSITIVITY", "8"))

# Monitoring
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
ENABLE_METRICS = os.getenv("ENABLE_METRICS", "True").lower() == "true"
