import os
from dotenv import load_dotenv

# Load values from .env file if present
load_dotenv()

# Hilbert-space capacity
MAX_QUBITS = int(os.getenv("DFSBLOCK_MAX_QUBITS", "14"))
DENSE_QUBITS = int(os.getenv("DFSBLOCK_DENSE_QUBITS", "10"))

LOG_LEVEL = os.getenv("DFSBLOCK_LOG_LEVEL", "INFO")

# Integrator: default steps = ceil(STEP_DENSITY * t_f * ||H||max)
STEP_DENSITY = float(os.getenv("DFSBLOCK_STEP_DENSITY", "50"))

# Gate compilation
SYNTHESIS_POWER_CAP = int(float(os.getenv("DFSBLOCK_SYNTHESIS_POWER_CAP", "1e9")))
RATIONAL_DENOMINATOR = int(os.getenv("DFSBLOCK_RATIONAL_DENOMINATOR", "1000"))
MIN_ADIABATIC_MARGIN = float(os.getenv("DFSBLOCK_MIN_ADIABATIC_MARGIN", "10"))
PULSED_RATIO_THRESHOLD = float(os.getenv("DFSBLOCK_PULSED_RATIO", "50"))
MAX_MAP_PULSES = int(os.getenv("DFSBLOCK_MAX_MAP_PULSES", "64"))

# Noise ensembles
DEFAULT_TRAJECTORIES = int(os.getenv("DFSBLOCK_TRAJECTORIES", "200"))
TRAJECTORY_WORKERS = int(os.getenv("DFSBLOCK_WORKERS", "4"))

REPORT_SCHEMA_VERSION = "1"
