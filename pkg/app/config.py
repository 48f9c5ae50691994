import os

from dotenv import load_dotenv

load_dotenv()

DEFAULT_SEED = int(os.getenv("ISING_SEED", "20190101"))
DEFAULT_OUT_DIR = os.getenv("ISING_OUT_DIR", "out")
LOG_LEVEL = os.getenv("ISING_LOG_LEVEL", "INFO")
DEFAULT_WORKERS = int(os.getenv("ISING_WORKERS", "4"))

# Nominal experiment: ferromagnetic chain at fixed field, swept over T
NOMINAL_J = 1.0
NOMINAL_B = 0.3
NOMINAL_T_GRID = (
    0.75, 1.0, 1.25, 1.5, 1.75, 2.25, 2.75, 3.0,
    4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 14.0,
)

DEFAULT_NOISE_P = 0.03
DEFAULT_NOISE_EPS = 0.02
DEFAULT_NOISE_Q = 0.01

DEFAULT_SHOTS = 10**5
DEFAULT_TOMOGRAPHY_SHOTS = 10**5

EXCESS_ENTROPY_WINDOW = 12
