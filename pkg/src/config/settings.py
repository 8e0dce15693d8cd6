"""Application settings loaded from environment variables."""

import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# File paths
BASE_DIR = Path(__file__).parent.parent.parent
OUTPUT_DIR = Path(os.getenv("CIRL_OUTPUT_DIR", str(BASE_DIR / "runs")))
LOG_DIR = Path(os.getenv("CIRL_LOG_DIR", str(BASE_DIR / "logs")))

# Logging
LOG_LEVEL = os.getenv("CIRL_LOG_LEVEL", "INFO").upper()

# Evaluation worker processes (1 = run in-process)
EVAL_WORKERS = int(os.getenv("CIRL_WORKERS", "1"))
if EVAL_WORKERS < 1:
    raise ValueError("CIRL_WORKERS must be at least 1")

# Binary formats
CHECKPOINT_MAGIC = b"CIRLNET1"
DATASET_MAGIC = b"CIRLDEM1"
FORMAT_VERSION = 1
