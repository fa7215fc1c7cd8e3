"""phmc_coupling package init.

Preconditioned HMC on spectrally represented path spaces, the two-scale coupling
and the explicit constants of its contraction theory.

Loads environment variables from a local .env file (if present), so settings such
as ``PHMC_THREADS`` can live next to the experiment configs.
"""

from __future__ import annotations

from pathlib import Path

from dotenv import load_dotenv

__version__ = "0.3.0"

# Load .env from project root if it exists
ENV_PATH = Path(__file__).resolve().parent.parent / ".env"
load_dotenv(dotenv_path=ENV_PATH, override=False)
