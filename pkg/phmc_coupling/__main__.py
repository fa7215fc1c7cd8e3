"""Package entrypoint.

Allows running the tool with:
    python -m phmc_coupling <command> [options]
"""
from __future__ import annotations

import sys

from .main import main

if __name__ == "__main__":
    sys.exit(main())
