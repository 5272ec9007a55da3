#!/usr/bin/env python3
"""
SwarmGuard command-line tool.

Runs scenarios, the Monte Carlo safety gate, the certificate benchmark and
model identification. See `python scripts/swarmguard.py --help`.
"""

import sys
from pathlib import Path

# Allow running from a checkout without installing
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from lib.cli import main  # noqa: E402


if __name__ == '__main__':
    sys.exit(main())
