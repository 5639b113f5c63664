"""
Adaptive traffic-signal engine
Run `python main.py --help` for the optimize, simulate and pipeline commands
"""

import sys

from app.cli import main

if __name__ == "__main__":
    sys.exit(main())
