#!/usr/bin/env python3
"""Entry point for the roadheat command line."""

from __future__ import annotations

import sys
from pathlib import Path

project_root = Path(__file__).parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))


def main() -> None:
    from app.cli import run_cli
    from app.utils.logging import setup_logging

    setup_logging()
    run_cli()


if __name__ == "__main__":
    main()
