"""Entry point for python -m texture_refine."""

import sys

from texture_refine.cli import main

if __name__ == "__main__":
    sys.exit(main())
