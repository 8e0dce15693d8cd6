"""Entry point for the CIRL desk-scale pipeline."""

import sys

from src.cli.app import main

if __name__ == "__main__":
    sys.exit(main())
