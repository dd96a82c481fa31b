"""Small entrypoint to run backflow-lab from the repo root."""
import sys

from backflow_lab.cli import main


if __name__ == "__main__":
    sys.exit(main())
