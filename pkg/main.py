"""
命令行入口

    python main.py gen-data --config configs/desk.conf --seed 0 --out data
    python main.py train --config configs/desk.conf --data data --seed 0 --out runs/a
    python main.py eval --ckpt runs/a/best.ckpt --data data --split unseen --patches 10
"""

import sys

from skupatch import __version__
from skupatch.cli import main

__all__ = ["__version__", "main"]


if __name__ == "__main__":
    sys.exit(main())
