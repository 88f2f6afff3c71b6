"""Regenerate every shipped fixture under src/incam/data (deterministic)."""

import sys

from incam.fixtures import build_all

if __name__ == "__main__":
    dest = build_all(sys.argv[1] if len(sys.argv) > 1 else None)
    print(f"fixtures written to {dest}")
