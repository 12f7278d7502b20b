import sys
from pathlib import Path

# test-local helpers (oracles.py) live next to the tests
sys.path.insert(0, str(Path(__file__).parent))
