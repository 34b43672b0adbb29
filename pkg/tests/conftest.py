import pathlib
import sys

SRC = pathlib.Path(__file__).resolve().parents[1] / "src"

try:
    import entropy_bridge  # noqa: F401
except ModuleNotFoundError:  # fall back to in-tree sources
    sys.path.insert(0, str(SRC))
