import pathlib
import sys

try:
    import kscontrol  # noqa: F401
except ImportError:  # allow running the suite without installation
    sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))
