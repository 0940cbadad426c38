import os
from pathlib import Path

from loguru import logger

from errors import ParseError

CONFIG_FILENAME = "biasedusf.conf"


def find_config_file() -> Path | None:
    """Attempt to find a key=value run configuration file automatically."""
    possible_paths = [Path.cwd() / CONFIG_FILENAME]

    xdg_home = os.environ.get("XDG_CONFIG_HOME")
    if xdg_home:
        possible_paths.append(Path(xdg_home) / "biasedusf" / "config")
    possible_paths.append(Path.home() / ".config" / "biasedusf" / "config")

    for path in possible_paths:
        if path.exists() and path.is_file():
            logger.info("Found run configuration file", path=path)
            return path

    logger.debug("No run configuration file found")
    return None


def load_config_file(path: Path) -> dict[str, str]:
    """Parse `key = value` lines; flags given on the command line win over these."""
    values: dict[str, str] = {}
    for line_number, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(
                f"{path}:{line_number}: expected key=value",
                path=str(path),
                line=line_number,
            )
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError(
                f"{path}:{line_number}: empty key", path=str(path), line=line_number
            )
        values[key.lstrip("-").replace("-", "_")] = value

    logger.debug("Loaded run configuration", path=path, keys=sorted(values))
    return values


class Budget:
    """Resource limits that keep exact computations desk-sized."""

    # Cells of the dense DP cube, (2R+1)^d
    MAX_DP_STATES = 5_000_000
    # (M+1)(N+1) cells of the intersection series table
    MAX_PAIR_CELLS = 250_000
    # Brute-force bridge enumeration walks 4^n paths
    MAX_BRUTE_N = 11
    MAX_EXACT_TREE_VERTICES = 8
    MAX_RATIONAL_STEPS = 20
    MAX_RATIONAL_DIMENSION = 2

    def __init__(
        self,
        max_dp_states: int | None = None,
        max_pair_cells: int | None = None,
        max_brute_n: int | None = None,
        max_exact_tree_vertices: int | None = None,
    ):
        self.max_dp_states = max_dp_states or self.MAX_DP_STATES
        self.max_pair_cells = max_pair_cells or self.MAX_PAIR_CELLS
        self.max_brute_n = max_brute_n or self.MAX_BRUTE_N
        self.max_exact_tree_vertices = (
            max_exact_tree_vertices or self.MAX_EXACT_TREE_VERTICES
        )


class RunDefaults:
    """Documented defaults for stochastic runs."""

    # Fixed so that repeated invocations reproduce; never derived from the clock
    SEED = 20170601
    TRIALS = 1000
    WORKERS = 1
    CONFIDENCE = 0.99
    # Relative drop of an alpha estimate between H and 2H still read as stable
    DECAY_TOLERANCE = 0.2
