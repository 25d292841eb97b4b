from .config import DEFAULTS, OUTPUT_ROOT_ENV, RunConfig, parse_override, set_dotted
from .runs import RunDirectory, file_sha256
from .cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, build_parser, grid_points, main
