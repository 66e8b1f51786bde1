from .commands import cli, main
from .config import RunConfig, build_run_config
