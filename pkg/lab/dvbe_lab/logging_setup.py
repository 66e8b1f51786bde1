import logging
import logging.config
import os

from .conf import DEFAULT_SETTINGS_MODULE, ENVIRONMENT_VARIABLE, settings


def configure_logging(verbose: bool = False):
    """Apply settings.LOGGING; --verbose lifts the root logger to DEBUG."""
    logging.config.dictConfig(settings.LOGGING)
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    module_name = os.environ.get(ENVIRONMENT_VARIABLE, DEFAULT_SETTINGS_MODULE)
    logging.getLogger(__name__).debug(f"Logging configured from {module_name}")
