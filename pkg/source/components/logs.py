import logging

LOG_FORMAT = "[%(asctime)s][%(levelname)s][%(name)s] %(message)s"


def configure_logging(verbosity: int = 0) -> None:
    """
    Configures the root logger for command line use.

    Parameters:
        verbosity (int): 0 for INFO, positive for DEBUG, negative for WARNING.
    """
    if verbosity > 0:
        level = logging.DEBUG
    elif verbosity < 0:
        level = logging.WARNING
    else:
        level = logging.INFO

    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
    # numba's compiler is chatty at DEBUG
    logging.getLogger("numba").setLevel(logging.WARNING)
