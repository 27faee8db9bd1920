import logging

import coloredlogs

LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"

# Libraries that log every request at INFO.
_NOISY = ("httpx", "httpcore")


def setup_logging(level: str | int = "INFO", quiet: bool = False) -> None:
    """Install coloured console logging on the root logger; ``quiet`` keeps warnings and errors only."""
    if quiet:
        level = "WARNING"
    coloredlogs.install(level=level, fmt=LOG_FORMAT)
    for name in _NOISY:
        logging.getLogger(name).setLevel(logging.WARNING)
