import logging
import os
from datetime import datetime

LOGS_DIR = os.environ.get("DICOH_LOGS_DIR", "logs")
os.makedirs(LOGS_DIR, exist_ok=True)

LOG_FILE = os.path.join(LOGS_DIR, f"dicoh_{datetime.now().strftime('%Y-%m-%d')}.log")
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - %(message)s'

logging.basicConfig(
    filename=LOG_FILE,
    format=LOG_FORMAT,
    level=logging.INFO
)


def get_logger(name):
    logger = logging.getLogger(name)
    logger.setLevel(logging.INFO)
    return logger


def attach_run_log(run_dir: str) -> logging.Handler:
    """Mirror all records into <run_dir>/run.log until the handler is detached."""
    handler = logging.FileHandler(os.path.join(run_dir, "run.log"), encoding="utf-8")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger().addHandler(handler)
    return handler


def detach_run_log(handler: logging.Handler) -> None:
    logging.getLogger().removeHandler(handler)
    handler.close()


_console = None


def enable_console(verbose: bool = False) -> None:
    """Echo records to stderr, used by the command-line entry point."""
    global _console
    if _console is None:
        _console = logging.StreamHandler()
        _console.setFormatter(logging.Formatter('%(levelname)s - %(message)s'))
        logging.getLogger().addHandler(_console)
    _console.setLevel(logging.INFO if verbose else logging.WARNING)
