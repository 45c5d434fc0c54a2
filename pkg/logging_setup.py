import logging
import os

from dotenv import load_dotenv

load_dotenv(override=False)

# structured logging (simple JSON-like formatter)
JSON_FORMAT = '{"ts":"%(asctime)s","level":"%(levelname)s","module":"%(name)s","msg":"%(message)s"}'
DEFAULT_LEVEL = os.getenv('MFA_LOG_LEVEL', 'INFO').upper()

_configured = set()


def get_logger(name: str) -> logging.Logger:
    """Return a module logger carrying the JSON-line handler (attached once)."""
    logger = logging.getLogger(name)
    if name not in _configured:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(JSON_FORMAT))
        logger.addHandler(handler)
        logger.setLevel(DEFAULT_LEVEL)
        _configured.add(name)
    return logger


def set_level(level: str):
    """Change the level of every logger created through get_logger."""
    for name in _configured:
        logging.getLogger(name).setLevel(level.upper())
