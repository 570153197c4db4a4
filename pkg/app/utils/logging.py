import logging

_logger = None

LOG_FORMAT = "[%(levelname)s] %(message)s"


def get_logger():
    global _logger
    if _logger is None:
        _logger = logging.getLogger("gcpl")
        _logger.setLevel(logging.INFO)
        if not _logger.hasHandlers():
            handler = logging.StreamHandler()
            formatter = logging.Formatter(LOG_FORMAT)
            handler.setFormatter(formatter)
            _logger.addHandler(handler)
    return _logger


def setup_logging(level: str | int = "INFO") -> logging.Logger:
    """Route the `app` and `ml` package loggers through the project handler."""
    logger = get_logger()
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    logger.setLevel(level)
    for name in ("app", "ml"):
        pkg_logger = logging.getLogger(name)
        pkg_logger.setLevel(level)
        if not pkg_logger.handlers:
            for handler in logger.handlers:
                pkg_logger.addHandler(handler)
        pkg_logger.propagate = False
    return logger
