"""
Centralized Logging System
Structured JSON logging for all radialiq runs
"""

import logging
import sys
from typing import Any, Dict, Optional

from pythonjsonlogger import jsonlogger

from app.config import LOG_LEVEL, APP_NAME


class RadialJSONFormatter(jsonlogger.JsonFormatter):
    """JSON formatter that stamps every record with level, logger and call site"""

    def add_fields(self, log_record: Dict[str, Any], record: logging.LogRecord, message_dict: Dict[str, Any]) -> None:
        super().add_fields(log_record, record, message_dict)
        log_record["level"] = record.levelname
        log_record["logger"] = record.name
        log_record["module"] = record.module
        log_record["function"] = record.funcName
        log_record["line"] = record.lineno


def setup_logger(name: str, level: Optional[int] = None) -> logging.Logger:
    """
    Setup a structured JSON logger

    Args:
        name: Logger name (typically the radialiq root)
        level: Override of the configured level

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(level if level is not None else LOG_LEVEL)

    # Remove existing handlers
    if logger.handlers:
        logger.handlers.clear()

    # stdout carries command results, so records go to stderr
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(RadialJSONFormatter("%(asctime)s %(message)s", timestamp=False))
    logger.addHandler(handler)

    logger.propagate = False

    return logger


# Initialize main app logger; service loggers are children ("radialiq.classical", ...)
logger = setup_logger(APP_NAME)


def set_level(level: int) -> None:
    """Change the level of the root radialiq logger (CLI --verbose)."""
    logger.setLevel(level)


def log_event(
    action: str,
    target: Optional[str] = None,
    details: Optional[Dict[str, Any]] = None,
    level: str = "INFO"
) -> None:
    """
    Log a structured event

    Args:
        action: What happened (e.g., "command_finished", "criterion_failed")
        target: What it happened to (e.g., a command name or criterion id)
        details: Additional context data
        level: Log level (DEBUG, INFO, WARNING, ERROR)
    """
    extra = {
        "action": action,
        "target": target,
        "details": details or {},
    }

    log_message = f"{action}"
    if target:
        log_message += f" on {target}"

    getattr(logger, level.lower())(log_message, extra=extra)


def log_command_event(
    command: str,
    status: str,
    duration_s: float,
    error_code: Optional[str] = None,
) -> None:
    """Log the end of a CLI command"""
    details: Dict[str, Any] = {"status": status, "duration_s": round(duration_s, 6)}
    if error_code:
        details["error_code"] = error_code
    log_event(
        action="command_finished",
        target=command,
        details=details,
        level="INFO" if status == "ok" else "WARNING",
    )
