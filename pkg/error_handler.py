import logging
from typing import Any, Callable, Dict, Optional, Tuple

from models import CommandResult
from sim_logger import sim_logger

logger = logging.getLogger(__name__)


class SimulatorException(Exception):
    def __init__(self, message: str, error_code: str, exit_code: int = 1,
                 context: Optional[Dict[str, Any]] = None):
        self.message = message
        self.error_code = error_code
        self.exit_code = exit_code
        self.context = context or {}
        super().__init__(self.message)


class ConfigError(SimulatorException):
    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message, "CONFIG_INVALID", 2, context)


class InvalidInput(SimulatorException):
    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message, "INVALID_INPUT", 2, context)


class InfeasibleWindow(SimulatorException):
    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message, "INFEASIBLE_WINDOW", 3, context)


class AlreadyPastStopPoint(SimulatorException):
    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message, "PAST_STOP_POINT", 3, context)


class CollisionDetected(SimulatorException):
    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message, "COLLISION", 4, context)


class RedLightViolation(SimulatorException):
    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message, "RED_LIGHT_ENTRY", 4, context)


class EmptyGroup(SimulatorException):
    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message, "EMPTY_GROUP", 5, context)


class ErrorHandler:
    """Runs CLI commands and turns failures into exit codes plus a printable result"""

    def run_guarded(self, func: Callable[..., Dict[str, Any]], *args, **kwargs) -> Tuple[int, CommandResult]:
        try:
            data = func(*args, **kwargs)
            return 0, CommandResult(status="success", data=data)
        except SimulatorException as e:
            if isinstance(e, CollisionDetected):
                logger.error(f"Collision halted the run: {e.message} - {e.context}")
            else:
                logger.error(f"{e.error_code}: {e.message}")
            return e.exit_code, CommandResult(
                status="error", message=e.message, code=e.error_code, data=e.context or None
            )
        except Exception as e:
            logger.exception(f"Unexpected error: {e}")
            sim_logger.log_error("UNKNOWN_ERROR", str(e), {"command": getattr(func, "__name__", repr(func))})
            return 1, CommandResult(status="error", message=f"Unexpected error: {e}", code="UNKNOWN_ERROR")
