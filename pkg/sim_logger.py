import logging
import os
from datetime import datetime
from typing import Any, Dict


class SimLogger:
    def __init__(self, name: str = 'IntersectionSim'):
        self.logger = logging.getLogger(name)
        self._file_handler = None
        self._console_handler = None
        self._setup_logging(
            level=os.getenv('LOG_LEVEL', 'INFO'),
            file_enabled=os.getenv('LOG_FILE_ENABLED', 'false').lower() == 'true',
            log_dir=os.getenv('LOG_DIR', 'logs'),
        )

    def _setup_logging(self, level: str, file_enabled: bool, log_dir: str):
        """Configure console and optional daily file logging"""
        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )

        if self._console_handler is None:
            self._console_handler = logging.StreamHandler()
            self._console_handler.setFormatter(formatter)
            self.logger.addHandler(self._console_handler)
        self._console_handler.setLevel(getattr(logging, level.upper(), logging.INFO))

        if self._file_handler is not None:
            self.logger.removeHandler(self._file_handler)
            self._file_handler.close()
            self._file_handler = None

        if file_enabled:
            if not os.path.exists(log_dir):
                os.makedirs(log_dir)
            log_filename = f"{log_dir}/intersection_sim_{datetime.now().strftime('%Y%m%d')}.log"
            self._file_handler = logging.FileHandler(log_filename)
            self._file_handler.setFormatter(formatter)
            self._file_handler.setLevel(logging.DEBUG)
            self.logger.addHandler(self._file_handler)

        self.logger.setLevel(logging.DEBUG)

        # Prevent duplicate logs
        self.logger.propagate = False

    def configure(self, level: str, file_enabled: bool, log_dir: str):
        """Re-apply logging settings once the run configuration is known"""
        self._setup_logging(level, file_enabled, log_dir)

    def log_block_event(self, k: int, data: Dict[str, Any]):
        """Block boundary: observed queues, decided action, reward"""
        self.logger.debug(f"BLOCK: {k} - {data}")

    def log_plan_event(self, vehicle_id: int, plan_kind: str, data: Dict[str, Any]):
        """AV planning outcome"""
        self.logger.debug(f"PLAN: vehicle {vehicle_id} - {plan_kind} - {data}")

    def log_safety_event(self, event: str, data: Dict[str, Any]):
        """Collisions, red-light entries, light-delay bookkeeping mismatches"""
        self.logger.warning(f"SAFETY: {event} - {data}")

    def log_training_event(self, episode: int, data: Dict[str, Any]):
        """Per-episode learning curve point"""
        self.logger.info(f"TRAINING: episode {episode} - {data}")

    def log_error(self, error_type: str, message: str, context: Dict[str, Any]):
        """Log errors with context"""
        self.logger.error(f"ERROR: {error_type} - {message} - Context: {context}")

    def log_system_event(self, event: str, data: Dict[str, Any]):
        """Log system events"""
        self.logger.info(f"SYSTEM: {event} - {data}")


# Global logger instance
sim_logger = SimLogger()
