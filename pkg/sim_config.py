import copy
import os
import logging
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from error_handler import ConfigError
from models import IntersectionConfig, LearnerConfig, PenaltyWeights, SimSettings, SolverSettings

logger = logging.getLogger(__name__)

ENV_PREFIX = 'TLSIM_'

# flat keys that feed a field living in another section
ALIASES = {
    'sim.t_s': ('intersection', 'T_S'),
    'sim.lambda_per_hour': ('intersection', 'lambda_arrival'),
    'idm.speed_aware_follow': ('intersection', 'speed_aware_follow'),
}

LOG_KEYS = ('log.level', 'log.file_enabled', 'log.dir')


def _section_keys(prefix: str, model: type) -> Dict[str, tuple]:
    return {f"{prefix}.{name}": (prefix, name) for name in model.model_fields}


KNOWN_KEYS: Dict[str, tuple] = {
    **_section_keys('intersection', IntersectionConfig),
    **_section_keys('sim', SimSettings),
    **_section_keys('planner', PenaltyWeights),
    **_section_keys('planner', SolverSettings),
    **_section_keys('learner', LearnerConfig),
    **ALIASES,
}


def env_name(key: str) -> str:
    """sim.t_s -> TLSIM_SIM_T_S"""
    return ENV_PREFIX + key.upper().replace('.', '_')


class SimConfig:
    def __init__(self, config_path: Optional[str] = None,
                 overrides: Optional[Mapping[str, Any]] = None,
                 environ: Optional[Mapping[str, str]] = None):
        environ = os.environ if environ is None else environ
        raw: Dict[str, Any] = {}

        if config_path:
            if not os.path.exists(config_path):
                raise ConfigError(f"Config file not found: {config_path}", {"path": config_path})
            file_values = dotenv_values(config_path)
            for key, value in file_values.items():
                if key not in KNOWN_KEYS and key not in LOG_KEYS:
                    raise ConfigError(f"Unknown config key '{key}'", {"key": key, "path": config_path})
                if value is None:
                    raise ConfigError(f"Config key '{key}' has no value", {"key": key})
                raw[key] = value

        for key in list(KNOWN_KEYS) + list(LOG_KEYS):
            if env_name(key) in environ:
                raw[key] = environ[env_name(key)]

        for key, value in (overrides or {}).items():
            if key not in KNOWN_KEYS and key not in LOG_KEYS:
                raise ConfigError(f"Unknown config key '{key}'", {"key": key})
            if value is not None:
                raw[key] = value

        sections: Dict[str, Dict[str, Any]] = {'intersection': {}, 'sim': {}, 'planner': {}, 'learner': {}}
        for key, value in raw.items():
            if key in LOG_KEYS:
                continue
            section, field = KNOWN_KEYS[key]
            sections[section][field] = value

        # Validated parameter groups
        self.INTERSECTION = self._build(IntersectionConfig, sections['intersection'], 'intersection')
        self.SIM = self._build(SimSettings, sections['sim'], 'sim')
        self.PENALTIES = self._build(PenaltyWeights, self._only(PenaltyWeights, sections['planner']), 'planner')
        self.SOLVER = self._build(SolverSettings, self._only(SolverSettings, sections['planner']), 'planner')
        self.LEARNER = self._build(LearnerConfig, sections['learner'], 'learner')

        # Logging
        self.LOG_LEVEL = str(raw.get('log.level', 'INFO'))
        self.LOG_FILE_ENABLED = str(raw.get('log.file_enabled', 'false')).lower() == 'true'
        self.LOG_DIR = str(raw.get('log.dir', 'logs'))

        logger.info(f"Simulation configuration loaded - seed: {self.SIM.seed}, p_av: {self.SIM.p_av}")

    @staticmethod
    def _only(model: type, values: Dict[str, Any]) -> Dict[str, Any]:
        return {k: v for k, v in values.items() if k in model.model_fields}

    @staticmethod
    def _build(model: type, values: Dict[str, Any], section: str) -> BaseModel:
        try:
            return model(**values)
        except ValidationError as e:
            first = e.errors()[0]
            field = ".".join(str(part) for part in first['loc']) or "(model)"
            raise ConfigError(
                f"Invalid value for {section}.{field}: {first['msg']}",
                {"section": section, "field": field, "errors": len(e.errors())},
            )

    def with_overrides(self, **sim_fields) -> 'SimConfig':
        """Copy with SimSettings fields replaced (CLI flags such as --seed and --horizon-s)"""
        clone = copy.copy(self)
        try:
            clone.SIM = SimSettings(**{**self.SIM.model_dump(), **sim_fields})
        except ValidationError as e:
            first = e.errors()[0]
            raise ConfigError(f"Invalid value for sim.{first['loc'][0]}: {first['msg']}")
        return clone

    def to_dict(self) -> Dict[str, Any]:
        """Every effective parameter, defaults included"""
        return {
            'intersection': self.INTERSECTION.model_dump(mode='json'),
            'sim': self.SIM.model_dump(mode='json'),
            'planner': {**self.PENALTIES.model_dump(mode='json'), **self.SOLVER.model_dump(mode='json')},
            'learner': self.LEARNER.model_dump(mode='json'),
            'log': {'level': self.LOG_LEVEL, 'file_enabled': self.LOG_FILE_ENABLED, 'dir': self.LOG_DIR},
        }
