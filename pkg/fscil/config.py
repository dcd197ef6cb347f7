"""Process settings and run-configuration loading."""

import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

from pydantic import ValidationError
from pydantic_settings import BaseSettings

from fscil.exceptions import ConfigError
from fscil.schemas.config import RunConfig

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process-level settings loaded from LIMIT_* environment variables."""

    # Execution
    num_threads: int = 1
    eval_batch_size: int = 256

    # Output
    log_level: str = "INFO"
    show_progress: bool = True

    class Config:
        env_prefix = "LIMIT_"
        env_file = ".env"
        env_file_encoding = "utf-8"
        extra = "ignore"


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_override(data: Dict[str, Any], assignment: str) -> None:
    """Set a dotted key such as ``train.meta.iterations=10`` in a nested dict."""
    key, sep, raw = assignment.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override '{assignment}' is not of the form key=value")
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override '{key}': '{part}' is not a section", fields=[key])
        node = child
    node[parts[-1]] = _parse_value(raw)


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    out_dir: Optional[Union[str, Path]] = None,
    method: Optional[str] = None,
) -> RunConfig:
    """Read a JSON run configuration and apply command-line overrides.

    Validation failures are raised as ConfigError naming every offending
    field by its dotted path.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")

    for assignment in overrides:
        apply_override(data, assignment)
    if seed is not None:
        data["seed"] = seed
    if method is not None:
        data["method"] = method
    if out_dir is not None:
        data.setdefault("eval", {})["out_dir"] = str(out_dir)

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        fields = [".".join(str(part) for part in err["loc"]) or "<root>" for err in exc.errors()]
        details = "; ".join(
            f"{field}: {err['msg']}" for field, err in zip(fields, exc.errors())
        )
        raise ConfigError(f"invalid configuration: {details}", fields=fields) from None

    logger.debug(f"Loaded run config (method={config.method}, seed={config.seed})")
    return config
