"""
YAML run configuration.

A config file is deep-merged over the built-in defaults and validated by the
pydantic models in ``schemas``. Every problem surfaces as a ``ConfigError``
naming the offending field and, when it can be found, its line in the file.
"""

import copy
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import yaml
from pydantic import ValidationError

from .errors import ConfigError
from .schemas import RunConfig

logger = logging.getLogger(__name__)


def _get_default_config() -> Dict[str, Any]:
    """Built-in defaults as a plain dict"""
    defaults = RunConfig().model_dump()
    # Z0 follows cg_height unless given explicitly
    defaults["vehicle"].pop("z0", None)
    return defaults


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """``override`` on top of ``base``; nested mappings merge, everything else replaces"""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _line_of(text: str, loc: Sequence[Union[str, int]]) -> Optional[int]:
    """1-based line of the deepest key of ``loc`` present in the YAML text"""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                if key_node.value == str(part):
                    line = key_node.start_mark.line + 1
                    node = value_node
                    break
            else:
                break
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            line = node.start_mark.line + 1
        else:
            break
    return line


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        logger.error(f"YAML syntax error in {source}: {e}")
        raise ConfigError(f"invalid YAML in {source}: {getattr(e, 'problem', None) or e}", line=line) from e

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"top level of {source} must be a mapping of sections", line=1)

    merged = deep_merge(_get_default_config(), data)
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        first = e.errors()[0]
        loc = [part for part in first["loc"] if not (isinstance(part, str) and part.startswith("function-"))]
        field = ".".join(str(part) for part in loc)
        logger.error(f"Invalid configuration in {source}: {field}: {first['msg']}")
        raise ConfigError(first["msg"], field=field or None, line=_line_of(text, loc)) from e


def load_config(config_path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Run configuration from ``config_path``, or the built-in defaults when no path is given"""
    if config_path is None:
        logger.warning("No configuration file given, using default configuration")
        return RunConfig()
    path = Path(config_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"Error loading configuration: {str(e)}")
        raise ConfigError(f"cannot read configuration file {path}: {e.strerror}") from e
    config = parse_config(text, source=str(path))
    logger.info(f"Loaded configuration from {path}")
    return config


def apply_overrides(config: RunConfig, out: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    """CLI flags on top of a loaded configuration"""
    if out is not None:
        config = config.model_copy(update={"output": config.output.model_copy(update={"directory": str(out)})})
    if seed is not None:
        config = config.model_copy(update={"seed": int(seed)})
    return config
