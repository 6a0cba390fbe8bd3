from pathlib import Path
import os
from typing import Optional, Sequence, Tuple

import yaml

from congestion_mfc.exception.custom_exception import ConfigError
from congestion_mfc.logger import GLOBAL_LOGGER as log


def _project_root() -> Path:
    # parents[1] is the congestion_mfc package, which ships config/config.yaml
    return Path(__file__).resolve().parents[1]


def default_config_path() -> Path:
    return _project_root() / "config" / "config.yaml"


def resolve_config_path(config_path: str | None = None) -> Path:
    env_path = os.getenv("MFC_CONFIG_PATH", None)

    if config_path is None:
        config_path = env_path or str(default_config_path())

    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"Config file not found at {path}")
    return path


def load_config_text(config_path: str | None = None) -> Tuple[Path, str]:
    path = resolve_config_path(config_path)
    log.info("Loading config | path=%s", path)
    with open(path, "r", encoding="utf-8") as file:
        return path, file.read()


def parse_config_text(text: str) -> dict:
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError("Malformed YAML config", line=line, error_details=e) from e
    if not isinstance(data, dict):
        raise ConfigError("Config root must be a mapping of named blocks")
    return data


def load_config(config_path: str | None = None) -> dict:
    _, text = load_config_text(config_path)
    return parse_config_text(text)


def locate_key(text: str, key_path: Sequence[object]) -> Optional[int]:
    """
    1-based line of the deepest existing node along key_path, read from the
    composed YAML node marks. None when the document cannot be composed.
    """
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    if node is None:
        return None

    line = node.start_mark.line + 1
    for part in key_path:
        if isinstance(node, yaml.MappingNode):
            match = None
            for key_node, value_node in node.value:
                if key_node.value == str(part):
                    match = (key_node, value_node)
                    break
            if match is None:
                break
            line = match[0].start_mark.line + 1
            node = match[1]
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            line = node.start_mark.line + 1
        else:
            break
    return line
