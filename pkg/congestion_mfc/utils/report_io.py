"""
Structured text reports.

    [section]
    key = value

Floats are written with repr so parse_report(format_report(x)) is exact.
Sequences are written comma separated.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Mapping, Union

import numpy as np

Report = Dict[str, Dict[str, Any]]


def _format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return ", ".join(_format_value(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def _parse_scalar(text: str) -> Any:
    lowered = text.lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    if lowered == "none":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def format_report(sections: Mapping[str, Mapping[str, Any]]) -> str:
    lines = []
    for name, entries in sections.items():
        lines.append(f"[{name}]")
        for key, value in entries.items():
            lines.append(f"{key} = {_format_value(value)}")
        lines.append("")
    return "\n".join(lines)


def parse_report(text: str) -> Report:
    report: Report = {}
    current: Dict[str, Any] | None = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = report.setdefault(line[1:-1].strip(), {})
            continue
        if "=" not in line:
            raise ValueError(f"report line is not 'key = value': {raw!r}")
        if current is None:
            current = report.setdefault("", {})
        key, value = (part.strip() for part in line.split("=", 1))
        if "," in value:
            current[key] = [_parse_scalar(v.strip()) for v in value.split(",")]
        else:
            current[key] = _parse_scalar(value)
    return report


def write_report(path: Union[str, Path], sections: Mapping[str, Mapping[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_report(sections), encoding="utf-8")
    return path


def read_report(path: Union[str, Path]) -> Report:
    return parse_report(Path(path).read_text(encoding="utf-8"))
