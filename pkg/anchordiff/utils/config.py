"""
Plain-text configuration files.

One ``key = value`` pair per line; ``#`` starts a comment. Values are read
as booleans, integers, floats, comma-separated tuples or strings, then
passed to a configuration dataclass, which validates them.
"""

import dataclasses
import logging
from pathlib import Path
from typing import Any, Dict, Type, TypeVar, Union

from ..exceptions import AnchorDiffError, ConfigurationError, ErrorCodes, create_error

logger = logging.getLogger(__name__)

T = TypeVar("T")


def parse_value(text: str) -> Any:
    """Convert one textual value into bool, int, float, tuple or str."""
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if "," in text:
        return tuple(parse_value(part) for part in text.split(",") if part.strip())
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def parse_config_text(text: str, source: str = "<string>") -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}",
                ErrorCodes.INVALID_CONFIGURATION
            )
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = parse_value(value)
    return values


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise create_error("file", f"Config file not found: {path}", ErrorCodes.FILE_NOT_FOUND,
                           details={"path": str(path)})
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def build_config(cls: Type[T], values: Dict[str, Any], source: str = "<values>") -> T:
    """
    Instantiate a configuration dataclass, rejecting unknown keys.

    Raises:
        ConfigurationError: On unknown keys or values the dataclass rejects.
    """
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise create_error(
            "configuration",
            f"{source}: unknown {cls.__name__} keys: {', '.join(unknown)}",
            ErrorCodes.UNKNOWN_CONFIG_KEY,
            details={"unknown": unknown, "known": sorted(known)}
        )
    try:
        return cls(**values)
    except AnchorDiffError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"{source}: invalid {cls.__name__}: {e}", ErrorCodes.INVALID_CONFIGURATION)


def load_config(path: Union[str, Path], cls: Type[T], **overrides: Any) -> T:
    """Read ``path`` into ``cls``; keyword overrides win over file values."""
    values = read_config_file(path)
    values.update({k: v for k, v in overrides.items() if v is not None})
    logger.debug("Loaded %s from %s: %s", cls.__name__, path, values)
    return build_config(cls, values, source=str(path))
