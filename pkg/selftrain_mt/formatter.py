import dataclasses
import json
import re
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Type, TypeVar

from selftrain_mt.common import ConfigError

T = TypeVar("T")


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        # repr round-trips doubles exactly
        return repr(value)
    return str(value)


def _type_name(annotation: Any) -> str:
    return annotation if isinstance(annotation, str) else getattr(annotation, "__name__", str(annotation))


class TsvFormatter:
    """Tab-separated tables with a header row, as written for rankings, scores and reports."""

    _ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
    _UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}
    _ESCAPED = re.compile(r"\\(.)")

    @staticmethod
    def escape(value: Any) -> str:
        return "".join(TsvFormatter._ESCAPES.get(char, char) for char in _format_value(value))

    @staticmethod
    def unescape(cell: str) -> str:
        return TsvFormatter._ESCAPED.sub(lambda m: TsvFormatter._UNESCAPES.get(m.group(1), m.group(0)), cell)

    @staticmethod
    def to_tsv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        lines = ["\t".join(header)]
        lines.extend("\t".join(TsvFormatter.escape(value) for value in row) for row in rows)
        return "\n".join(lines) + "\n"

    @staticmethod
    def parse_tsv(data: str) -> List[Dict[str, str]]:
        """One dict per data row; missing trailing cells read as empty strings."""
        if not data:
            return []
        # exactly one terminating newline; rows of empty cells before it are data
        text = data[:-1] if data.endswith("\n") else data
        header, *body = text.split("\n")
        columns = header.split("\t")
        result: List[Dict[str, str]] = []
        for line in body:
            cells = line.split("\t")
            cells += [""] * (len(columns) - len(cells))
            result.append({name: TsvFormatter.unescape(cell) for name, cell in zip(columns, cells)})
        return result


class KeyValueFormatter:
    """Canonical `key=value` text: one pair per line, keys sorted."""

    @staticmethod
    def to_text(values: Mapping[str, Any]) -> str:
        return "".join(f"{key}={_format_value(values[key])}\n" for key in sorted(values))

    @staticmethod
    def parse(text: str, source: str = "<text>") -> Dict[str, str]:
        result: Dict[str, str] = {}
        for line_number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{line_number}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if key in result:
                raise ConfigError(f"{source}:{line_number}: duplicate key '{key}'")
            result[key] = value.strip()
        return result

    @staticmethod
    def coerce(value: str, type_name: str, key: str) -> Any:
        type_name = type_name.replace("Optional[", "").rstrip("]").replace(" | None", "")
        try:
            if type_name == "int":
                return int(value)
            if type_name == "float":
                return float(value)
            if type_name == "bool":
                lowered = value.lower()
                if lowered not in ("true", "false", "1", "0"):
                    raise ValueError(value)
                return lowered in ("true", "1")
            return value
        except ValueError as e:
            raise ConfigError(f"Invalid value for '{key}': expected {type_name}, got {value!r}") from e

    @staticmethod
    def dataclass_to_dict(obj: Any) -> Dict[str, Any]:
        return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj) if f.init}

    @staticmethod
    def dataclass_from_mapping(cls: Type[T], values: Mapping[str, str], strict: bool = True) -> T:
        """Build a dataclass from string values, converting by the declared field types."""
        fields = {f.name: f for f in dataclasses.fields(cls) if f.init}  # type: ignore[arg-type]
        unknown = sorted(set(values) - set(fields))
        if strict and unknown:
            raise ConfigError(f"Unknown keys for {cls.__name__}: {', '.join(unknown)}")
        kwargs = {
            name: KeyValueFormatter.coerce(values[name], _type_name(field.type), name)
            for name, field in fields.items()
            if name in values
        }
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigError(f"Incomplete {cls.__name__}: {e}") from e


def canonical_json(obj: Any) -> str:
    """Stable JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
