from __future__ import annotations

from dataclasses import dataclass

import pytest

from selftrain_mt.common import ConfigError
from selftrain_mt.formatter import KeyValueFormatter, TsvFormatter, canonical_json


@dataclass(frozen=True)
class _Settings:
    name: str
    steps: int
    rate: float = 0.5
    shuffle: bool = False


class TestTsvFormatter:
    """Test cases for TsvFormatter.to_tsv and TsvFormatter.parse_tsv."""

    def test_to_tsv_escapes_cells(self) -> None:
        """Test that tabs and newlines inside a cell cannot break the table."""
        # Act
        text = TsvFormatter.to_tsv(("a", "b"), [["x\ty", 1.5], [None, True], ["line\nbreak", "c:\\dir"]])

        # Assert
        assert text == "a\tb\nx\\ty\t1.5\n\ttrue\nline\\nbreak\tc:\\\\dir\n"

    def test_parse_tsv_restores_escaped_cells(self) -> None:
        """Test that escaped cells read back exactly, including a literal backslash before 't'."""
        # Arrange
        values = ["tab\there", "back\\tslash", "cr\r\nlf", "\\", ""]
        text = TsvFormatter.to_tsv(("value",), [[v] for v in values])

        # Act
        rows = TsvFormatter.parse_tsv(text)

        # Assert
        assert [row["value"] for row in rows] == values

    def test_parse_tsv_keeps_trailing_empty_rows(self) -> None:
        """Test that rows made only of empty cells survive a write/read cycle."""
        # Arrange
        text = TsvFormatter.to_tsv(("target",), [["a"], [""], [""]])

        # Act
        rows = TsvFormatter.parse_tsv(text)

        # Assert
        assert text == "target\na\n\n\n"
        assert rows == [{"target": "a"}, {"target": ""}, {"target": ""}]

    def test_parse_tsv_fills_missing_cells(self) -> None:
        """Test that short rows read missing trailing cells as empty strings."""
        assert TsvFormatter.parse_tsv("a\tb\nx\n") == [{"a": "x", "b": ""}]

    def test_parse_tsv_empty_input(self) -> None:
        """Test that empty text and a header-only table both give no rows."""
        assert TsvFormatter.parse_tsv("") == []
        assert TsvFormatter.parse_tsv("a\tb\n") == []


class TestKeyValueFormatter:
    """Test cases for the key=value config text."""

    def test_to_text_is_sorted_and_typed(self) -> None:
        text = KeyValueFormatter.to_text({"b": 0.1, "a": True, "c": None, "d": 7})
        assert text == "a=true\nb=0.1\nc=\nd=7\n"

    def test_parse_skips_comments_and_blank_lines(self) -> None:
        text = "# experiment\n\nname = toy \nsteps=3\n  # indented comment\nrate=a=b\n"
        assert KeyValueFormatter.parse(text) == {"name": "toy", "steps": "3", "rate": "a=b"}

    def test_parse_rejects_line_without_separator(self) -> None:
        with pytest.raises(ConfigError, match=r"run\.cfg:2: expected key=value"):
            KeyValueFormatter.parse("name=toy\nsteps\n", source="run.cfg")

    def test_parse_rejects_duplicate_key(self) -> None:
        with pytest.raises(ConfigError, match="duplicate key 'steps'"):
            KeyValueFormatter.parse("steps=1\nsteps=2\n")

    @pytest.mark.parametrize(
        "value,type_name,expected",
        [("3", "int", 3), ("0.25", "float", 0.25), ("TRUE", "bool", True), ("0", "bool", False), ("x", "str", "x")],
    )
    def test_coerce(self, value: str, type_name: str, expected: object) -> None:
        assert KeyValueFormatter.coerce(value, type_name, "key") == expected

    def test_coerce_rejects_bad_values(self) -> None:
        with pytest.raises(ConfigError, match="expected int"):
            KeyValueFormatter.coerce("3.5", "int", "steps")
        with pytest.raises(ConfigError, match="expected bool"):
            KeyValueFormatter.coerce("yes", "bool", "shuffle")

    def test_dataclass_round_trip(self) -> None:
        """Test that to_text followed by parse rebuilds an equal dataclass."""
        # Arrange
        settings = _Settings(name="toy", steps=12, rate=0.1, shuffle=True)

        # Act
        text = KeyValueFormatter.to_text(KeyValueFormatter.dataclass_to_dict(settings))
        rebuilt = KeyValueFormatter.dataclass_from_mapping(_Settings, KeyValueFormatter.parse(text))

        # Assert
        assert rebuilt == settings

    def test_dataclass_from_mapping_errors(self) -> None:
        with pytest.raises(ConfigError, match="Unknown keys for _Settings: colour"):
            KeyValueFormatter.dataclass_from_mapping(_Settings, {"name": "a", "steps": "1", "colour": "red"})
        with pytest.raises(ConfigError, match="Incomplete _Settings"):
            KeyValueFormatter.dataclass_from_mapping(_Settings, {"name": "a"})
        values = {"name": "a", "steps": "1", "x": "y"}
        lenient = KeyValueFormatter.dataclass_from_mapping(_Settings, values, strict=False)
        assert lenient == _Settings(name="a", steps=1)


def test_canonical_json_is_stable() -> None:
    assert canonical_json({"b": 1, "a": "é"}) == '{\n  "a": "é",\n  "b": 1\n}\n'
