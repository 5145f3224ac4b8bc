import logging

import pytest

from dice_mpc.config import (DEFAULT_SYSTEM_CONFIG, LOG_ENV_VAR, format_value, load_system_config, parse_flat,
                             parse_value, reject_unknown, resolve_log_level)
from dice_mpc.errors import ConfigError


def test_packaged_system_config():
    cfg = load_system_config()
    assert cfg["solver"]["strategy"] == "auto"
    assert cfg["scc"]["years"] == [2015, 2020, 2030]
    assert cfg["output"]["float_format"] == "%.10g"


def test_missing_system_config_falls_back(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        cfg = load_system_config(str(tmp_path / "absent.yaml"))
    assert cfg == DEFAULT_SYSTEM_CONFIG
    assert "Could not load system configuration" in caplog.text


def test_system_config_merges_sections(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("solver:\n  max_iter: 7\nscc:\n  pulse_size: 1.0\n")
    cfg = load_system_config(str(path))
    assert cfg["solver"]["max_iter"] == 7
    assert cfg["solver"]["opt_tol"] == DEFAULT_SYSTEM_CONFIG["solver"]["opt_tol"]
    assert cfg["scc"]["pulse_size"] == 1.0
    assert cfg["general"] == DEFAULT_SYSTEM_CONFIG["general"]


@pytest.mark.parametrize("environ, verbose, quiet, expected", [
    ({}, False, False, logging.INFO),
    ({LOG_ENV_VAR: "DEBUG"}, False, False, logging.DEBUG),
    ({LOG_ENV_VAR: "error"}, True, False, logging.DEBUG),
    ({}, False, True, logging.WARNING),
])
def test_log_level_precedence(environ, verbose, quiet, expected):
    assert resolve_log_level(DEFAULT_SYSTEM_CONFIG, environ, verbose, quiet) == expected


def test_unknown_log_level():
    with pytest.raises(ConfigError) as excinfo:
        resolve_log_level(DEFAULT_SYSTEM_CONFIG, {LOG_ENV_VAR: "chatty"})
    assert excinfo.value.key == LOG_ENV_VAR


def test_parse_values():
    assert parse_value("3") == 3
    assert parse_value("1.5e-3") == 1.5e-3
    assert parse_value("true") is True
    assert parse_value('"open_loop"') == "open_loop"
    assert parse_value("[0.005, 0.015]") == [0.005, 0.015]
    assert parse_value("DICE2016R") == "DICE2016R"


def test_parse_flat_records_lines():
    entries = parse_flat("# comment\n\nN = 10\nmode = \"mpc\"\n")
    assert entries == {"N": (10, 3), "mode": ("mpc", 4)}


@pytest.mark.parametrize("text, message, line", [
    ("[solver]\n", "sections", 1),
    ("N = 1\nN\n", "expected 'key = value'", 2),
    ("= 3\n", "missing key", 1),
    ("N =\n", "missing value", 1),
    ("N = 1\n\nN = 2\n", "first set on line 1", 3),
])
def test_parse_flat_errors(text, message, line):
    with pytest.raises(ConfigError, match=message) as excinfo:
        parse_flat(text)
    assert excinfo.value.line == line


def test_error_message_names_key_and_line():
    with pytest.raises(ConfigError) as excinfo:
        reject_unknown(parse_flat("N = 1\nhorizon = 5\n"), ["N"])
    assert str(excinfo.value) == "line 2, key 'horizon': unknown key"


def test_format_value_parses_back():
    for value in (0.1, 1e-300, 2.3e12, 7, True, "DICE2013R"):
        assert parse_value(format_value(value)) == value
