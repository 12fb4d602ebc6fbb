import argparse
import json
import logging
from pathlib import Path

import numpy as np
import pytest
import torch

from src.config import RunConfig, default_seed, load_config_file, parse_bool, parse_config_text
from src.errors import ConfigError, ParseError
from src.logger import JsonFormatter, get_logger, log_file_for, setup_logging


class TestConfigText:
    def test_comments_and_dashes(self):
        text = "# smoke run\nsteps = 20  # short\nbatch-tokens=64\n\n--seed = 3\n"
        assert parse_config_text(text) == {"steps": "20", "batch_tokens": "64", "seed": "3"}

    def test_missing_equals(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_config_text("steps = 1\nsteps 2\n")

    def test_duplicate_key(self):
        with pytest.raises(ParseError, match="duplicate"):
            parse_config_text("steps = 1\nsteps = 2\n")

    def test_empty_key(self):
        with pytest.raises(ParseError):
            parse_config_text(" = 2\n")

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(tmp_path / "absent.cfg")


@pytest.mark.parametrize("word, expected", [("yes", True), ("On", True), ("0", False), ("false", False)])
def test_parse_bool(word, expected):
    assert parse_bool(word) is expected


def test_parse_bool_rejects_other_words():
    with pytest.raises(ConfigError):
        parse_bool("maybe")


class TestSeed:
    def test_default_is_zero(self, monkeypatch):
        monkeypatch.delenv("DAT_SEED", raising=False)
        assert default_seed() == 0

    def test_from_environment(self, monkeypatch):
        monkeypatch.setenv("DAT_SEED", "42")
        assert default_seed() == 42

    def test_bad_environment_value(self, monkeypatch):
        monkeypatch.setenv("DAT_SEED", "forty")
        with pytest.raises(ConfigError):
            default_seed()


class TestRunConfig:
    def namespace(self, **values):
        base = dict(command="decode", seed=1, log_level="INFO", logs_dir=Path("logs"), config=None,
                    handler=print, checkpoint=None, vocab="v.txt", alpha=1.0)
        base.update(values)
        return argparse.Namespace(**base)

    def test_splits_paths_and_options(self):
        run = RunConfig.from_namespace(self.namespace(), ("checkpoint", "vocab", "lm"))
        assert run.paths == {"checkpoint": None, "vocab": Path("v.txt")}
        assert run.options == {"alpha": 1.0}
        assert run.path("lm") is None

    def test_require_names_the_flags(self):
        run = RunConfig.from_namespace(self.namespace(), ("checkpoint", "vocab"))
        with pytest.raises(ConfigError, match="--checkpoint"):
            run.require("checkpoint", "vocab")

    def test_log_view_is_serializable(self):
        run = RunConfig.from_namespace(self.namespace(), ("checkpoint", "vocab"))
        assert json.loads(json.dumps(run.to_log()))["paths"]["vocab"] == "v.txt"


def test_json_formatter_merges_extra_data():
    record = logging.LogRecord("DagTranslator.test", logging.INFO, __file__, 1, "hello", None, None)
    record.extra_data = {"step": 3}
    line = json.loads(JsonFormatter().format(record))
    assert line["message"] == "hello" and line["step"] == 3 and line["level"] == "INFO"


def test_json_formatter_serializes_array_values():
    record = logging.LogRecord("DagTranslator.test", logging.INFO, __file__, 1, "scored", None, None)
    record.extra_data = {"loss": np.float64(0.5), "counts": np.array([1, 2]), "lr": torch.tensor(0.25)}
    line = json.loads(JsonFormatter().format(record))
    assert line["loss"] == 0.5 and line["counts"] == [1, 2] and line["lr"] == 0.25


def test_module_loggers_are_children():
    assert get_logger("training").name == "DagTranslator.training"


def test_setup_logging_follows_the_directory(tmp_path):
    first = setup_logging(tmp_path / "a")
    get_logger("test").info("one")
    second = setup_logging(tmp_path / "b")
    get_logger("test").info("two")
    assert first is second and len(second.handlers) == 1
    for handler in second.handlers:
        handler.flush()
    assert "two" in log_file_for(tmp_path / "b").read_text(encoding="utf-8")
    assert "two" not in log_file_for(tmp_path / "a").read_text(encoding="utf-8")
