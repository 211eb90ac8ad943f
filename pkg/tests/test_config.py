"""Config grammar and validation contracts."""

import pytest

from adaslstm.config import (ExperimentConfig, config_from_dict, load_config,
                             parse_config_text)
from adaslstm.errors import ConfigError


def write(tmp_path, text):
    p = tmp_path / "run.conf"
    p.write_text(text)
    return p


class TestGrammar:
    def test_key_value_comments_blanks(self, tmp_path):
        config = load_config(write(tmp_path, """
# a comment
hidden_size = 64   # trailing comment
max_layers = 5

selection = hard
"""))
        assert config.model.hidden_size == 64
        assert config.model.max_layers == 5
        assert config.model.selection == "hard"

    def test_unknown_key_fatal_with_line(self, tmp_path):
        with pytest.raises(ConfigError, match=r"run\.conf:2.*no_such_key"):
            load_config(write(tmp_path, "epochs = 3\nno_such_key = 1\n"))

    def test_duplicate_key_fatal(self, tmp_path):
        with pytest.raises(ConfigError, match="duplicate"):
            load_config(write(tmp_path, "epochs = 3\nepochs = 4\n"))

    def test_malformed_line_fatal(self, tmp_path):
        with pytest.raises(ConfigError, match=r":1"):
            load_config(write(tmp_path, "just words\n"))

    def test_bad_type_named(self, tmp_path):
        with pytest.raises(ConfigError, match="epochs"):
            load_config(write(tmp_path, "epochs = soon\n"))

    def test_bool_spellings(self):
        s = parse_config_text("adaptive_depth = off\n")
        config = ExperimentConfig()
        from adaslstm.config import apply_settings
        apply_settings(config, s)
        assert config.model.adaptive_depth is False

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.conf")

    def test_overrides_beat_file(self, tmp_path):
        config = load_config(write(tmp_path, "epochs = 3\n"),
                             overrides={"epochs": "7"})
        assert config.train.epochs == 7


class TestValidation:
    def test_defaults_valid(self):
        ExperimentConfig().validate()

    @pytest.mark.parametrize("key,value", [
        ("max_layers", "0"), ("hidden_size", "7"), ("selection", "greedy"),
        ("sequential", "transformer"), ("precision", "float16"),
        ("tau", "0"), ("embed_dropout", "1.0"), ("epochs", "0"),
        ("lr_decay", "0"), ("cv_folds", "1"), ("data_format", "xml"),
    ])
    def test_rejects(self, tmp_path, key, value):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, f"{key} = {value}\n"))

    def test_round_trip_through_dict(self):
        config = ExperimentConfig()
        config.model.hidden_size = 64
        config.train.seed = 99
        config.output_dir = "elsewhere"
        clone = config_from_dict(config.to_dict())
        assert clone.to_dict() == config.to_dict()

    def test_refined_dim_tracks_adaptive_flag(self):
        config = ExperimentConfig()
        assert config.model.refined_dim == config.model.token_dim + config.model.depth_embed_dim
        config.model.adaptive_depth = False
        assert config.model.refined_dim == config.model.token_dim
