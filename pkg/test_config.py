import pytest

from config.config import RunConfig, load_run_config
from utils.custom_exception import ConfigurationError


def test_presets_resolve():
    config = load_run_config(overrides={"preset": "testing"})
    assert config.preset == "testing"
    assert (config.utt_hidden, config.dial_hidden, config.embedding_dim) == (4, 4, 6)
    assert load_run_config().epochs == 20


def test_file_then_flags(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("preset=desk\nepochs=3\ntrainable_embeddings=false\nregime=s-dap\n", encoding="utf-8")
    config = load_run_config(str(path), {"epochs": 7, "seed": None})
    assert config.preset == "desk"
    assert config.epochs == 7
    assert config.trainable_embeddings is False
    assert config.regime == "s-dap"
    assert config.utt_hidden == 32


def test_written_config_loads_back(tmp_path):
    config = RunConfig.from_preset("testing")
    config.seed = 11
    path = tmp_path / "config.env"
    config.write(str(path))
    assert load_run_config(str(path)) == config


@pytest.mark.parametrize("text", ["hidden=3\n", "epochs=many\n", "dropout_p=1.5\n", "regime=joint\n",
                                  "da_labels=ask,,tell\n", "da_labels=ask,ask\n"])
def test_bad_files_are_rejected(tmp_path, text):
    path = tmp_path / "bad.env"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_run_config(str(path))


def test_unknown_override_and_preset():
    with pytest.raises(ConfigurationError):
        load_run_config(overrides={"layers": 2})
    with pytest.raises(ConfigurationError):
        RunConfig.from_preset("huge")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_run_config(str(tmp_path / "none.env"))


def test_act_inventory_setting():
    assert load_run_config().da_labels == ""
    config = load_run_config(overrides={"da_labels": "ask, tell,greet"})
    assert config.da_labels == "ask, tell,greet"
