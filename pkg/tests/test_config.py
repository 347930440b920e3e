import pytest

from audiotag.config import ConfigError, load_config, write_config


def test_defaults_and_types():
    cfg = load_config()
    assert cfg["dsp"]["sample_rate"] == 32000 and cfg["dsp"]["f_max"] == 14000.0
    assert cfg["train"]["seed"] is None and cfg["train"]["balanced"] is True


def test_file_then_overrides_win(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[train]\nseed = 3\nbatch_size = 8\nbalanced = no\n")
    cfg = load_config(p, ["train.batch_size=4"])
    assert cfg["train"]["seed"] == 3 and cfg["train"]["batch_size"] == 4
    assert cfg["train"]["balanced"] is False


@pytest.mark.parametrize(
    "text,overrides,match",
    [
        ("[nope]\na = 1\n", [], "unknown section"),
        ("[train]\nspeed = 1\n", [], "unknown key"),
        ("[train]\nbatch_size = many\n", [], "cannot read"),
        ("", ["trainbatch=3"], "section.key=value"),
        ("", ["x.y=1"], "unknown section"),
        ("", [], "seed is required"),
        ("[train]\nseed =\n", [], "seed is required"),
    ],
)
def test_errors(tmp_path, text, overrides, match):
    p = tmp_path / "c.ini"
    p.write_text(text)
    with pytest.raises(ConfigError, match=match):
        load_config(p, overrides, require_seed=True)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/x.ini")


def test_write_read_roundtrip(tmp_path):
    cfg = load_config(None, ["train.seed=5", "augment.specaug=true", "transfer.shots=3"])
    write_config(cfg, tmp_path / "out.ini")
    assert load_config(tmp_path / "out.ini") == cfg
