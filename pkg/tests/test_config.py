import pytest

from driveworld.config import Config, ConfigError, dump_config, load_config


def test_defaults_valid():
    cfg = Config().validate()
    assert cfg.rig.k == 6
    assert cfg.render.w == 96 and cfg.render.h == 48
    assert cfg.clip.frames == 8
    assert cfg.sample.steps == 50 and cfg.sample.eta == 1.0 and cfg.sample.cfg == 5.0
    assert cfg.cond.dropout == 0.2
    assert cfg.data.n_per_bin == 36


def test_load_roundtrip(tmp_path):
    cfg = Config()
    cfg.world.n_lanes = 3
    cfg.rig.fov_deg = 80.0
    text = dump_config(cfg)
    path = tmp_path / "run.cfg"
    path.write_text(text)
    loaded = load_config(path)
    assert loaded.world.n_lanes == 3
    assert loaded.rig.fov_deg == 80.0


def test_env_var_overrides_path(tmp_path, monkeypatch):
    path = tmp_path / "env.cfg"
    path.write_text("world.n_agents_max = 9\n")
    monkeypatch.setenv("DRIVEWORLD_CONFIG", str(path))
    cfg = load_config(None)
    assert cfg.world.n_agents_max == 9


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("world.bogus = 1\n")
    with pytest.raises(ConfigError, match="bogus"):
        load_config(path)


def test_invalid_values_name_offending_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("world.n_lanes = 0\n")
    with pytest.raises(ConfigError, match="n_lanes"):
        load_config(path)


def test_comments_and_blanks(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\n\nclip.frames = 4  # trailing\n")
    assert load_config(path).clip.frames == 4


def test_no_overlap_rig_rejected():
    cfg = Config()
    cfg.rig.fov_deg = 50.0  # 60-degree spacing leaves no overlap
    with pytest.raises(ConfigError):
        cfg.validate()


def test_fingerprint_changes_with_config():
    a, b = Config(), Config()
    b.net.base_channels = 32
    assert a.fingerprint() != b.fingerprint()
    assert a.fingerprint() == Config().fingerprint()
