import pytest

from cgnet.config import ConfigError, parse_config, read_config_text
from cgnet.gce import MergeStrategy
from cgnet.network import preset


def write(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text, encoding="utf-8")
    return p


def test_file_value_kept_with_preset(tmp_path):
    cfg = parse_config(write(tmp_path, "preset=sidd\nwidth=60\n"))
    assert cfg.network().width == 60 and cfg.network() == preset("sidd")


def test_empty_file_gives_preset(tmp_path):
    cfg = parse_config(write(tmp_path, ""), {"preset": "gaussian"})
    assert cfg.network() == preset("gaussian")


def test_unknown_key_suggests_nearest(tmp_path):
    with pytest.raises(ConfigError, match="widht.*width"):
        parse_config(write(tmp_path, "widht=60\n"))


def test_malformed_line_reports_line_number(tmp_path):
    with pytest.raises(ConfigError, match=":3:"):
        parse_config(write(tmp_path, "# header\nwidth=8\nthis is wrong\n"))


def test_flags_override_file(tmp_path):
    cfg = parse_config(write(tmp_path, "iters=10  # short\nsigma=15\n"), {"iters": "20"})
    assert cfg["iters"] == 20 and cfg["sigma"] == 15.0


def test_value_parsing():
    cfg = parse_config(overrides={"merge": "dynamic:kernel_mae", "gce_kernels": "5,3,3",
                                  "patch_schedule": "0:32,500:48", "res": "64x128", "clip_noise": "yes"})
    net = cfg.network()
    assert net.merge == MergeStrategy("dynamic", "kernel_mae") and net.gce_kernels == (5, 3, 3)
    assert cfg.train_plan().patch_at(600) == 48
    assert cfg["res"] == (64, 128) and cfg.noise().clip


@pytest.mark.parametrize("key,value", [("width", "wide"), ("merge", "dynamic"), ("patch_schedule", "0:30"),
                                       ("preset", "huge"), ("gce_placement", "all")])
def test_bad_values(key, value):
    with pytest.raises(ConfigError):
        parse_config(overrides={key: value})


def test_render_replays():
    cfg = parse_config(overrides={"preset": "gopro", "merge": "dynamic:channel_cosine", "iters": "7",
                                  "grad_clip": "1.5", "res": "128"})
    again = parse_config(overrides=read_config_text(cfg.render()))
    assert again.values == cfg.values


def test_require():
    cfg = parse_config()
    with pytest.raises(ConfigError, match="checkpoint"):
        cfg.require("checkpoint", command="denoise")
