import dataclasses

import pytest

from motionpred.config import ConfigError, TrackerConfig, config_from_ini, config_to_ini, load_config
from motionpred.geometry import RansacConfig


def test_defaults():
    cfg = TrackerConfig()
    assert (cfg.n, cfg.theta_v, cfg.theta_d, cfg.reinit_skip) == (10, 5.0, 0.7, 5)
    assert cfg.ransac == RansacConfig(inlier_threshold=3.0, iterations=500)
    assert cfg.md and cfg.mp and cfg.asr


def test_round_trip():
    cfg = dataclasses.replace(TrackerConfig(n=7, r_pos=2.0, mp=False),
                              ransac=RansacConfig(inlier_threshold=1.5))
    assert config_from_ini(config_to_ini(cfg)) == cfg


def test_partial_file(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[kalman]\nr_pos = 2.0\n\n[ablation]\nasr = no\n")
    cfg = load_config(p)
    assert cfg.r_pos == 2.0 and not cfg.asr and cfg.n == 10


@pytest.mark.parametrize("text", [
    "[tracker]\nbogus = 1\n",
    "[extras]\nx = 1\n",
    "[tracker]\nn = ten\n",
    "[tracker]\nn = 1\n",
    "[tracker]\ntheta_d = 1.5\n",
    "[ransac]\nmax_outlier_ratio = 2\n",
    "not an ini file",
])
def test_invalid(text):
    with pytest.raises(ConfigError):
        config_from_ini(text)
