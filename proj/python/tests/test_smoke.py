import math
import os
import tempfile

import pytest

import hvf


def test_grid_track_step():
    env = hvf.make_env("grid_track", seed=3)
    obs = env.reset()
    assert len(obs) == env.obs_dim == 4
    t = env.step(1)
    assert t.s == obs
    assert t.r <= 0.0


def test_point_tracker_takes_vectors():
    env = hvf.make_env("point_tracker", seed=1)
    env.reset()
    t = env.step([0.5, -0.5])
    assert len(t.s_next) == 6
    assert t.a == [0.5, -0.5]


def test_unknown_env_rejected():
    with pytest.raises(ValueError):
        hvf.make_env("cartpole")


def test_returns_and_gae():
    r = [1.0, 0.0, 2.0]
    R = hvf.discounted_returns(r, 0.5)
    assert R == pytest.approx([1.5, 1.0, 2.0])
    v = [0.2, -0.1, 0.4]
    adv = hvf.gae_advantages(r, v, 0.5, 1.0)
    assert adv == pytest.approx([a - b for a, b in zip(R, v)])


def test_bad_config_key():
    with pytest.raises(hvf.ConfigError):
        hvf.train({"no_such_key": "1"})


def test_short_training_run():
    cfg = {
        "env": "grid_migrate",
        "baseline": "hvf",
        "noise_sigma": "0.3",
        "total_env_steps": "800",
        "num_envs": "2",
        "log_interval": "200",
        "hindsight_batch": "32",
    }
    out = hvf.train(cfg, seed=0)
    assert not out["failed"]
    m = out["metrics"]
    assert len(m["env_steps"]) >= 3
    assert all(math.isfinite(x) for x in m["critic_mse"])
    assert hvf.final_window_mean(m["episode_reward_mean"]) == pytest.approx(
        hvf.final_window_mean(m["episode_reward_mean"], 0.25))


def test_experiment_writes_metrics():
    with tempfile.TemporaryDirectory() as d:
        res = hvf.run_experiment({
            "run_name": "py", "out_dir": d, "seeds": "0", "total_env_steps": "400",
            "num_envs": "2", "log_interval": "200",
        })
        table = hvf.read_metrics(os.path.join(res["run_dir"], "seed0", "metrics.csv"))
        assert table["env_steps"] == res["seeds"][0]["env_steps"]
