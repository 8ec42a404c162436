import json
import os
import subprocess
import sys

import pytest

from pshape.cli import BLOCKS, ConfigError, load_config, main

TINY = [
    "--set", "collect.count=4", "--set", "collect.length=30",
    "--set", "cpc.max_batches=6", "--set", "cpc.embedding=8", "--set", "cpc.context_size=6",
    "--set", "cpc.context=4", "--set", "cpc.predict=3",
    "--set", "cluster.samples=100", "--set", "cluster.k=3", "--set", "cluster.restarts=2",
    "--set", "ppo.horizon=128", "--set", "ppo.minibatch_size=64", "--set", "ppo.epochs=1",
    "--set", "ppo.total_steps=256", "--set", "ppo.eval_episodes=2",
    "--set", "eval.pairs=40", "--set", "eval.episodes=3", "--set", "scheme.calibration_states=100",
]


def write_cfg(tmp_path, **extra):
    cfg = {"version": 1, "env": {"id": "gridworld", "layout": "umaze"}}
    cfg.update(extra)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def run(stage, cfg, out, *extra):
    return main([stage, "--config", cfg, "--out", str(out), *TINY, *extra])


def test_load_config_validation(tmp_path, monkeypatch):
    with pytest.raises(ConfigError, match="version"):
        load_config(write_cfg(tmp_path, version=2))
    with pytest.raises(ConfigError, match="unknown"):
        load_config(write_cfg(tmp_path, extra=1))
    with pytest.raises(ConfigError, match="unknown keys in 'ppo'"):
        load_config(write_cfg(tmp_path, ppo={"gama": 0.9}))
    with pytest.raises(ConfigError, match="env.id"):
        load_config(write_cfg(tmp_path, env={"id": "cheetah"}))
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "missing.json"))
    monkeypatch.setenv("PSHAPE_OUT", "/tmp/elsewhere")
    cfg = load_config(write_cfg(tmp_path), ["ppo.gamma=0.9", "env.layout=fourrooms"])
    assert cfg["out"] == "/tmp/elsewhere" and cfg["ppo"]["gamma"] == 0.9 and cfg["name"] == "fourrooms"
    # flag beats file
    assert load_config(write_cfg(tmp_path, out="a"), out="b")["out"] == "b"


def test_count_zero_fails_before_work(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["collect", "--config", write_cfg(tmp_path), "--out", str(out), "--set", "collect.count=0"])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["kind"] == "config"
    assert not out.exists()


def test_missing_artifact_names_stage(tmp_path, capsys):
    code = run("train-cpc", write_cfg(tmp_path), tmp_path / "o")
    assert code == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["needs"] == "collect" and err["kind"] == "missing-artifact"
    code = run("cluster", write_cfg(tmp_path), tmp_path / "o")
    assert code == 3


def test_help_lists_keys():
    for stage, blocks in (("collect", ["collect"]), ("train-rl", ["ppo", "scheme"]), ("eval", ["eval"])):
        out = subprocess.run([sys.executable, "-m", "pshape.cli", stage, "--help"], capture_output=True, text=True)
        assert out.returncode == 0
        for b in blocks:
            for key in BLOCKS[b]:
                assert key in out.stdout, (stage, key)


def test_pipeline_is_byte_identical(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        for stage, extra in (("collect", []), ("train-cpc", []), ("cluster", []),
                             ("train-rl", ["--set", "scheme.variant=ClusterBonus"]),
                             ("eval", ["--set", "eval.experiment=distance-correlation"]),
                             ("eval", ["--set", "eval.experiment=cluster-export"]),
                             ("eval", ["--set", "eval.experiment=success-rate", "--set",
                                       "scheme.variant=ClusterBonus"])):
            assert run(stage, cfg, out, *extra) == 0, capsys.readouterr().err
    names = sorted(os.listdir(outs[0]))
    assert names == sorted(os.listdir(outs[1]))
    assert "umaze_policy_ClusterBonus_0.pshape" in names
    assert "umaze_distance-correlation_0.csv" in names
    for n in names:
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes(), n


def test_seeds_fan_out(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "s"
    r = subprocess.run([sys.executable, "-m", "pshape.cli", "collect", "--config", cfg, "--out", str(out),
                        "--seeds", "0,1", "--set", "collect.count=2", "--set", "collect.length=5"],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert sorted(os.listdir(out)) == ["umaze_trajectories_0.pshape", "umaze_trajectories_1.pshape"]
    assert (out / "umaze_trajectories_0.pshape").read_bytes() != (out / "umaze_trajectories_1.pshape").read_bytes()
