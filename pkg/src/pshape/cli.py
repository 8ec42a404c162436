"""Command-line pipeline: collect, train-cpc, cluster, train-rl, eval.

Every stage reads a JSON experiment config (``version: 1``), writes its
artifacts as files and is byte-reproducible for a fixed config and seed.
Precedence for settings is command-line flag > config file > default.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import subprocess
import sys
from dataclasses import asdict, fields

import numpy as np

from .cpc import CpcConfig
from .envs import DEFAULT_HORIZON, ENV_IDS, TEXTURES
from .rl import PpoConfig

log = logging.getLogger("pshape")

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


class MissingArtifact(FileNotFoundError):
    def __init__(self, stage: str, path: str):
        super().__init__(f"missing {stage} artifact {path!r}; run `pshape {stage}` first")
        self.stage = stage
        self.path = path


# config schema ----------------------------------------------------------------
BLOCKS = {
    "env": {"id": None, "layout": "umaze", "horizon": None, "goal": None},
    "collect": {"count": 200, "length": 100},
    "cpc": {f.name: None for f in fields(CpcConfig)},
    "cluster": {"k": 4, "samples": 5000, "restarts": 10, "max_iters": 300},
    "scheme": {"variant": "Sparse", "beta": "auto", "bonus": 0.5, "hand_alpha": None, "hand_beta": 0.001,
               "calibration_states": 5000},
    "ppo": {f.name: None for f in fields(PpoConfig)},
    "eval": {"experiment": "distance-correlation", "pairs": 500, "episodes": 100, "schemes": None, "seeds": None,
             "train_textures": None, "holdout_texture": "wood", "texture_seed": 0, "k": 8, "states": 2000,
             "workers": 1},
    "artifacts": {"trajectories": None, "encoder": None, "clusters": None, "policy": None},
}
TOP_LEVEL = {"version", "name", "seed", "out"} | set(BLOCKS)

STAGE_KEYS = {
    "collect": ["env.*", "collect.*", "seed", "name", "out", "artifacts.trajectories"],
    "train-cpc": ["env.*", "cpc.*", "seed", "name", "out", "artifacts.trajectories", "artifacts.encoder"],
    "cluster": ["env.*", "cluster.*", "seed", "name", "out", "artifacts.trajectories", "artifacts.encoder",
                "artifacts.clusters"],
    "train-rl": ["env.*", "scheme.*", "ppo.*", "cluster.*", "seed", "name", "out", "artifacts.*"],
    "eval": ["env.*", "eval.*", "scheme.*", "ppo.*", "cluster.k", "seed", "name", "out", "artifacts.*"],
}
EXPERIMENTS = ("distance-correlation", "success-rate", "compare-schemes", "texture-generalization",
               "cluster-export")


def _check_keys(cfg: dict) -> None:
    unknown = set(cfg) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    for block, known in BLOCKS.items():
        sub = cfg.get(block, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"config block {block!r} must be an object")
        bad = set(sub) - set(known)
        if bad:
            raise ConfigError(f"unknown keys in {block!r}: {sorted(bad)}")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        parts = key.split(".")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot set {key!r}: {p!r} is not a block")
        node[parts[-1]] = _parse_value(value)
    return cfg


def load_config(path: str | None, overrides=None, out=None, seed=None) -> dict:
    if path is None:
        cfg = {"version": CONFIG_VERSION}
    else:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path!r} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    apply_overrides(cfg, overrides)
    if out is not None:
        cfg["out"] = out
    if seed is not None:
        cfg["seed"] = seed
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config needs \"version\": {CONFIG_VERSION}, got {cfg.get('version')!r}")
    _check_keys(cfg)
    env = cfg.setdefault("env", {})
    if env.get("id") not in ENV_IDS:
        raise ConfigError(f"env.id must be one of {list(ENV_IDS)}, got {env.get('id')!r}")
    if not isinstance(cfg.get("seed", 0), int):
        raise ConfigError("seed must be an integer")
    cfg.setdefault("seed", 0)
    cfg.setdefault("out", os.environ.get("PSHAPE_OUT", "runs"))
    cfg.setdefault("name", env.get("layout", "umaze") if env["id"] == "gridworld" else env["id"])
    return cfg


def block(cfg: dict, name: str) -> dict:
    out = {k: v for k, v in BLOCKS[name].items()}
    out.update(cfg.get(name, {}))
    return out


def env_spec(cfg: dict) -> dict:
    e = block(cfg, "env")
    spec = {"id": e["id"], "horizon": e["horizon"] or DEFAULT_HORIZON[e["id"]]}
    if e["id"] == "gridworld":
        spec["layout"] = e["layout"]
        if e["goal"] is not None:
            spec["goal"] = list(e["goal"])
    return spec


def cpc_config(cfg: dict) -> CpcConfig:
    given = {k: v for k, v in cfg.get("cpc", {}).items() if v is not None}
    try:
        return CpcConfig(**given)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid cpc block: {exc}") from None


def ppo_config(cfg: dict) -> PpoConfig:
    given = {k: v for k, v in cfg.get("ppo", {}).items() if v is not None}
    try:
        return PpoConfig(**given)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid ppo block: {exc}") from None


def artifact(cfg: dict, kind: str) -> str:
    given = cfg.get("artifacts", {}).get(kind)
    if given:
        return given
    suffix = {"trajectories": "trajectories", "encoder": "encoder", "clusters": "clusters", "policy": "policy"}[kind]
    seed = cfg["seed"]
    if kind == "policy":
        variant = block(cfg, "scheme")["variant"]
        mode = ppo_config(cfg).feature_mode
        tag = variant if mode == "raw" else f"{variant}-features"
        return os.path.join(cfg["out"], f"{cfg['name']}_{suffix}_{tag}_{seed}.pshape")
    return os.path.join(cfg["out"], f"{cfg['name']}_{suffix}_{seed}.pshape")


def need(cfg: dict, kind: str, stage: str) -> str:
    path = artifact(cfg, kind)
    if not os.path.exists(path):
        raise MissingArtifact(stage, path)
    return path


def _ensure_out(cfg: dict) -> str:
    out = cfg["out"]
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out!r}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out!r} is not writable")
    return out


def _print(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


# stage loaders ----------------------------------------------------------------
def load_encoder(cfg: dict, stage: str = "train-cpc"):
    from .cpc import EncoderModel

    return EncoderModel.load(need(cfg, "encoder", stage))


def load_clusters(cfg: dict):
    from .clustering import ClusterModel

    return ClusterModel.load(need(cfg, "clusters", "cluster"))


def build_scheme(cfg: dict, env, variant: str | None = None):
    """RewardScheme from the config's scheme block (optionally overriding the variant)."""
    from .clustering import sample_states
    from .envs import TrajectorySet
    from .shaping import RewardScheme, calibrate_beta

    sb = block(cfg, "scheme")
    variant = variant or sb["variant"]
    encoder = clusters = None
    if variant in ("EmbeddingDistance", "ClusterBonus"):
        encoder = load_encoder(cfg)
    if variant == "ClusterBonus":
        clusters = load_clusters(cfg)
    beta = sb["beta"]
    if variant in ("RawDistance", "EmbeddingDistance") and beta == "auto":
        ts = TrajectorySet.load(need(cfg, "trajectories", "collect"))
        states = sample_states(ts, int(sb["calibration_states"]), np.random.default_rng([cfg["seed"], 17]))
        beta = calibrate_beta(env, states, variant, encoder)
    elif beta == "auto":
        beta = 1.0
    return RewardScheme(variant, beta=float(beta), bonus=float(sb["bonus"]), hand_alpha=sb["hand_alpha"],
                        hand_beta=float(sb["hand_beta"]), encoder=encoder, clusters=clusters)


def build_featurizer(cfg: dict, env, ppo: PpoConfig):
    from .rl import Featurizer

    if ppo.feature_mode == "embedding":
        return Featurizer("embedding", load_encoder(cfg), discrete=env.discrete, normalize=ppo.normalize_obs)
    return Featurizer("raw", obs_dim=env.obs_dim, normalize=ppo.normalize_obs)


# stages -------------------------------------------------------------------------
def cmd_collect(cfg: dict) -> dict:
    from .envs import collect_random_trajectories, make_env

    c = block(cfg, "collect")
    if int(c["count"]) < 1 or int(c["length"]) < 1:
        raise ConfigError("collect.count and collect.length must be >= 1")
    _ensure_out(cfg)
    env = make_env(env_spec(cfg))
    rng = np.random.default_rng(cfg["seed"])
    ts = collect_random_trajectories(env, int(c["count"]), int(c["length"]), rng, seed=cfg["seed"])
    path = artifact(cfg, "trajectories")
    ts.save(path)
    lengths = ts.lengths()
    return {"stage": "collect", "trajectories": path, "count": len(lengths), "mean_length": float(np.mean(lengths)),
            "min_length": int(min(lengths)), "max_length": int(max(lengths))}


def cmd_train_cpc(cfg: dict) -> dict:
    from .cpc import smoothed, train_cpc
    from .envs import TrajectorySet

    ccfg = cpc_config(cfg)
    src = need(cfg, "trajectories", "collect")
    out = _ensure_out(cfg)
    ts = TrajectorySet.load(src)
    rng = np.random.default_rng(cfg["seed"])
    model, history = train_cpc(ts, ccfg, rng, progress=lambda s, t, l: log.info("cpc batch %d/%d loss %.4f", s, t, l))
    path = artifact(cfg, "encoder")
    first, last = smoothed(history)
    model.save(path, {"seed": cfg["seed"], "final_loss": last})
    hist_path = os.path.join(out, f"{cfg['name']}_cpc-loss_{cfg['seed']}.csv")
    with open(hist_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["batch", "loss"])
        for i, v in enumerate(history):
            w.writerow([i, repr(v)])
    return {"stage": "train-cpc", "encoder": path, "batches": len(history), "loss_first10": first,
            "loss_last10": last, "history": hist_path}


def cmd_cluster(cfg: dict) -> dict:
    from .clustering import export_csv, identify_goal_cluster, kmeans_fit, sample_states
    from .cpc import encode_states
    from .envs import TrajectorySet, make_env

    cb = block(cfg, "cluster")
    src = need(cfg, "trajectories", "collect")
    encoder = load_encoder(cfg)
    out = _ensure_out(cfg)
    env = make_env(env_spec(cfg))
    ts = TrajectorySet.load(src)
    rng = np.random.default_rng(cfg["seed"])
    states = sample_states(ts, int(cb["samples"]), rng)
    z = encode_states(encoder, env.observe_states(states))
    model = kmeans_fit(z, int(cb["k"]), rng, restarts=int(cb["restarts"]), max_iters=int(cb["max_iters"]))
    if env.env_id != "reacher":  # reacher goals change per episode; no single goal cluster
        model = identify_goal_cluster(model, encoder, env.goal_observation())
    path = artifact(cfg, "clusters")
    model.save(path, {"seed": cfg["seed"], "samples": int(cb["samples"])})
    csv_path = os.path.join(out, f"{cfg['name']}_clusters_{cfg['seed']}.csv")
    names = {"gridworld": ["row", "col"], "pendulum": ["theta", "omega"],
             "reacher": ["theta1", "theta2", "goal_x", "goal_y", "vel1", "vel2"]}[env.env_id]
    export_csv(csv_path, states, z, model.assign(z), names)
    return {"stage": "cluster", "clusters": path, "k": model.k, "inertia": model.inertia, "goal_id": model.goal_id,
            "export": csv_path}


def _write_curve(path: str, curve) -> None:
    from .rl import CURVE_COLUMNS
    from .eval import write_csv

    write_csv(path, curve, list(CURVE_COLUMNS))


def cmd_train_rl(cfg: dict) -> dict:
    from .envs import make_env
    from .rl import success_rate, train_policy

    ppo = ppo_config(cfg)
    env = make_env(env_spec(cfg))
    scheme = build_scheme(cfg, env)
    featurizer = build_featurizer(cfg, env, ppo)
    out = _ensure_out(cfg)
    rng = np.random.default_rng(cfg["seed"])
    agent, curve = train_policy(env, scheme, ppo, rng, featurizer,
                                progress=lambda i, n, row: log.info("ppo iteration %d/%d %s", i, n, row))
    path = artifact(cfg, "policy")
    agent.save(path, {"seed": cfg["seed"], "ppo": asdict(ppo)})
    tag = os.path.basename(path)[len(cfg["name"]) + len("_policy_"):-len(".pshape")]
    curve_path = os.path.join(out, f"{cfg['name']}_curve_{tag}.csv")
    _write_curve(curve_path, curve)
    final = success_rate(agent, make_env(env_spec(cfg)), block(cfg, "eval")["episodes"],
                         np.random.default_rng([cfg["seed"], 7919]))
    return {"stage": "train-rl", "policy": path, "curve": curve_path, "iterations": len(curve),
            "final_success": final, "scheme": scheme.describe()}


def cmd_eval(cfg: dict) -> dict:
    from . import eval as ev
    from .envs import TextureSpec, make_env

    eb = block(cfg, "eval")
    exp = eb["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"eval.experiment must be one of {list(EXPERIMENTS)}, got {exp!r}")
    spec = env_spec(cfg)
    seed = cfg["seed"]
    name = cfg["name"]
    rng = np.random.default_rng([seed, 3])

    if exp == "distance-correlation":
        if spec["id"] != "gridworld":
            raise ConfigError("distance-correlation applies to gridworld layouts")
        encoder = load_encoder(cfg)
        out = _ensure_out(cfg)
        rep = ev.distance_correlation(spec["layout"], encoder, int(eb["pairs"]), rng)
        csv_path = ev.report_path(out, name, exp, seed)
        ev.write_csv(csv_path, rep.rows())
        summary = rep.summary()

    elif exp == "success-rate":
        from .rl import Agent

        ppo = ppo_config(cfg)
        env = make_env(spec)
        path = need(cfg, "policy", "train-rl")
        phase = build_scheme(cfg, env, "ClusterBonus") if ppo.two_policy else None
        agent = Agent.load(path, build_featurizer(cfg, env, ppo), phase)
        out = _ensure_out(cfg)
        rate = ev.success_rate(agent, env, int(eb["episodes"]), rng)
        csv_path = ev.report_path(out, name, exp, seed)
        row = {"policy": os.path.basename(path), "episodes": int(eb["episodes"]), "success_rate": rate}
        ev.write_csv(csv_path, [row])
        summary = row

    elif exp == "compare-schemes":
        ppo = ppo_config(cfg)
        env = make_env(spec)
        variants = eb["schemes"] or ["Sparse", block(cfg, "scheme")["variant"]]
        seeds = eb["seeds"] or [seed]
        schemes, featurizers = {}, {}
        for v in variants:
            label, mode = (v[:-len("+features")], "embedding") if v.endswith("+features") else (v, "raw")
            scheme = build_scheme(cfg, env, label)
            schemes[v] = lambda s, _sch=scheme: _clone_scheme(_sch)
            if mode == "embedding":
                featurizers[v] = lambda s, _e=load_encoder(cfg): _feature_for(_e, env, ppo)
        ppo_dict = asdict(ppo)
        ppo_dicts = {v: dict(ppo_dict, feature_mode="embedding" if v.endswith("+features") else "raw")
                     for v in variants}
        out = _ensure_out(cfg)
        res = {}
        for v in variants:
            res[v] = ev.compare_schemes(spec, {v: schemes[v]}, seeds, ppo_dicts[v], int(eb["episodes"]),
                                        featurizers, workers=int(eb["workers"]))
        rows = []
        for v in variants:
            for r in res[v]["curves"][v]:
                rows.append(dict(scheme=v, **r))
        csv_path = ev.report_path(out, name, exp, seed)
        ev.write_csv(csv_path, rows)
        summary = {v: res[v]["summary"][v] for v in variants}

    elif exp == "texture-generalization":
        encoder = load_encoder(cfg)
        out = _ensure_out(cfg)
        train_tags = eb["train_textures"] or encoder.config.textures
        if not train_tags:
            raise ConfigError("texture-generalization needs an image encoder trained on textures")
        if eb["holdout_texture"] not in TEXTURES:
            raise ConfigError(f"eval.holdout_texture must be one of {list(TEXTURES)}")
        states = rng.uniform(-np.pi, np.pi, size=(int(eb["states"]), 1))
        hold = TextureSpec(eb["holdout_texture"], int(eb["texture_seed"]))
        reports = [ev.texture_generalization(encoder, TextureSpec(t, int(eb["texture_seed"])), hold, states,
                                             int(eb["k"]), np.random.default_rng([seed, 5]))
                   for t in train_tags]
        csv_path = ev.report_path(out, name, exp, seed)
        ev.write_csv(csv_path, reports)
        summary = {"reports": reports}

    else:  # cluster-export
        from .clustering import export_csv, sample_states
        from .cpc import encode_states
        from .envs import TrajectorySet

        encoder = load_encoder(cfg)
        model = load_clusters(cfg)
        ts = TrajectorySet.load(need(cfg, "trajectories", "collect"))
        out = _ensure_out(cfg)
        env = make_env(spec)
        states = sample_states(ts, int(block(cfg, "cluster")["samples"]), rng)
        z = encode_states(encoder, env.observe_states(states))
        csv_path = ev.report_path(out, name, exp, seed)
        export_csv(csv_path, states, z, model.assign(z))
        summary = {"k": model.k, "goal_id": model.goal_id, "states": len(states)}

    json_path = csv_path[:-4] + ".json"
    ev.write_json(json_path, {"experiment": exp, "env": spec, "seed": seed, "summary": summary})
    return {"stage": "eval", "experiment": exp, "csv": csv_path, "summary_json": json_path}


def _clone_scheme(scheme):
    from .shaping import RewardScheme

    return RewardScheme(scheme.variant, beta=scheme.beta, bonus=scheme.bonus, hand_alpha=scheme.hand_alpha,
                        hand_beta=scheme.hand_beta, encoder=scheme.encoder, clusters=scheme.clusters)


def _feature_for(encoder, env, ppo):
    from .rl import Featurizer

    return Featurizer("embedding", encoder, discrete=env.discrete, normalize=ppo.normalize_obs)


COMMANDS = {"collect": cmd_collect, "train-cpc": cmd_train_cpc, "cluster": cmd_cluster, "train-rl": cmd_train_rl,
            "eval": cmd_eval}


# entry point --------------------------------------------------------------------
def _keys_help(stage: str) -> str:
    lines = ["config keys read by this stage:"]
    for pattern in STAGE_KEYS[stage]:
        if pattern.endswith(".*"):
            blk = pattern[:-2]
            lines.append(f"  {blk}: " + ", ".join(sorted(BLOCKS[blk])))
        else:
            lines.append(f"  {pattern}")
    lines.append("  version (required, must be 1)")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pshape", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} stage", epilog=_keys_help(name),
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", help="experiment config (JSON, version 1)")
        sp.add_argument("--out", help="output directory (default: config 'out', then $PSHAPE_OUT, then ./runs)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--seeds", help="comma-separated seeds; runs one child process per seed in parallel")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", default=[],
                        help="override a config value, e.g. --set ppo.total_steps=100000")
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def _run_seeds(args, argv) -> int:
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    base, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--seeds":
            skip = True
        elif not a.startswith("--seeds="):
            base.append(a)
    procs = [subprocess.Popen([sys.executable, "-m", "pshape.cli"] + base + ["--seed", str(s)]) for s in seeds]
    codes = [p.wait() for p in procs]
    return max(codes) if codes else 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s",
                        stream=sys.stderr)
    try:
        if args.seeds:
            return _run_seeds(args, argv)
        cfg = load_config(args.config, args.set, args.out, args.seed)
        result = COMMANDS[args.command](cfg)
        _print(result)
        return 0
    except ConfigError as exc:
        sys.stderr.write(json.dumps({"error": str(exc), "kind": "config", "stage": args.command}) + "\n")
        return 2
    except MissingArtifact as exc:
        sys.stderr.write(json.dumps({"error": str(exc), "kind": "missing-artifact", "stage": args.command,
                                     "needs": exc.stage, "path": exc.path}) + "\n")
        return 3
    except (OSError, ValueError, FloatingPointError) as exc:
        sys.stderr.write(json.dumps({"error": str(exc), "kind": type(exc).__name__, "stage": args.command}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
