"""Pipeline driver: dataset generation, model training, optimizer sweeps,
inference, evaluation and latency benchmarking.

Every run is driven by a single JSON config with explicit seeds; every
artifact gets a sidecar (or embedded block) recording the config hash and
seed that produced it, so identical configs reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import arm as arm_mod
from . import metrics as metrics_mod
from .arm import default_arm, load_arm
from .errors import (
    InvalidInputError,
    ModelLoadError,
    NumericalError,
    TrainingDivergenceError,
)
from .models import train_fm, train_im
from .nn import OptimizerConfig
from .serialize import load_model, save_model
from .tm import PredictedTrajectory
from .trainer import TMTrainConfig, train_tm, write_training_log

EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_DIVERGENCE = 4
EXIT_NUMERICAL = 5

# Reference measurements reported by the study this pipeline reproduces
# (per optimizer config: final loss, init/final endpoint distance, average
# spacing, max spacing deviation, average angle).
REFERENCE_SWEEP = {
    "1": {"final_ltm": 0.084, "init_dist": 0.429, "final_dist": 0.247,
          "avg_spacing": 0.078, "max_spacing_dev": 0.352, "avg_angle": 153.4},
    "2": {"final_ltm": 0.170, "init_dist": 0.632, "final_dist": 0.296,
          "avg_spacing": 0.110, "max_spacing_dev": 0.522, "avg_angle": 150.3},
    "3": {"final_ltm": 0.040, "init_dist": 0.265, "final_dist": 0.202,
          "avg_spacing": 0.064, "max_spacing_dev": 0.214, "avg_angle": 142.3},
    "4": {"final_ltm": 0.017, "init_dist": 0.134, "final_dist": 0.139,
          "avg_spacing": 0.061, "max_spacing_dev": 0.127, "avg_angle": 153.0},
    "5": {"final_ltm": 0.034, "init_dist": 0.183, "final_dist": 0.239,
          "avg_spacing": 0.063, "max_spacing_dev": 0.194, "avg_angle": 157.5},
    "6": {"final_ltm": 0.048, "init_dist": 0.311, "final_dist": 0.197,
          "avg_spacing": 0.069, "max_spacing_dev": 0.244, "avg_angle": 156.2},
}

DEFAULT_CONFIG = {
    "arm": None,  # null -> bundled 7-DoF arm
    "seed": 0,
    "out_dir": "runs/default",
    "babble": {"n": 20000, "delta_bound": 0.3},
    "record": {"n": 12000, "T": 11, "init_noise": 0.05},
    "fm": {
        "hidden": [128, 128, 128],
        "epochs": 60,
        "batch_size": 16,
        "optimizer": {"kind": "adam", "eta": 1e-3},
    },
    "im": {
        "hidden": [128, 128, 128],
        "epochs": 100,
        "batch_size": 16,
        "optimizer": {"kind": "adamw", "eta": 1e-3, "weight_decay": 4e-3},
    },
    "tm": {
        "n_r": 1,
        "d_r": 20,
        "d_h": 20,
        "d_hy": 10,
        "T": 11,
        "epochs": 50,
        "batch_size": 512,
        "checkpoint_every": 0,
        "optimizer": {"kind": "rmsprop", "eta": 1e-3, "gamma": 0.99},
    },
    "sweep": {
        "trials": 10,
        "configs": [
            {"name": "1", "optimizer": {"kind": "adam", "eta": 1e-3}},
            {"name": "2", "optimizer": {"kind": "adam", "eta": 1e-4}},
            {"name": "3", "optimizer": {"kind": "rmsprop", "eta": 1e-2, "gamma": 0.99}},
            {"name": "4", "optimizer": {"kind": "rmsprop", "eta": 1e-3, "gamma": 0.99}},
            {"name": "5", "optimizer": {"kind": "sgd", "eta": 0.5}},
            {"name": "6", "optimizer": {"kind": "sgd", "eta": 1.0}},
        ],
    },
    "eval": {"bins": 30},
    "bench": {"trials": 1000},
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | None, seed: int | None, out_dir: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            with open(path) as fh:
                cfg = _merge(cfg, json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInputError(f"cannot load config {path!r}: {exc}") from exc
    if seed is not None:
        cfg["seed"] = seed
    if out_dir is not None:
        cfg["out_dir"] = out_dir
    return cfg


def config_hash(cfg: dict) -> str:
    """Hash of everything that affects results; the output directory is
    excluded so identical experiments hash alike wherever they are written."""
    cfg = {k: v for k, v in cfg.items() if k != "out_dir"}
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()
    ).hexdigest()


def _provenance(cfg: dict) -> dict:
    return {"config_sha256": config_hash(cfg), "seed": cfg["seed"]}


def _write_sidecar(artifact_path: str, cfg: dict) -> None:
    with open(artifact_path + ".meta.json", "w") as fh:
        json.dump(_provenance(cfg), fh)


def _arm(cfg: dict):
    return load_arm(cfg["arm"]) if cfg["arm"] else default_arm()


def _outpath(cfg: dict, name: str) -> str:
    os.makedirs(cfg["out_dir"], exist_ok=True)
    return os.path.join(cfg["out_dir"], name)


# ---------------------------------------------------------------------------
# Commands


def cmd_babble(cfg: dict) -> int:
    arm = _arm(cfg)
    transitions = arm_mod.sample_babbling(
        arm, cfg["babble"]["n"], cfg["babble"]["delta_bound"], cfg["seed"]
    )
    path = _outpath(cfg, "babbling.jsonl")
    arm_mod.save_transitions(transitions, path)
    _write_sidecar(path, cfg)
    print(f"wrote {len(transitions)} transitions to {path}")
    return 0


def cmd_record(cfg: dict) -> int:
    arm = _arm(cfg)
    r = cfg["record"]
    trajectories = arm_mod.record_trajectories(
        arm, r["n"], r["T"], r["init_noise"], cfg["seed"]
    )
    tpath = _outpath(cfg, "trajectories.jsonl")
    arm_mod.save_trajectories(trajectories, tpath)
    _write_sidecar(tpath, cfg)
    endpoints = arm_mod.extract_endpoints(trajectories)
    epath = _outpath(cfg, "endpoints.jsonl")
    arm_mod.save_endpoints(endpoints, epath)
    _write_sidecar(epath, cfg)
    print(f"wrote {len(trajectories)} trajectories and endpoints to {cfg['out_dir']}")
    return 0


def cmd_train_fm(cfg: dict) -> int:
    transitions = arm_mod.load_transitions(_outpath(cfg, "babbling.jsonl"))
    c = cfg["fm"]
    fm, report = train_fm(
        transitions,
        OptimizerConfig.from_dict(c["optimizer"]),
        epochs=c["epochs"],
        hidden=tuple(c["hidden"]),
        batch_size=c["batch_size"],
        seed=cfg["seed"],
    )
    save_model(fm, _outpath(cfg, "fm.json"), provenance=_provenance(cfg))
    report.to_csv(_outpath(cfg, "fm_train.csv"))
    _write_sidecar(_outpath(cfg, "fm_train.csv"), cfg)
    print(f"forward model trained; held-out MAE: {report.mae}")
    return 0


def cmd_train_im(cfg: dict) -> int:
    transitions = arm_mod.load_transitions(_outpath(cfg, "babbling.jsonl"))
    c = cfg["im"]
    im, report = train_im(
        transitions,
        OptimizerConfig.from_dict(c["optimizer"]),
        epochs=c["epochs"],
        hidden=tuple(c["hidden"]),
        batch_size=c["batch_size"],
        seed=cfg["seed"],
    )
    save_model(im, _outpath(cfg, "im.json"), provenance=_provenance(cfg))
    report.to_csv(_outpath(cfg, "im_train.csv"))
    _write_sidecar(_outpath(cfg, "im_train.csv"), cfg)
    print(f"inverse model trained; held-out MAE: {report.mae}")
    return 0


def _train_tm_once(cfg: dict, optimizer: dict, seed: int, log_path=None):
    endpoints = arm_mod.load_endpoints(_outpath(cfg, "endpoints.jsonl"))
    fm = load_model(_outpath(cfg, "fm.json"))
    im = load_model(_outpath(cfg, "im.json"))
    c = cfg["tm"]
    tm_cfg = TMTrainConfig(
        optimizer=OptimizerConfig.from_dict(optimizer),
        epochs=c["epochs"],
        batch_size=c["batch_size"],
        seed=seed,
        checkpoint_every=c.get("checkpoint_every", 0),
        checkpoint_dir=cfg["out_dir"],
        log_path=log_path,
    )
    return train_tm(
        endpoints,
        fm,
        im,
        tm_cfg,
        horizon=c["T"],
        n_r=c["n_r"],
        d_r=c["d_r"],
        d_h=c["d_h"],
        d_hy=c["d_hy"],
    )


def cmd_train_tm(cfg: dict) -> int:
    log_path = _outpath(cfg, "tm_train_log.csv")
    tm, logs = _train_tm_once(cfg, cfg["tm"]["optimizer"], cfg["seed"], log_path)
    save_model(tm, _outpath(cfg, "tm.json"), provenance=_provenance(cfg))
    _write_sidecar(log_path, cfg)
    print(f"trajectory model trained; final loss {logs[-1].loss:.6f}")
    return 0


def _eval_model(cfg: dict, tm, endpoints):
    s0_th = np.stack([p.s0.theta for p in endpoints])
    s0_ef = np.stack([p.s0.ef for p in endpoints])
    sT_th = np.stack([p.sT.theta for p in endpoints])
    sT_ef = np.stack([p.sT.ef for p in endpoints])
    ef_seqs = tm.infer_batch(s0_th, s0_ef, sT_th, sT_ef)
    return [
        metrics_mod.trajectory_stats(ef_seqs[i], s0_ef[i], sT_ef[i])
        for i in range(len(endpoints))
    ]


def cmd_sweep(cfg: dict) -> int:
    endpoints = arm_mod.load_endpoints(_outpath(cfg, "endpoints.jsonl"))
    sweep = cfg["sweep"]
    rows = []
    evals = {}
    for ci, entry in enumerate(sweep["configs"]):
        name = str(entry["name"])
        for trial in range(sweep["trials"]):
            seed = int(
                np.random.default_rng([cfg["seed"], 9, ci, trial]).integers(2**31)
            )
            tm, logs = _train_tm_once(cfg, entry["optimizer"], seed)
            rows.append((name, trial, seed, logs[-1].loss))
            if trial == 0:
                stats = _eval_model(cfg, tm, endpoints)
                corpus = metrics_mod.aggregate(stats, cfg["eval"]["bins"])
                evals[name] = corpus
                save_model(
                    tm,
                    _outpath(cfg, f"tm_config{name}.json"),
                    provenance=_provenance(cfg),
                )
            print(f"config {name} trial {trial}: final loss {rows[-1][3]:.6f}")
    rows.sort(key=lambda r: (r[0], r[1]))
    path = _outpath(cfg, "sweep.csv")
    with open(path, "w") as fh:
        fh.write("config,trial,seed,final_ltm\n")
        for name, trial, seed, loss in rows:
            fh.write(f"{name},{trial},{seed},{loss!r}\n")
    _write_sidecar(path, cfg)

    spath = _outpath(cfg, "sweep_summary.csv")
    with open(spath, "w") as fh:
        fh.write(
            "config,mean_final_ltm,std_final_ltm,ref_final_ltm,"
            "init_dist,ref_init_dist,final_dist,ref_final_dist,"
            "avg_spacing,ref_avg_spacing,max_spacing_dev,ref_max_spacing_dev,"
            "avg_angle,ref_avg_angle\n"
        )
        for name in sorted({r[0] for r in rows}):
            losses = [r[3] for r in rows if r[0] == name]
            ref = REFERENCE_SWEEP.get(name, {})
            ev = evals.get(name)
            mean = np.mean(losses)
            std = np.std(losses)
            cols = [name, repr(float(mean)), repr(float(std)),
                    str(ref.get("final_ltm", ""))]
            for metric in ("init_dist", "final_dist", "avg_spacing",
                           "max_spacing_dev", "avg_angle"):
                cols.append(repr(ev.mean[metric]) if ev else "")
                cols.append(str(ref.get(metric, "")))
            fh.write(",".join(cols) + "\n")
    _write_sidecar(spath, cfg)
    print(f"sweep table written to {spath}")
    return 0


def cmd_infer(cfg: dict) -> int:
    endpoints = arm_mod.load_endpoints(_outpath(cfg, "endpoints.jsonl"))
    tm = load_model(_outpath(cfg, "tm.json"))
    s0_th = np.stack([p.s0.theta for p in endpoints])
    s0_ef = np.stack([p.s0.ef for p in endpoints])
    sT_th = np.stack([p.sT.theta for p in endpoints])
    sT_ef = np.stack([p.sT.ef for p in endpoints])
    ef_seqs = tm.infer_batch(s0_th, s0_ef, sT_th, sT_ef)
    path = _outpath(cfg, "predicted.jsonl")
    with open(path, "w") as fh:
        for i in range(len(endpoints)):
            fh.write(json.dumps({"ef_seq": ef_seqs[i].tolist()}) + "\n")
    _write_sidecar(path, cfg)
    print(f"wrote {len(endpoints)} predicted trajectories to {path}")
    return 0


def cmd_eval(cfg: dict) -> int:
    endpoints = arm_mod.load_endpoints(_outpath(cfg, "endpoints.jsonl"))
    preds = []
    with open(_outpath(cfg, "predicted.jsonl")) as fh:
        for line in fh:
            preds.append(np.asarray(json.loads(line)["ef_seq"], dtype=np.float64))
    if not preds:
        print("error: empty corpus", file=sys.stderr)
        return EXIT_INPUT
    if len(preds) != len(endpoints):
        print("error: predictions/endpoints count mismatch", file=sys.stderr)
        return EXIT_INPUT
    stats = [
        metrics_mod.trajectory_stats(preds[i], endpoints[i].s0.ef, endpoints[i].sT.ef)
        for i in range(len(preds))
    ]
    corpus = metrics_mod.aggregate(stats, cfg["eval"]["bins"])
    for name, writer in (
        ("trajectory_stats.csv", lambda p: metrics_mod.write_stats_csv(stats, p)),
        ("aggregate.csv", lambda p: metrics_mod.write_aggregate_csv(corpus, p)),
        ("histograms.csv", lambda p: metrics_mod.write_histograms_csv(corpus, p)),
    ):
        path = _outpath(cfg, name)
        writer(path)
        _write_sidecar(path, cfg)
    print(
        "corpus means: "
        + ", ".join(f"{m}={corpus.mean[m]:.4f}" for m in metrics_mod.METRIC_NAMES)
    )
    return 0


def cmd_bench(cfg: dict) -> int:
    tm = load_model(_outpath(cfg, "tm.json"))
    endpoints = arm_mod.load_endpoints(_outpath(cfg, "endpoints.jsonl"))
    n = cfg["bench"]["trials"]
    rng = np.random.default_rng([cfg["seed"], 10])
    idx = rng.integers(0, len(endpoints), size=n)
    times = np.empty(n)
    for k, i in enumerate(idx):
        p = endpoints[i]
        t0 = time.perf_counter()
        tm.infer(p.s0, p.sT)
        times[k] = time.perf_counter() - t0
    mean_us = times.mean() * 1e6
    std_us = times.std() * 1e6
    path = _outpath(cfg, "bench.csv")
    with open(path, "w") as fh:
        fh.write("trials,mean_us,std_us\n")
        fh.write(f"{n},{mean_us:.3f},{std_us:.3f}\n")
    print(f"single-trajectory inference: {mean_us:.1f} us +/- {std_us:.1f} us")
    return 0


COMMANDS = {
    "babble": cmd_babble,
    "record": cmd_record,
    "train-fm": cmd_train_fm,
    "train-im": cmd_train_im,
    "train-tm": cmd_train_tm,
    "sweep": cmd_sweep,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajplan",
        description="Self-supervised trajectory-planning pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override seed")
        p.add_argument("--out", default=None, help="override output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out)
    except InvalidInputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg)
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvalidInputError, ModelLoadError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TrainingDivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
