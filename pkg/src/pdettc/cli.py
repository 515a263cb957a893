"""Command-line experiment harness.

Subcommands: gen-data, train, finetune, train-prm, rollout, evaluate,
report.  All take an optional JSON config (schema-checked, unknown keys
rejected); command-line flags override file values, and the env var
PDETTC_SEED overrides the config seed (flags still win).  Every command
is deterministic given its effective config; artifacts embed the
config digest that produced them.

Exit codes: 0 ok, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import multiprocessing
import os
import sys
from pathlib import Path

import numpy as np

from . import euler, metrics, render, rewards, storage, surrogate as sg, ttc
from .nn import NonFiniteActivation, NonFiniteGradient
from .vit import ModelConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "output_dir": "runs/out",
    "jobs": 1,
    "grid": {"nx": 64, "ny": 64},
    "data": {
        "families": ["rp"],
        "n_per_family": 16,
        "split": [0.75, 0.125, 0.125],
        "gamma": 1.4,
        "cfl": 0.4,
        "path": "dataset.pdt",
    },
    "model": {"preset": "desk", "patch": "vit5", "time_channel": True},
    "train": {"lr": 3e-4, "weight_decay": 1e-7, "batch_size": 32, "epochs": 20,
              "loss_p": 2.0},
    "finetune": {"n_traj": 32, "lr": 1e-4, "weight_decay": 0.01, "batch_size": 32,
                 "epochs": 30, "loss_p": 2.0},
    "prm": {"k_candidates": 100, "margin": 0.1, "lr": 1e-4, "weight_decay": 0.0,
            "batch_triplets": 8, "epochs": 10, "patience": 3,
            "orientation": "higher_better", "train_trajectories": 0,
            "holdout_trajectories": 0},
    "ttc": {"b_list": [1, 4, 16, 64], "reward": "prm", "n_steps": 20,
            "paired_streams": True, "teacher_forced": False, "n_ics": 0,
            "split": "test"},
}

_SCHEMA_TYPES = {
    "seed": int, "output_dir": str, "jobs": int,
    "grid.nx": int, "grid.ny": int,
    "data.families": list, "data.n_per_family": int, "data.split": list,
    "data.gamma": float, "data.cfl": float, "data.path": str,
    "model.preset": str, "model.patch": str, "model.time_channel": bool,
    "train.lr": float, "train.weight_decay": float, "train.batch_size": int,
    "train.epochs": int, "train.loss_p": float,
    "finetune.n_traj": int, "finetune.lr": float, "finetune.weight_decay": float,
    "finetune.batch_size": int, "finetune.epochs": int, "finetune.loss_p": float,
    "prm.k_candidates": int, "prm.margin": float, "prm.lr": float,
    "prm.weight_decay": float, "prm.batch_triplets": int, "prm.epochs": int,
    "prm.patience": int, "prm.orientation": str, "prm.train_trajectories": int,
    "prm.holdout_trajectories": int,
    "ttc.b_list": list, "ttc.reward": str, "ttc.n_steps": int,
    "ttc.paired_streams": bool, "ttc.teacher_forced": bool, "ttc.n_ics": int,
    "ttc.split": str,
}


def _validate(doc, defaults, prefix="") -> None:
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key '{path}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{path}' must be an object")
            _validate(value, defaults[key], prefix=f"{path}.")
            continue
        want = _SCHEMA_TYPES[path]
        ok = isinstance(value, want) or (want is float and isinstance(value, int)
                                         and not isinstance(value, bool))
        if want is int and isinstance(value, bool):
            ok = False
        if not ok:
            raise ConfigError(
                f"config key '{path}' must be {want.__name__}, got {type(value).__name__}")


def _deep_update(base: dict, overlay: dict) -> dict:
    for k, v in overlay.items():
        if isinstance(v, dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def load_config(path: str | None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
        _validate(doc, DEFAULTS)
        _deep_update(cfg, doc)
    env_seed = os.environ.get("PDETTC_SEED")
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"PDETTC_SEED must be an integer, got {env_seed!r}") from None
    return cfg


def config_digest(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _set(cfg, dotted, value):
    if value is None:
        return
    node = cfg
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node[k]
    node[keys[-1]] = value


_PATCH = {"vit3": 3, "vit5": 5, "vit7": 7}


def model_config_for(cfg: dict, grid: euler.GridSpec) -> ModelConfig:
    preset = cfg["model"]["preset"]
    if preset == "desk":
        base = sg.DESK_MODEL
    elif preset == "paper":
        base = sg.PAPER_MODEL
    else:
        raise ConfigError(f"unknown size preset {preset!r} (desk | paper)")
    patch_name = cfg["model"]["patch"]
    if patch_name not in _PATCH:
        raise ConfigError(f"unknown model preset {patch_name!r} (vit3 | vit5 | vit7)")
    in_channels = 5 if cfg["model"]["time_channel"] else 4
    return ModelConfig(
        height=grid.nx, width=grid.ny, patch_size=_PATCH[patch_name],
        in_channels=in_channels, out_channels=4, embed_dim=base.embed_dim,
        depth=base.depth, n_heads=base.n_heads, mlp_ratio=base.mlp_ratio,
        dropout_p=base.dropout_p)


def _solve_one(args):
    spec, grid, gamma, cfl = args
    return euler.solve_trajectory(spec, grid, gamma, cfl)


# ---------------------------------------------------------------------------
# Commands


def cmd_gen_data(cfg: dict) -> int:
    d = cfg["data"]
    grid = euler.GridSpec(cfg["grid"]["nx"], cfg["grid"]["ny"])
    specs = euler.dataset_ic_specs(d["families"], d["n_per_family"], cfg["seed"])
    jobs = max(1, cfg["jobs"])
    work = [(s, grid, d["gamma"], d["cfl"]) for s in specs]
    if jobs > 1 and len(work) > 1:
        with multiprocessing.Pool(jobs) as pool:
            trajectories = pool.map(_solve_one, work)
    else:
        trajectories = [_solve_one(w) for w in work]
    ds = euler.assemble_dataset(trajectories, grid, cfg["seed"], d["families"],
                                tuple(d["split"]), d["gamma"])
    out = Path(d["path"])
    out.parent.mkdir(parents=True, exist_ok=True)
    storage.save_dataset(out, ds, config_digest(cfg))
    print(f"wrote {out} ({len(ds.trajectories)} trajectories, "
          f"split {[len(ds.split[k]) for k in ('train', 'val', 'test')]})")
    for fam in ds.families:
        drifts = [euler.conservation_drift(tr, ds.gamma)
                  for tr in ds.trajectories if tr.ic.family == fam]
        if not drifts:
            continue
        worst = {k: max(dr[k] for dr in drifts) for k in drifts[0]}
        print(f"audit family={fam} max mass drift={worst['mass']:.3e} "
              f"momentum_x={worst['momentum_x']:.3e} "
              f"momentum_y={worst['momentum_y']:.3e} energy={worst['energy']:.3e}")
    return EXIT_OK


def _train_config_from(section: dict, seed: int) -> sg.TrainConfig:
    return sg.TrainConfig(lr=section["lr"], weight_decay=section["weight_decay"],
                          batch_size=section["batch_size"], epochs=section["epochs"],
                          loss_p=section["loss_p"], seed=seed)


def _write_history_csv(path, history) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,val_mse,seconds\n")
        for h in history:
            fh.write(f"{h['epoch']},{h['train_loss']},{h['val_mse']},{h['seconds']}\n")


def _finish_training(result, out_path, cfg, label) -> int:
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.surrogate.save(out)
    _write_history_csv(out.with_suffix(out.suffix + ".loss.csv"), result.history)
    if result.history:
        best = min(h["val_mse"] for h in result.history)
        print(f"{label}: best val MSE {best:.6g} over {len(result.history)} epochs; "
              f"checkpoint {out}")
    else:
        print(f"{label}: no training epochs ran; checkpoint {out}")
    if result.diverged:
        print(f"{label}: training diverged; kept last good checkpoint", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_train(cfg: dict, data_path: str, out_path: str, resume: str | None) -> int:
    ds = storage.load_dataset(data_path)
    tc = _train_config_from(cfg["train"], cfg["seed"])

    def log(rec):
        print(f"epoch {rec['epoch']}: loss {rec['train_loss']:.6g} "
              f"val {rec['val_mse']:.6g} ({rec['seconds']:.1f}s)")

    if resume:
        base = sg.Surrogate.from_checkpoint(resume)
        result = sg._run_training(
            base, ds, sg.consecutive_pairs(ds, ds.split["train"]),
            sg.consecutive_pairs(ds, ds.split["val"]), tc, log)
    else:
        mc = model_config_for(cfg, ds.grid)
        result = sg.train(ds, mc, tc, log)
    return _finish_training(result, out_path, cfg, "train")


def cmd_finetune(cfg: dict, from_path: str, data_path: str, out_path: str) -> int:
    ds = storage.load_dataset(data_path)
    base = sg.Surrogate.from_checkpoint(from_path)
    tc = _train_config_from(cfg["finetune"], cfg["seed"])

    def log(rec):
        print(f"epoch {rec['epoch']}: loss {rec['train_loss']:.6g} "
              f"val {rec['val_mse']:.6g} ({rec['seconds']:.1f}s)")

    result = sg.finetune(base, ds, cfg["finetune"]["n_traj"], tc, log)
    return _finish_training(result, out_path, cfg, "finetune")


def cmd_train_prm(cfg: dict, from_path: str, data_path: str, out_path: str,
                  triplets_in: str | None, triplets_out: str | None) -> int:
    ds = storage.load_dataset(data_path)
    model = sg.Surrogate.from_checkpoint(from_path)
    p = cfg["prm"]
    if triplets_in:
        train_triplets = rewards.load_triplets(triplets_in)
        holdout = []
    else:
        train_ids = ds.split["train"]
        if p["train_trajectories"]:
            train_ids = train_ids[: p["train_trajectories"]]
        holdout_ids = ds.split["val"]
        if p["holdout_trajectories"]:
            holdout_ids = holdout_ids[: p["holdout_trajectories"]]
        print(f"building triplets: K={p['k_candidates']} over "
              f"{len(train_ids)} train + {len(holdout_ids)} holdout trajectories")
        train_triplets = rewards.build_prm_triplets(
            model, ds, p["k_candidates"], cfg["seed"], indices=train_ids)
        holdout = rewards.build_prm_triplets(
            model, ds, p["k_candidates"], cfg["seed"] + 1, indices=holdout_ids)
        if triplets_out:
            rewards.save_triplets(triplets_out, train_triplets, ds.grid, ds.gamma)
            print(f"wrote {len(train_triplets)} triplets to {triplets_out}")
    prm_cfg = rewards.PRMConfig(
        backbone=model.config, margin=p["margin"], k_candidates=p["k_candidates"],
        lr=p["lr"], weight_decay=p["weight_decay"],
        batch_triplets=p["batch_triplets"], epochs=p["epochs"],
        patience=p["patience"], seed=cfg["seed"], orientation=p["orientation"])

    def log(rec):
        print(f"epoch {rec['epoch']}: loss {rec['train_loss']:.6g} "
              f"holdout acc {rec['holdout_accuracy']:.3f} ({rec['seconds']:.1f}s)")

    result = rewards.train_prm(train_triplets, prm_cfg, model.norm,
                               holdout=holdout or None, log=log)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.prm.save(out)
    print(f"train-prm: {len(train_triplets)} triplets, best holdout accuracy "
          f"{result.best_accuracy:.3f}; checkpoint {out}")
    return EXIT_NUMERICAL if result.diverged else EXIT_OK


def _sweep_trajectories(cfg: dict, ds: euler.Dataset) -> list:
    which = cfg["ttc"]["split"]
    if which not in ds.split:
        raise ConfigError(f"unknown dataset split {which!r}")
    trajs = ds.split_trajectories(which)
    n = cfg["ttc"]["n_ics"]
    return trajs[:n] if n else trajs


def cmd_rollout(cfg: dict, surrogate_path: str, data_path: str, prm_path: str | None,
                out_dir: str) -> int:
    ds = storage.load_dataset(data_path)
    model = sg.Surrogate.from_checkpoint(surrogate_path)
    reward = cfg["ttc"]["reward"]
    prm = rewards.ProcessRewardModel.from_checkpoint(prm_path) if prm_path else None
    if reward == "prm" and prm is None:
        raise ConfigError("reward 'prm' needs --prm CHECKPOINT")
    trajs = _sweep_trajectories(cfg, ds)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = ttc.rollout_sweep(
        model, reward, trajs, cfg["ttc"]["b_list"], cfg["seed"], prm=prm,
        gamma=ds.gamma, n_steps=cfg["ttc"]["n_steps"],
        paired_streams=cfg["ttc"]["paired_streams"],
        teacher_forced=cfg["ttc"]["teacher_forced"],
        log=lambda m: print(m))
    index = {"config_digest": config_digest(cfg), "dataset": str(data_path),
             "reward": reward, "split": cfg["ttc"]["split"],
             "n_ics": len(trajs), "records": []}
    for (ic, b), rec in records.items():
        base = out / f"{reward}_ic{ic:03d}_B{b}"
        ttc.save_rollout_record(base, rec)
        index["records"].append({"reward": reward, "ic": ic, "B": b,
                                 "base": base.name})
    with open(out / "index.json", "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(records)} rollout records to {out}")
    return EXIT_OK


def _load_sweeps(records_dir: Path) -> tuple:
    """Read every index.json under a records dir into sweep dicts."""
    sweeps: dict = {}
    meta = []
    index_files = sorted(records_dir.glob("**/index.json"))
    if not index_files:
        raise ConfigError(f"no rollout index.json found under {records_dir}")
    for idx_file in index_files:
        index = json.loads(idx_file.read_text())
        meta.append(index)
        for entry in index["records"]:
            rec = ttc.load_rollout_record(idx_file.parent / entry["base"])
            sweeps.setdefault(entry["reward"], {})[(entry["ic"], entry["B"])] = rec
    return sweeps, meta


def cmd_evaluate(cfg: dict, records_dir: str, data_path: str, out_dir: str) -> int:
    ds = storage.load_dataset(data_path)
    sweeps, meta = _load_sweeps(Path(records_dir))
    trajs = _sweep_trajectories(cfg, ds)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = metrics.evaluate(sweeps, trajs, ds.normalization, ds.gamma,
                              dataset_label=Path(data_path).stem,
                              model_label=cfg["model"]["patch"])
    metrics.write_rows_csv(out / "metrics.csv", report.rows)
    metrics.write_summary_json(out / "summary.json", report,
                               extra={"config_digest": config_digest(cfg),
                                      "sources": [m["config_digest"] for m in meta]})
    print(f"wrote {out / 'metrics.csv'} ({len(report.rows)} rows)")
    for (reward, b), gain in sorted(report.aggregates.items()):
        print(f"aggregate_gain reward={reward} B={b}: {gain:.3f}%")
    return EXIT_OK


def cmd_report(cfg: dict, records_dir: str, data_path: str, out_dir: str) -> int:
    ds = storage.load_dataset(data_path)
    sweeps, _ = _load_sweeps(Path(records_dir))
    trajs = _sweep_trajectories(cfg, ds)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = metrics.evaluate(sweeps, trajs, ds.normalization, ds.gamma,
                              dataset_label=Path(data_path).stem,
                              model_label=cfg["model"]["patch"])
    metrics.write_summary_json(out / "summary.json", report,
                               extra={"config_digest": config_digest(cfg)})
    emitted = []
    for reward in sweeps:
        series = {}
        for (rw, b), curve in sorted(report.curves.items()):
            if rw == reward:
                series[f"B={b}"] = (list(range(1, len(curve) + 1)), curve)
        svg = out / f"mse_vs_t_{reward}.svg"
        render.write_line_svg(svg, series, title=f"Rollout MSE ({reward})",
                              xlabel="timestep", ylabel="MSE", log_y=True)
        emitted.append(svg.name)
    # field renders: truth vs chosen final density of the first IC at max B
    for reward, records in sweeps.items():
        ics = sorted({i for (i, _) in records})
        bmax = max(b for (_, b) in records)
        rec = records[(ics[0], bmax)]
        truth = trajs[ics[0]]
        render.write_field_ppm(out / f"field_truth_rho_ic{ics[0]:03d}.ppm",
                               truth.snapshots[-1].rho)
        render.write_field_ppm(out / f"field_{reward}_B{bmax}_rho_ic{ics[0]:03d}.ppm",
                               rec.chosen[-1].rho)
        emitted += [f"field_truth_rho_ic{ics[0]:03d}.ppm",
                    f"field_{reward}_B{bmax}_rho_ic{ics[0]:03d}.ppm"]
    print(f"report images: {', '.join(sorted(set(emitted)))}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--jobs", type=int, help="worker cap for parallel stages")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pdettc",
                                 description="PDE surrogate test-time computing harness")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a solver dataset")
    _add_common(p)
    p.add_argument("--families", help="comma list, e.g. rp,kh")
    p.add_argument("--n", type=int, help="trajectories per family")
    p.add_argument("--grid", type=int, help="cells per side")
    p.add_argument("--split", help="train,val,test fractions")
    p.add_argument("--gamma", type=float)
    p.add_argument("--cfl", type=float)
    p.add_argument("--out", help="dataset path")

    p = sub.add_parser("train", help="pretrain the surrogate")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--preset", choices=["desk", "paper"])
    p.add_argument("--model", choices=["vit3", "vit5", "vit7"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="continue from a checkpoint")

    p = sub.add_parser("finetune", help="finetune a pretrained surrogate")
    _add_common(p)
    p.add_argument("--from", dest="from_path", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n-traj", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-prm", help="build triplets and train the PRM")
    _add_common(p)
    p.add_argument("--from", dest="from_path", required=True,
                   help="surrogate checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--K", type=int, help="candidates per pair")
    p.add_argument("--alpha", type=float, help="triplet margin")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--orientation", choices=["higher_better", "lower_better"])
    p.add_argument("--triplets-in", help="reuse a saved triplet store")
    p.add_argument("--triplets-out", help="save the built triplet store")
    p.add_argument("--out", required=True)

    p = sub.add_parser("rollout", help="greedy best-of-B rollouts on a split")
    _add_common(p)
    p.add_argument("--surrogate", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--prm", help="PRM checkpoint (for --reward prm)")
    p.add_argument("--reward", choices=list(ttc.REWARD_NAMES))
    p.add_argument("--B", help="comma list of branching factors")
    p.add_argument("--n-ics", type=int)
    p.add_argument("--split", choices=["train", "val", "test"])
    p.add_argument("--teacher-forced", action="store_true", default=None)
    p.add_argument("--independent-streams", action="store_true", default=None)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("evaluate", help="metrics CSV + summary from records")
    _add_common(p)
    p.add_argument("--records-dir", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--reward", choices=list(ttc.REWARD_NAMES),
                   help="kept for parity with rollout; evaluation reads records")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="render curves and field images")
    _add_common(p)
    p.add_argument("--records-dir", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    return ap


def _apply_flags(cfg: dict, args: argparse.Namespace) -> None:
    _set(cfg, "seed", args.seed)
    _set(cfg, "jobs", getattr(args, "jobs", None))
    if getattr(args, "families", None):
        cfg["data"]["families"] = [f.strip() for f in args.families.split(",") if f.strip()]
    _set(cfg, "data.n_per_family", getattr(args, "n", None))
    if getattr(args, "grid", None):
        cfg["grid"]["nx"] = cfg["grid"]["ny"] = args.grid
    if getattr(args, "split", None) and isinstance(args.split, str) and "," in args.split:
        cfg["data"]["split"] = [float(x) for x in args.split.split(",")]
    elif getattr(args, "split", None) and args.command == "rollout":
        cfg["ttc"]["split"] = args.split
    _set(cfg, "data.gamma", getattr(args, "gamma", None))
    _set(cfg, "data.cfl", getattr(args, "cfl", None))
    if getattr(args, "out", None) and args.command == "gen-data":
        cfg["data"]["path"] = args.out
    _set(cfg, "model.preset", getattr(args, "preset", None))
    _set(cfg, "model.patch", getattr(args, "model", None))
    section = {"train": "train", "finetune": "finetune"}.get(args.command)
    if section:
        _set(cfg, f"{section}.epochs", getattr(args, "epochs", None))
        _set(cfg, f"{section}.lr", getattr(args, "lr", None))
        _set(cfg, f"{section}.batch_size", getattr(args, "batch", None))
    _set(cfg, "finetune.n_traj", getattr(args, "n_traj", None))
    if args.command == "train-prm":
        _set(cfg, "prm.k_candidates", getattr(args, "K", None))
        _set(cfg, "prm.margin", getattr(args, "alpha", None))
        _set(cfg, "prm.epochs", getattr(args, "epochs", None))
        _set(cfg, "prm.lr", getattr(args, "lr", None))
        _set(cfg, "prm.orientation", getattr(args, "orientation", None))
    if args.command == "rollout":
        if getattr(args, "B", None):
            cfg["ttc"]["b_list"] = [int(x) for x in args.B.split(",")]
        _set(cfg, "ttc.reward", getattr(args, "reward", None))
        _set(cfg, "ttc.n_ics", getattr(args, "n_ics", None))
        if args.teacher_forced:
            cfg["ttc"]["teacher_forced"] = True
        if args.independent_streams:
            cfg["ttc"]["paired_streams"] = False


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        _apply_flags(cfg, args)
        _validate(cfg, DEFAULTS)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "gen-data":
            return cmd_gen_data(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.data, args.out, args.resume)
        if args.command == "finetune":
            return cmd_finetune(cfg, args.from_path, args.data, args.out)
        if args.command == "train-prm":
            return cmd_train_prm(cfg, args.from_path, args.data, args.out,
                                 args.triplets_in, args.triplets_out)
        if args.command == "rollout":
            return cmd_rollout(cfg, args.surrogate, args.data, args.prm, args.out_dir)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.records_dir, args.data, args.out_dir)
        if args.command == "report":
            return cmd_report(cfg, args.records_dir, args.data, args.out_dir)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (euler.SolverError, euler.InvalidInitialCondition, NonFiniteGradient,
            NonFiniteActivation) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
