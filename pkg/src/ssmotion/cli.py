"""Command-line front end: synth | voxelize | refine | augment | train-ssl | eval | render.

Exit codes: 0 success, 1 usage error, 2 data error (malformed container or
inconsistent inputs).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import network
from .augment import MixPair, bevmix, random_flip, temporal_sample
from .container import ContainerError, read_container, write_container
from .grid import BevMap, GridSpec, MotionField, PointCloud, nonempty_cells, voxelize
from .msrm import (PROV_REGENERATED, PROV_SELECTED, RefineConfig, RegenConfig,
                   labels_to_field, refine)
from .render import render_motion, render_reliability
from .synthworld import SceneConfig, evaluate, generate, load_scene, save_scene
from .training import SslConfig, load_params, predictor_config, save_params, train_ssl, train_teacher
from .transport import SinkhornError

# single source of truth for the published hyperparameter defaults
PAPER_DEFAULTS = {"k": 5, "mu": 1.0, "beta": 10.0, "gamma": 0.6,
                  "theta_c": 3.0, "theta_w": 5.0, "alpha": 0.999}


class DataError(Exception):
    pass


def _add_refine_flags(p: argparse.ArgumentParser) -> None:
    for name, default, help_text in [
        ("mu", PAPER_DEFAULTS["mu"], "reliability threshold in cells"),
        ("beta", PAPER_DEFAULTS["beta"], "neighbor distance threshold in cells"),
        ("gamma", PAPER_DEFAULTS["gamma"], "consistency threshold"),
        ("theta-c", PAPER_DEFAULTS["theta_c"], "cost temperature"),
        ("theta-w", PAPER_DEFAULTS["theta_w"], "neighbor weight temperature"),
    ]:
        p.add_argument(f"--{name}", type=float, default=default,
                       help=f"{help_text} (default: {default})")
    p.add_argument("--k", type=int, default=PAPER_DEFAULTS["k"],
                   help=f"neighbor count (default: {PAPER_DEFAULTS['k']})")
    p.add_argument("--epsilon", type=float, default=0.03,
                   help="entropic regularization weight (default: 0.03)")


def _refine_config(args) -> RefineConfig:
    return RefineConfig(
        mu=args.mu, theta_c=args.theta_c, epsilon=args.epsilon,
        regen=RegenConfig(k=args.k, beta=args.beta, gamma=args.gamma,
                          theta_w=args.theta_w))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssmotion",
        description="Semi-supervised BEV motion prediction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--scenes", type=int, default=20)
    p.add_argument("--labeled-frac", type=float, default=0.05,
                   help="fraction of scenes written to labeled/ (default: 0.05)")
    p.add_argument("--objects", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("voxelize", help="voxelize a point cloud container into a BEV map")
    p.add_argument("--points", required=True, help="container with a (N,3) 'points' array in meters")
    p.add_argument("--out", required=True)
    for name, default in [("x", 32.0), ("y", 32.0)]:
        p.add_argument(f"--{name}-range", type=float, default=default,
                       help=f"half-extent of the crop along {name.upper()} (default: {default})")
    p.add_argument("--z-min", type=float, default=-3.0)
    p.add_argument("--z-max", type=float, default=2.0)
    p.add_argument("--cell", type=float, default=0.25, help="cell size in meters (default: 0.25)")
    p.add_argument("--cell-z", type=float, default=0.4)

    p = sub.add_parser("refine", help="select and re-generate pseudo motion labels")
    p.add_argument("--scene", required=True, help="scene container (current + future frames)")
    p.add_argument("--pseudo", required=True, help="motion container with the pseudo labels")
    p.add_argument("--out", required=True, help="refined-labels container")
    p.add_argument("--dump-diagnostics", action="store_true",
                   help="include the reliability scores in the output container")
    _add_refine_flags(p)

    p = sub.add_parser("augment", help="apply flip / temporal-sampling / BEVMix to a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--flip", choices=["x", "y", "none", "random"], default="none")
    p.add_argument("--ts", action="store_true", help="apply stride-2 temporal sampling")
    p.add_argument("--bevmix", metavar="OTHER",
                   help="background scene container to mix with")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train-ssl", help="train the mean-teacher SSL pipeline")
    p.add_argument("--labeled", required=True, help="directory of labeled scene containers")
    p.add_argument("--unlabeled", help="directory of unlabeled scene containers")
    p.add_argument("--labeled-frac", type=float,
                   help="if no --unlabeled dir, split --labeled by this fraction")
    p.add_argument("--epochs", type=int, default=15, help="SSL epochs (default: 15)")
    p.add_argument("--teacher-epochs", type=int, default=60)
    p.add_argument("--supervised-only", action="store_true",
                   help="skip the SSL stage; train on labeled scenes only")
    p.add_argument("--eval", help="directory of held-out scenes for per-epoch bucket errors")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output parameter container")
    p.add_argument("--alpha", type=float, default=PAPER_DEFAULTS["alpha"],
                   help=f"teacher EMA decay (default: {PAPER_DEFAULTS['alpha']})")
    p.add_argument("--no-ts", action="store_true")
    p.add_argument("--no-bevmix", action="store_true")
    _add_refine_flags(p)

    p = sub.add_parser("eval", help="speed-bucketed errors of a prediction against ground truth")
    p.add_argument("--pred", required=True, help="motion container or trained params")
    p.add_argument("--gt", required=True, help="scene container with ground truth")
    p.add_argument("--csv", help="also append rows to this CSV file")

    p = sub.add_parser("render", help="emit SVG overlays from containers")
    p.add_argument("--scene", required=True)
    p.add_argument("--motion", help="motion container to draw arrows from (default: scene ground truth)")
    p.add_argument("--reliability", help="refined-labels container with diagnostics")
    p.add_argument("--out", required=True, help="output SVG path (reliability map gets a suffix)")
    return parser


def _load_motion(path) -> MotionField:
    arrays, header = read_container(path)
    if "displacement" not in arrays or "validity" not in arrays:
        raise DataError(f"{path}: not a motion container")
    return MotionField(arrays["displacement"].astype(np.float64),
                       arrays["validity"].astype(bool))


def save_motion(path, motion: MotionField, horizon_seconds: float = 1.0,
                meta: dict | None = None) -> None:
    write_container(
        path,
        arrays={"displacement": motion.displacement.astype(np.float32),
                "validity": motion.validity.astype(np.uint8)},
        units={"displacement": "cells", "validity": "bool"},
        horizon_seconds=horizon_seconds,
        meta={"kind": "motion", **(meta or {})})


def _load_scene_dir(path) -> list:
    files = sorted(Path(path).glob("*.bmt1"))
    if not files:
        raise DataError(f"no scene containers found in {path}")
    return [load_scene(f) for f in files]


def _cmd_synth(args) -> int:
    out = Path(args.out)
    (out / "labeled").mkdir(parents=True, exist_ok=True)
    (out / "unlabeled").mkdir(parents=True, exist_ok=True)
    n_labeled = max(1, int(round(args.scenes * args.labeled_frac)))
    manifest = {"labeled": [], "unlabeled": [], "seed": args.seed}
    for i in range(args.scenes):
        scene = generate(SceneConfig(n_objects=args.objects, seed=args.seed + i))
        split = "labeled" if i < n_labeled else "unlabeled"
        rel = f"{split}/scene_{i:04d}.bmt1"
        save_scene(out / rel, scene)
        manifest[split].append(rel)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    print(f"wrote {args.scenes} scenes ({n_labeled} labeled) to {out}")
    return 0


def _cmd_voxelize(args) -> int:
    arrays, _ = read_container(args.points)
    if "points" not in arrays:
        raise DataError(f"{args.points}: missing 'points' array")
    spec = GridSpec(-args.x_range, args.x_range, -args.y_range, args.y_range,
                    args.z_min, args.z_max, args.cell, args.cell, args.cell_z)
    bev = voxelize(PointCloud(arrays["points"].astype(np.float64)), spec)
    write_container(args.out, arrays={"occupancy": bev.occupancy},
                    units={"occupancy": "occupancy"},
                    meta={"kind": "bev", "grid": spec.to_dict()})
    print(f"occupied voxels: {int(bev.occupancy.sum())}")
    return 0


def _cmd_refine(args) -> int:
    scene = load_scene(args.scene)
    pseudo = _load_motion(args.pseudo)
    cfg = _refine_config(args)
    cells, refined, diag = refine(pseudo, scene.seq.current, scene.future, cfg,
                                  return_diagnostics=True)
    field = labels_to_field(cells, refined, pseudo.validity.shape)
    arrays = {
        "displacement": field.displacement.astype(np.float32),
        "validity": field.validity.astype(np.uint8),
        "kept_idx": refined.kept_idx.astype(np.float32),
        "provenance": refined.provenance.astype(np.uint8),
        "cell_coords": cells.coords.astype(np.float32),
    }
    units = {"displacement": "cells", "validity": "bool", "kept_idx": "index",
             "provenance": "flag", "cell_coords": "cells"}
    if args.dump_diagnostics:
        arrays["delta_m"] = diag["delta_m"].astype(np.float32)
        arrays["auxiliary"] = diag["auxiliary"].astype(np.float32)
        units.update({"delta_m": "cells", "auxiliary": "cells"})
    write_container(args.out, arrays=arrays, units=units,
                    horizon_seconds=scene.seq.horizon_seconds,
                    meta={"kind": "refined"})
    summary = {
        "scored_cells": len(cells),
        "kept": len(refined),
        "mean_delta_m": float(diag["delta_m"].mean()),
        "provenance": {
            "selected": int(np.sum(refined.provenance == PROV_SELECTED)),
            "regenerated": int(np.sum(refined.provenance == PROV_REGENERATED)),
        },
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_augment(args) -> int:
    scene = load_scene(args.scene)
    seq, motion = scene.seq, scene.gt
    if args.flip != "none":
        seq, motion = random_flip(seq, motion, args.flip, seed=args.seed)
    if args.bevmix:
        other = load_scene(args.bevmix)
        seq, motion = bevmix(MixPair((seq, motion), (other.seq, other.gt)),
                             seed=args.seed)
    if args.ts:
        seq, motion = temporal_sample(seq, motion)
    scene.seq, scene.gt = seq, motion
    scene.ground_mask = np.zeros(motion.validity.shape, dtype=bool)
    save_scene(args.out, scene)
    print(f"wrote augmented scene to {args.out}")
    return 0


def _cmd_train_ssl(args) -> int:
    labeled = _load_scene_dir(args.labeled)
    if args.unlabeled:
        unlabeled = _load_scene_dir(args.unlabeled)
    elif args.labeled_frac:
        n = max(1, int(round(len(labeled) * args.labeled_frac)))
        labeled, unlabeled = labeled[:n], labeled[n:]
    else:
        unlabeled = []
    cfg = SslConfig(
        alpha=args.alpha, teacher_epochs=args.teacher_epochs,
        ssl_epochs=args.epochs, seed=args.seed, refine=_refine_config(args),
        use_temporal_sampling=not args.no_ts, use_bevmix=not args.no_bevmix)
    eval_scenes = _load_scene_dir(args.eval) if args.eval else []
    net_cfg = predictor_config(labeled[0].seq, cfg)
    csv_path = Path(args.out).with_suffix(".csv")
    rows = []

    def on_epoch(epoch, params, record):
        row = {"stage": record.get("stage", "ssl"), **record}
        for name, bucket in _bucket_errors(params, net_cfg, eval_scenes).items():
            row[f"{name}_mean"] = bucket
        rows.append(row)

    def _bucket_errors(params, net_cfg, scenes):
        out = {}
        if not scenes:
            return out
        reports = [evaluate(network.predict(params, s.seq, net_cfg), s.gt,
                            s.seq.spec, s.seq.horizon_seconds) for s in scenes]
        for name in ("static", "slow", "fast"):
            vals = [getattr(r, name).mean for r in reports if getattr(r, name)]
            out[name] = float(np.mean(vals)) if vals else ""
        return out

    teacher, _ = train_teacher(
        labeled, cfg,
        on_epoch=lambda e, p, rec: on_epoch(e, p, {**rec, "stage": "teacher"}))
    if unlabeled and not args.supervised_only:
        teacher, _ = train_ssl(labeled, unlabeled, cfg, teacher=teacher,
                               on_epoch=on_epoch)
    save_params(args.out, teacher, net_cfg)

    fields = sorted({k for r in rows for k in r})
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote parameters to {args.out} and training log to {csv_path}")
    return 0


def _cmd_eval(args) -> int:
    scene = load_scene(args.gt)
    arrays, header = read_container(args.pred)
    if header.get("meta", {}).get("kind") == "params":
        params, net_cfg = load_params(args.pred)
        pred = network.predict(params, scene.seq, net_cfg)
    else:
        pred = _load_motion(args.pred)
    report = evaluate(pred, scene.gt, scene.seq.spec, scene.seq.horizon_seconds)
    print(json.dumps(report.as_dict(), sort_keys=True))
    if args.csv:
        with open(args.csv, "a", newline="") as fh:
            writer = csv.writer(fh)
            if fh.tell() == 0:
                writer.writerow(["bucket", "mean", "median", "count"])
            for name, stats in report.as_dict().items():
                if stats:
                    writer.writerow([name, stats["mean"], stats["median"], stats["count"]])
    return 0


def _cmd_render(args) -> int:
    scene = load_scene(args.scene)
    motion = _load_motion(args.motion) if args.motion else scene.gt
    Path(args.out).write_text(render_motion(scene.seq.current, motion))
    if args.reliability:
        arrays, _ = read_container(args.reliability)
        if "delta_m" not in arrays or "cell_coords" not in arrays:
            raise DataError(f"{args.reliability}: missing reliability diagnostics "
                            "(re-run refine with --dump-diagnostics)")
        from .grid import CellSet
        cells = CellSet(arrays["cell_coords"].astype(np.int64))
        heat = render_reliability(motion.validity.shape, cells,
                                  arrays["delta_m"].astype(np.float64))
        heat_path = Path(args.out).with_suffix(".reliability.svg")
        heat_path.write_text(heat)
        print(f"wrote {args.out} and {heat_path}")
    else:
        print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "voxelize": _cmd_voxelize,
    "refine": _cmd_refine,
    "augment": _cmd_augment,
    "train-ssl": _cmd_train_ssl,
    "eval": _cmd_eval,
    "render": _cmd_render,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage problems; map the latter to 1
        return 0 if exc.code == 0 else 1
    try:
        return _COMMANDS[args.command](args)
    except (ContainerError, DataError, FileNotFoundError, KeyError,
            SinkhornError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
