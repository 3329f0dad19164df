"""Command-line surface for the full pipeline.

Subcommands: gen-data, curate, train, sample, eval, plan, serve.  All read one
key-value config file (``--config`` or the DRIVEWORLD_CONFIG env var); every
report writes CSV/JSON next to rendered figures.  Exit codes: 0 success,
2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import Config, ConfigError, load_config


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key-value config file")
    parser.add_argument("--out", default="runs", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driveworld")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic clip dataset")
    _add_common(p)
    p.add_argument("--dataset", default="dataset", help="dataset directory")
    p.add_argument("--n-clips", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("curate", help="balance the dataset over action bins")
    _add_common(p)
    p.add_argument("--dataset", default="dataset")
    p.add_argument("--n-per-bin", type=int, default=None)

    p = sub.add_parser("train", help="train the diffusion world model")
    _add_common(p)
    p.add_argument("--dataset", default="dataset")
    p.add_argument("--models", default="models", help="checkpoint directory")
    p.add_argument("--stage", choices=("image", "video", "stitch"), required=True)
    p.add_argument("--mode", choices=("layout", "action"), default="layout")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sample", help="factorized rollout to a frame directory")
    _add_common(p)
    p.add_argument("--models", default="models")
    p.add_argument("--mode", choices=("layout", "action"), default="layout")
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--n-clips", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--joint-only", action="store_true")

    p = sub.add_parser("eval", help="KPM / FFD / layout metrics on generated clips")
    _add_common(p)
    p.add_argument("--models", default="models")
    p.add_argument("--metrics", default="kpm,ffd",
                   help="comma list from kpm,ffd,layout")
    p.add_argument("--scenes", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gt-only", action="store_true",
                   help="evaluate real frames against themselves (sanity)")

    p = sub.add_parser("plan", help="open-loop planning evaluation")
    _add_common(p)
    p.add_argument("--models", default="models")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ood-shift", type=float, default=None,
                   help="run the OOD lateral-shift experiment (metres)")
    p.add_argument("--bypass", action="store_true",
                   help="score candidates on ground-truth geometry")
    p.add_argument("--strategies", default="tree,random")

    p = sub.add_parser("serve", help="run the HTTP session service")
    _add_common(p)
    p.add_argument("--models", default=None)
    p.add_argument("--port", type=int, default=8711)
    return parser


def cmd_gen_data(args, cfg: Config) -> int:
    from .data import bin_histogram, generate_dataset

    ds = generate_dataset(cfg, args.dataset, n_clips=args.n_clips,
                          seed0=args.seed, progress=True)
    grid = bin_histogram(ds)
    from .report import save_curation_report, save_json
    save_curation_report(args.out, grid, grid)
    save_json(args.out, "dataset.json", {
        "clips": len(ds), "path": str(Path(args.dataset).resolve()),
        "non_empty_bins": int((grid > 0).sum())})
    print(f"wrote {len(ds)} clips to {args.dataset}")
    return 0


def cmd_curate(args, cfg: Config) -> int:
    from .data import bin_histogram, load_dataset, resample_bins

    ds = load_dataset(args.dataset)
    before = bin_histogram(ds)
    n = args.n_per_bin if args.n_per_bin is not None else cfg.data.n_per_bin
    index = resample_bins(ds.index(), n)
    after = np.zeros_like(before)
    entries = []
    for clip_id, action_bin, behavior in index.entries:
        after[action_bin.steer_bin, action_bin.speed_bin] += 1
        entries.append({"id": clip_id,
                        "bin": [action_bin.speed_bin, action_bin.steer_bin],
                        "behavior": behavior})
    curated = {"version": 1, "n_per_bin": n, "source": str(args.dataset),
               "entries": entries}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "curated.json").write_text(json.dumps(curated, indent=1))
    from .report import save_curation_report
    save_curation_report(args.out, before, after)
    print(f"curated manifest: {len(entries)} entries over "
          f"{int((after > 0).sum())} bins -> {out / 'curated.json'}")
    return 0


def cmd_train(args, cfg: Config) -> int:
    from .data import load_dataset
    from .net.training import WorldModel, train_image_stage, train_video_stage
    from .report import save_training_curve

    ds = load_dataset(args.dataset)
    models = Path(args.models)
    if args.stage == "image":
        model, log = train_image_stage(cfg, ds, steps=args.steps, seed=args.seed)
        model.save(models / "image", cfg)
        save_training_curve(args.out, {"image": log.losses})
        print(f"stage-1 image model -> {models / 'image'}")
        return 0
    image_model = WorldModel.load(models / "image")
    kind = "joint" if args.stage == "video" else "stitch"
    model, log = train_video_stage(cfg, ds, image_model, kind, args.mode,
                                   steps=args.steps, seed=args.seed + 1)
    name = f"{kind}_{args.mode}"
    model.save(models / name, cfg)
    save_training_curve(args.out, {name: log.losses})
    print(f"stage-2 {name} model -> {models / name}")
    return 0


def _load_generator(args, cfg: Config, mode: str):
    from .data import rig_from_config
    from .factorized import FactorizedGenerator
    from .net.training import WorldModel

    models = Path(args.models)
    joint = WorldModel.load(models / f"joint_{mode}")
    stitch_dir = models / f"stitch_{mode}"
    stitch = WorldModel.load(stitch_dir) if stitch_dir.exists() else None
    return FactorizedGenerator(joint, stitch, cfg, rig_from_config(cfg))


def cmd_sample(args, cfg: Config) -> int:
    from .evaluation import make_eval_scene
    from .report import save_frame_grid, save_json

    generator = _load_generator(args, cfg, args.mode)
    scene = make_eval_scene(args.scene_seed, cfg)
    conds = [scene.conditions for _ in range(args.n_clips)]
    video = generator.rollout_video(
        scene.real[:1], conds, seed=args.seed,
        factorized=not args.joint_only and generator.stitch is not None)
    save_frame_grid(args.out, video, name="rollout")
    save_json(args.out, "sample.json", {
        "frames": int(video.shape[0]), "views": int(video.shape[1]),
        "scene_seed": args.scene_seed, "seed": args.seed})
    print(f"rollout of {video.shape[0]} frames -> {args.out}")
    return 0


def cmd_eval(args, cfg: Config) -> int:
    from .data import rig_from_config
    from .evaluation import make_eval_scene
    from .metrics import kpm_score, layout_adherence
    from .report import save_json, save_kpm_report

    wanted = {m.strip() for m in args.metrics.split(",") if m.strip()}
    rig = rig_from_config(cfg)
    scene_seeds = [args.seed * 1000 + i for i in range(args.scenes)]
    payload: dict = {"metrics": {}}
    if args.gt_only:
        scenes = [make_eval_scene(s, cfg) for s in scene_seeds]
        real = [s.real for s in scenes]
        report = kpm_score(real, real, rig)
        payload["metrics"]["kpm_real_vs_real"] = report.ratio
        save_kpm_report(args.out, {"real": report})
    else:
        from .evaluation import eval_generation
        generator = _load_generator(args, cfg, "layout")
        results = eval_generation(cfg, generator, scene_seeds, seed=args.seed)
        if "kpm" in wanted:
            payload["metrics"]["kpm"] = results["kpm"]
        if "ffd" in wanted:
            payload["metrics"]["ffd"] = results["ffd"]
        if "layout" in wanted:
            adherence = {}
            for pipeline, clips in results["generated"].items():
                scores = [layout_adherence(clip, scene.states, scene.real, rig)
                          for clip, scene in zip(clips, results["scenes"])]
                adherence[pipeline] = {
                    "fg_iou": float(np.mean([s.fg_iou for s in scores])),
                    "bg_iou": float(np.mean([s.bg_iou for s in scores])),
                    "box_recall": float(np.mean([s.box_recall for s in scores])),
                    "box_precision": float(np.mean([s.box_precision for s in scores])),
                }
            payload["metrics"]["layout"] = adherence
        save_kpm_report(args.out, results["reports"],
                        results["ffd"] if "ffd" in wanted else None)
    save_json(args.out, "eval.json", payload)
    print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


def cmd_plan(args, cfg: Config) -> int:
    from .planner import (BC_STATION_RANGE, bc_planner_fit, build_episode,
                          evaluate_open_loop, ood_shift_experiment)
    from .report import save_json, save_planning_report

    if args.ood_shift is not None:
        train_eps = [build_episode(10000 + args.seed * 997 + i, cfg,
                                   station_range=BC_STATION_RANGE)
                     for i in range(max(24, args.episodes))]
        planner = bc_planner_fit(train_eps, cfg)
        seeds = [20000 + args.seed * 991 + i for i in range(args.episodes)]
        results = ood_shift_experiment(cfg, planner, seeds, args.ood_shift)
        payload = {name: m.as_dict() for name, m in results.items()}
        save_planning_report(args.out, results)
        save_json(args.out, "plan.json", payload)
        print(json.dumps(payload, indent=1, sort_keys=True))
        return 0

    strategies = tuple(s.strip() for s in args.strategies.split(",") if s.strip())
    episodes = [build_episode(args.seed * 1000 + i, cfg)
                for i in range(args.episodes)]
    generator = None
    if not args.bypass:
        generator = _load_generator(args, cfg, "action")
    results = evaluate_open_loop(cfg, episodes, strategies=strategies,
                                 generator=generator, use_bypass=args.bypass,
                                 seed=args.seed)
    payload = {name: m.as_dict() for name, m in results.items()}
    save_planning_report(args.out, results)
    save_json(args.out, "plan.json", payload)
    print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


def cmd_serve(args, cfg: Config) -> int:
    from .server import run_server

    run_server(cfg, args.port, args.models)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "curate": cmd_curate,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "plan": cmd_plan,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        cfg = load_config(args.config)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:   # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
