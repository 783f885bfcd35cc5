"""``gdmap`` command line: make-dataset, train, generate, denoise-shape, evaluate.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure,
4 incompatible checkpoint.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, resolve
from .dataset import (
    ShapeSpec,
    build_block_maps,
    corridor_scene,
    read_cloud,
    read_path,
    sample_sparse_hits,
    write_cloud,
)
from .denoiser import (
    Architecture,
    MLPDenoiser,
    TrainConfig,
    load_checkpoint,
    save_params,
    train,
)
from .diffusion import build_schedule
from .errors import GDMError, IncompatibleCheckpoint, InvalidArgument, NumericalError
from .metrics import error_field, evaluate, evaluate_blockwise
from .pipeline import (
    denoise_shape,
    derive_seed,
    generate_map,
    mean_points_per_group,
    radial_spread,
    training_map,
)
from .stage1 import Mode1, Mode2, Mode3

log = logging.getLogger("gdmap")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_COMPAT = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="JSON run config; flags override it")
    p.add_argument("--seed", dest="seed", type=int, help="root seed (default 0)")
    p.add_argument("--out", dest="paths.out", help="output directory (default ./out)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gdmap", description="Group-diffusion map generation from paths.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("make-dataset", help="build block maps or synthetic corridor scenes")
    _common(p)
    p.add_argument("--poses", dest="paths.poses")
    p.add_argument("--scans", dest="paths.scans")
    p.add_argument("--block-length", dest="dataset.block_length", type=float)
    p.add_argument("--target-points", dest="dataset.target_points", type=int)
    p.add_argument("--skip-missing", dest="dataset.skip_missing", action="store_const", const=True)
    p.add_argument("--fps-start", dest="dataset.fps_start", type=int)
    p.add_argument("--synthetic-corridors", dest="dataset.corridors", type=int, metavar="N")
    p.add_argument("--corridor-points", dest="dataset.corridor_points", type=int)
    p.add_argument("--sparse-hits", dest="dataset.sparse_hits", type=int)

    p = sub.add_parser("train", help="train the denoiser on a dataset manifest")
    _common(p)
    p.add_argument("--dataset", dest="paths.dataset", help="manifest.json from make-dataset")
    p.add_argument("--epochs", dest="train.epochs", type=int)
    p.add_argument("--steps", dest="train.steps", type=int)
    p.add_argument("--lr", dest="train.lr", type=float)
    p.add_argument("--lr-min", dest="train.lr_min", type=float, help="cosine floor for the step size")
    p.add_argument("--r", dest="train.r", type=float)
    p.add_argument("--hidden", dest="model.hidden", type=lambda s: [int(v) for v in s.split(",")])
    p.add_argument("--T", dest="schedule.T", type=int)
    p.add_argument("--log-every", dest="train.log_every", type=int)

    p = sub.add_parser("generate", help="stage 1 + reverse chain along a path")
    _common(p)
    p.add_argument("--checkpoint", dest="paths.checkpoint")
    p.add_argument("--path", dest="paths.path", help="pose or xyz file with the travelled path")
    p.add_argument("--mode", dest="stage1.mode", type=int, choices=(1, 2, 3))
    p.add_argument("--width", dest="stage1.width", type=float)
    p.add_argument("--width-range", dest="stage1.width_range", type=float, nargs=2)
    p.add_argument("--width-cap", dest="stage1.width_cap", type=float)
    p.add_argument("--hits", dest="paths.hits", help="sparse hits cloud (mode 3)")
    p.add_argument("--points-per-group", dest="stage1.points_per_group", type=int)
    p.add_argument("--truth", dest="paths.truth", help="ground truth for an evaluation report")
    p.add_argument("--T", dest="schedule.T", type=int)

    p = sub.add_parser("denoise-shape", help="denoise a noisy synthetic shape")
    _common(p)
    p.add_argument("--checkpoint", dest="paths.checkpoint")
    p.add_argument("--kind", dest="shape.kind")
    for name in ("length", "width", "diameter", "band", "side", "spacing", "noise"):
        p.add_argument(f"--{name}", dest=f"shape.{name}", type=float)
    p.add_argument("--t-start", dest="shape.t_start", type=int)
    p.add_argument("--T", dest="schedule.T", type=int)

    p = sub.add_parser("evaluate", help="Chamfer distance and voxel IoU")
    _common(p)
    p.add_argument("--generated", dest="paths.generated")
    p.add_argument("--truth", dest="paths.truth")
    p.add_argument("--resolutions", dest="eval.resolutions", type=float, nargs="+")
    p.add_argument("--path", dest="paths.path", help="evaluate block by block along this path")
    p.add_argument("--block-length", dest="eval.block_length", type=float)
    return parser


def _require(value, flag):
    if value is None:
        raise InvalidArgument(f"{flag} is required")
    return value


def _schedule(cfg: RunConfig):
    s = cfg.schedule
    return build_schedule(s.T, s.beta_start, s.beta_end)


def _arch(cfg: RunConfig) -> Architecture:
    m = cfg.model
    return Architecture(hidden=tuple(m.hidden), activation=m.activation, time_dim=m.time_dim,
                        point_k=m.point_k, center_k=m.center_k, center_scale=m.center_scale)


def _json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_make_dataset(cfg: RunConfig, out: Path) -> None:
    d = cfg.dataset
    entries = []
    if d.corridors:
        if cfg.paths.poses or cfg.paths.scans:
            raise InvalidArgument("use either --synthetic-corridors or --poses/--scans, not both")
        scenes = out / "scenes"
        scenes.mkdir(exist_ok=True)
        for i in range(d.corridors):
            sc = corridor_scene(derive_seed(cfg.seed, f"corridor/{i}"), n_points=d.corridor_points)
            stem = f"corridor_{i:04d}"
            write_cloud(scenes / f"{stem}.ply", sc.truth)
            write_cloud(scenes / f"{stem}_path.xyz", sc.path)
            hits = sample_sparse_hits(sc.structure, min(d.sparse_hits, len(sc.structure)),
                                      derive_seed(cfg.seed, f"hits/{i}"))
            write_cloud(scenes / f"{stem}_hits.xyz", hits)
            entries.append({
                "name": stem,
                "cloud": f"scenes/{stem}.ply",
                "path": f"scenes/{stem}_path.xyz",
                "hits": f"scenes/{stem}_hits.xyz",
                "points": int(sc.truth.shape[0]),
                "width": float(sc.half_width),
                "wall_height": float(sc.wall_height),
            })
        kind = "corridors"
    else:
        poses = _require(cfg.paths.poses, "--poses")
        scans = _require(cfg.paths.scans, "--scans")
        blocks = build_block_maps(poses, scans, d.block_length, d.target_points,
                                  d.skip_missing, d.fps_start)
        bdir = out / "blocks"
        bdir.mkdir(exist_ok=True)
        for b in blocks:
            stem = f"block_{b.index:04d}"
            write_cloud(bdir / f"{stem}.ply", b.cloud)
            write_cloud(bdir / f"{stem}_path.xyz", b.path)
            entries.append({
                "name": stem,
                "cloud": f"blocks/{stem}.ply",
                "path": f"blocks/{stem}_path.xyz",
                "points": int(b.cloud.shape[0]),
                "raw_points": b.raw_count,
                "extent": list(b.extent),
            })
        kind = "blocks"
    _json(out / "manifest.json", {"kind": kind, "seed": cfg.seed, "entries": entries, "metadata": {}})
    log.info("wrote %d %s entries to %s", len(entries), kind, out / "manifest.json")


def _load_training_set(cfg: RunConfig):
    manifest_path = Path(_require(cfg.paths.dataset, "--dataset"))
    try:
        manifest = json.loads(manifest_path.read_text())
        entries = manifest["entries"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InvalidArgument(f"{manifest_path}: not a dataset manifest ({exc})") from None
    root = manifest_path.parent
    data = []
    for e in entries:
        cloud = read_cloud(root / e["cloud"])
        path = read_cloud(root / e["path"])
        data.append(training_map(cloud, path, e.get("width", cfg.train.width), cfg.stage1.dedup_radius))
    return data


def cmd_train(cfg: RunConfig, out: Path) -> None:
    data = _load_training_set(cfg)
    schedule = _schedule(cfg)
    t = cfg.train
    tcfg = TrainConfig(epochs=t.epochs, steps=t.steps, lr=t.lr, lr_min=t.lr_min, r=t.r)
    res = train(data, tcfg, schedule, seed=derive_seed(cfg.seed, "train"), arch=_arch(cfg),
                log_every=t.log_every, logger=log)
    ppg = mean_points_per_group(data)
    save_params(out / "model.gdmc", res.params, schedule,
                {"points_per_group": ppg, "seed": cfg.seed, "maps": len(data)})
    with open(out / "loss.csv", "w") as fh:
        fh.write("step,t,loss\n")
        for i, (tt, lv) in enumerate(zip(res.timesteps, res.losses)):
            fh.write(f"{i},{int(tt)},{lv:.9g}\n")
    log.info("trained %d steps; points per group %d", len(res.losses), ppg)


def _checkpoint(cfg: RunConfig):
    return load_checkpoint(_require(cfg.paths.checkpoint, "--checkpoint"), _schedule(cfg))


def _mode(cfg: RunConfig):
    s = cfg.stage1
    if s.mode == 1:
        return Mode1(s.width)
    if s.mode == 2:
        return Mode2(*s.width_range)
    if s.mode == 3:
        if not cfg.paths.hits:
            raise InvalidArgument("mode 3 needs --hits")
        return Mode3(read_cloud(cfg.paths.hits), cap=s.width_cap)
    raise InvalidArgument(f"mode must be 1, 2 or 3, got {s.mode}")


def _read_path(p):
    """``.ply``/``.xyz`` clouds are read as points; anything else as a pose file."""
    return read_cloud(p) if Path(p).suffix.lower() in (".ply", ".xyz") else read_path(p)


def _write_report(cfg: RunConfig, out: Path, generated, truth, path=None) -> None:
    res = cfg.eval.resolutions
    if path is not None and cfg.eval.block_length:
        report = evaluate_blockwise(generated, truth, path, cfg.eval.block_length, res)
    else:
        report = evaluate(generated, truth, res)
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.to_text())
    write_cloud(out / "error_field.ply", generated, scalars={"error": error_field(generated, truth)})
    log.info("CD %.4f m, IoU %s", report.chamfer_m, report.to_dict()["iou_pct"])


def cmd_generate(cfg: RunConfig, out: Path) -> None:
    ck = _checkpoint(cfg)
    mode = _mode(cfg)
    path = _read_path(_require(cfg.paths.path, "--path"))
    ppg = cfg.stage1.points_per_group or ck.meta.get("points_per_group")
    if not ppg:
        raise InvalidArgument("points per group is not in the checkpoint; pass --points-per-group")
    gen = generate_map(path, mode, MLPDenoiser(ck.params), ck.schedule, int(ppg), cfg.seed,
                       cfg.stage1.dedup_radius)
    write_cloud(out / "generated.ply", gen.cloud)
    write_cloud(out / "initial.ply", gen.initial)
    write_cloud(out / "centers.ply", gen.centers)
    if cfg.paths.truth:
        _write_report(cfg, out, gen.cloud, read_cloud(cfg.paths.truth), path)


def cmd_denoise_shape(cfg: RunConfig, out: Path) -> None:
    s = cfg.shape
    spec = ShapeSpec(kind=s.kind, length=s.length, width=s.width, diameter=s.diameter,
                     band=s.band, side=s.side, spacing=s.spacing, noise=s.noise)
    ck = _checkpoint(cfg)
    res = denoise_shape(spec, MLPDenoiser(ck.params), ck.schedule, cfg.seed, s.t_start)
    write_cloud(out / "noisy.ply", res.noisy)
    write_cloud(out / "denoised.ply", res.denoised)
    if spec.kind == "ring":
        _json(out / "ring_stats.json", {
            "radius": spec.diameter / 2,
            "radial_std_noisy": radial_spread(res.noisy),
            "radial_std_denoised": radial_spread(res.denoised),
        })


def cmd_evaluate(cfg: RunConfig, out: Path) -> None:
    gen = read_cloud(_require(cfg.paths.generated, "--generated"))
    truth = read_cloud(_require(cfg.paths.truth, "--truth"))
    path = _read_path(cfg.paths.path) if cfg.paths.path else None
    _write_report(cfg, out, gen, truth, path)


COMMANDS = {
    "make-dataset": cmd_make_dataset,
    "train": cmd_train,
    "generate": cmd_generate,
    "denoise-shape": cmd_denoise_shape,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k == "seed" or "." in k}
    try:
        cfg = resolve(args.config, overrides)
        out = Path(cfg.paths.out)
        out.mkdir(parents=True, exist_ok=True)
        cfg.write(out)
        COMMANDS[args.command](cfg, out)
    except IncompatibleCheckpoint as exc:
        print(f"gdmap: incompatible checkpoint: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except NumericalError as exc:
        print(f"gdmap: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (GDMError, ValueError, OSError) as exc:
        print(f"gdmap: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
