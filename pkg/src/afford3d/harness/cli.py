"""Command-line entry point: train, eval, predict, sweep-lambda, make-synthetic."""

import argparse
import logging
import sys
from pathlib import Path

from ..data import export_split, generate_synthetic, load_cloud, load_image, load_piad
from ..data.piad import read_meta
from .config import dump_config, load_config, parse_config
from .trainer import Checkpoint, evaluate, export_prediction, sweep_lambda, train

log = logging.getLogger("afford3d")


def _config(args):
    config = load_config(args.config)
    if args.set:
        overrides = parse_config("\n".join(args.set))
        explicit = {kv.split("=", 1)[0].strip() for kv in args.set}
        config = config.with_overrides(**{k: getattr(overrides, k) for k in explicit})
    return config


def _box(text):
    box = tuple(int(v) for v in text.split(","))
    if len(box) != 4:
        raise argparse.ArgumentTypeError(f"expected x0,y0,x1,y1, got {text!r}")
    return box


def cmd_train(args):
    config = _config(args)
    split = load_piad(args.data, args.setting, n_points=config.n_points)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(config))
    ckpt = train(config, split, out_dir=out)
    with open(out / "history.txt", "w") as f:
        for entry in ckpt.history:
            f.write(" ".join(f"{k}={v}" for k, v in entry.items()) + "\n")
    print(f"saved {out / 'checkpoint.pt'} final_loss={ckpt.loss_trace[-1]:.6f}")
    return 0


def cmd_eval(args):
    ckpt = Checkpoint.load(args.ckpt)
    split = load_piad(args.data, args.setting, n_points=ckpt.train_config.n_points)
    samples = split.train if args.split == "train" else split.test
    report = evaluate(ckpt, split, samples)
    if args.out:
        report.write(args.out)
    else:
        print(report.to_text())
    return 0


def cmd_predict(args):
    ckpt = Checkpoint.load(args.ckpt)
    box_s, box_o = args.box_subject, args.box_object
    meta_path = Path(args.image).with_name("meta.txt")
    if (box_s is None or box_o is None) and meta_path.is_file():
        meta = read_meta(meta_path)
        box_s = box_s or _box(meta["box_subject"])
        box_o = box_o or _box(meta["box_object"])
    if box_s is None or box_o is None:
        raise SystemExit("predict needs --box-subject and --box-object (no meta.txt beside image)")
    cloud = load_cloud(args.cloud)
    image = load_image(args.image, box_s, box_o)
    ply, sidecar, mask, label = export_prediction(ckpt, cloud, image, args.out)
    print(f"wrote {ply} and {sidecar}: label={label} ({ckpt.affordances[label]}) "
          f"mask_mean={mask.mean():.4f}")
    return 0


def cmd_sweep(args):
    config = _config(args)
    values = [float(v) for v in args.values.split(",")]
    split = load_piad(args.data, args.setting, n_points=config.n_points)
    results = sweep_lambda(config, split, values, out_dir=args.out)
    for lam, rep in results.items():
        print(f"lambda_c={lam:g} auc={rep.auc:.4f} aiou={rep.aiou:.4f} sim={rep.sim:.4f} "
              f"mae={rep.mae:.4f} acc={rep.acc:.4f}")
    return 0


def cmd_make_synthetic(args):
    split = generate_synthetic(seed=args.seed, n_samples=args.n, n_points=args.points,
                               setting=args.setting, test_fraction=args.test_fraction)
    export_split(split, args.out)
    print(f"wrote {len(split.train)} train / {len(split.test)} test samples to "
          f"{Path(args.out) / args.setting}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="afford3d")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config field (repeatable)")
        p.add_argument("--data", required=True, help="dataset root in the canonical layout")
        p.add_argument("--setting", choices=("seen", "unseen"), default="seen")

    p = sub.add_parser("train", help="train a model")
    config_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--setting", choices=("seen", "unseen"), default="seen")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", default=None, help="also write the report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="export a colored PLY for one cloud/image pair")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--cloud", required=True, help=".xyz point file")
    p.add_argument("--image", required=True, help=".ppm image")
    p.add_argument("--box-subject", type=_box, default=None)
    p.add_argument("--box-object", type=_box, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep-lambda", help="train/eval once per classification weight")
    config_args(p)
    p.add_argument("--values", default="0.1,0.3,0.5,0.7")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("make-synthetic", help="write a procedural dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--points", type=int, default=2048)
    p.add_argument("--setting", choices=("seen", "unseen"), default="seen")
    p.add_argument("--test-fraction", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_synthetic)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
