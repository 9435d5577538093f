"""Command-line entry point.

Exit codes: 0 ok, 1 gradcheck above tolerance, 2 configuration error,
3 training diverged, 4 I/O error, 5 corrupt weight file. The thread count for
the linear-algebra backend comes from ``VDSR_NUM_THREADS`` (default: all
available CPUs). Every command is seeded; without ``--seed`` the seed is 0.
"""

import argparse
import logging
import os
import sys
from pathlib import Path


from . import weights
from .data import cached_patch_set, list_images, load_dataset, load_image, save_image
from .errors import ConfigError, CorruptWeightsError, DivergenceError, RangeError
from .network import VdsrModel, init_he, receptive_field
from .optimizer import TrainConfig

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO, EXIT_CORRUPT = 0, 2, 3, 4, 5
DEFAULT_SEED = 0
THREADS_ENV = "VDSR_NUM_THREADS"

log = logging.getLogger("vdsr")


def _scales(text):
    try:
        vals = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad scale list {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty scale list")
    return vals


def _add_common(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--residual", action=argparse.BooleanOptionalAction, default=True,
                   help="model predicts ILR residuals (default) or the HR image directly")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vdsr", description="Very deep residual CNN super-resolution.",
        epilog="exit codes: 0 ok, 1 gradcheck above tolerance, 2 config error, 3 divergence, 4 I/O error, 5 corrupt weights",
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model into a run directory")
    d = TrainConfig()
    t.add_argument("--data-manifest", required=True, type=Path)
    t.add_argument("--eval-manifest", type=Path)
    t.add_argument("--run-dir", required=True, type=Path)
    t.add_argument("--depth", type=int, default=d.depth)
    t.add_argument("--width", type=int, default=d.width)
    t.add_argument("--scales", type=_scales, default=d.scales)
    t.add_argument("--epochs", type=int, default=d.total_epochs)
    t.add_argument("--lr", type=float, default=d.base_lr)
    t.add_argument("--lr-drop-every", type=int, default=d.lr_drop_every_epochs)
    t.add_argument("--lr-drop-factor", type=float, default=d.lr_drop_factor)
    t.add_argument("--theta", type=float, default=d.theta, help="clip constant; |lr * g| <= theta")
    t.add_argument("--momentum", type=float, default=d.momentum)
    t.add_argument("--weight-decay", type=float, default=d.weight_decay)
    t.add_argument("--batch-size", type=int, default=d.batch_size)
    t.add_argument("--crop", type=int, help="border pixels ignored when scoring (default: scale)")
    t.add_argument("--patch-side", type=int, help="default: receptive field of --depth")
    t.add_argument("--augment", action=argparse.BooleanOptionalAction, default=True)
    t.add_argument("--cache-dir", type=Path)
    t.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    _add_common(t)

    s = sub.add_parser("sr", help="super-resolve one image")
    s.add_argument("--weights", required=True, type=Path)
    s.add_argument("--input", required=True, type=Path)
    s.add_argument("--output", required=True, type=Path)
    s.add_argument("--scale", required=True, type=float)
    _add_common(s)

    b = sub.add_parser("benchmark", help="PSNR/SSIM of a model on an image set")
    b.add_argument("--weights", required=True, type=Path)
    b.add_argument("--dataset", required=True, type=Path, help="directory or manifest")
    b.add_argument("--scales", type=_scales, default=(2.0, 3.0, 4.0))
    b.add_argument("--crop", type=int)
    b.add_argument("--csv", type=Path, help="write the per-image report here")
    b.add_argument("--figure", type=Path, help="write a per-image PSNR chart here")
    b.add_argument("--name", help="dataset label (default: directory name)")
    _add_common(b)

    g = sub.add_parser("gradcheck", help="finite-difference check of backprop")
    g.add_argument("--depth", type=int, default=3)
    g.add_argument("--width", type=int, default=4)
    g.add_argument("--seeds", type=int, default=1, help="check seeds seed..seed+N-1")
    _add_common(g)

    i = sub.add_parser("init-weights", help="write a freshly initialised weight file")
    i.add_argument("--output", required=True, type=Path)
    i.add_argument("--depth", type=int, default=20)
    i.add_argument("--width", type=int, default=64)
    i.add_argument("--zero", action="store_true", help="all-zero weights (bicubic baseline)")
    _add_common(i)
    return parser


def cmd_train(args):
    config = TrainConfig(
        base_lr=args.lr, lr_drop_factor=args.lr_drop_factor, lr_drop_every_epochs=args.lr_drop_every,
        total_epochs=args.epochs, momentum=args.momentum, weight_decay=args.weight_decay,
        theta=args.theta, residual_mode=args.residual, batch_size=args.batch_size, seed=args.seed,
        depth=args.depth, width=args.width, scales=args.scales, crop=args.crop).validate()
    from . import trainer

    paths = list_images(args.data_manifest)
    if not paths:
        raise ConfigError(f"{args.data_manifest} lists no images")
    side = args.patch_side or receptive_field(config.depth)
    patch_set = cached_patch_set(paths, config.scales, side, args.augment, args.cache_dir, config.seed)
    eval_set = load_dataset(args.eval_manifest) if args.eval_manifest else []
    if args.resume:
        run = trainer.resume(args.run_dir, patch_set, eval_set, total_epochs=config.total_epochs)
    else:
        run = trainer.train(config, patch_set, eval_set, args.run_dir)
    print(f"run directory: {run.run_dir}")
    if run.history:
        last = run.history[-1]
        print(f"epoch {last.epoch}: train loss {last.train_loss:.6g} "
              + " ".join(f"x{s:g}={v:.2f}dB" for s, v in last.psnr.items()))
    return EXIT_OK


def cmd_sr(args):
    from .inference import super_resolve_image

    if not args.scale > 1:
        raise RangeError(f"scale must be > 1, got {args.scale}")
    model = weights.load(args.weights)
    out = super_resolve_image(model, load_image(args.input), args.scale, args.residual)
    save_image(args.output, out)
    print(f"{args.input} -> {args.output} ({out.shape[1]}x{out.shape[0]})")
    return EXIT_OK


def cmd_benchmark(args):
    from .metrics import benchmark_run

    model = weights.load(args.weights)
    dataset = load_dataset(args.dataset)
    name = args.name or (args.dataset.name if args.dataset.is_dir() else args.dataset.stem)
    report = benchmark_run(model, dataset, args.scales, args.crop, args.residual, name)
    if args.csv:
        report.to_csv(args.csv)
    else:
        print(report.to_csv(), end="")
    if args.figure:
        from .plotting import plot_benchmark
        plot_benchmark(report, args.figure)
    print(report.format_table())
    return EXIT_OK


def cmd_gradcheck(args):
    from .gradcheck import gradcheck

    if args.depth < 2:
        raise ConfigError("depth must be >= 2")
    worst = 0.0
    for seed in range(args.seed, args.seed + args.seeds):
        res = gradcheck(args.depth, seed, width=args.width, residual_mode=args.residual)
        worst = max(worst, res.max_rel_error)
        print(f"depth {res.depth} seed {seed}: max relative error {res.max_rel_error:.3e} "
              f"({res.checked} checked, {res.skipped} skipped at ReLU kinks)")
    ok = worst < 1e-5
    print(f"{'PASS' if ok else 'FAIL'}: max relative error {worst:.3e} (threshold 1e-5)")
    return EXIT_OK if ok else 1


def cmd_init_weights(args):
    model = VdsrModel.zeros(args.depth, args.width)
    if not args.zero:
        model = init_he(model, args.seed)
    weights.save(args.output, model)
    print(f"wrote {args.output}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "sr": cmd_sr, "benchmark": cmd_benchmark,
            "gradcheck": cmd_gradcheck, "init-weights": cmd_init_weights}


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    n = int(value)
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(_thread_limit()):
            return COMMANDS[args.command](args)
    except (ConfigError, RangeError, ValueError) as exc:
        if isinstance(exc, CorruptWeightsError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CORRUPT
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
