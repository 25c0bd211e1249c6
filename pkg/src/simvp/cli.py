"""Command-line entry point.

Subcommands: gen-data, train, eval, predict, ablate, bench. Every command
writes a JSON run manifest (resolved configs, seed, artifact paths, tool
version) next to its main output before doing any long computation, so runs
can be reproduced exactly. Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""

import argparse
import dataclasses
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, data, render
from .engine.conv import get_backend
from .engine.tensor import Tensor
from .errors import ConfigurationError, SimVPError, UsageError
from .metrics import CSV_HEADER
from .model import (ABLATION_VARIANTS, ModelConfig, ablation_config,
                    build_model)
from .training import (TrainConfig, TrainState, copy_last_frame_predict,
                       evaluate, load_checkpoint, save_checkpoint, train)

PRESETS = {
    # laptop-scale configuration used by the smoke/overfit runs
    "toy": ModelConfig(t_in=4, t_out=4, channels=1, height=16, width=16,
                       n_s=2, c_s=16, n_t=2, c_t=32),
    # the published Moving-MNIST-shaped configuration
    "mmnist-shaped": ModelConfig(t_in=10, t_out=10, channels=1, height=64,
                                 width=64, n_s=4, c_s=64, n_t=3, c_t=512),
}


def _atomic_write_text(path, text):
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def write_manifest(out_path, command, seed, configs, artifacts):
    manifest = {
        "tool_version": __version__,
        "command": command,
        "seed": seed,
        "backend": get_backend(),
        "configs": {k: dataclasses.asdict(v) if dataclasses.is_dataclass(v) else v
                    for k, v in configs.items()},
        "artifacts": artifacts,
    }
    path = str(out_path) + ".manifest.json"
    _atomic_write_text(path, json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def _model_config(args):
    base = PRESETS[args.preset]
    cfg = ablation_config(args.variant, base)
    if args.t_in:
        cfg = dataclasses.replace(cfg, t_in=args.t_in, t_out=args.t_in)
    return cfg


def cmd_gen_data(args):
    spec = data.MotionSpec(
        num_sequences=args.n, seq_len=args.seq_len,
        frame=(1, args.size, args.size), num_objects=args.objects,
        object_kind=args.kind, object_size=args.object_size,
        speed_range=(args.speed_min, args.speed_max), seed=args.seed)
    write_manifest(args.out, "gen-data", args.seed, {"motion": spec},
                   {"dataset": args.out})
    ds = data.generate(spec, t_in=args.t_in or None)
    data.save(ds, args.out)
    print(f"wrote {args.out}: {ds.tensor.shape}")
    return 0


def cmd_train(args):
    ds = data.load(args.data, t_in=args.t_in or None)
    n_val = max(1, int(len(ds) * args.val_fraction))
    train_ds = ds.subset(slice(0, len(ds) - n_val))
    val_ds = ds.subset(slice(len(ds) - n_val, len(ds)))

    mcfg = _model_config(args)
    tcfg = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                       epochs=args.epochs, seed=args.seed,
                       eval_every=args.eval_every, checkpoint_path=args.out,
                       grad_clip=args.grad_clip, max_steps=args.steps)
    if args.resume:
        model, state, _ = load_checkpoint(args.resume, expect_model_config=mcfg)
    else:
        model = build_model(mcfg, seed=args.seed)
        state = None
    write_manifest(args.out, "train", args.seed,
                   {"model": mcfg, "train": tcfg},
                   {"dataset": args.data, "checkpoint": args.out,
                    "log": args.log or ""})
    t0 = time.time()
    state, history = train(model, train_ds, tcfg, val_dataset=val_ds,
                           log_path=args.log)
    val_rows = [h for h in history if h["split"] == "val"]
    last = val_rows[-1] if val_rows else history[-1]
    print(f"finished at step {state.step} in {time.time() - t0:.1f}s; "
          f"last {last['split']} mse={last['mse']:.4f}")
    return 0


def cmd_eval(args):
    model, _, _ = load_checkpoint(args.ckpt)
    ds = data.load(args.data, t_in=model.config.t_in)
    report = evaluate(model, ds)
    print(f"mse={report.mse:.6f} mae={report.mae:.6f} "
          f"ssim={report.ssim:.6f} psnr={report.psnr:.6f}")
    if args.csv:
        write_manifest(args.csv, "eval", 0, {"model": model.config},
                       {"dataset": args.data, "checkpoint": args.ckpt, "csv": args.csv})
        _atomic_write_text(args.csv, CSV_HEADER + "\n" + report.csv_row(0, "test") + "\n")
    return 0


def cmd_predict(args):
    model, _, _ = load_checkpoint(args.ckpt)
    cfg = model.config
    ds = data.load(args.data, t_in=cfg.t_in)
    write_manifest(args.out, "predict", 0, {"model": cfg},
                   {"dataset": args.data, "checkpoint": args.ckpt,
                    "predictions": args.out, "render": args.render or ""})
    X = ds.tensor[:, :cfg.t_in]
    horizon = args.horizon or cfg.t_out
    pred = model.predict_recursive(Tensor(X), horizon).data
    pred = np.clip(pred, 0.0, 1.0)
    data.save(data.VideoDataset(pred, horizon, 0), args.out)
    print(f"wrote {args.out}: {pred.shape}")
    if args.render:
        os.makedirs(args.render, exist_ok=True)
        for n in range(pred.shape[0]):
            for t in range(pred.shape[1]):
                render.write_pgm(pred[n, t],
                                 os.path.join(args.render, f"seq{n:04d}_t{t:03d}.pgm"))
        print(f"rendered {pred.shape[0] * pred.shape[1]} frames to {args.render}")
    return 0


def cmd_ablate(args):
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in ABLATION_VARIANTS:
            raise UsageError(
                f"unknown variant {v!r}; valid: {', '.join(ABLATION_VARIANTS)}")
    ds = data.load(args.data, t_in=args.t_in or None)
    n_val = max(1, int(len(ds) * args.val_fraction))
    train_ds = ds.subset(slice(0, len(ds) - n_val))
    val_ds = ds.subset(slice(len(ds) - n_val, len(ds)))
    base = PRESETS[args.preset]
    write_manifest(args.out, "ablate", args.seed,
                   {"base": base, "variants": variants},
                   {"dataset": args.data, "csv": args.out})
    rows = ["variant,params,translator_params,mse,mae,ssim,psnr"]
    for v in variants:
        mcfg = ablation_config(v, base)
        if args.t_in:
            mcfg = dataclasses.replace(mcfg, t_in=args.t_in, t_out=args.t_in)
        model = build_model(mcfg, seed=args.seed)
        tcfg = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                           epochs=10 ** 9, seed=args.seed,
                           max_steps=args.budget_steps)
        train(model, train_ds, tcfg)
        report = evaluate(model, val_ds)
        rows.append(f"{v},{model.param_count()},{model.param_count('trans.')},"
                    f"{report.mse:.6f},{report.mae:.6f},"
                    f"{report.ssim:.6f},{report.psnr:.6f}")
        print(rows[-1])
    _atomic_write_text(args.out, "\n".join(rows) + "\n")
    return 0


def cmd_bench(args):
    from .benchmark import run_conv_benchmark
    run_conv_benchmark(repeats=args.repeats)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="simvp", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic bouncing-shapes dataset")
    g.add_argument("--n", type=int, required=True, help="number of sequences")
    g.add_argument("--size", type=int, default=64, help="frame height/width")
    g.add_argument("--objects", type=int, default=2)
    g.add_argument("--object-size", type=int, default=12)
    g.add_argument("--kind", choices=("square", "cross", "disk"), default="square")
    g.add_argument("--seq-len", type=int, default=20)
    g.add_argument("--speed-min", type=float, default=0.5)
    g.add_argument("--speed-max", type=float, default=2.5)
    g.add_argument("--t-in", type=int, default=0, help="input length (default seq-len/2)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--preset", choices=sorted(PRESETS), default="toy")
    t.add_argument("--variant", choices=ABLATION_VARIANTS, default="simvp")
    t.add_argument("--t-in", type=int, default=0)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--steps", type=int, default=0, help="hard step cap (0 = none)")
    t.add_argument("--eval-every", type=int, default=0)
    t.add_argument("--val-fraction", type=float, default=0.1)
    t.add_argument("--grad-clip", type=float, default=0.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--resume", default="")
    t.add_argument("--log", default="", help="CSV metric log path")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--csv", default="")
    e.set_defaults(fn=cmd_eval)

    r = sub.add_parser("predict", help="emit predictions (SVPD, optionally PGM frames)")
    r.add_argument("--data", required=True)
    r.add_argument("--ckpt", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--horizon", type=int, default=0,
                   help="frames to predict (recursion beyond t_out)")
    r.add_argument("--render", default="", help="directory for PGM frames")
    r.set_defaults(fn=cmd_predict)

    a = sub.add_parser("ablate", help="train/evaluate architecture variants")
    a.add_argument("--data", required=True)
    a.add_argument("--variants", required=True,
                   help="comma-separated subset of model1..model9,simvp")
    a.add_argument("--preset", choices=sorted(PRESETS), default="toy")
    a.add_argument("--t-in", type=int, default=0)
    a.add_argument("--budget-steps", type=int, default=200)
    a.add_argument("--lr", type=float, default=1e-3)
    a.add_argument("--batch-size", type=int, default=16)
    a.add_argument("--val-fraction", type=float, default=0.2)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True, help="CSV output path")
    a.set_defaults(fn=cmd_ablate)

    b = sub.add_parser("bench", help="compare conv backends (compiled vs numpy)")
    b.add_argument("--repeats", type=int, default=5)
    b.set_defaults(fn=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SimVPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
