"""Training loop (Adam + MSE objective), evaluation, and checkpointing.

Single-threaded training is bit-deterministic given (seed, config, dataset):
the shuffle order is a pure function of (seed, epoch), and resuming from a
checkpoint replays the exact batch schedule from the stored step counter.
"""

import math
import os
from dataclasses import dataclass, fields, replace

import numpy as np

from .data import VideoDataset, batches
from .engine.ops import mse_loss
from .engine.tensor import Tape, Tensor, no_grad
from .errors import FormatError, NumericsError, UsageError
from .metrics import CSV_HEADER, MetricReport, sequence_report
from .model import ModelConfig, SimVPModel, build_model

CHECKPOINT_MAGIC = "SVPC"
CHECKPOINT_VERSION = 1

STABILITY_PROBE_STEPS = 50   # lr-sweep budget
STABILITY_BLOWUP = 10.0      # loss growth factor counted as divergence


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    epochs: int = 100
    seed: int = 0
    eval_every: int = 0          # steps between held-out evals; 0 = end only
    checkpoint_path: str = ""
    grad_clip: float = 0.0       # global-norm clip; 0 disables
    max_steps: int = 0           # 0 = no cap

    def __post_init__(self):
        if self.lr <= 0:
            raise UsageError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise UsageError("betas must lie in [0, 1)")


class TrainState:
    """Optimizer moments, step counter, and the best held-out MSE so far."""

    def __init__(self, model: SimVPModel):
        self.step = 0
        self.m = {n: np.zeros_like(p.data) for n, p in model.trainable_params().items()}
        self.v = {n: np.zeros_like(p.data) for n, p in model.trainable_params().items()}
        self.best_mse = math.inf


def adam_step(model, state, config):
    """One Adam update with bias correction; mutates params in place."""
    state.step += 1
    t = state.step
    c1 = 1.0 - config.beta1 ** t
    c2 = 1.0 - config.beta2 ** t
    params = model.trainable_params()
    grads = {}
    for name, p in params.items():
        if p.grad is None:
            raise UsageError(f"parameter {name!r} has no gradient")
        grads[name] = p.grad
    if config.grad_clip > 0:
        total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if total > config.grad_clip:
            scale = config.grad_clip / total
            grads = {n: g * scale for n, g in grads.items()}
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - config.beta1) * (g - m)
        v += (1.0 - config.beta2) * (g * g - v)
        p.data -= (config.lr * (m / c1) / (np.sqrt(v / c2) + config.eps)).astype(p.dtype)


def _shuffle_seed(seed, epoch):
    return (seed * 1_000_003 + epoch) & 0x7FFFFFFF


def train(model, dataset, config, val_dataset=None, state=None, log_path=None,
          callback=None):
    """Run the training loop; returns (state, history).

    history rows are dicts {step, split, mse, mae, ssim, psnr}. A NaN/Inf
    loss aborts with the step number and learning rate. Resuming: pass the
    state loaded from a checkpoint; completed steps are skipped so the
    continuation is bit-identical to an uninterrupted run.
    """
    if state is None:
        state = TrainState(model)
    history = []
    model.train()
    n = len(dataset)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    if config.max_steps:
        total_steps = min(total_steps, config.max_steps)
    log_file = None
    if log_path:
        fresh = not os.path.exists(log_path) or state.step == 0
        log_file = open(log_path, "w" if fresh else "a")
        if fresh:
            print(CSV_HEADER, file=log_file)

    last_logged = -1

    def checkpoint_and_eval(loss_value):
        nonlocal last_logged
        if state.step == last_logged:
            return
        last_logged = state.step
        row = {"step": state.step, "split": "train", "mse": loss_value}
        history.append(row)
        if log_file:
            print(f"{state.step},train,{loss_value:.6f},,,", file=log_file, flush=True)
        if val_dataset is not None:
            model.eval()
            report = evaluate(model, val_dataset)
            model.train()
            state.best_mse = min(state.best_mse, report.mse)
            history.append({"step": state.step, "split": "val", "mse": report.mse,
                            "mae": report.mae, "ssim": report.ssim, "psnr": report.psnr})
            if log_file:
                print(report.csv_row(state.step, "val"), file=log_file, flush=True)
        if config.checkpoint_path:
            save_checkpoint(model, state, config, config.checkpoint_path)
        if callback:
            callback(state, history)

    loss_value = math.nan
    try:
        first_epoch = state.step // steps_per_epoch
        for epoch in range(first_epoch, config.epochs):
            for bi, (X, Y) in enumerate(
                    batches(dataset, config.batch_size,
                            _shuffle_seed(config.seed, epoch))):
                gstep = epoch * steps_per_epoch + bi
                if gstep < state.step:
                    continue
                if state.step >= total_steps:
                    break
                try:
                    with Tape() as tape:
                        pred = model.predict(Tensor(X))
                        loss = mse_loss(pred, Tensor(Y))
                        tape.backward(loss)
                except NumericsError as exc:
                    raise NumericsError(
                        f"training diverged at step {state.step} (lr={config.lr}): {exc}"
                    ) from exc
                loss_value = loss.item()
                adam_step(model, state, config)
                for p in model.trainable_params().values():
                    p.zero_grad()
                if config.eval_every and state.step % config.eval_every == 0:
                    checkpoint_and_eval(loss_value)
            if state.step >= total_steps:
                break
        checkpoint_and_eval(loss_value)
    finally:
        if log_file:
            log_file.close()
    return state, history


def evaluate(model, dataset, predict_fn=None, batch_size=16) -> MetricReport:
    """Deterministic held-out metrics; never mutates parameters.

    predict_fn overrides the model forward (used for reference baselines
    evaluated through the identical path)."""
    was_training = model.training if model is not None else False
    if model is not None:
        model.eval()
    preds, targets = [], []
    with no_grad():
        for X, Y in batches(dataset, batch_size):
            if predict_fn is not None:
                preds.append(np.asarray(predict_fn(X)))
            else:
                preds.append(model.predict(Tensor(X)).data)
            targets.append(Y)
    if model is not None and was_training:
        model.train()
    return sequence_report(np.concatenate(preds), np.concatenate(targets))


def copy_last_frame_predict(X, t_out=None):
    """Trivial baseline: repeat the last observed frame over the horizon."""
    X = np.asarray(X)
    return np.repeat(X[:, -1:], t_out if t_out else X.shape[1], axis=1)


def lr_sweep(build_fn, dataset, config, candidates=(1e-2, 1e-3, 1e-4),
             probe_steps=STABILITY_PROBE_STEPS):
    """Largest candidate lr that survives a short probe without NaN or a
    STABILITY_BLOWUP-fold loss increase."""
    for lr in sorted(candidates, reverse=True):
        model = build_fn()
        probe_cfg = replace(config, lr=lr, max_steps=probe_steps,
                            checkpoint_path="", eval_every=0)
        initial = _probe_loss(model, dataset, probe_cfg)
        try:
            state, history = train(model, dataset, probe_cfg)
            final = history[-1]["mse"]
        except NumericsError:
            continue
        if math.isfinite(final) and final < STABILITY_BLOWUP * initial:
            return lr
    raise NumericsError("no candidate learning rate trained stably")


def _probe_loss(model, dataset, config):
    X, Y = next(batches(dataset, config.batch_size, _shuffle_seed(config.seed, 0)))
    model.eval()
    with no_grad():
        pred = model.predict(Tensor(X)).data
    model.train()
    return float(((pred - Y) ** 2).mean())


# ---------------------------------------------------------------------------
# checkpoint format: UTF-8 header, then float32 LE blobs.
#
#   SVPC 1
#   model.<field>=<value> ...        (full ModelConfig)
#   train.<field>=<value> ...        (full TrainConfig)
#   step=<int>
#   best_mse=<float>
#   param <name> <d0xd1x..> <data_off> <m_off> <v_off>
#   buffer <name> <dims> <data_off>
#   END
#   <blob: the arrays at the stated byte offsets>

def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v) + ","
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(s, typ):
    if typ is bool:
        return s == "true"
    if typ is tuple:
        return tuple(int(x) for x in s.split(",") if x)
    if typ is float:
        return float(s)
    if typ is int:
        return int(s)
    return s


def _config_lines(prefix, cfg):
    return [f"{prefix}.{f.name}={_format_value(getattr(cfg, f.name))}"
            for f in fields(cfg)]


def _config_from(kv, prefix, cls):
    kwargs = {}
    for f in fields(cls):
        key = f"{prefix}.{f.name}"
        if key not in kv:
            raise FormatError(f"checkpoint missing {key}")
        kwargs[f.name] = _parse_value(kv[key], type(f.default))
    return cls(**kwargs)


def save_checkpoint(model, state, train_config, path):
    entries = []
    offset = 0

    def reserve(arr):
        nonlocal offset
        off = offset
        offset += arr.size * 4
        return off

    blobs = []
    for name, p in model.params.items():
        data32 = np.ascontiguousarray(p.data, dtype="<f4")
        if p.requires_grad:
            m32 = np.ascontiguousarray(state.m[name], dtype="<f4")
            v32 = np.ascontiguousarray(state.v[name], dtype="<f4")
            dims = "x".join(str(d) for d in p.data.shape) or "1"
            entries.append(f"param {name} {dims} {reserve(data32)} "
                           f"{reserve(m32)} {reserve(v32)}")
            blobs += [data32, m32, v32]
        else:
            dims = "x".join(str(d) for d in p.data.shape) or "1"
            entries.append(f"buffer {name} {dims} {reserve(data32)}")
            blobs.append(data32)

    header = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}"]
    header += _config_lines("model", model.config)
    header += _config_lines("train", train_config)
    header.append(f"step={state.step}")
    header.append(f"best_mse={repr(state.best_mse)}")
    header += entries
    header.append("END")
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("utf-8"))
        for b in blobs:
            f.write(b.tobytes())
    os.replace(tmp, path)


def load_checkpoint(path, expect_model_config=None):
    """Rebuild (model, state, train_config) from a checkpoint file.

    If expect_model_config is given, any differing field is rejected by name.
    """
    with open(path, "rb") as f:
        raw = f.read()
    nl = raw.find(b"\nEND\n")
    if nl < 0 or not raw.startswith(CHECKPOINT_MAGIC.encode()):
        raise FormatError("not a checkpoint file (bad magic or missing END)")
    header = raw[:nl].decode("utf-8").splitlines()
    blob = raw[nl + len(b"\nEND\n"):]
    magic, version = header[0].split()
    if int(version) != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    kv = {}
    manifest = []
    for line in header[1:]:
        if line.startswith(("param ", "buffer ")):
            manifest.append(line.split())
        else:
            k, _, v = line.partition("=")
            kv[k] = v

    model_config = _config_from(kv, "model", ModelConfig)
    train_config = _config_from(kv, "train", TrainConfig)
    if expect_model_config is not None:
        for f in fields(ModelConfig):
            if getattr(expect_model_config, f.name) != getattr(model_config, f.name):
                raise FormatError(
                    f"checkpoint ModelConfig mismatch on {f.name!r}: "
                    f"{getattr(model_config, f.name)} != {getattr(expect_model_config, f.name)}")

    model = build_model(model_config, seed=0)
    state = TrainState(model)
    state.step = int(kv["step"])
    state.best_mse = float(kv["best_mse"])

    def read(off, shape):
        count = int(np.prod(shape)) if shape else 1
        end = off + count * 4
        if end > len(blob):
            raise FormatError(f"blob truncated: need {end} bytes, have {len(blob)}")
        return np.frombuffer(blob[off:end], dtype="<f4").reshape(shape)

    names = set()
    for entry in manifest:
        kind, name, dims = entry[0], entry[1], entry[2]
        if name not in model.params:
            raise FormatError(f"unknown parameter {name!r} in manifest")
        shape = tuple(int(d) for d in dims.split("x"))
        p = model.params[name]
        if shape != (p.data.shape or (1,)):
            raise FormatError(
                f"shape mismatch for {name!r}: file {shape}, model {p.data.shape}")
        names.add(name)
        p.data[...] = read(int(entry[3]), shape).astype(p.dtype)
        if kind == "param":
            state.m[name] = read(int(entry[4]), shape).astype(p.dtype).copy()
            state.v[name] = read(int(entry[5]), shape).astype(p.dtype).copy()
    missing = set(model.params) - names
    if missing:
        raise FormatError(f"manifest missing parameters: {sorted(missing)[:3]}...")
    return model, state, train_config
