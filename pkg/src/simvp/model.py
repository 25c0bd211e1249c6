"""SimVP architecture: per-frame CNN encoder, Inception translator over the
merged time-channel axis, per-frame CNN decoder, with optional spatial
(S-UNet) and temporal (T-UNet) shortcut concatenations, plus the ablation
variant wiring.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .engine import ops
from .engine.tensor import Tensor, no_grad
from .errors import ConfigurationError, UsageError

CONV_KERNEL = 3  # encoder/decoder spatial kernel, same-size padding

ABLATION_VARIANTS = ("model1", "model2", "model3", "model4", "model5",
                     "model6", "model7", "model8", "model9", "simvp")


@dataclass
class ModelConfig:
    t_in: int = 10
    t_out: int = 10
    channels: int = 1
    height: int = 64
    width: int = 64
    n_s: int = 4          # encoder/decoder depth
    c_s: int = 64         # spatial hidden channels
    n_t: int = 3          # translator depth
    c_t: int = 512        # translator hidden channels
    kernel_set: tuple = (3, 5, 7, 11)
    groups: int = 4
    encoder_norm: str = "layer"   # layer | group | batch
    decoder_norm: str = "group"   # group | batch
    s_unet: bool = True
    t_unet: bool = True
    leaky_slope: float = 0.01

    def __post_init__(self):
        self.kernel_set = tuple(self.kernel_set)
        if self.n_s < 1:
            raise ConfigurationError("n_s must be >= 1")
        if self.n_t < 2:
            raise ConfigurationError("n_t must be >= 2 (encoder half + decoder half)")
        if self.t_in != self.t_out:
            raise ConfigurationError(
                "t_in must equal t_out; longer horizons go through predict_recursive")
        if self.c_t % self.groups:
            raise ConfigurationError(f"groups={self.groups} does not divide c_t={self.c_t}")
        if any(k % 2 == 0 for k in self.kernel_set):
            raise ConfigurationError(f"kernel_set must be all odd, got {self.kernel_set}")
        if self.encoder_norm not in ("layer", "group", "batch"):
            raise ConfigurationError(f"encoder_norm must be layer|group|batch, got {self.encoder_norm}")
        if self.decoder_norm not in ("group", "batch"):
            raise ConfigurationError(f"decoder_norm must be group|batch, got {self.decoder_norm}")
        down = 2 ** self.encoder_strides().count(2)
        if self.height % down or self.width % down:
            raise ConfigurationError(
                f"frame size {self.height}x{self.width} must be divisible by the "
                f"total downsampling factor {down}")

    def encoder_strides(self):
        # stride-2 on every second block: [1,2,1,2,...]
        return [2 if i % 2 else 1 for i in range(self.n_s)]

    def latent_hw(self):
        down = 2 ** self.encoder_strides().count(2)
        return self.height // down, self.width // down


def _norm_groups(channels):
    """Group count for GroupNorm layers: largest of 8,4,2,1 dividing C."""
    for g in (8, 4, 2, 1):
        if channels % g == 0:
            return g
    return 1


class _Rng:
    def __init__(self, seed):
        self.g = np.random.default_rng(seed)

    def kaiming_uniform(self, shape, fan_in, slope):
        gain = np.sqrt(2.0 / (1.0 + slope * slope))
        bound = gain * np.sqrt(3.0 / fan_in)
        return self.g.uniform(-bound, bound, size=shape)


class SimVPModel:
    """Parameter collection plus the wired encoder/translator/decoder graph.

    Parameters live in an ordered name -> Tensor map; names are stable
    across save/load. Running batch-norm statistics are registered as
    non-trainable buffers in the same map.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params = {}
        self.training = True
        self.latent_hw = config.latent_hw()

    # -- parameter registry -------------------------------------------------

    def _add(self, name, data, trainable=True):
        if name in self.params:
            raise ConfigurationError(f"duplicate parameter name {name}")
        t = Tensor(data, requires_grad=trainable)
        self.params[name] = t
        return t

    def trainable_params(self):
        return {n: p for n, p in self.params.items() if p.requires_grad}

    def param_count(self, prefix=""):
        return sum(p.size for n, p in self.params.items()
                   if p.requires_grad and n.startswith(prefix))

    def train(self):
        self.training = True

    def eval(self):
        self.training = False

    # -- construction -------------------------------------------------------

    def _init_conv(self, name, spec, rng):
        kh, kw = spec.kernel
        if spec.transposed:
            wshape = (spec.in_channels, spec.out_channels // spec.groups, kh, kw)
        else:
            wshape = (spec.out_channels, spec.in_channels // spec.groups, kh, kw)
        fan_in = wshape[1] * kh * kw
        self._add(name + ".w", rng.kaiming_uniform(wshape, fan_in, self.config.leaky_slope))
        self._add(name + ".b", np.zeros(spec.out_channels))
        return spec

    def _init_norm(self, name, kind, channels, rng):
        self._add(name + ".gamma", np.ones((channels, 1, 1)) if kind == "layer"
                  else np.ones(channels))
        self._add(name + ".beta", np.zeros((channels, 1, 1)) if kind == "layer"
                  else np.zeros(channels))
        if kind == "batch":
            self._add(name + ".running_mean", np.zeros(channels), trainable=False)
            self._add(name + ".running_var", np.ones(channels), trainable=False)

    def _apply_norm(self, name, kind, x):
        gamma = self.params[name + ".gamma"]
        beta = self.params[name + ".beta"]
        if kind == "layer":
            return ops.layer_norm(x, 3, gamma, beta)
        if kind == "group":
            return ops.group_norm(x, _norm_groups(x.shape[1]), gamma, beta)
        return ops.batch_norm(x, gamma, beta,
                              self.params[name + ".running_mean"],
                              self.params[name + ".running_var"],
                              self.training)

    # -- forward ------------------------------------------------------------

    def _fold(self, x):
        B, T, C, H, W = x.shape
        return ops.reshape(x, (B * T, C, H, W)), (B, T)

    def _unfold(self, x, bt):
        B, T = bt
        _, C, H, W = x.shape
        return ops.reshape(x, (B, T, C, H, W))

    def encoder_forward(self, frames):
        """(B,T,C,H,W) -> latent (B,T,c_s,Hh,Wh) and the block-1 skip activation."""
        cfg = self.config
        if frames.shape[1:] != (cfg.t_in, cfg.channels, cfg.height, cfg.width):
            raise ConfigurationError(
                f"encoder input {frames.shape} does not match config "
                f"(*, {cfg.t_in}, {cfg.channels}, {cfg.height}, {cfg.width})")
        x, bt = self._fold(frames)
        skip = None
        for i, spec in enumerate(self._enc_specs):
            x = ops.conv2d(x, self.params[f"enc.{i}.conv.w"],
                           self.params[f"enc.{i}.conv.b"], spec)
            x = self._apply_norm(f"enc.{i}.norm", cfg.encoder_norm, x)
            x = ops.leaky_relu(x, cfg.leaky_slope)
            if i == 0:
                skip = x
        return self._unfold(x, bt), self._unfold(skip, bt)

    def _inception(self, prefix, x):
        cfg = self.config
        x = ops.conv2d(x, self.params[prefix + ".bottleneck.w"],
                       self.params[prefix + ".bottleneck.b"],
                       self._inc_specs[prefix][0])
        out = None
        for k, spec in zip(cfg.kernel_set, self._inc_specs[prefix][1]):
            branch = ops.conv2d(x, self.params[f"{prefix}.k{k}.w"],
                                self.params[f"{prefix}.k{k}.b"], spec)
            out = branch if out is None else ops.add(out, branch)
        return out

    def translator_forward(self, latent):
        """Temporal evolution over the merged (T*c_s) channel axis."""
        cfg = self.config
        T = latent.shape[1]
        x = ops.merge_time(latent)
        half = (cfg.n_t + 1) // 2
        skips = []
        for i in range(cfg.n_t):
            if i < half:
                x = self._inception(f"trans.{i}", x)
                skips.append(x)
            else:
                if cfg.t_unet:
                    x = ops.concat_channels([x, skips[half - 1 - (i - half)]])
                x = self._inception(f"trans.{i}", x)
        return ops.split_time(x, T)

    def decoder_forward(self, hidden, skip):
        """(B,T,c_s,Hh,Wh) + skip -> frames (B,T,C,H,W)."""
        cfg = self.config
        x, bt = self._fold(hidden)
        skip4, _ = self._fold(skip)
        for i, spec in enumerate(self._dec_specs):
            if cfg.s_unet and i == cfg.n_s - 1:
                x = ops.concat_channels([x, skip4])
            x = ops.conv_transpose2d(x, self.params[f"dec.{i}.conv.w"],
                                     self.params[f"dec.{i}.conv.b"], spec)
            x = self._apply_norm(f"dec.{i}.norm", cfg.decoder_norm, x)
            x = ops.leaky_relu(x, cfg.leaky_slope)
        x = ops.conv2d(x, self.params["readout.w"], self.params["readout.b"],
                       self._readout_spec)
        return self._unfold(x, bt)

    def predict(self, frames):
        """Full encoder -> translator -> decoder pass; output is unclamped."""
        latent, skip = self.encoder_forward(frames)
        hidden = self.translator_forward(latent)
        return self.decoder_forward(hidden, skip)

    def predict_recursive(self, frames, horizon):
        """Slide the model over its own predictions to reach `horizon` frames."""
        if horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        cfg = self.config
        with no_grad():
            window = frames.data if isinstance(frames, Tensor) else np.asarray(frames)
            chunks = []
            produced = 0
            while produced < horizon:
                pred = self.predict(Tensor(window)).data
                chunks.append(pred)
                produced += cfg.t_out
                window = np.concatenate([window, pred], axis=1)[:, -cfg.t_in:]
            out = np.concatenate(chunks, axis=1)[:, :horizon]
        return Tensor(out)


def build_model(config: ModelConfig, seed: int) -> SimVPModel:
    """Initialize all parameters (Kaiming-uniform conv weights, zero biases,
    unit/zero norm affine), deterministically for a given seed."""
    ConvSpec = ops.ConvSpec
    model = SimVPModel(config)
    rng = _Rng(seed)
    cfg = config

    # encoder: block 0 maps C -> c_s, the rest keep c_s; strides [1,2,1,2,...]
    model._enc_specs = []
    for i, s in enumerate(cfg.encoder_strides()):
        cin = cfg.channels if i == 0 else cfg.c_s
        spec = ConvSpec.same(cin, cfg.c_s, CONV_KERNEL, stride=s)
        model._init_conv(f"enc.{i}.conv", spec, rng)
        model._init_norm(f"enc.{i}.norm", cfg.encoder_norm, cfg.c_s, rng)
        model._enc_specs.append(spec)

    # translator: first block absorbs T*c_s -> c_t, last emits back T*c_s
    tc = cfg.t_in * cfg.c_s
    half = (cfg.n_t + 1) // 2
    model._inc_specs = {}
    for i in range(cfg.n_t):
        cin = tc if i == 0 else cfg.c_t
        if cfg.t_unet and i >= half:
            cin *= 2
        cout = tc if i == cfg.n_t - 1 else cfg.c_t
        mid = cout // 2
        if mid % cfg.groups:
            raise ConfigurationError(
                f"groups={cfg.groups} does not divide bottleneck width {mid}")
        prefix = f"trans.{i}"
        bspec = ConvSpec.same(cin, mid, 1)
        model._init_conv(prefix + ".bottleneck", bspec, rng)
        branch_specs = []
        for k in cfg.kernel_set:
            spec = ConvSpec.same(mid, cout, k, groups=cfg.groups)
            model._init_conv(f"{prefix}.k{k}", spec, rng)
            branch_specs.append(spec)
        model._inc_specs[prefix] = (bspec, branch_specs)

    # decoder mirrors the encoder strides in reverse; S-UNet doubles the
    # final block's input channels
    model._dec_specs = []
    for i, s in enumerate(reversed(cfg.encoder_strides())):
        cin = cfg.c_s
        if cfg.s_unet and i == cfg.n_s - 1:
            cin *= 2
        spec = ConvSpec.same(cin, cfg.c_s, CONV_KERNEL, stride=s, transposed=True)
        model._init_conv(f"dec.{i}.conv", spec, rng)
        model._init_norm(f"dec.{i}.norm", cfg.decoder_norm, cfg.c_s, rng)
        model._dec_specs.append(spec)

    model._readout_spec = ConvSpec.same(cfg.c_s, cfg.channels, 1)
    model._init_conv("readout", model._readout_spec, rng)
    return model


def ablation_config(variant, base=None) -> ModelConfig:
    """Table-style ablation wiring relative to the default configuration."""
    if variant not in ABLATION_VARIANTS:
        raise UsageError(
            f"unknown variant {variant!r}; valid: {', '.join(ABLATION_VARIANTS)}")
    cfg = base if base is not None else ModelConfig()
    if variant == "simvp":
        return replace(cfg)
    if variant == "model1":
        return replace(cfg, s_unet=False)
    if variant == "model2":
        return replace(cfg, t_unet=False)
    if variant == "model3":
        return replace(cfg, groups=1)
    if variant == "model4":
        return replace(cfg, decoder_norm="batch")
    single = {"model5": 3, "model6": 5, "model7": 7, "model8": 11, "model9": 11}
    k = single[variant]
    if variant == "model9":
        return replace(cfg, kernel_set=(k,), c_t=2 * cfg.c_t)
    return replace(cfg, kernel_set=(k,))
