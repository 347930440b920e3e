"""Architecture graphs for the CNN family and the Wavegram variants.

A graph is plain data. ``Network`` interprets it on the autodiff core, and the
counters walk the same graph to propagate shapes and tally cost.
"""
from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .autodiff import ops
from .autodiff.ops import BatchNormState, conv_output_length
from .autodiff.tensor import ShapeError, Tensor

FRONTENDS = ("logmel", "wavegram", "wavegram_logmel")
POOL_DROPOUT = 0.2
EMBEDDING_DROPOUT = 0.5


@dataclass(frozen=True)
class Layer:
    """One step of an architecture.

    kinds: ``conv2d_block`` ((conv, BN, ReLU) x repeat, bias-free convs),
    ``conv1d`` (single strided conv + BN + ReLU), ``conv1d_block`` (one
    conv + BN + ReLU per entry of ``dilations``), ``avgpool2d``,
    ``maxpool1d``, ``dropout``, ``global_pool``, ``fc``, ``relu``,
    ``sigmoid``, ``softmax``, ``wavegram_reshape``.
    """

    kind: str
    channels: int = 0
    kernel: int = 0
    stride: int = 1
    dilations: tuple = (1,)
    repeat: int = 1
    p: float = 0.0


@dataclass(frozen=True)
class WavegramConfig:
    pre_channels: int = 64
    pre_kernel: int = 11
    pre_stride: int = 5
    block_channels: tuple = (64, 128, 128)
    dilations: tuple = (1, 2)
    pool: int = 4
    n_freq: int = 64

    @property
    def out_channels(self):
        return self.block_channels[-1]

    @property
    def downsample(self):
        return self.pre_stride * self.pool ** len(self.block_channels)

    def validate(self):
        if self.out_channels % self.n_freq:
            raise ValueError(
                f"wavegram channels {self.out_channels} not divisible by {self.n_freq} bins"
            )
        if self.pre_kernel % 2 == 0:
            raise ValueError("pre_kernel must be odd")
        return self

    def scaled(self, width):
        def sc(c):
            return max(1, int(round(c * width)))

        last = max(self.n_freq, int(round(self.out_channels * width / self.n_freq)) * self.n_freq)
        blocks = tuple(sc(c) for c in self.block_channels[:-1]) + (last,)
        return replace(self, pre_channels=sc(self.pre_channels), block_channels=blocks)


@dataclass(frozen=True)
class ArchSpec:
    name: str
    frontend: str
    layers: tuple
    classifier: tuple
    n_classes: int = 527
    embedding_dim: int = 2048
    width_scale: float = 1.0
    wavegram: tuple = ()
    wavegram_bins: int = 64
    input_norm: bool = True
    sample_rate: int = 32000
    hop_size: int = 320
    n_mels: int = 64

    def __post_init__(self):
        if self.frontend not in FRONTENDS:
            raise ValueError(f"unknown frontend {self.frontend!r}")
        if not 0 < self.width_scale <= 1:
            raise ValueError("width_scale must be in (0, 1]")

    @property
    def uses_logmel(self):
        return self.frontend in ("logmel", "wavegram_logmel")

    @property
    def uses_waveform(self):
        return self.frontend in ("wavegram", "wavegram_logmel")

    @property
    def wavegram_planes(self):
        return self.wavegram[-1].channels if self.wavegram else 0

    @property
    def backbone_in_channels(self):
        return self.wavegram_planes + (1 if self.uses_logmel else 0)

    @property
    def output(self):
        return self.classifier[-1].kind

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("layers", "classifier", "wavegram"):
            d[key] = tuple(
                Layer(**{**item, "dilations": tuple(item.get("dilations", (1,)))})
                for item in d.get(key, ())
            )
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ArchSpec":
        return cls.from_dict(json.loads(text))


class ModelOutput(NamedTuple):
    clipwise: Tensor
    embedding: Tensor


# --------------------------------------------------------------------------
# builders


def _scale(c, width):
    return max(1, int(round(c * width)))


def classifier_head(n_classes, output="sigmoid", hidden=(), dropout=EMBEDDING_DROPOUT):
    layers = [Layer("dropout", p=dropout)] if dropout else []
    for h in hidden:
        layers += [Layer("fc", channels=h), Layer("relu")]
    layers += [Layer("fc", channels=n_classes), Layer(output)]
    return tuple(layers)


def build_cnn(depth=14, width_scale=1.0, n_classes=527, input_norm=True, frontend="logmel", **kw):
    """CNN6 / CNN10 / CNN14 as laid out in the architecture table."""
    if depth == 14:
        widths, kernel, repeat, emb = (64, 128, 256, 512, 1024, 2048), 3, 2, 2048
    elif depth == 10:
        widths, kernel, repeat, emb = (64, 128, 256, 512), 3, 2, 512
    elif depth == 6:
        widths, kernel, repeat, emb = (64, 128, 256, 512), 5, 1, 512
    else:
        raise ValueError(f"unknown CNN depth {depth}; choose 6, 10 or 14")
    layers = []
    for i, c in enumerate(widths):
        layers.append(Layer("conv2d_block", channels=_scale(c, width_scale), kernel=kernel, repeat=repeat))
        if i < len(widths) - 1:
            layers += [Layer("avgpool2d", kernel=2), Layer("dropout", p=POOL_DROPOUT)]
    embedding_dim = _scale(emb, width_scale)
    layers += [
        Layer("global_pool"),
        Layer("dropout", p=POOL_DROPOUT),
        Layer("fc", channels=embedding_dim),
        Layer("relu"),
    ]
    return ArchSpec(
        name=f"cnn{depth}",
        frontend=frontend,
        layers=tuple(layers),
        classifier=classifier_head(n_classes),
        n_classes=n_classes,
        embedding_dim=embedding_dim,
        width_scale=width_scale,
        input_norm=input_norm,
        **kw,
    )


def build_wavegram_extractor(cfg: WavegramConfig = WavegramConfig()):
    """Layers mapping a waveform [B, 1, L] to a Wavegram [B, C/F, L/320, F]."""
    cfg.validate()
    layers = [Layer("conv1d", channels=cfg.pre_channels, kernel=cfg.pre_kernel, stride=cfg.pre_stride)]
    for c in cfg.block_channels:
        layers += [
            Layer("conv1d_block", channels=c, kernel=3, dilations=tuple(cfg.dilations)),
            Layer("maxpool1d", kernel=cfg.pool),
        ]
    layers.append(Layer("wavegram_reshape", channels=cfg.out_channels // cfg.n_freq))
    return tuple(layers)


def build_wavegram_logmel_cnn(
    cfg: WavegramConfig = WavegramConfig(), cnn14_spec: ArchSpec | None = None, use_logmel=True
):
    backbone = cnn14_spec if cnn14_spec is not None else build_cnn(14)
    if use_logmel and cfg.n_freq != backbone.n_mels:
        raise ValueError(f"wavegram has {cfg.n_freq} bins but log-mel has {backbone.n_mels}")
    if cfg.downsample != backbone.hop_size:
        raise ValueError(
            f"wavegram frame step {cfg.downsample} differs from log-mel hop {backbone.hop_size}"
        )
    return replace(
        backbone,
        name="wavegram_logmel_cnn" if use_logmel else "wavegram_cnn",
        frontend="wavegram_logmel" if use_logmel else "wavegram",
        wavegram=build_wavegram_extractor(cfg),
        wavegram_bins=cfg.n_freq,
        input_norm=backbone.input_norm and use_logmel,
    )


def build_architecture(name: str, width_scale=1.0, n_classes=527, **kw) -> ArchSpec:
    """Look up a named architecture (``cnn6``, ``cnn10``, ``cnn14``,
    ``wavegram_cnn``, ``wavegram_logmel_cnn``)."""
    name = name.lower().replace("-", "_")
    if name in ("cnn6", "cnn10", "cnn14"):
        return build_cnn(int(name[3:]), width_scale, n_classes, **kw)
    if name in ("wavegram_cnn", "wavegram_logmel_cnn"):
        cfg = replace(WavegramConfig(), n_freq=kw.get("n_mels", 64)).scaled(width_scale)
        return build_wavegram_logmel_cnn(
            cfg, build_cnn(14, width_scale, n_classes, **kw), use_logmel=name == "wavegram_logmel_cnn"
        )
    raise ValueError(f"unknown architecture {name!r}")


def replace_classifier(spec: ArchSpec, n_classes, output="sigmoid", hidden=()):
    return replace(spec, classifier=classifier_head(n_classes, output, hidden), n_classes=n_classes)


# --------------------------------------------------------------------------
# shape propagation and complexity


class LayerStat(NamedTuple):
    name: str
    kind: str
    out_shape: tuple
    params: int
    macs: int
    elementwise: int


def _walk(spec: ArchSpec, n_samples: int):
    """Yield (name, layer, in_shape, out_shape, params, macs) for one clip.

    Shapes exclude the batch axis. Non-learned layers report zero MACs and
    their element count goes in ``elementwise``.
    """
    stats = []
    T_mel = 1 + n_samples // spec.hop_size
    branches = []
    if spec.uses_logmel:
        shape = (1, T_mel, spec.n_mels)
        if spec.input_norm:
            stats.append(LayerStat("input_bn", "bn", shape, 2 * spec.n_mels, 0, 2 * T_mel * spec.n_mels))
        branches.append(shape)
    if spec.uses_waveform:
        shape = (1, n_samples)
        for i, layer in enumerate(spec.wavegram):
            shape, extra = _layer_stats(f"wavegram.{i}", layer, shape, spec.wavegram_bins)
            stats.extend(extra)
        branches.insert(0, shape)
    if len(branches) == 2:
        (cw, tw, fw), (cl, tl, fl) = branches
        if abs(tw - tl) > 1 or fw != fl:
            raise ShapeError(f"branch shapes {branches[0]} and {branches[1]} cannot be fused")
        shape = (cw + cl, min(tw, tl), fw)
    else:
        shape = branches[0]
    for i, layer in enumerate(spec.layers):
        shape, extra = _layer_stats(f"layers.{i}", layer, shape)
        stats.extend(extra)
    for i, layer in enumerate(spec.classifier):
        shape, extra = _layer_stats(f"classifier.{i}", layer, shape)
        stats.extend(extra)
    return stats


def _layer_stats(name, layer, shape, n_freq=None):
    k = layer.kind
    n = int(np.prod(shape))
    if k == "conv2d_block":
        out = []
        c, t, f = shape
        pad = layer.kernel // 2
        for r in range(layer.repeat):
            t = conv_output_length(t, layer.kernel, 1, 1, pad)
            f = conv_output_length(f, layer.kernel, 1, 1, pad)
            if t < 1 or f < 1:
                raise ShapeError(f"{name}: input too small for conv")
            kvol = c * layer.kernel**2
            o = layer.channels
            out.append(LayerStat(f"{name}.conv{r}", "conv2d", (o, t, f), o * kvol, o * t * f * kvol, 0))
            out.append(LayerStat(f"{name}.bn{r}", "bn", (o, t, f), 2 * o, 0, 2 * o * t * f))
            out.append(LayerStat(f"{name}.relu{r}", "relu", (o, t, f), 0, 0, o * t * f))
            c = o
        return (c, t, f), out
    if k == "conv1d":
        c, length = shape
        lo = conv_output_length(length, layer.kernel, layer.stride, 1, layer.kernel // 2)
        o = layer.channels
        kvol = c * layer.kernel
        return (o, lo), [
            LayerStat(f"{name}.conv", "conv1d", (o, lo), o * kvol, o * lo * kvol, 0),
            LayerStat(f"{name}.bn", "bn", (o, lo), 2 * o, 0, 2 * o * lo),
            LayerStat(f"{name}.relu", "relu", (o, lo), 0, 0, o * lo),
        ]
    if k == "conv1d_block":
        out = []
        c, length = shape
        for r, d in enumerate(layer.dilations):
            length = conv_output_length(length, layer.kernel, 1, d, d * (layer.kernel // 2))
            o = layer.channels
            kvol = c * layer.kernel
            out.append(LayerStat(f"{name}.conv{r}", "conv1d", (o, length), o * kvol, o * length * kvol, 0))
            out.append(LayerStat(f"{name}.bn{r}", "bn", (o, length), 2 * o, 0, 2 * o * length))
            out.append(LayerStat(f"{name}.relu{r}", "relu", (o, length), 0, 0, o * length))
            c = o
        return (c, length), out
    if k == "maxpool1d":
        c, length = shape
        lo = length // layer.kernel
        if lo < 1:
            raise ShapeError(f"{name}: length {length} < pool {layer.kernel}")
        return (c, lo), [LayerStat(name, k, (c, lo), 0, 0, c * lo * layer.kernel)]
    if k == "wavegram_reshape":
        c, length = shape
        if n_freq is None or c != layer.channels * n_freq:
            raise ShapeError(f"{name}: {c} channels cannot split into {layer.channels} planes")
        return (layer.channels, length, n_freq), [LayerStat(name, k, (layer.channels, length, n_freq), 0, 0, 0)]
    if k == "avgpool2d":
        c, t, f = shape
        to, fo = t // layer.kernel, f // layer.kernel
        if to < 1 or fo < 1:
            raise ShapeError(f"{name}: {t}x{f} smaller than pool {layer.kernel}")
        return (c, to, fo), [LayerStat(name, k, (c, to, fo), 0, 0, c * to * fo * layer.kernel**2)]
    if k == "global_pool":
        c = shape[0]
        return (c,), [LayerStat(name, k, (c,), 0, 0, 2 * n)]
    if k == "fc":
        d_in = shape[-1] if len(shape) == 1 else None
        if d_in is None:
            raise ShapeError(f"{name}: fc needs a flat input, got {shape}")
        o = layer.channels
        return (o,), [LayerStat(name, k, (o,), d_in * o + o, d_in * o, o)]
    if k in ("relu", "sigmoid", "softmax", "dropout"):
        return shape, [LayerStat(name, k, shape, 0, 0, n if k != "dropout" else 0)]
    raise ValueError(f"{name}: unknown layer kind {k!r}")


def propagate_shapes(spec: ArchSpec, n_samples: int):
    return _walk(spec, n_samples)


def count_params(spec: ArchSpec) -> int:
    # parameter counts are length independent; any length that propagates works
    n = 10 * spec.sample_rate
    return sum(s.params for s in _walk(spec, n))


def count_multiadds(spec: ArchSpec, n_samples: int, convention="flops") -> int:
    """Multi-adds for one clip of ``n_samples`` samples.

    ``mac``: one multiply-accumulate per weight use in conv/fc layers; BN,
    activations and pooling count zero.

    ``flops``: the convention that reproduces the published complexity table:
    multiplies and adds counted separately (2 per MAC), biases, batch-norm
    (2 per element), activations and pooling windows (1 per element), plus
    the STFT run as a 1024-tap real/imaginary convolution and the mel
    projection.
    """
    stats = _walk(spec, n_samples)
    if convention == "mac":
        return sum(s.macs for s in stats)
    if convention != "flops":
        raise ValueError(f"unknown convention {convention!r}")
    total = 0
    for s in stats:
        bias = s.out_shape[0] if s.kind == "fc" else 0
        total += 2 * s.macs + bias + s.elementwise
    if spec.uses_logmel:
        window = 1024
        frames = 1 + n_samples // spec.hop_size
        bins = window // 2 + 1
        total += 2 * (2 * window * bins * frames)  # real and imaginary filters
        total += 2 * frames * bins * spec.n_mels
    return total


# --------------------------------------------------------------------------
# runtime network


def _xavier(rng, shape, fan_in, fan_out, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Network:
    """Trainable instance of an :class:`ArchSpec`.

    Parameters live in ``self.params`` (name -> Tensor) and batch-norm
    statistics in ``self.bn`` (name -> BatchNormState). Names are stable and
    double as checkpoint keys.
    """

    def __init__(self, spec: ArchSpec, seed=0, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.bn: "OrderedDict[str, BatchNormState]" = OrderedDict()
        self.frozen: set[str] = set()
        self.training = True
        self.rng = np.random.default_rng(seed)
        self.trace = None
        self._build(np.random.default_rng(seed))

    # -- construction
    def _param(self, name, array):
        self.params[name] = Tensor(array, requires_grad=True, name=name)

    def _bn(self, name, channels):
        state = BatchNormState.create(channels, self.dtype, name)
        self.bn[name] = state
        self.params[f"{name}.gamma"] = state.gamma
        self.params[f"{name}.beta"] = state.beta

    def _build(self, rng):
        spec = self.spec
        if spec.uses_logmel and spec.input_norm:
            self._bn("input_bn", spec.n_mels)
        shape_stats = _walk(spec, 10 * spec.sample_rate)
        fc_in = {}
        prev = None
        for s in shape_stats:
            if s.kind == "fc":
                fc_in[s.name] = prev
            prev = s.out_shape
        self._init_section("wavegram", spec.wavegram, 1, rng, fc_in)
        self._init_section("layers", spec.layers, spec.backbone_in_channels, rng, fc_in)
        self._init_section("classifier", spec.classifier, spec.embedding_dim, rng, fc_in)

    def _init_section(self, section, layers, channels, rng, fc_in):
        dt = self.dtype
        for i, layer in enumerate(layers):
            name = f"{section}.{i}"
            k = layer.kind
            if k == "conv2d_block":
                for r in range(layer.repeat):
                    shape = (layer.channels, channels, layer.kernel, layer.kernel)
                    ksq = layer.kernel**2
                    self._param(f"{name}.conv{r}.weight", _xavier(rng, shape, channels * ksq, layer.channels * ksq, dt))
                    self._bn(f"{name}.bn{r}", layer.channels)
                    channels = layer.channels
            elif k == "conv1d":
                shape = (layer.channels, channels, layer.kernel)
                self._param(f"{name}.conv.weight", _xavier(rng, shape, channels * layer.kernel, layer.channels * layer.kernel, dt))
                self._bn(f"{name}.bn", layer.channels)
                channels = layer.channels
            elif k == "conv1d_block":
                for r, _ in enumerate(layer.dilations):
                    shape = (layer.channels, channels, layer.kernel)
                    self._param(f"{name}.conv{r}.weight", _xavier(rng, shape, channels * layer.kernel, layer.channels * layer.kernel, dt))
                    self._bn(f"{name}.bn{r}", layer.channels)
                    channels = layer.channels
            elif k == "fc":
                d_in = fc_in[name][0]
                self._param(f"{name}.weight", _xavier(rng, (layer.channels, d_in), d_in, layer.channels, dt))
                self._param(f"{name}.bias", np.zeros(layer.channels, dtype=dt))
                channels = layer.channels

    # -- modes
    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def freeze(self, prefixes):
        """Mark parameters (and their batch-norm statistics) as fixed."""
        self.frozen = set(prefixes)
        for name, p in self.params.items():
            p.requires_grad = not self.is_frozen(name)

    def is_frozen(self, name):
        return any(name == f or name.startswith(f + ".") for f in self.frozen)

    def trainable(self):
        return [p for n, p in self.params.items() if not self.is_frozen(n)]

    def n_params(self):
        return sum(p.size for p in self.params.values())

    # -- state
    def state_dict(self):
        out = OrderedDict((n, p.data) for n, p in self.params.items())
        for n, s in self.bn.items():
            out[f"{n}.running_mean"] = s.running_mean
            out[f"{n}.running_var"] = s.running_var
        return out

    def load_state_dict(self, state, strict=True):
        own = self.state_dict()
        missing = [k for k in own if k not in state]
        unexpected = [k for k in state if k not in own]
        if strict and (missing or unexpected):
            raise KeyError(f"state mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for k, arr in state.items():
            if k not in own:
                continue
            if own[k].shape != tuple(np.shape(arr)):
                raise ShapeError(f"{k}: checkpoint shape {np.shape(arr)} vs model {own[k].shape}")
            own[k][...] = arr

    # -- forward
    def _bn_apply(self, name, x):
        state = self.bn[name]
        training = self.training and not self.is_frozen(name)
        return ops.batchnorm(x, state, training=training)

    def _dropout(self, name, x, p):
        return ops.dropout(x, p, self.rng, training=self.training and not self.is_frozen(name))

    def _run(self, section, layers, x):
        for i, layer in enumerate(layers):
            name = f"{section}.{i}"
            k = layer.kind
            if k == "conv2d_block":
                for r in range(layer.repeat):
                    x = ops.conv2d(x, self.params[f"{name}.conv{r}.weight"], padding=layer.kernel // 2)
                    x = ops.relu(self._bn_apply(f"{name}.bn{r}", x))
            elif k == "conv1d":
                x = ops.conv1d(x, self.params[f"{name}.conv.weight"], stride=layer.stride, padding=layer.kernel // 2)
                x = ops.relu(self._bn_apply(f"{name}.bn", x))
            elif k == "conv1d_block":
                for r, d in enumerate(layer.dilations):
                    pad = d * (layer.kernel // 2)
                    x = ops.conv1d(x, self.params[f"{name}.conv{r}.weight"], dilation=d, padding=pad)
                    x = ops.relu(self._bn_apply(f"{name}.bn{r}", x))
            elif k == "maxpool1d":
                x = ops.maxpool1d(x, layer.kernel)
            elif k == "wavegram_reshape":
                B, C, T = x.shape
                x = ops.reshape(x, (B, layer.channels, C // layer.channels, T))
                x = ops.transpose(x, (0, 1, 3, 2))
            elif k == "avgpool2d":
                x = ops.avgpool2d(x, layer.kernel)
            elif k == "dropout":
                x = self._dropout(name, x, layer.p)
            elif k == "global_pool":
                x = ops.global_pool(x)
            elif k == "fc":
                x = ops.linear(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"])
            elif k == "relu":
                x = ops.relu(x)
            elif k == "sigmoid":
                x = ops.sigmoid(x)
            elif k == "softmax":
                x = ops.softmax(x)
            else:
                raise ValueError(f"{name}: unknown layer kind {k!r}")
            if self.trace is not None:
                self.trace.append((name, tuple(x.shape[1:])))
        return x

    def features(self, waveform=None, logmel=None):
        """Backbone input [B, C, T, F] from the configured front end(s)."""
        spec = self.spec
        branches = []
        if spec.uses_waveform:
            if waveform is None:
                raise ValueError(f"{spec.name} needs waveform input")
            w = waveform if isinstance(waveform, Tensor) else Tensor(np.asarray(waveform, dtype=self.dtype))
            w = ops.reshape(w, (w.shape[0], 1, w.shape[1]))
            branches.append(self._run("wavegram", spec.wavegram, w))
        if spec.uses_logmel:
            if logmel is None:
                raise ValueError(f"{spec.name} needs log-mel input")
            m = logmel if isinstance(logmel, Tensor) else Tensor(np.asarray(logmel, dtype=self.dtype))
            if m.shape[-1] != spec.n_mels:
                raise ShapeError(f"log-mel has {m.shape[-1]} bins, model expects {spec.n_mels}")
            if spec.input_norm:
                m = ops.transpose(m, (0, 2, 1))
                m = self._bn_apply("input_bn", m)
                m = ops.transpose(m, (0, 2, 1))
            branches.append(ops.reshape(m, (m.shape[0], 1) + m.shape[1:]))
        if len(branches) == 1:
            return branches[0]
        wg, lm = branches
        tw, tl = wg.shape[2], lm.shape[2]
        if abs(tw - tl) > 1:
            raise ShapeError(f"wavegram has {tw} frames but log-mel has {tl}")
        t = min(tw, tl)
        if tw > t:
            wg = ops.slice_axis(wg, 2, 0, t)
        if tl > t:
            lm = ops.slice_axis(lm, 2, 0, t)
        return ops.concat([wg, lm], axis=1)

    def embed(self, waveform=None, logmel=None):
        return self._run("layers", self.spec.layers, self.features(waveform, logmel))

    def forward(self, waveform=None, logmel=None) -> ModelOutput:
        emb = self.embed(waveform, logmel)
        out = self._run("classifier", self.spec.classifier, emb)
        return ModelOutput(out, emb)

    __call__ = forward

    def logits(self, waveform=None, logmel=None):
        """Classifier output before its final activation, plus the embedding."""
        emb = self.embed(waveform, logmel)
        return self._run("classifier", self.spec.classifier[:-1], emb), emb
