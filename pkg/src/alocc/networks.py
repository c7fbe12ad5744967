"""Reconstructor (R) and discriminator (D) networks.

A network is a flat list of :class:`LayerSpec` entries executed in order.
R is an all-convolutional encoder-decoder whose output has the input's
shape and a tanh head; D is a strided convolution stack that ends in one
sigmoid unit per sample. Pooling is never allowed.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import BatchNormState, Tensor, activation, as_tensor, batch_norm, conv2d, conv2d_transpose, no_grad
from .tensor.noise import make_rng

logger = logging.getLogger(__name__)

LAYER_KINDS = ("conv", "conv_transpose", "batch_norm", "activation")
ACTIVATIONS = ("sigmoid", "tanh", "leaky_relu", "relu")
INIT_STD = 0.02
DEFAULT_WIDTHS = (64, 128, 256)


@dataclass
class LayerSpec:
    kind: str
    in_channels: Optional[int] = None
    out_channels: Optional[int] = None
    kernel_h: int = 5
    kernel_w: int = 5
    stride: int = 1
    padding: int = 0
    output_padding: int = 0
    activation: Optional[str] = None
    alpha: float = 0.2

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown layer fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class NetworkConfig:
    layers: list
    input_size: int = 32
    in_channels: int = 1

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "in_channels": self.in_channels,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        try:
            layers = [LayerSpec.from_dict(x) for x in d["layers"]]
            return cls(layers=layers, input_size=int(d["input_size"]), in_channels=int(d["in_channels"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed network config: {exc}") from exc


def default_r_config(in_channels: int = 1, input_size: int = 32, widths=DEFAULT_WIDTHS,
                     kernel: int = 5) -> NetworkConfig:
    """Encoder of stride-2 convs (BN + leaky ReLU) mirrored by transposed convs (BN + ReLU), tanh out."""
    pad = kernel // 2
    layers = []
    chans = [in_channels, *widths]
    for cin, cout in zip(chans[:-1], chans[1:]):
        layers += [
            LayerSpec("conv", cin, cout, kernel, kernel, stride=2, padding=pad),
            LayerSpec("batch_norm", cout, cout),
            LayerSpec("activation", activation="leaky_relu", alpha=0.2),
        ]
    rev = chans[::-1]
    for i, (cin, cout) in enumerate(zip(rev[:-1], rev[1:])):
        layers.append(LayerSpec("conv_transpose", cin, cout, kernel, kernel, stride=2, padding=pad,
                                output_padding=1))
        if i < len(rev) - 2:
            layers += [LayerSpec("batch_norm", cout, cout), LayerSpec("activation", activation="relu")]
    layers.append(LayerSpec("activation", activation="tanh"))
    return NetworkConfig(layers, input_size, in_channels)


def default_d_config(in_channels: int = 1, input_size: int = 32, widths=DEFAULT_WIDTHS,
                     kernel: int = 5) -> NetworkConfig:
    """Stride-2 conv stack (BN from the second layer on) ending in a single sigmoid unit."""
    pad = kernel // 2
    layers = []
    chans = [in_channels, *widths]
    size = input_size
    for i, (cin, cout) in enumerate(zip(chans[:-1], chans[1:])):
        layers.append(LayerSpec("conv", cin, cout, kernel, kernel, stride=2, padding=pad))
        if i > 0:
            layers.append(LayerSpec("batch_norm", cout, cout))
        layers.append(LayerSpec("activation", activation="leaky_relu", alpha=0.2))
        size = (size + 2 * pad - kernel) // 2 + 1
    layers.append(LayerSpec("conv", chans[-1], 1, size, size, stride=1, padding=0))
    layers.append(LayerSpec("activation", activation="sigmoid"))
    return NetworkConfig(layers, input_size, in_channels)


def infer_shapes(config: NetworkConfig) -> list:
    """(C, H, W) after every layer; raises ConfigError on any inconsistency."""
    c, h, w = config.in_channels, config.input_size, config.input_size
    shapes = []
    for i, layer in enumerate(config.layers):
        if "pool" in layer.kind:
            raise ConfigError(f"layer {i}: pooling layers are not allowed")
        if layer.kind not in LAYER_KINDS:
            raise ConfigError(f"layer {i}: unknown kind {layer.kind!r}")
        if layer.kind in ("conv", "conv_transpose"):
            if layer.in_channels != c:
                raise ConfigError(f"layer {i}: expects {layer.in_channels} input channels, gets {c}")
            if not layer.out_channels or layer.out_channels < 1:
                raise ConfigError(f"layer {i}: out_channels must be positive")
            if layer.stride < 1 or layer.padding < 0:
                raise ConfigError(f"layer {i}: bad stride/padding")
            kh, kw, s, p = layer.kernel_h, layer.kernel_w, layer.stride, layer.padding
            if layer.kind == "conv":
                h = (h + 2 * p - kh) // s + 1
                w = (w + 2 * p - kw) // s + 1
            else:
                if not 0 <= layer.output_padding < s:
                    raise ConfigError(f"layer {i}: output_padding must be in [0, stride)")
                h = (h - 1) * s - 2 * p + kh + layer.output_padding
                w = (w - 1) * s - 2 * p + kw + layer.output_padding
            if h < 1 or w < 1:
                raise ConfigError(f"layer {i}: spatial size collapses to {h}x{w}")
            c = layer.out_channels
        elif layer.kind == "batch_norm":
            if layer.in_channels not in (None, c) or layer.out_channels not in (None, c):
                raise ConfigError(f"layer {i}: batch_norm channel count does not match {c}")
        elif layer.activation not in ACTIVATIONS:
            raise ConfigError(f"layer {i}: unknown activation {layer.activation!r}")
        shapes.append((c, h, w))
    return shapes


def validate_r_config(config: NetworkConfig) -> None:
    shapes = infer_shapes(config)
    if not shapes:
        raise ConfigError("R config has no layers")
    expected = (config.in_channels, config.input_size, config.input_size)
    if shapes[-1] != expected:
        raise ConfigError(f"R config is not shape-symmetric: input {expected}, output {shapes[-1]}")
    layers = config.layers
    for i, layer in enumerate(layers):
        if layer.kind == "conv" and (i + 1 >= len(layers) or layers[i + 1].kind != "batch_norm"):
            raise ConfigError(f"R layer {i}: every encoder conv must be followed by batch_norm")
    if layers[-1].kind != "activation" or layers[-1].activation != "tanh":
        raise ConfigError("R config must end with a tanh activation")


def validate_d_config(config: NetworkConfig) -> None:
    shapes = infer_shapes(config)
    if not shapes or shapes[-1] != (1, 1, 1):
        raise ConfigError(f"D config must produce one scalar per sample, got {shapes[-1] if shapes else None}")
    last = config.layers[-1]
    if last.kind != "activation" or last.activation != "sigmoid":
        raise ConfigError("D config must end with a sigmoid activation")


def parameter_count(config: NetworkConfig) -> int:
    """Number of trainable scalars implied by a config."""
    total = 0
    for layer, (c, _, _) in zip(config.layers, infer_shapes(config)):
        if layer.kind in ("conv", "conv_transpose"):
            total += layer.in_channels * layer.out_channels * layer.kernel_h * layer.kernel_w
        elif layer.kind == "batch_norm":
            total += 2 * c
    return total


@dataclass
class Network:
    role: str
    config: NetworkConfig
    params: dict = field(default_factory=dict)
    bn_states: dict = field(default_factory=dict)

    def parameters(self) -> list:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.params.values():
            p.requires_grad = flag

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def forward(self, x, training: bool = False, update_running: bool = True, taped: bool = False) -> Tensor:
        """Run every layer.

        Eval mode uses running BN statistics and records no tape unless
        ``taped`` is set, which lets gradients flow through a frozen network.
        """
        x = self._check_input(x)
        if not training and not taped:
            with no_grad():
                return self._run(x, False, False)
        return self._run(x, training, training and update_running)

    def head_input(self, x) -> Tensor:
        """Eval-mode output just before a trailing activation layer (D's log-odds)."""
        layers = self.config.layers
        stop = len(layers) - 1 if layers and layers[-1].kind == "activation" else len(layers)
        x = self._check_input(x)
        with no_grad():
            return self._run(x, False, False, stop)

    def _check_input(self, x) -> Tensor:
        x = as_tensor(x, dtype=self.dtype)
        expected = (self.config.in_channels, self.config.input_size, self.config.input_size)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise DimensionError(f"{self.role} expects input (N, {', '.join(map(str, expected))}), got {x.shape}")
        return x

    def _run(self, x: Tensor, training: bool, update_running: bool, stop: Optional[int] = None) -> Tensor:
        for i, layer in enumerate(self.config.layers[:stop]):
            if layer.kind == "conv":
                x = conv2d(x, self.params[f"{i}.kernel"], layer.stride, layer.padding)
            elif layer.kind == "conv_transpose":
                x = conv2d_transpose(x, self.params[f"{i}.kernel"], layer.stride, layer.padding,
                                     layer.output_padding)
            elif layer.kind == "batch_norm":
                x = batch_norm(x, self.params[f"{i}.gamma"], self.params[f"{i}.beta"], self.bn_states[str(i)],
                               training=training, update_running=update_running)
            else:
                x = activation(x, layer.activation, layer.alpha)
        return x

    def state_arrays(self) -> dict:
        """Every parameter and running statistic as named numpy arrays."""
        out = {name: p.data for name, p in self.params.items()}
        for key, st in self.bn_states.items():
            out[f"{key}.running_mean"] = st.running_mean
            out[f"{key}.running_var"] = st.running_var
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        expected = self.state_arrays()
        missing = set(expected) - set(arrays)
        if missing:
            raise ConfigError(f"{self.role}: missing tensors {sorted(missing)}")
        for name, ref in expected.items():
            arr = np.asarray(arrays[name])
            if arr.shape != ref.shape:
                raise DimensionError(f"{self.role}.{name}: shape {arr.shape}, expected {ref.shape}")
        for name, p in self.params.items():
            p.data = np.array(arrays[name], dtype=p.dtype)
        for key, st in self.bn_states.items():
            st.running_mean = np.array(arrays[f"{key}.running_mean"], dtype=st.running_mean.dtype)
            st.running_var = np.array(arrays[f"{key}.running_var"], dtype=st.running_var.dtype)


def _instantiate(role: str, config: NetworkConfig, rng, dtype) -> Network:
    gen = make_rng(rng)
    net = Network(role, config)
    for i, (layer, (c, _, _)) in enumerate(zip(config.layers, infer_shapes(config))):
        if layer.kind == "conv":
            shape = (layer.out_channels, layer.in_channels, layer.kernel_h, layer.kernel_w)
        elif layer.kind == "conv_transpose":
            shape = (layer.in_channels, layer.out_channels, layer.kernel_h, layer.kernel_w)
        elif layer.kind == "batch_norm":
            net.params[f"{i}.gamma"] = Tensor(np.ones(c, dtype=dtype), requires_grad=True)
            net.params[f"{i}.beta"] = Tensor(np.zeros(c, dtype=dtype), requires_grad=True)
            net.bn_states[str(i)] = BatchNormState.create(c, dtype)
            continue
        else:
            continue
        kernel = gen.normal(0.0, INIT_STD, size=shape).astype(dtype)
        net.params[f"{i}.kernel"] = Tensor(kernel, requires_grad=True)
    return net


def build_r(config: Optional[NetworkConfig] = None, rng=0, dtype=np.float32) -> Network:
    config = config or default_r_config()
    validate_r_config(config)
    return _instantiate("R", config, rng, dtype)


def build_d(config: Optional[NetworkConfig] = None, rng=0, dtype=np.float32) -> Network:
    config = config or default_d_config()
    validate_d_config(config)
    return _instantiate("D", config, rng, dtype)


def forward_r(net: Network, x, training: bool = False, update_running: bool = True,
              taped: bool = False) -> Tensor:
    """Reconstruction X' of ``x`` (same shape)."""
    if net.role != "R":
        raise ConfigError(f"forward_r called on a {net.role} network")
    return net.forward(x, training, update_running, taped)


def forward_d(net: Network, x, training: bool = False, update_running: bool = True,
              taped: bool = False) -> Tensor:
    """Target-likelihood scores, shape (N, 1)."""
    if net.role != "D":
        raise ConfigError(f"forward_d called on a {net.role} network")
    out = net.forward(x, training, update_running, taped)
    return out.reshape(out.shape[0], 1)


def d_logits(net: Network, x) -> np.ndarray:
    """Log-odds behind D's scores, shape (N,), in float64.

    Trained discriminators routinely reach logits beyond 37, where even a
    float64 sigmoid rounds to exactly 1.0; ranking on logits keeps the order.
    """
    if net.role != "D":
        raise ConfigError(f"d_logits called on a {net.role} network")
    return net.head_input(x).data.reshape(-1).astype(np.float64)
