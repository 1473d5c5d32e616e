"""Parametric network families and their layer stacks.

Three families are generated from a handful of integer exponents:

* fully connected: trapezium, reverse trapezium and rectangular MLPs
* TriCNN: halving 1D conv layers followed by a trapezium of dense layers
* residual: superblocks of one convolutional block plus ``r`` identity blocks

A :class:`LayerStack` is a declarative description; :mod:`perfnet.network`
turns it into trainable parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import ConfigError
from .nn import ACTIVATIONS, ShapeError, conv_output_length

MLP_FAMILIES = ("trapezium", "reverse_trapezium", "rectangular")
ARCH_IDS = {
    "trapezium": "trimlp",
    "reverse_trapezium": "revtrimlp",
    "rectangular": "rectmlp",
}
_ARCH_ALIASES = {
    "trimlp": "trapezium",
    "trapezium": "trapezium",
    "revtrimlp": "reverse_trapezium",
    "reverse_trapezium": "reverse_trapezium",
    "rectmlp": "rectangular",
    "rectangular": "rectangular",
    "tricnn": "tricnn",
    "cnn": "tricnn",
    "residual": "residual",
    "resnet": "residual",
}

# search ranges the grid exposes by default
MLP_N_RANGE = (4, 11)
MLP_M_RANGE = (1, 10)
CNN_SEARCH_RANGES = {"n": (7, 11), "m": (4, 7), "p": (7, 11), "q": (5, 7)}
KERNEL_RANGE = (2, 5)
STRIDE_RANGE = (1, 4)
RESIDUAL_P_RANGE = (6, 11)
RESIDUAL_STAGES_RANGE = (1, 4)


def _check_activation(kind):
    if kind not in ACTIVATIONS or kind == "identity":
        raise ConfigError(f"activation must be one of sigmoid, tanh, relu; got {kind!r}")


def _in_range(value, bounds, what):
    lo, hi = bounds
    if not isinstance(value, int) or not lo <= value <= hi:
        raise ConfigError(f"{what} must be an integer in [{lo}, {hi}], got {value!r}")


def exponent_run(exponents) -> list[int]:
    """Expand a descending exponent list to its full halving run.

    ``(9, 7)`` -> ``[9, 8, 7]``; inner entries only have to be consistent.
    """
    exps = [int(e) for e in exponents]
    if not exps:
        raise ConfigError("exponent list is empty")
    if any(b >= a for a, b in zip(exps, exps[1:])):
        raise ConfigError(f"exponents must strictly decrease, got {tuple(exps)}")
    return list(range(exps[0], exps[-1] - 1, -1))


# --------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class MlpSpec:
    family: str
    n: int
    m: int
    activation: str = "relu"

    def __post_init__(self):
        if self.family not in MLP_FAMILIES:
            raise ConfigError(f"MLP family must be one of {MLP_FAMILIES}, got {self.family!r}")
        _in_range(self.n, MLP_N_RANGE, "n")
        _in_range(self.m, MLP_M_RANGE, "m")
        if self.family != "rectangular" and self.n - self.m <= 1:
            raise ConfigError(
                f"trapezium networks require n - m > 1, got n={self.n}, m={self.m}"
            )
        _check_activation(self.activation)

    @property
    def arch_id(self) -> str:
        return ARCH_IDS[self.family]

    def hidden_widths(self) -> list[int]:
        if self.family == "rectangular":
            return [2**self.n] * self.m
        widths = [2**e for e in range(self.n, self.n - self.m - 1, -1)]
        if self.family == "reverse_trapezium":
            widths.reverse()
        return widths

    def to_dict(self) -> dict:
        return {"architecture": self.arch_id, "n": self.n, "m": self.m, "activation": self.activation}


@dataclass(frozen=True)
class CnnSpec:
    filter_exponents: tuple
    kernel_size: int
    stride: int
    fc_exponents: tuple
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "filter_exponents", tuple(int(e) for e in self.filter_exponents))
        object.__setattr__(self, "fc_exponents", tuple(int(e) for e in self.fc_exponents))
        exponent_run(self.filter_exponents)
        fc = exponent_run(self.fc_exponents)
        if fc[-1] < 1:
            raise ConfigError(f"smallest dense layer must have >= 2 units, got 2^{fc[-1]}")
        if self.filter_exponents[-1] < 0:
            raise ConfigError("filter exponents must be non-negative")
        _in_range(self.kernel_size, KERNEL_RANGE, "kernel size")
        _in_range(self.stride, STRIDE_RANGE, "stride")
        _check_activation(self.activation)

    arch_id = "tricnn"

    def conv_widths(self) -> list[int]:
        return [2**e for e in exponent_run(self.filter_exponents)]

    def fc_widths(self) -> list[int]:
        return [2**e for e in exponent_run(self.fc_exponents)]

    def to_dict(self) -> dict:
        return {
            "architecture": "tricnn",
            "filter_exponents": list(self.filter_exponents),
            "kernel": self.kernel_size,
            "stride": self.stride,
            "fc_exponents": list(self.fc_exponents),
            "activation": self.activation,
        }


@dataclass(frozen=True)
class ResidualSpec:
    """``stages`` holds one ``(r, p)`` pair per superblock.

    A stage is a convolutional block of widths ``(2^(p-2), 2^(p-2), 2^p)`` followed
    by ``r`` identity blocks of the same widths.
    """

    stages: tuple
    strides: Optional[tuple] = None
    activation: str = "relu"

    def __post_init__(self):
        stages = tuple((int(r), int(p)) for r, p in self.stages)
        object.__setattr__(self, "stages", stages)
        if not stages:
            raise ConfigError("residual network needs at least one stage")
        for r, p in stages:
            if r < 0:
                raise ConfigError(f"identity block count r must be >= 0, got {r}")
            _in_range(p, RESIDUAL_P_RANGE, "residual width exponent p")
        for (_, p0), (_, p1) in zip(stages, stages[1:]):
            if p1 != p0 + 1:
                raise ConfigError(
                    f"each superblock must double the previous width: got 2^{p0} then 2^{p1}"
                )
        strides = self.strides if self.strides is not None else (1,) * len(stages)
        strides = tuple(int(s) for s in strides)
        if len(strides) != len(stages):
            raise ConfigError(f"{len(strides)} strides given for {len(stages)} stages")
        for s in strides:
            _in_range(s, STRIDE_RANGE, "stage stride")
        object.__setattr__(self, "strides", strides)
        _check_activation(self.activation)

    arch_id = "residual"

    def width_triples(self) -> list[tuple[int, int, int]]:
        return [(p - 2, p - 2, p) for _, p in self.stages]

    def to_dict(self) -> dict:
        return {
            "architecture": "residual",
            "stages": [[r, p] for r, p in self.stages],
            "strides": list(self.strides),
            "activation": self.activation,
        }


ArchSpec = Union[MlpSpec, CnnSpec, ResidualSpec]


def spec_from_dict(doc: dict) -> ArchSpec:
    """Build an architecture spec from its config-document form."""
    if not isinstance(doc, dict):
        raise ConfigError(f"architecture document must be a mapping, got {type(doc).__name__}")
    doc = dict(doc)
    name = str(doc.pop("architecture", "")).lower()
    kind = _ARCH_ALIASES.get(name)
    if kind is None:
        raise ConfigError(f"unknown architecture {name!r}")
    activation = doc.pop("activation", "relu")
    try:
        if kind in MLP_FAMILIES:
            spec = MlpSpec(kind, doc.pop("n"), doc.pop("m"), activation)
        elif kind == "tricnn":
            spec = CnnSpec(
                tuple(doc.pop("filter_exponents")),
                doc.pop("kernel"),
                doc.pop("stride", 1),
                tuple(doc.pop("fc_exponents")),
                activation,
            )
        else:
            strides = doc.pop("strides", None)
            spec = ResidualSpec(
                tuple(tuple(s) for s in doc.pop("stages")),
                tuple(strides) if strides is not None else None,
                activation,
            )
    except KeyError as exc:
        raise ConfigError(f"{name}: missing key {exc.args[0]!r}") from None
    except TypeError as exc:
        raise ConfigError(f"{name}: malformed value ({exc})") from None
    if doc:
        raise ConfigError(f"{name}: unexpected keys {sorted(doc)}")
    return spec


# --------------------------------------------------------------------------
# layer descriptors


@dataclass(frozen=True)
class DenseLayer:
    units: int


@dataclass(frozen=True)
class Conv1dLayer:
    filters: int
    kernel_size: int
    stride: int = 1
    padding: str = "valid"


@dataclass(frozen=True)
class ActivationLayer:
    kind: str


@dataclass(frozen=True)
class FlattenLayer:
    pass


@dataclass(frozen=True)
class ResidualBlockLayer:
    """Three-conv main path merged with ``shortcut`` (identity when ``None``)."""

    convs: tuple
    shortcut: Optional[Conv1dLayer] = None
    activation: str = "relu"

    @property
    def kind(self) -> str:
        return "identity" if self.shortcut is None else "convolutional"


Layer = Union[DenseLayer, Conv1dLayer, ActivationLayer, FlattenLayer, ResidualBlockLayer]


@dataclass(frozen=True)
class LayerStack:
    input_shape: tuple
    layers: tuple = field(default_factory=tuple)
    arch_id: str = ""

    def dense_widths(self) -> list[int]:
        return [l.units for l in self.layers if isinstance(l, DenseLayer)]

    def conv_widths(self) -> list[int]:
        return [l.filters for l in self.layers if isinstance(l, Conv1dLayer)]

    def residual_blocks(self) -> list[ResidualBlockLayer]:
        return [l for l in self.layers if isinstance(l, ResidualBlockLayer)]


# --------------------------------------------------------------------------
# shape propagation


def _conv_shape(shape, layer: Conv1dLayer, where):
    if len(shape) != 2:
        raise ShapeError(f"{where}: conv1d needs (channels, length) input, got {shape}")
    length = shape[1]
    if layer.padding == "valid" and length < layer.kernel_size:
        raise ShapeError(
            f"{where}: input length {length} is shorter than kernel size {layer.kernel_size}"
        )
    if layer.padding == "same" and layer.stride != 1:
        raise ShapeError(f"{where}: same padding requires stride 1")
    return (layer.filters, conv_output_length(length, layer.kernel_size, layer.stride, layer.padding))


def layer_output_shape(layer: Layer, shape: tuple, where="layer") -> tuple:
    if isinstance(layer, DenseLayer):
        if len(shape) != 1:
            raise ShapeError(f"{where}: dense layer needs a flat input, got {shape}")
        return (layer.units,)
    if isinstance(layer, Conv1dLayer):
        return _conv_shape(shape, layer, where)
    if isinstance(layer, (ActivationLayer,)):
        return shape
    if isinstance(layer, FlattenLayer):
        size = 1
        for d in shape:
            size *= d
        return (size,)
    if isinstance(layer, ResidualBlockLayer):
        main = shape
        for i, conv in enumerate(layer.convs):
            main = _conv_shape(main, conv, f"{where} conv {i + 1}")
        bypass = shape if layer.shortcut is None else _conv_shape(shape, layer.shortcut, f"{where} bypass")
        if main != bypass:
            raise ShapeError(
                f"{where}: residual merge needs equal shapes: main path {main} vs bypass {bypass}"
            )
        return main
    raise TypeError(f"unknown layer {layer!r}")


def enumerate_layer_shapes(stack: LayerStack, input_shape=None) -> list[tuple]:
    """Input shape followed by the output shape of every layer."""
    shape = tuple(input_shape if input_shape is not None else stack.input_shape)
    shapes = [shape]
    for i, layer in enumerate(stack.layers):
        shape = layer_output_shape(layer, shape, where=f"layer {i} ({type(layer).__name__})")
        shapes.append(shape)
    return shapes


def _checked(stack: LayerStack) -> LayerStack:
    try:
        shapes = enumerate_layer_shapes(stack)
    except ShapeError as exc:
        raise ConfigError(f"{stack.arch_id}: infeasible on input {stack.input_shape}: {exc}") from None
    if shapes[-1] != (1,):
        raise ConfigError(f"{stack.arch_id}: stack must end in one unit, ends in {shapes[-1]}")
    return stack


# --------------------------------------------------------------------------
# generators


def build_mlp(spec: MlpSpec, input_width: int) -> LayerStack:
    if input_width < 1:
        raise ConfigError(f"input width must be >= 1, got {input_width}")
    layers = []
    for width in spec.hidden_widths():
        layers += [DenseLayer(width), ActivationLayer(spec.activation)]
    layers.append(DenseLayer(1))
    return _checked(LayerStack((input_width,), tuple(layers), spec.arch_id))


def build_tri_cnn(spec: CnnSpec, input_shape=(1, 24)) -> LayerStack:
    layers = []
    for filters in spec.conv_widths():
        layers += [Conv1dLayer(filters, spec.kernel_size, spec.stride), ActivationLayer(spec.activation)]
    layers.append(FlattenLayer())
    for width in spec.fc_widths():
        layers += [DenseLayer(width), ActivationLayer(spec.activation)]
    layers.append(DenseLayer(1))
    return _checked(LayerStack(tuple(input_shape), tuple(layers), spec.arch_id))


def _block(p: int, stride: int, convolutional: bool, activation: str) -> ResidualBlockLayer:
    narrow, wide = 2 ** (p - 2), 2**p
    convs = (
        Conv1dLayer(narrow, 1, stride if convolutional else 1),
        Conv1dLayer(narrow, 3, 1, "same"),
        Conv1dLayer(wide, 1, 1),
    )
    shortcut = Conv1dLayer(wide, 1, stride) if convolutional else None
    return ResidualBlockLayer(convs, shortcut, activation)


def build_residual_net(spec: ResidualSpec, input_shape=(1, 24)) -> LayerStack:
    layers = []
    for (r, p), stride in zip(spec.stages, spec.strides):
        layers.append(_block(p, stride, True, spec.activation))
        layers += [_block(p, 1, False, spec.activation) for _ in range(r)]
    layers += [FlattenLayer(), DenseLayer(1)]
    return _checked(LayerStack(tuple(input_shape), tuple(layers), spec.arch_id))


def build_stack(spec: ArchSpec, n_features: int = 24) -> LayerStack:
    if isinstance(spec, MlpSpec):
        return build_mlp(spec, n_features)
    if isinstance(spec, CnnSpec):
        return build_tri_cnn(spec, (1, n_features))
    if isinstance(spec, ResidualSpec):
        return build_residual_net(spec, (1, n_features))
    raise TypeError(f"not an architecture spec: {spec!r}")


def describe_layer(layer: Layer) -> str:
    if isinstance(layer, DenseLayer):
        return f"dense {layer.units}"
    if isinstance(layer, Conv1dLayer):
        return f"conv1d filters={layer.filters} k={layer.kernel_size} stride={layer.stride} {layer.padding}"
    if isinstance(layer, ActivationLayer):
        return f"activation {layer.kind}"
    if isinstance(layer, FlattenLayer):
        return "flatten"
    widths = "/".join(str(c.filters) for c in layer.convs)
    stride = layer.convs[0].stride
    return f"{layer.kind} block widths={widths} stride={stride}"


def describe_stack(stack: LayerStack) -> list[str]:
    """One line per layer: index, description, output shape."""
    shapes = enumerate_layer_shapes(stack)
    lines = [f"{'#':>3}  {'layer':<48} output", f"{'':>3}  {'input':<48} {shapes[0]}"]
    stage = 0
    for i, (layer, shape) in enumerate(zip(stack.layers, shapes[1:])):
        if isinstance(layer, ResidualBlockLayer) and layer.shortcut is not None:
            stage += 1
            lines.append(f"-- stage {stage}: output width {layer.convs[-1].filters}")
        lines.append(f"{i:>3}  {describe_layer(layer):<48} {shape}")
    return lines
