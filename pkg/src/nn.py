"""
From-scratch convolutional network on numpy.

Feature maps are float64 arrays in NCHW layout. The reference network has five
trainable layers (three convolutions, one fully connected layer and a softmax
output layer) with ReLU activations and overlapping 3x3/2 max pooling, trained
with minibatch SGD, Nesterov momentum and L2 weight decay.
"""

import json
import logging
import math
import struct
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field

from .errors import CheckpointError, NumericalFailure, ShapeMismatch
from .imagecore import PathLike, RawImage, center_crop_or_pad, normalize
from .models import (
    EpochStats,
    LabeledImage,
    LayerKind,
    LayerSpec,
    TrainingTrace,
)

logger = logging.getLogger(__name__)

Tensor = NDArray[np.float64]
Shape = Tuple[int, ...]
WeightInit = Literal["xavier", "gaussian"]

REFERENCE_INPUT_SIZE = 224
CHECKPOINT_MAGIC = b"AUGCNN"
CHECKPOINT_VERSION = 1


def check_finite(
    arr: np.ndarray, what: str, epoch: Optional[int] = None, batch: Optional[int] = None
) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalFailure(f"non-finite {what}", epoch=epoch, batch=batch)


def _fans(shape: Shape) -> Tuple[int, int]:
    if len(shape) == 2:
        return shape[0], shape[1]
    if len(shape) == 4:
        receptive = shape[2] * shape[3]
        return shape[1] * receptive, shape[0] * receptive
    raise ShapeMismatch(f"cannot derive fan-in/fan-out from shape {shape}")


def xavier_init(shape: Shape, rng: np.random.Generator) -> Tensor:
    """Glorot uniform: U(-sqrt(6 / (fan_in + fan_out)), +sqrt(...))."""
    fan_in, fan_out = _fans(shape)
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def gaussian_init(shape: Shape, rng: np.random.Generator, std: float = 0.01) -> Tensor:
    return rng.normal(0.0, std, size=shape)


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(
    logits: Tensor, labels: np.ndarray
) -> Tuple[float, Tensor, Tensor]:
    """Mean cross-entropy; returns (loss, probabilities, dloss/dlogits)."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = float(-log_probs[rows, labels].mean())
    probs = np.exp(log_probs)
    dlogits = probs.copy()
    dlogits[rows, labels] -= 1.0
    return loss, probs, dlogits / n


class Layer:
    """Forward caches what backward needs; backward fills ``grads``."""

    def __init__(self) -> None:
        self.params: Dict[str, Tensor] = {}
        self.grads: Dict[str, Tensor] = {}

    def output_shape(self, input_shape: Shape) -> Shape:
        return input_shape

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def backward(self, dy: Tensor) -> Tensor:
        raise NotImplementedError


class Conv2D(Layer):
    """Zero-padded cross-correlation with a bias per output channel."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        padding: int = 0,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.params = {
            "weight": np.zeros((out_channels, in_channels, kernel, kernel)),
            "bias": np.zeros(out_channels),
        }
        self._windows: Optional[np.ndarray] = None
        self._input_shape: Optional[Shape] = None

    def output_shape(self, input_shape: Shape) -> Shape:
        c, h, w = input_shape
        if c != self.in_channels:
            raise ShapeMismatch(f"conv expects {self.in_channels} channels, got {c}")
        oh = (h + 2 * self.padding - self.kernel) // self.stride + 1
        ow = (w + 2 * self.padding - self.kernel) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeMismatch(f"input {h}x{w} too small for kernel {self.kernel}")
        return self.out_channels, oh, ow

    def forward(self, x: Tensor) -> Tensor:
        self.output_shape(x.shape[1:])
        p, k, s = self.padding, self.kernel, self.stride
        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        # (N, C, OH, OW, k, k)
        windows = sliding_window_view(padded, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        self._windows = windows
        self._input_shape = x.shape
        out = np.tensordot(windows, self.params["weight"], axes=([1, 4, 5], [1, 2, 3]))
        out += self.params["bias"]
        return out.transpose(0, 3, 1, 2)

    def backward(self, dy: Tensor) -> Tensor:
        p, k, s = self.padding, self.kernel, self.stride
        n, c, h, w = self._input_shape
        _, _, oh, ow = dy.shape
        weight = self.params["weight"]

        self.grads = {
            "weight": np.tensordot(dy, self._windows, axes=([0, 2, 3], [0, 2, 3])),
            "bias": dy.sum(axis=(0, 2, 3)),
        }

        dpadded = np.zeros((n, c, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                contrib = np.tensordot(dy, weight[:, :, i, j], axes=([1], [0]))
                dpadded[:, :, i : i + s * oh : s, j : j + s * ow : s] += contrib.transpose(
                    0, 3, 1, 2
                )
        return dpadded[:, :, p : p + h, p : p + w]


def pool_extent(size: int, kernel: int, stride: int) -> int:
    """Ceil-mode output extent; the last window may be truncated."""
    if size <= kernel:
        return 1
    return -(-(size - kernel) // stride) + 1


class MaxPool2D(Layer):
    def __init__(self, kernel: int = 3, stride: int = 2):
        super().__init__()
        self.kernel = kernel
        self.stride = stride
        self._argmax: Optional[np.ndarray] = None
        self._input_shape: Optional[Shape] = None

    def output_shape(self, input_shape: Shape) -> Shape:
        c, h, w = input_shape
        if h < 1 or w < 1:
            raise ShapeMismatch(f"cannot pool an empty {h}x{w} map")
        return c, pool_extent(h, self.kernel, self.stride), pool_extent(
            w, self.kernel, self.stride
        )

    def forward(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        _, oh, ow = self.output_shape((c, h, w))
        k, s = self.kernel, self.stride

        ph = max((oh - 1) * s + k, h)
        pw = max((ow - 1) * s + k, w)
        padded = np.full((n, c, ph, pw), -np.inf)
        padded[:, :, :h, :w] = x
        windows = sliding_window_view(padded, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        windows = windows[:, :, :oh, :ow].reshape(n, c, oh, ow, k * k)

        local = windows.argmax(axis=-1)
        out = np.take_along_axis(windows, local[..., np.newaxis], axis=-1)[..., 0]

        rows = np.arange(oh)[:, np.newaxis] * s + local // k
        cols = np.arange(ow)[np.newaxis, :] * s + local % k
        self._argmax = rows * w + cols
        self._input_shape = x.shape
        return out

    def backward(self, dy: Tensor) -> Tensor:
        n, c, h, w = self._input_shape
        dx = np.zeros((n, c, h * w))
        ni = np.arange(n)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        np.add.at(dx, (ni, ci, self._argmax), dy)
        return dx.reshape(n, c, h, w)


class Dense(Layer):
    def __init__(self, in_units: int, out_units: int):
        super().__init__()
        self.in_units = in_units
        self.out_units = out_units
        self.params = {
            "weight": np.zeros((in_units, out_units)),
            "bias": np.zeros(out_units),
        }
        self._x: Optional[Tensor] = None

    def output_shape(self, input_shape: Shape) -> Shape:
        if input_shape != (self.in_units,):
            raise ShapeMismatch(f"dense expects ({self.in_units},), got {input_shape}")
        return (self.out_units,)

    def forward(self, x: Tensor) -> Tensor:
        self.output_shape(x.shape[1:])
        self._x = x
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, dy: Tensor) -> Tensor:
        self.grads = {"weight": self._x.T @ dy, "bias": dy.sum(axis=0)}
        return dy @ self.params["weight"].T


class ReLU(Layer):
    def __init__(self) -> None:
        super().__init__()
        self._mask: Optional[np.ndarray] = None

    def forward(self, x: Tensor) -> Tensor:
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy: Tensor) -> Tensor:
        return dy * self._mask


class Flatten(Layer):
    def __init__(self) -> None:
        super().__init__()
        self._shape: Optional[Shape] = None

    def output_shape(self, input_shape: Shape) -> Shape:
        return (int(np.prod(input_shape)),)

    def forward(self, x: Tensor) -> Tensor:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: Tensor) -> Tensor:
        return dy.reshape(self._shape)


def reference_specs(class_count: int = 101) -> List[LayerSpec]:
    """Conv 30@6/2 -> pool -> conv 40@6/2 pad 2 -> pool -> conv 60@3/1 -> fc 140 -> softmax."""
    return [
        LayerSpec(kind=LayerKind.CONV, kernel=6, stride=2, padding=0, units=30, relu=True),
        LayerSpec(kind=LayerKind.MAXPOOL, kernel=3, stride=2),
        LayerSpec(kind=LayerKind.CONV, kernel=6, stride=2, padding=2, units=40, relu=True),
        LayerSpec(kind=LayerKind.MAXPOOL, kernel=3, stride=2),
        LayerSpec(kind=LayerKind.CONV, kernel=3, stride=1, padding=0, units=60, relu=True),
        LayerSpec(kind=LayerKind.DENSE, units=140, relu=True),
        LayerSpec(kind=LayerKind.SOFTMAX, units=class_count),
    ]


class CnnModel:
    """A layer stack built from LayerSpecs; forward returns logits."""

    def __init__(self, specs: Sequence[LayerSpec], input_shape: Shape):
        self.specs = list(specs)
        self.input_shape = tuple(input_shape)
        self.layers: List[Layer] = []
        self.named_layers: Dict[str, Layer] = {}
        self.chain: List[Shape] = []

        shape = self.input_shape
        for index, spec in enumerate(self.specs):
            for layer in self._layers_for(spec, shape):
                shape = layer.output_shape(shape)
                self.layers.append(layer)
                if layer.params:
                    self.named_layers[str(index)] = layer
            self.chain.append(shape)

        if self.specs[-1].kind is not LayerKind.SOFTMAX:
            raise ShapeMismatch("the last layer must be a softmax layer")

    @staticmethod
    def _layers_for(spec: LayerSpec, shape: Shape) -> List[Layer]:
        if spec.kind is LayerKind.CONV:
            if len(shape) != 3:
                raise ShapeMismatch(f"conv needs a CHW input, got {shape}")
            layers: List[Layer] = [
                Conv2D(shape[0], spec.units, spec.kernel, spec.stride, spec.padding)
            ]
        elif spec.kind is LayerKind.MAXPOOL:
            if len(shape) != 3:
                raise ShapeMismatch(f"maxpool needs a CHW input, got {shape}")
            layers = [MaxPool2D(spec.kernel, spec.stride)]
        else:
            layers = [Flatten()] if len(shape) > 1 else []
            layers.append(Dense(int(np.prod(shape)), spec.units))
        if spec.relu:
            layers.append(ReLU())
        return layers

    @property
    def class_count(self) -> int:
        return self.specs[-1].units

    @property
    def input_size(self) -> int:
        return self.input_shape[1]

    def shape_chain(self) -> List[Shape]:
        return list(self.chain)

    def parameters(self) -> Dict[str, Tensor]:
        return {
            f"{name}.{key}": value
            for name, layer in self.named_layers.items()
            for key, value in layer.params.items()
        }

    def initialize(self, rng: np.random.Generator, method: WeightInit = "xavier") -> None:
        """Draw weights with the chosen scheme; biases start at zero."""
        for layer in self.named_layers.values():
            shape = layer.params["weight"].shape
            if method == "xavier":
                layer.params["weight"] = xavier_init(shape, rng)
            else:
                layer.params["weight"] = gaussian_init(shape, rng)
            layer.params["bias"] = np.zeros_like(layer.params["bias"])

    def forward(self, x: Tensor) -> Tensor:
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeMismatch(f"model expects {self.input_shape}, got {x.shape[1:]}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dlogits: Tensor, l2: float = 0.0) -> Dict[str, Tensor]:
        """Gradients of the cached forward pass; l2 * w is added to weights only."""
        dy = dlogits
        for layer in reversed(self.layers):
            dy = layer.backward(dy)

        grads = {}
        for name, layer in self.named_layers.items():
            for key, grad in layer.grads.items():
                if key == "weight" and l2:
                    grad = grad + l2 * layer.params["weight"]
                grads[f"{name}.{key}"] = grad
        return grads

    def loss_and_gradients(
        self, x: Tensor, labels: np.ndarray, l2: float = 0.0
    ) -> Tuple[float, Tensor, Dict[str, Tensor]]:
        logits = self.forward(x)
        loss, probs, dlogits = softmax_cross_entropy(logits, labels)
        return loss, probs, self.backward(dlogits, l2)

    def predict_proba(self, x: Tensor) -> Tensor:
        return softmax(self.forward(x))


def build_model(
    specs: Sequence[LayerSpec],
    input_shape: Shape,
    seed: int = 0,
    weight_init: WeightInit = "xavier",
) -> CnnModel:
    model = CnnModel(specs, input_shape)
    model.initialize(np.random.default_rng(seed), weight_init)
    return model


def build_reference_model(
    class_count: int = 101,
    seed: int = 0,
    weight_init: WeightInit = "xavier",
    input_size: int = REFERENCE_INPUT_SIZE,
) -> CnnModel:
    return build_model(
        reference_specs(class_count), (3, input_size, input_size), seed, weight_init
    )


class OptimizerState(BaseModel):
    """Hyper-parameters and per-parameter velocities for Nesterov SGD."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    learning_rate: float = Field(default=0.01, gt=0.0)
    momentum: float = Field(default=0.90, ge=0.0, lt=1.0)
    l2: float = Field(default=5e-4, ge=0.0)
    velocities: Dict[str, np.ndarray] = Field(default_factory=dict)


def nesterov_step(
    params: Dict[str, Tensor], grads: Dict[str, Tensor], state: OptimizerState
) -> None:
    """
    In-place update: v <- mu*v - lr*g; w <- w + mu*v - lr*g.
    """
    mu, lr = state.momentum, state.learning_rate
    for name, weight in params.items():
        grad = grads[name]
        if grad.shape != weight.shape:
            raise ShapeMismatch(f"gradient {name} has shape {grad.shape}")
        velocity = state.velocities.get(name)
        if velocity is None:
            velocity = np.zeros_like(weight)
        elif velocity.shape != weight.shape:
            raise ShapeMismatch(f"velocity {name} has shape {velocity.shape}")
        velocity = mu * velocity - lr * grad
        weight += mu * velocity - lr * grad
        state.velocities[name] = velocity


def clip_gradient_norm(grads: Dict[str, Tensor], max_norm: float) -> Dict[str, Tensor]:
    """Scale all gradients together so their global L2 norm is at most max_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm:
        return grads
    factor = max_norm / total
    return {name: g * factor for name, g in grads.items()}


def assemble_batch(images: Sequence[RawImage], size: int) -> Tensor:
    """Centre-crop or zero-pad each image to size x size, scale to [0, 1], NCHW."""
    stacked = np.stack([normalize(center_crop_or_pad(img, size)) for img in images])
    return stacked.transpose(0, 3, 1, 2)


def train(
    model: CnnModel,
    items: Sequence[LabeledImage],
    epochs: int = 30,
    minibatch: int = 16,
    state: Optional[OptimizerState] = None,
    seed: int = 0,
    grad_clip_norm: Optional[float] = None,
    on_epoch: Optional[Callable[[EpochStats], None]] = None,
) -> TrainingTrace:
    """Minibatch SGD over shuffled items; returns the per-epoch trace."""
    state = state or OptimizerState()
    rng = np.random.default_rng(seed)
    labels = np.array([item.label for item in items], dtype=np.intp)
    if len(labels) and labels.max() >= model.class_count:
        raise ShapeMismatch(
            f"label {labels.max()} exceeds model class count {model.class_count}"
        )
    params = model.parameters()
    trace = TrainingTrace()

    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(items))
        loss_sum = 0.0
        correct = 0
        for batch, start in enumerate(range(0, len(items), minibatch)):
            idx = order[start : start + minibatch]
            x = assemble_batch([items[i].image for i in idx], model.input_size)
            loss, probs, grads = model.loss_and_gradients(x, labels[idx], state.l2)

            if not math.isfinite(loss):
                raise NumericalFailure("non-finite loss", epoch=epoch, batch=batch)
            for name, grad in grads.items():
                check_finite(grad, f"gradient {name}", epoch, batch)
            if grad_clip_norm is not None:
                grads = clip_gradient_norm(grads, grad_clip_norm)
            nesterov_step(params, grads, state)

            loss_sum += loss * len(idx)
            correct += int((probs.argmax(axis=1) == labels[idx]).sum())
            logger.debug(f"epoch {epoch} batch {batch} loss {loss:.4f}")

        stats = EpochStats(
            epoch=epoch,
            loss=loss_sum / max(1, len(items)),
            train_top1=correct / max(1, len(items)),
        )
        trace.epochs.append(stats)
        logger.info(
            f"Epoch {epoch}/{epochs}: loss {stats.loss:.4f}, "
            f"train top-1 {stats.train_top1:.3f}"
        )
        if on_epoch:
            on_epoch(stats)

    return trace


def predict_proba(
    model: CnnModel, images: Sequence[RawImage], batch_size: int = 32
) -> Tensor:
    """Class distributions for images, assembled like training batches."""
    if not images:
        return np.zeros((0, model.class_count))
    chunks = [
        model.predict_proba(assemble_batch(images[i : i + batch_size], model.input_size))
        for i in range(0, len(images), batch_size)
    ]
    return np.vstack(chunks)


def save_checkpoint(model: CnnModel, path: PathLike) -> None:
    """Magic, version, JSON header, then little-endian float64 parameter blobs."""
    params = model.parameters()
    header = json.dumps(
        {
            "input_shape": list(model.input_shape),
            "layers": [spec.model_dump(mode="json") for spec in model.specs],
            "params": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
        }
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for value in params.values():
            fh.write(value.astype("<f8").tobytes())


def load_checkpoint(path: PathLike) -> CnnModel:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path} is not a model checkpoint")
    offset = len(CHECKPOINT_MAGIC)
    try:
        version, header_len = struct.unpack_from("<HI", data, offset)
    except struct.error as e:
        raise CheckpointError(f"{path}: truncated header") from e
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset += struct.calcsize("<HI")
    header = json.loads(data[offset : offset + header_len].decode("utf-8"))
    offset += header_len

    specs = [LayerSpec.model_validate(spec) for spec in header["layers"]]
    model = CnnModel(specs, tuple(header["input_shape"]))
    params = model.parameters()
    for entry in header["params"]:
        name, shape = entry["name"], tuple(entry["shape"])
        count = int(np.prod(shape))
        blob = data[offset : offset + 8 * count]
        if len(blob) != 8 * count or name not in params:
            raise CheckpointError(f"{path}: bad parameter blob {name}")
        layer_name, key = name.split(".")
        model.named_layers[layer_name].params[key] = (
            np.frombuffer(blob, dtype="<f8").astype(np.float64).reshape(shape)
        )
        offset += 8 * count
    return model
