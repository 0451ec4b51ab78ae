"""Model specification, construction, training and inference.

Architectures are declared as ordered layer descriptions and compiled
against an input shape; the same walk powers validation, parameter
counting, initialization and (de)serialization. Three model families
are built here: the byte-embedding 1-D convolutional classifiers, a
dense stack over the 14 global block statistics, and a 2-D
convolutional classifier over pooled byte co-occurrence maps.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from fragnet import corpus as corpus_mod
from fragnet import features as features_mod
from fragnet import tensor as tz
from fragnet.tensor import InvalidArchitectureError, Precision, Tensor

VOCABULARY = 256  # byte alphabet

INPUT_KINDS = ("bytes", "features", "cooccurrence")


@dataclass(frozen=True)
class Embedding:
    dim: int


@dataclass(frozen=True)
class Conv1D:
    filters: int
    width: int
    stride: int = 1


@dataclass(frozen=True)
class LeakyReLU:
    alpha: float = 0.3


@dataclass(frozen=True)
class MaxPool1D:
    size: int


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class Dropout:
    p: float


@dataclass(frozen=True)
class Dense:
    units: int


@dataclass(frozen=True)
class Conv2D:
    filters: int
    kernel: int


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Union[Embedding, Conv1D, LeakyReLU, MaxPool1D, GlobalAvgPool,
                  Dropout, Dense, Conv2D, Flatten]

_LAYER_TAGS = {
    "embedding": Embedding,
    "conv1d": Conv1D,
    "leaky_relu": LeakyReLU,
    "max_pool1d": MaxPool1D,
    "global_avg_pool": GlobalAvgPool,
    "dropout": Dropout,
    "dense": Dense,
    "conv2d": Conv2D,
    "flatten": Flatten,
}
_TAG_BY_TYPE = {v: k for k, v in _LAYER_TAGS.items()}


@dataclass(frozen=True)
class ModelSpec:
    """Ordered layer stack plus its input contract.

    ``input_kind`` "bytes" feeds raw blocks of ``block_size`` bytes
    through a leading Embedding; "features" and "cooccurrence" feed
    precomputed arrays of ``input_shape`` per sample.
    """

    block_size: int
    layers: tuple[LayerSpec, ...]
    n_classes: int
    input_kind: str = "bytes"
    input_shape: tuple[int, ...] = ()


def _walk(spec: ModelSpec) -> list[dict]:
    """Shape-check the stack; per layer, the incoming shape and the shapes
    of its parameter arrays. Raises InvalidArchitectureError whenever a
    spatial extent collapses below 1.
    """
    if spec.n_classes < 2:
        raise InvalidArchitectureError(f"need at least 2 classes, got {spec.n_classes}")
    if spec.input_kind not in INPUT_KINDS:
        raise InvalidArchitectureError(
            f"input kind {spec.input_kind!r} not in {INPUT_KINDS}")
    if spec.input_kind == "bytes":
        shape: tuple = ("bytes", spec.block_size)
        if not spec.layers or not isinstance(spec.layers[0], Embedding):
            raise InvalidArchitectureError("byte-input models start with an Embedding")
    else:
        if not spec.input_shape:
            raise InvalidArchitectureError(
                f"{spec.input_kind} input requires an input_shape")
        dims = tuple(spec.input_shape)
        shape = ("flat", dims[0]) if len(dims) == 1 else ("grid", *dims)

    records = []
    for i, layer in enumerate(spec.layers):
        rec = {"layer": layer, "in": shape, "params": {}}
        if isinstance(layer, Embedding):
            if shape[0] != "bytes":
                raise InvalidArchitectureError(
                    f"layer {i}: Embedding only follows raw byte input")
            rec["params"] = {"table": (VOCABULARY, layer.dim)}
            shape = ("seq", shape[1], layer.dim)
        elif isinstance(layer, Conv1D):
            if shape[0] != "seq":
                raise InvalidArchitectureError(f"layer {i}: Conv1D needs sequence input")
            _, t, c = shape
            if layer.width > t:
                raise InvalidArchitectureError(
                    f"layer {i}: kernel width {layer.width} exceeds length {t}")
            out_t = (t - layer.width) // layer.stride + 1
            rec["params"] = {"weights": (layer.filters, layer.width, c),
                             "bias": (layer.filters,)}
            shape = ("seq", out_t, layer.filters)
        elif isinstance(layer, MaxPool1D):
            if shape[0] != "seq":
                raise InvalidArchitectureError(f"layer {i}: MaxPool1D needs sequence input")
            _, t, c = shape
            if t < layer.size:
                raise InvalidArchitectureError(
                    f"layer {i}: pool size {layer.size} exceeds length {t}")
            shape = ("seq", t // layer.size, c)
        elif isinstance(layer, GlobalAvgPool):
            if shape[0] != "seq":
                raise InvalidArchitectureError(
                    f"layer {i}: GlobalAvgPool needs sequence input")
            shape = ("flat", shape[2])
        elif isinstance(layer, Conv2D):
            if shape[0] != "grid":
                raise InvalidArchitectureError(f"layer {i}: Conv2D needs grid input")
            _, h, w, c = shape
            if layer.kernel > h or layer.kernel > w:
                raise InvalidArchitectureError(
                    f"layer {i}: kernel {layer.kernel} exceeds grid {h}x{w}")
            rec["params"] = {"weights": (layer.filters, layer.kernel, layer.kernel, c),
                             "bias": (layer.filters,)}
            shape = ("grid", h - layer.kernel + 1, w - layer.kernel + 1, layer.filters)
        elif isinstance(layer, Flatten):
            if shape[0] == "grid":
                shape = ("flat", shape[1] * shape[2] * shape[3])
            elif shape[0] == "seq":
                shape = ("flat", shape[1] * shape[2])
            else:
                raise InvalidArchitectureError(f"layer {i}: nothing to flatten")
        elif isinstance(layer, Dense):
            if shape[0] != "flat":
                raise InvalidArchitectureError(
                    f"layer {i}: Dense needs a flat input, got {shape[0]}")
            rec["params"] = {"weights": (layer.units, shape[1]),
                             "bias": (layer.units,)}
            shape = ("flat", layer.units)
        elif isinstance(layer, (LeakyReLU, Dropout)):
            if isinstance(layer, Dropout) and not 0.0 <= layer.p < 1.0:
                raise InvalidArchitectureError(
                    f"layer {i}: dropout probability {layer.p} outside [0, 1)")
        else:
            raise InvalidArchitectureError(f"layer {i}: unknown layer {layer!r}")
        rec["out"] = shape
        records.append(rec)

    last_dense = spec.layers[-1] if spec.layers else None
    if not isinstance(last_dense, Dense) or last_dense.units != spec.n_classes:
        raise InvalidArchitectureError(
            f"final layer must be Dense({spec.n_classes}), got {last_dense!r}")
    return records


def validate(spec: ModelSpec) -> list[tuple]:
    """Per-layer output shapes; raises InvalidArchitectureError on any
    geometry violation."""
    return [rec["out"] for rec in _walk(spec)]


def param_count(spec: ModelSpec) -> int:
    """Exact trainable-parameter total (biases included)."""
    return sum(int(np.prod(s)) for rec in _walk(spec)
               for s in rec["params"].values())


# The six tunable dimensions. "conv_kernel" is the filter count per conv
# layer and "conv_stride" is the kernel width (conv layers themselves run
# at stride 1); the preset architecture table fixes this reading.
HP_CANDIDATES: dict[str, tuple[int, ...]] = {
    "dense_units": (16, 32, 64, 128, 256),
    "embedding_dim": (16, 32, 48, 64),
    "conv_kernel": (16, 32, 64, 128),
    "conv_stride": (3, 11, 18, 27, 35),
    "n_conv_blocks": (1, 2, 3),
    "maxpool_size": (2, 4, 6, 8),
}


@dataclass(frozen=True)
class HyperParams:
    """One point in the discrete architecture grid.

    dense_units: hidden dense layer width.
    embedding_dim: byte embedding dimensionality.
    conv_kernel: filters per convolution layer.
    conv_stride: kernel width of every convolution layer (stride is 1).
    n_conv_blocks: conv + activation + max-pool repetitions.
    maxpool_size: max-pooling window.
    """

    dense_units: int
    embedding_dim: int
    conv_kernel: int
    conv_stride: int
    n_conv_blocks: int
    maxpool_size: int

    def validate(self) -> None:
        for name, candidates in HP_CANDIDATES.items():
            value = getattr(self, name)
            if value not in candidates:
                raise ValueError(
                    f"{name}={value} not in candidate set {candidates}")

    @classmethod
    def from_mapping(cls, m: Mapping[str, int]) -> "HyperParams":
        return cls(**{name: int(m[name]) for name in HP_CANDIDATES})

    def as_dict(self) -> dict[str, int]:
        return asdict(self)


def hyperparameter_space() -> tuple[tuple[str, tuple[int, ...]], ...]:
    """The ordered (name, candidates) dimensions of the search grid."""
    return tuple((name, values) for name, values in HP_CANDIDATES.items())


def _assemble(embedding_dim: int, conv_blocks: Sequence[tuple[int, int, int]],
              dense_units: int, n_classes: int, block_size: int,
              dropout_p: float = 0.1) -> ModelSpec:
    layers: list[LayerSpec] = [Embedding(embedding_dim)]
    for filters, width, pool in conv_blocks:
        layers += [Conv1D(filters, width), LeakyReLU(0.3), MaxPool1D(pool)]
    layers += [GlobalAvgPool(), Dropout(dropout_p), Dense(dense_units),
               LeakyReLU(0.3), Dense(n_classes)]
    spec = ModelSpec(block_size, tuple(layers), n_classes)
    validate(spec)
    return spec


def build_model(hp: HyperParams, block_size: int, n_classes: int) -> ModelSpec:
    """Compile a hyper-parameter point into a validated model spec.

    Raises InvalidArchitectureError when the temporal length collapses
    below 1, so a search can score the configuration as a failure.
    """
    hp.validate()
    blocks = ((hp.conv_kernel, hp.conv_stride, hp.maxpool_size),) * hp.n_conv_blocks
    return _assemble(hp.embedding_dim, blocks, hp.dense_units, n_classes, block_size)


# Preset tuned architectures, keyed by (scenario id, block size):
# (embedding dim, ((filters, kernel width, pool size), ...), dense units,
# class count).
PRESET_ARCHITECTURES: dict[tuple[int, int], tuple] = {
    (1, 512): (64, ((128, 27, 4),), 256, 75),
    (2, 512): (48, ((128, 11, 4), (128, 11, 4)), 64, 11),
    (3, 512): (64, ((128, 27, 2), (128, 27, 2)), 64, 25),
    (4, 512): (48, ((128, 19, 4), (128, 19, 4)), 256, 5),
    (5, 512): (64, ((128, 35, 8),), 256, 2),
    (6, 512): (32, ((128, 11, 6), (128, 11, 6)), 64, 2),
    (1, 4096): (32, ((128, 19, 4), (128, 19, 4)), 256, 75),
    (2, 4096): (32, ((128, 27, 8), (128, 27, 8)), 256, 11),
    (3, 4096): (32, ((128, 11, 6), (128, 11, 6), (128, 11, 6)), 256, 25),
    (4, 4096): (64, ((128, 27, 6), (128, 27, 6)), 32, 5),
    (5, 4096): (48, ((32, 35, 6), (32, 35, 6), (32, 35, 6)), 16, 2),
    (6, 4096): (16, ((128, 35, 8), (128, 35, 8)), 128, 2),
}


def preset_model(scenario: int, block_size: int,
                 n_classes: Optional[int] = None) -> ModelSpec:
    """The tuned architecture for a scenario and block size; ``n_classes``
    overrides the preset class count to reuse a shape on other corpora."""
    key = (scenario, block_size)
    if key not in PRESET_ARCHITECTURES:
        raise ValueError(f"no preset architecture for scenario {scenario} "
                         f"at block size {block_size}")
    emb, conv_blocks, dense_units, default_classes = PRESET_ARCHITECTURES[key]
    return _assemble(emb, conv_blocks, dense_units,
                     n_classes or default_classes, block_size)


def build_nn_gf(n_classes: int, n_features: int = 14,
                block_size: int = 512) -> ModelSpec:
    """Dense stack over the global statistical feature vector."""
    layers = (Dense(256), LeakyReLU(0.3), Dense(256), LeakyReLU(0.3),
              Dense(256), LeakyReLU(0.3), Dense(n_classes))
    spec = ModelSpec(block_size, layers, n_classes,
                     input_kind="features", input_shape=(n_features,))
    validate(spec)
    return spec


def build_nn_co(n_classes: int, block_size: int = 512) -> ModelSpec:
    """Four 3x3 2-D convolutions over the pooled 128x128 co-occurrence
    map, flattened into two dense layers."""
    layers = (Conv2D(48, 3), LeakyReLU(0.3), Conv2D(48, 3), LeakyReLU(0.3),
              Conv2D(48, 3), LeakyReLU(0.3), Conv2D(48, 3), LeakyReLU(0.3),
              Flatten(), Dense(64), LeakyReLU(0.3), Dense(n_classes))
    spec = ModelSpec(block_size, layers, n_classes,
                     input_kind="cooccurrence", input_shape=(128, 128, 1))
    validate(spec)
    return spec


Params = list[dict[str, np.ndarray]]


def init_params(spec: ModelSpec, seed: int,
                precision: Precision = Precision.STANDARD) -> Params:
    """Deterministic initial parameters: uniform fan-in scaling for conv
    and dense layers, uniform [-0.05, 0.05] for the embedding table."""
    rng = np.random.default_rng(seed)
    dtype = precision.dtype
    params: Params = []
    for rec in _walk(spec):
        layer_params: dict[str, np.ndarray] = {}
        shapes = rec["params"]
        if isinstance(rec["layer"], Embedding):
            layer_params["table"] = rng.uniform(
                -0.05, 0.05, shapes["table"]).astype(dtype)
        elif shapes:
            w_shape = shapes["weights"]
            fan_in = int(np.prod(w_shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            layer_params["weights"] = rng.uniform(-bound, bound, w_shape).astype(dtype)
            layer_params["bias"] = rng.uniform(-bound, bound, shapes["bias"]).astype(dtype)
        params.append(layer_params)
    return params


def model_inputs(spec: ModelSpec, blocks: Sequence) -> np.ndarray:
    """Convert labeled blocks or raw byte strings into the model's input
    array: uint8 byte matrices, feature rows, or pooled co-occurrence maps."""
    raw = [b.data if isinstance(b, corpus_mod.Block) else b for b in blocks]
    if spec.input_kind == "bytes":
        rows = []
        for i, data in enumerate(raw):
            if len(data) != spec.block_size:
                raise ValueError(
                    f"block {i} has {len(data)} bytes, expected {spec.block_size}")
            rows.append(np.frombuffer(data, dtype=np.uint8))
        return np.stack(rows)
    if spec.input_kind == "features":
        return features_mod.feature_matrix(raw).astype(np.float32)
    if spec.input_kind == "cooccurrence":
        maps = [features_mod.cooccurrence(d).pooled for d in raw]
        return np.stack(maps)[..., None].astype(np.float32)
    raise ValueError(f"unknown input kind {spec.input_kind!r}")


def _wrap_params(params: Params, requires_grad: bool) -> list[dict[str, Tensor]]:
    return [{k: Tensor(v, requires_grad=requires_grad) for k, v in layer.items()}
            for layer in params]


def _forward_logits(spec: ModelSpec, ptensors: list[dict[str, Tensor]],
                    x: np.ndarray, training: bool,
                    rng: Optional[np.random.Generator]) -> Tensor:
    if spec.input_kind == "bytes":
        if x.ndim != 2 or x.shape[1] != spec.block_size:
            raise ValueError(f"byte input must be [batch, {spec.block_size}], "
                             f"got {x.shape}")
        t: Optional[Tensor] = None
    else:
        t = Tensor(x)
    for layer, p in zip(spec.layers, ptensors):
        if isinstance(layer, Embedding):
            t = tz.embedding(p["table"], x)
        elif isinstance(layer, Conv1D):
            t = tz.conv1d(t, p["weights"], p["bias"], layer.stride)
        elif isinstance(layer, Conv2D):
            t = tz.conv2d(t, p["weights"], p["bias"])
        elif isinstance(layer, LeakyReLU):
            t = tz.leaky_relu(t, layer.alpha)
        elif isinstance(layer, MaxPool1D):
            t = tz.max_pool1d(t, layer.size)
        elif isinstance(layer, GlobalAvgPool):
            t = tz.global_avg_pool(t)
        elif isinstance(layer, Dropout):
            if training:
                t = tz.dropout(t, layer.p, rng)
        elif isinstance(layer, Flatten):
            t = tz.flatten(t, batched=True)
        elif isinstance(layer, Dense):
            t = tz.dense(t, p["weights"], p["bias"])
    return t


def forward(spec: ModelSpec, params: Params, blocks,
            training: bool = False,
            rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Class probabilities for a batch, one row per block, rows summing
    to 1. Dropout fires only when ``training`` is true (inverted scaling,
    so inference needs no adjustment)."""
    x = blocks if isinstance(blocks, np.ndarray) else model_inputs(spec, blocks)
    if training and rng is None:
        rng = np.random.default_rng(0)
    logits = _forward_logits(spec, _wrap_params(params, False), x, training, rng)
    return tz.softmax(logits.data)


def predict(spec: ModelSpec, params: Params, inputs: np.ndarray,
            batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Batched inference: (argmax labels, probability rows)."""
    ptensors = _wrap_params(params, False)
    all_probs = []
    for start in range(0, len(inputs), batch_size):
        logits = _forward_logits(spec, ptensors, inputs[start:start + batch_size],
                                 False, None)
        all_probs.append(tz.softmax(logits.data))
    probs = np.concatenate(all_probs) if all_probs else np.zeros((0, spec.n_classes))
    return probs.argmax(axis=1), probs


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; all runs are bitwise deterministic given
    ``seed``. ``data_fraction_*`` subsample the train/val splits (the
    architecture search uses 0.1 / 0.4)."""

    batch_size: int = 128
    max_epochs: int = 10
    learning_rate: float = 1e-3
    early_stop_patience: int = 3
    seed: int = 0
    data_fraction_train: float = 1.0
    data_fraction_val: float = 1.0

    def validate(self) -> None:
        if self.batch_size < 1 or self.max_epochs < 1 or self.early_stop_patience < 1:
            raise ValueError("batch_size, max_epochs and early_stop_patience "
                             "must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        for frac in (self.data_fraction_train, self.data_fraction_val):
            if not 0.0 < frac <= 1.0:
                raise ValueError(f"data fraction {frac} outside (0, 1]")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def _subsample(indices: np.ndarray, fraction: float, seed_seq: list[int]) -> np.ndarray:
    if fraction >= 1.0:
        return indices
    keep = max(1, int(np.ceil(fraction * len(indices))))
    rng = np.random.default_rng(seed_seq)
    return rng.permutation(indices)[:keep]


def evaluate(spec: ModelSpec, params: Params, inputs: np.ndarray,
             labels: np.ndarray, batch_size: int = 256) -> tuple[float, float]:
    """Mean cross-entropy and accuracy over a labeled input array."""
    if len(inputs) == 0:
        raise ValueError("cannot evaluate on an empty input array")
    ptensors = _wrap_params(params, False)
    total_loss = 0.0
    correct = 0
    for start in range(0, len(inputs), batch_size):
        xb = inputs[start:start + batch_size]
        yb = labels[start:start + batch_size]
        logits = _forward_logits(spec, ptensors, xb, False, None)
        loss, probs = tz.softmax_cross_entropy(logits, yb)
        total_loss += float(loss.data) * len(xb)
        correct += int((probs.data.argmax(axis=1) == yb).sum())
    n = len(inputs)
    return total_loss / n, correct / n


def train(spec: ModelSpec, dataset: corpus_mod.Dataset, cfg: TrainConfig,
          precision: Precision = Precision.STANDARD) -> tuple[Params, list[EpochStats]]:
    """Adam training with early stopping on validation accuracy.

    Gradient descent with adaptive moments (0.9 / 0.999, eps 1e-8) over
    seeded shuffles; returns the parameters of the best validation epoch
    and the per-epoch history. Bitwise deterministic given ``cfg.seed``.
    """
    cfg.validate()
    train_idx = dataset.indices("train")
    val_idx = dataset.indices("val")
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValueError("dataset must provide non-empty train and val splits")
    labels = dataset.labels()
    if labels.max() >= spec.n_classes:
        raise ValueError(f"dataset label {labels.max()} outside model's "
                         f"{spec.n_classes} classes")

    # seed streams: 1 = train subsample, 2 = val subsample, 3 = batch
    # order, 4 = dropout masks
    train_idx = _subsample(train_idx, cfg.data_fraction_train, [cfg.seed, 1])
    val_idx = _subsample(val_idx, cfg.data_fraction_val, [cfg.seed, 2])

    x_train = model_inputs(spec, [dataset.blocks[i] for i in train_idx])
    y_train = labels[train_idx]
    x_val = model_inputs(spec, [dataset.blocks[i] for i in val_idx])
    y_val = labels[val_idx]

    params = init_params(spec, cfg.seed, precision)
    ptensors = _wrap_params(params, True)
    flat = [(li, key) for li, layer in enumerate(params) for key in layer]
    moment1 = {fk: np.zeros_like(params[fk[0]][fk[1]]) for fk in flat}
    moment2 = {fk: np.zeros_like(params[fk[0]][fk[1]]) for fk in flat}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    steps = 0

    history: list[EpochStats] = []
    best_acc = -1.0
    best_params: Params = [{k: v.copy() for k, v in layer.items()}
                           for layer in params]
    stale = 0
    n = len(x_train)

    # one seeded shuffle; keeping the batch grouping fixed across epochs
    # makes per-epoch metrics exactly repeatable when nothing else changes
    order = np.random.default_rng([cfg.seed, 3]).permutation(n)

    for epoch in range(cfg.max_epochs):
        loss_sum = 0.0
        correct = 0
        for step, start in enumerate(range(0, n, cfg.batch_size)):
            sel = order[start:start + cfg.batch_size]
            drop_rng = np.random.default_rng([cfg.seed, 4, epoch, step])
            logits = _forward_logits(spec, ptensors, x_train[sel], True, drop_rng)
            loss, probs = tz.softmax_cross_entropy(logits, y_train[sel])
            for layer in ptensors:
                for t in layer.values():
                    t.zero_grad()
            loss.backward()
            steps += 1
            scale1 = 1.0 - beta1 ** steps
            scale2 = 1.0 - beta2 ** steps
            for fk in flat:
                li, key = fk
                t = ptensors[li][key]
                g = t.grad if t.grad is not None else np.zeros_like(t.data)
                m = moment1[fk]
                v = moment2[fk]
                m *= beta1
                m += (1 - beta1) * g
                v *= beta2
                v += (1 - beta2) * (g * g)
                t.data -= (cfg.learning_rate
                           * (m / scale1) / (np.sqrt(v / scale2) + eps)
                           ).astype(t.data.dtype)
            loss_sum += float(loss.data) * len(sel)
            correct += int((probs.data.argmax(axis=1) == y_train[sel]).sum())
        val_loss, val_acc = evaluate(spec, params, x_val, y_val, cfg.batch_size)
        history.append(EpochStats(epoch, loss_sum / n, correct / n,
                                  val_loss, val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            best_params = [{k: v.copy() for k, v in layer.items()}
                           for layer in params]
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    return best_params, history


MODEL_MAGIC = "fragnet-model"
MODEL_VERSION = 1

_PARAM_ORDER = {"table": 0, "weights": 0, "bias": 1}


def _spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "block_size": spec.block_size,
        "n_classes": spec.n_classes,
        "input_kind": spec.input_kind,
        "input_shape": list(spec.input_shape),
        "layers": [{"type": _TAG_BY_TYPE[type(layer)], **asdict(layer)}
                   for layer in spec.layers],
    }


def _spec_from_dict(d: dict) -> ModelSpec:
    layers = []
    for entry in d["layers"]:
        entry = dict(entry)
        cls = _LAYER_TAGS[entry.pop("type")]
        layers.append(cls(**entry))
    return ModelSpec(block_size=int(d["block_size"]), layers=tuple(layers),
                     n_classes=int(d["n_classes"]),
                     input_kind=d["input_kind"],
                     input_shape=tuple(d["input_shape"]))


def save_model(path, spec: ModelSpec, params: Params, seed: int,
               class_names: Optional[Sequence[str]] = None) -> None:
    """Self-describing container: one JSON header line (format version,
    training seed, spec, optional class names), then the parameter arrays
    as little-endian 32-bit floats in layer order."""
    header = {"format": MODEL_MAGIC, "version": MODEL_VERSION, "seed": seed,
              "param_count": param_count(spec), "spec": _spec_to_dict(spec)}
    if class_names is not None:
        if len(class_names) != spec.n_classes:
            raise ValueError(f"{len(class_names)} class names for "
                             f"{spec.n_classes} classes")
        header["class_names"] = list(class_names)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("ascii"))
        fh.write(b"\n")
        for layer in params:
            for key in sorted(layer, key=_PARAM_ORDER.get):
                fh.write(np.ascontiguousarray(layer[key], dtype="<f4").tobytes())


def load_model(path) -> tuple[ModelSpec, Params, int, Optional[list[str]]]:
    """Load a serialized model; the payload length is validated against
    the spec's parameter count before any array is built. Returns
    (spec, params, seed, class names or None)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"not a {MODEL_MAGIC} file: {path}") from exc
    if header.get("format") != MODEL_MAGIC:
        raise ValueError(f"not a {MODEL_MAGIC} file: {path}")
    if header.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {header.get('version')}")
    spec = _spec_from_dict(header["spec"])
    expect = param_count(spec)
    if len(payload) != 4 * expect:
        raise ValueError(f"model payload holds {len(payload) // 4} floats "
                         f"but the spec needs {expect}")
    params: Params = []
    offset = 0
    for rec in _walk(spec):
        layer_params: dict[str, np.ndarray] = {}
        for key in sorted(rec["params"], key=_PARAM_ORDER.get):
            shape = rec["params"][key]
            count = int(np.prod(shape))
            arr = np.frombuffer(payload, dtype="<f4", count=count,
                                offset=offset).reshape(shape)
            layer_params[key] = arr.astype(np.float32)
            offset += 4 * count
        params.append(layer_params)
    names = header.get("class_names")
    return spec, params, int(header.get("seed", 0)), names
