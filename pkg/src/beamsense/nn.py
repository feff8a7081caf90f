"""Small dense and 1D-convolutional classifiers trained from scratch.

Networks map an M-dimensional RSS feature vector to K beam scores and are
trained with mini-batch RMSprop on softmax cross-entropy.  Everything runs
in float64 on numpy so gradients can be verified against central finite
differences and training is bitwise reproducible from its seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from beamsense.channel import SampleSet


# ---------------------------------------------------------------------------
# feature transform

@dataclass(frozen=True)
class FeatureTransform:
    """LinearRss passes features through; DbNormalized maps to dB and
    shifts each row so its maximum is 0 (transmit-power invariance)."""

    mode: str = "DbNormalized"
    floor_db: float = -60.0

    def __post_init__(self):
        if self.mode not in ("LinearRss", "DbNormalized"):
            raise ValueError(f"unknown feature mode {self.mode!r}")
        if not np.isfinite(self.floor_db):
            raise ValueError("floor_db must be finite")


def transform_features(samples, t: FeatureTransform) -> np.ndarray:
    """Apply the feature transform to a SampleSet or raw feature matrix."""
    feats = getattr(samples, "features", samples)
    feats = np.asarray(feats, dtype=float)
    if np.any(feats < 0):
        raise ValueError("RSS features must be nonnegative")
    if t.mode == "LinearRss":
        return feats.copy()
    floor_lin = 10 ** (t.floor_db / 20)
    db = 20 * np.log10(np.maximum(feats, floor_lin))
    return db - db.max(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# architectures

@dataclass(frozen=True)
class MlpArch:
    input_dim: int
    hidden: tuple = (128, 128)
    output_dim: int = 64

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("dimensions must be >= 1")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")

    def to_dict(self):
        return {
            "type": "mlp",
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
        }


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    kernel_size: int
    stride: int = 1


@dataclass(frozen=True)
class CnnArch:
    """1D conv feature extractor followed by the same dense head as MlpArch."""

    input_dim: int
    conv_layers: tuple = (ConvSpec(16, 3), ConvSpec(16, 3))
    hidden: tuple = (128, 128)
    output_dim: int = 64

    def __post_init__(self):
        convs = tuple(
            c if isinstance(c, ConvSpec) else ConvSpec(**c) for c in self.conv_layers
        )
        object.__setattr__(self, "conv_layers", convs)
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        length = self.input_dim
        for c in convs:
            if c.kernel_size > length:
                raise ValueError(
                    f"kernel {c.kernel_size} exceeds feature length {length}"
                )
            length = (length - c.kernel_size) // c.stride + 1

    def to_dict(self):
        return {
            "type": "cnn",
            "input_dim": self.input_dim,
            "conv_layers": [
                {"filters": c.filters, "kernel_size": c.kernel_size, "stride": c.stride}
                for c in self.conv_layers
            ],
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
        }


def arch_from_dict(d: dict):
    if d["type"] == "mlp":
        return MlpArch(d["input_dim"], tuple(d["hidden"]), d["output_dim"])
    if d["type"] == "cnn":
        return CnnArch(
            d["input_dim"],
            tuple(ConvSpec(**c) for c in d["conv_layers"]),
            tuple(d["hidden"]),
            d["output_dim"],
        )
    raise ValueError(f"unknown arch type {d['type']!r}")


# ---------------------------------------------------------------------------
# layers

class Dense:
    def __init__(self, w, b):
        self.w = w
        self.b = b

    @property
    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        self._x = x
        return x @ self.w + self.b

    def backward(self, dout):
        self.dw = self._x.T @ dout
        self.db = dout.sum(axis=0)
        return dout @ self.w.T

    @property
    def grads(self):
        return [self.dw, self.db]


class Relu:
    params = []
    grads = []

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class Flatten:
    params = []
    grads = []

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Conv1d:
    """Valid-mode 1D convolution.  Input (N, C, L), kernels (F, C, k),
    output (N, F, (L - k)//stride + 1)."""

    def __init__(self, w, b, stride):
        self.w = w
        self.b = b
        self.stride = stride

    @property
    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        self._x = x
        f, c, k = self.w.shape
        n, _, length = x.shape
        l_out = (length - k) // self.stride + 1
        # gather strided windows: (N, l_out, C, k)
        idx = self.stride * np.arange(l_out)[:, None] + np.arange(k)[None, :]
        windows = x[:, :, idx]            # (N, C, l_out, k)
        self._windows = windows
        out = np.einsum("nclk,fck->nfl", windows, self.w) + self.b[None, :, None]
        return out

    def backward(self, dout):
        f, c, k = self.w.shape
        n, _, length = self._x.shape
        l_out = dout.shape[2]
        self.dw = np.einsum("nclk,nfl->fck", self._windows, dout)
        self.db = dout.sum(axis=(0, 2))
        dx = np.zeros_like(self._x)
        idx = self.stride * np.arange(l_out)[:, None] + np.arange(k)[None, :]
        # scatter-add window gradients back onto the input
        dwin = np.einsum("nfl,fck->nclk", dout, self.w)
        np.add.at(dx, (slice(None), slice(None), idx), dwin)
        return dx

    @property
    def grads(self):
        return [self.dw, self.db]


def _he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def build_layers(arch, seed: int):
    """Instantiate layers with He-style fan-in uniform init from the seed."""
    rng = np.random.default_rng(seed)
    layers = []
    if isinstance(arch, CnnArch):
        channels, length = 1, arch.input_dim
        for c in arch.conv_layers:
            fan_in = channels * c.kernel_size
            w = _he_uniform(rng, (c.filters, channels, c.kernel_size), fan_in)
            layers.append(Conv1d(w, np.zeros(c.filters), c.stride))
            layers.append(Relu())
            channels = c.filters
            length = (length - c.kernel_size) // c.stride + 1
        layers.append(Flatten())
        dim = channels * length
    elif isinstance(arch, MlpArch):
        dim = arch.input_dim
    else:
        raise TypeError(f"unsupported arch {type(arch)}")
    for h in arch.hidden:
        layers.append(Dense(_he_uniform(rng, (dim, h), dim), np.zeros(h)))
        layers.append(Relu())
        dim = h
    layers.append(Dense(_he_uniform(rng, (dim, arch.output_dim), dim),
                        np.zeros(arch.output_dim)))
    return layers


# ---------------------------------------------------------------------------
# model

@dataclass
class PredictorModel:
    arch: object
    layers: list
    transform: FeatureTransform = FeatureTransform()
    seed: int = 0
    provenance: dict = field(default_factory=dict)
    loss_history: list = field(default_factory=list)

    def save_json(self, path):
        d = {
            "arch": self.arch.to_dict(),
            "transform": {"mode": self.transform.mode,
                          "floor_db": self.transform.floor_db},
            "seed": self.seed,
            "provenance": self.provenance,
            "tensors": [[p.tolist() for p in lyr.params] for lyr in self.layers],
        }
        with open(path, "w") as f:
            json.dump(d, f)

    @classmethod
    def load_json(cls, path) -> "PredictorModel":
        with open(path) as f:
            d = json.load(f)
        arch = arch_from_dict(d["arch"])
        layers = build_layers(arch, d["seed"])
        # tensors are stored per layer, empty lists for parameterless layers
        for lyr, saved in zip(layers, d["tensors"]):
            for p, s in zip(lyr.params, saved):
                p[...] = np.asarray(s)
        return cls(
            arch=arch,
            layers=layers,
            transform=FeatureTransform(**d["transform"]),
            seed=d["seed"],
            provenance=d.get("provenance", {}),
        )


def forward(model: PredictorModel, features) -> np.ndarray:
    """Score vector(s) for one row or a batch of transformed features."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    if x.shape[1] != model.arch.input_dim:
        raise ValueError(
            f"expected {model.arch.input_dim} features, got {x.shape[1]}"
        )
    if isinstance(model.arch, CnnArch):
        x = x[:, None, :]
    for lyr in model.layers:
        x = lyr.forward(x)
    return x[0] if np.ndim(features) == 1 else x


def predict(model: PredictorModel, features) -> np.ndarray:
    """Per-row argmax of the scores; ties break to the lowest index."""
    scores = np.atleast_2d(forward(model, np.atleast_2d(features)))
    return np.argmax(scores, axis=1)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_loss(logits, labels):
    """Mean softmax cross-entropy with integer labels, plus the logit grad."""
    probs = softmax(logits)
    n = logits.shape[0]
    eps = 1e-300
    loss = -np.mean(np.log(probs[np.arange(n), labels] + eps))
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def _loss_and_grads(model, x_batch, labels):
    x = x_batch
    if isinstance(model.arch, CnnArch):
        x = x[:, None, :]
    for lyr in model.layers:
        x = lyr.forward(x)
    loss, dout = cross_entropy_loss(x, labels)
    for lyr in reversed(model.layers):
        dout = lyr.backward(dout)
    return loss


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    decay_rho: float = 0.9
    epsilon_stab: float = 1e-8
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 < self.decay_rho < 1:
            raise ValueError("decay_rho must lie in (0, 1)")


class DivergenceError(RuntimeError):
    pass


def train(
    dataset: SampleSet | tuple,
    arch,
    cfg: TrainConfig,
    transform: FeatureTransform = FeatureTransform(),
) -> PredictorModel:
    """Mini-batch RMSprop on softmax cross-entropy.

    Fully reproducible: initialization comes from cfg.seed and the per-epoch
    shuffle from a stream derived from (cfg.seed, epoch).
    """
    if isinstance(dataset, SampleSet):
        feats = transform_features(dataset, transform)
        labels = dataset.labels
        prov = {"dataset_hash": dataset.content_hash()}
    else:
        feats, labels = dataset
        feats = np.asarray(feats, dtype=float)
        labels = np.asarray(labels, dtype=int)
        prov = {}
    if labels.max() >= arch.output_dim:
        raise ValueError("label exceeds output dimension")
    # canonicalize row order so training is invariant to how the caller
    # happened to order the dataset; the seeded shuffle then fully controls
    # batch composition
    order = np.lexsort((labels,) + tuple(feats.T[::-1]))
    feats, labels = feats[order], labels[order]

    model = PredictorModel(
        arch=arch,
        layers=build_layers(arch, cfg.seed),
        transform=transform,
        seed=cfg.seed,
        provenance={**prov, "train_config": vars(cfg) | {}},
    )
    caches = [[np.zeros_like(p) for p in lyr.params] for lyr in model.layers]
    n = feats.shape[0]
    for epoch in range(cfg.epochs):
        order = np.random.default_rng((cfg.seed, epoch)).permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = _loss_and_grads(model, feats[idx], labels[idx])
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}"
                )
            epoch_loss += loss
            n_batches += 1
            for lyr, cache in zip(model.layers, caches):
                for p, g, c in zip(lyr.params, lyr.grads, cache):
                    c *= cfg.decay_rho
                    c += (1 - cfg.decay_rho) * g * g
                    p -= cfg.learning_rate * g / (np.sqrt(c) + cfg.epsilon_stab)
        train_acc = float(np.mean(predict(model, feats) == labels))
        model.loss_history.append(
            {"epoch": epoch, "loss": epoch_loss / n_batches, "train_acc": train_acc}
        )
    return model


def save_loss_csv(model: PredictorModel, path):
    with open(path, "w") as f:
        f.write("epoch,loss,train_acc\n")
        for rec in model.loss_history:
            f.write(f"{rec['epoch']},{rec['loss']:.17g},{rec['train_acc']:.17g}\n")


def grad_check(arch, seed: int = 0, batch_size: int = 4, fd_step: float = 1e-4) -> float:
    """Max relative error between analytic and central finite-difference
    gradients on a small random batch."""
    rng = np.random.default_rng(seed)
    model = PredictorModel(arch=arch, layers=build_layers(arch, seed))
    # randomize biases: zero-init biases leave ReLU pre-activations exactly
    # on the kink, where finite differences are invalid
    for lyr in model.layers:
        for p in lyr.params:
            if p.ndim == 1:
                p += 0.1 * rng.standard_normal(p.shape)
    x = rng.standard_normal((batch_size, arch.input_dim))
    labels = rng.integers(0, arch.output_dim, size=batch_size)

    _loss_and_grads(model, x, labels)
    analytic = [
        [g.copy() for g in lyr.grads] for lyr in model.layers
    ]

    max_rel = 0.0
    for lyr, grads in zip(model.layers, analytic):
        for p, g in zip(lyr.params, grads):
            flat = p.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + fd_step
                lp = _loss_and_grads(model, x, labels)
                flat[i] = orig - fd_step
                lm = _loss_and_grads(model, x, labels)
                flat[i] = orig
                fd = (lp - lm) / (2 * fd_step)
                denom = max(abs(fd), abs(gflat[i]), 1e-8)
                max_rel = max(max_rel, abs(fd - gflat[i]) / denom)
    return max_rel
