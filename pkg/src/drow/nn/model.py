"""Layer specifications, model assembly, initialisation and checkpoints."""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass

import numpy as np

from . import layers as L

NUM_CLASSES = 3
NUM_OFFSETS = 2
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Conv:
    kernel: int
    channels: int


@dataclass(frozen=True)
class MaxPool:
    pool: int


@dataclass(frozen=True)
class BatchNorm:
    pass


@dataclass(frozen=True)
class Dropout:
    rate: float


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Dense:
    units: int


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class SplitHead:
    softmax_dims: int = NUM_CLASSES
    linear_dims: int = NUM_OFFSETS


SPEC_TYPES = {cls.__name__.lower(): cls for cls in
              (Conv, MaxPool, BatchNorm, Dropout, ReLU, Dense, Flatten, SplitHead)}


class ShapeError(ValueError):
    pass


def _block(dropout):
    return [BatchNorm(), ReLU(), Dropout(dropout)]


def drow_cnn(dropout: float = 0.25) -> list:
    """Conv 5@64, Conv 5@64, Max 2, Conv 5@128, Conv 3@128, Max 2, Conv 5@256, Conv 3@5."""
    return [Conv(5, 64), *_block(dropout), Conv(5, 64), *_block(dropout), MaxPool(2),
            Conv(5, 128), *_block(dropout), Conv(3, 128), *_block(dropout), MaxPool(2),
            Conv(5, 256), *_block(dropout), Conv(3, 5), Flatten(), SplitHead()]


def build_mlp_baseline(hidden: int = 2048, depth: int = 3, dropout: float = 0.25) -> list:
    spec = []
    for _ in range(depth):
        spec += [Dense(hidden), BatchNorm(), ReLU(), Dropout(dropout)]
    return spec + [Dense(NUM_CLASSES + NUM_OFFSETS), SplitHead()]


def spec_to_json(spec) -> list:
    return [{"type": type(s).__name__.lower(), **asdict(s)} for s in spec]


def spec_from_json(items) -> list:
    out = []
    for item in items:
        item = dict(item)
        out.append(SPEC_TYPES[item.pop("type")](**item))
    return out


def shape_chain(spec, input_length: int) -> list:
    """Activation shapes after each layer, starting with the input shape."""
    return [s for s, _ in _assemble(spec, input_length, np.float64, build=False)]


def _assemble(spec, input_length, dtype, build=True):
    shape = (input_length, 1) if isinstance(spec[0], Conv) else (input_length,)
    chain = [(shape, None)]
    for s in spec:
        if isinstance(s, Conv):
            if len(shape) != 2:
                raise ShapeError(f"Conv needs a (length, channels) input, got {shape}")
            layer = L.Conv1D(shape[1], s.channels, s.kernel, dtype) if build else None
            shape = (shape[0] - s.kernel + 1, s.channels)
        elif isinstance(s, MaxPool):
            layer = L.MaxPool1D(s.pool) if build else None
            shape = (shape[0] // s.pool, shape[1])
        elif isinstance(s, BatchNorm):
            layer = L.BatchNorm(shape[-1], dtype=dtype) if build else None
        elif isinstance(s, Dropout):
            layer = L.Dropout(s.rate) if build else None
        elif isinstance(s, ReLU):
            layer = L.ReLU() if build else None
        elif isinstance(s, Dense):
            if len(shape) != 1:
                raise ShapeError(f"Dense needs a flat input, got {shape}; insert Flatten")
            layer = L.Dense(shape[0], s.units, dtype) if build else None
            shape = (s.units,)
        elif isinstance(s, Flatten):
            layer = L.Flatten() if build else None
            shape = (int(np.prod(shape)),)
        elif isinstance(s, SplitHead):
            if shape != (s.softmax_dims + s.linear_dims,):
                raise ShapeError(f"head expects {s.softmax_dims + s.linear_dims} outputs, got {shape}; "
                                 f"chain: {[c for c, _ in chain]}")
            continue
        else:
            raise TypeError(f"unknown layer spec {s!r}")
        if min(shape) <= 0:
            raise ShapeError(f"layer {s} produced empty shape {shape}; chain: {[c for c, _ in chain]}")
        chain.append((shape, layer))
    if chain[-1][0] != (NUM_CLASSES + NUM_OFFSETS,):
        raise ShapeError(f"model must end in {NUM_CLASSES + NUM_OFFSETS} outputs, "
                         f"chain: {[c for c, _ in chain]}")
    return chain


class Model:
    def __init__(self, spec, input_length: int = 48, dtype=np.float32):
        self.spec = list(spec)
        self.input_length = input_length
        self.dtype = np.dtype(dtype)
        chain = _assemble(self.spec, input_length, self.dtype)
        self.shapes = [s for s, _ in chain]
        self.layers = [layer for _, layer in chain[1:]]
        self._conv_input = isinstance(self.spec[0], Conv)

    # -- parameters --------------------------------------------------------
    def named_params(self):
        for i, layer in enumerate(self.layers):
            for k, v in layer.params.items():
                yield f"{i}.{k}", v

    def named_grads(self):
        for i, layer in enumerate(self.layers):
            for k in layer.params:
                yield f"{i}.{k}", layer.grads.get(k)

    def named_buffers(self):
        for i, layer in enumerate(self.layers):
            for k, v in layer.buffers().items():
                yield f"{i}.{k}", v

    def state(self) -> dict:
        out = {f"param/{k}": v.copy() for k, v in self.named_params()}
        out.update({f"buffer/{k}": v.copy() for k, v in self.named_buffers()})
        return out

    def load_state(self, state: dict) -> None:
        for k, v in list(self.named_params()) + list(self.named_buffers()):
            key = ("param/" if f"param/{k}" in state else "buffer/") + k
            if state[key].shape != v.shape:
                raise ShapeError(f"{key}: expected {v.shape}, got {state[key].shape}")
            v[...] = state[key]

    def num_params(self) -> int:
        return sum(v.size for _, v in self.named_params())

    def seed_dropout(self, seed: int) -> None:
        for i, layer in enumerate(self.layers):
            if isinstance(layer, L.Dropout):
                layer.rng = np.random.default_rng([seed, i])

    # -- computation -------------------------------------------------------
    def _input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 2 or x.shape[1] != self.input_length:
            raise ShapeError(f"expected input (batch, {self.input_length}), got {x.shape}; "
                             f"shape chain: {self.shapes}")
        return x[:, :, None] if self._conv_input else x

    def forward(self, x, train: bool = False) -> np.ndarray:
        """Raw network outputs (batch, 5): three logits, then two offsets."""
        h = self._input(x)
        for layer in self.layers:
            h = layer.forward(h, train)
        return h

    def backward(self, dout) -> dict:
        g = np.asarray(dout, dtype=self.dtype)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return dict(self.named_grads())

    def predict(self, x, batch_size: int = 4096):
        """Class probabilities (batch, 3) and offsets (batch, 2) in inference mode."""
        x = np.asarray(x)
        outs = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        out = np.concatenate(outs).astype(np.float64) if outs else np.zeros((0, 5))
        return softmax(out[:, :NUM_CLASSES]), out[:, NUM_CLASSES:]


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def orthogonal(shape, rng: np.random.Generator) -> np.ndarray:
    """Random matrix with orthonormal columns (or rows, if it is wide)."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


def init(spec, seed: int = 0, input_length: int = 48, dtype=np.float32, gain: float = np.sqrt(2.0)) -> Model:
    """Orthogonal hidden weights scaled by ``gain``, zero biases, zero output layer."""
    model = Model(spec, input_length, dtype)
    rng = np.random.default_rng(seed)
    weighted = [layer for layer in model.layers if "W" in layer.params]
    for layer in weighted[:-1]:
        W = layer.params["W"]
        W[...] = gain * orthogonal(W.shape, rng)
    weighted[-1].params["W"][...] = 0
    model.seed_dropout(seed)
    return model


# -- checkpoints -------------------------------------------------------------

def _zip_write(zf: zipfile.ZipFile, name: str, data: bytes):
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, data)


def save_checkpoint(model: Model, path, metadata: dict | None = None) -> None:
    """Write an ``.npz``-compatible archive: float32 little-endian arrays plus ``meta.json``.

    Entries carry fixed timestamps so identical models produce identical files.
    """
    meta = {"format_version": CHECKPOINT_VERSION, "spec": spec_to_json(model.spec),
            "input_length": model.input_length, **(metadata or {})}
    with zipfile.ZipFile(path, "w") as zf:
        _zip_write(zf, "meta.json", json.dumps(meta, sort_keys=True).encode())
        for name, arr in sorted(model.state().items()):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr, dtype="<f4"), allow_pickle=False)
            _zip_write(zf, name + ".npy", buf.getvalue())


def load_checkpoint(path, dtype=np.float32):
    """Return ``(model, metadata)``."""
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        state = {}
        for name in zf.namelist():
            if name.endswith(".npy"):
                state[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
    model = Model(spec_from_json(meta["spec"]), meta["input_length"], dtype)
    model.load_state(state)
    return model, meta
