"""Network interchange representation: layers, shapes, weight blobs.

A model is a JSON manifest plus one binary blob per weight tensor.
Blobs are little-endian float32, channels-last:

  * conv / grouped_conv kernels: [kh, kw, in_channels(_per_group), out_channels]
  * dense matrices:              [in_size, out_size]
  * biases:                      [out]

Layer kinds split into node-bearing layers (input, conv, grouped_conv,
dense, max_pool, avg_pool, add, concat), whose tensor elements become
graph nodes, and decorations (relu, batch_norm, lrn, softmax, dropout),
which attach an activation to the nodes of their source layer and
contribute neither nodes nor edges.  Dropout is accepted and treated as
identity at inference time.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

BLOB_MAGIC = b"FRUSTBLB"

BEARING_KINDS = frozenset(
    {"input", "conv", "grouped_conv", "dense", "max_pool", "avg_pool", "add", "concat"}
)
DECORATION_KINDS = frozenset({"relu", "batch_norm", "lrn", "softmax", "dropout"})
ALL_KINDS = BEARING_KINDS | DECORATION_KINDS
WEIGHTED_KINDS = frozenset({"conv", "grouped_conv", "dense"})
POOL_KINDS = frozenset({"max_pool", "avg_pool"})

# Fixed pooling edge weight is pool_weight_scale / window side length.
POOL_WEIGHT_SCALE = 0.01

LRN_DEFAULTS = {"alpha": 1e-4, "beta": 0.75, "k": 1.0, "window": 5}


@dataclass(frozen=True)
class TensorShape:
    """Shape of a layer output: (h, w, c) for images, (n,) for vectors."""

    dims: tuple[int, ...]

    def __post_init__(self):
        if not self.dims or any(int(d) < 1 for d in self.dims):
            raise ValidationError(f"tensor dims must all be >= 1, got {self.dims}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def count(self) -> int:
        return int(np.prod(self.dims))

    @property
    def channels(self) -> int:
        return self.dims[-1]


@dataclass(frozen=True)
class LayerSpec:
    id: str
    kind: str
    inputs: tuple[str, ...] = ()
    params: dict = field(default_factory=dict)
    weight_ref: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))

    @property
    def bias_ref(self) -> str | None:
        return self.params.get("bias_ref")


class WeightStore:
    """Immutable map of blob id -> float32 array with a declared shape."""

    def __init__(self, blobs: dict[str, np.ndarray] | None = None):
        self._blobs: dict[str, np.ndarray] = {}
        for name, arr in (blobs or {}).items():
            self.add(name, arr)

    def add(self, name: str, arr: np.ndarray) -> None:
        arr = np.asarray(arr, dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"blob {name!r} contains non-finite values")
        self._blobs[name] = arr

    def __contains__(self, name: str) -> bool:
        return name in self._blobs

    def __getitem__(self, name: str) -> np.ndarray:
        if name not in self._blobs:
            raise ValidationError(f"dangling weight_ref {name!r}")
        return self._blobs[name]

    def names(self) -> list[str]:
        return sorted(self._blobs)


@dataclass
class NetworkManifest:
    """Validated layer graph.  Immutable after construction."""

    layers: tuple[LayerSpec, ...]
    input_shape: TensorShape
    output_size: int
    # Derived during validation:
    topo_order: tuple[str, ...] = ()
    shapes: dict[str, TensorShape] = field(default_factory=dict)
    by_id: dict[str, LayerSpec] = field(default_factory=dict)
    consumers: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def bearing_source(self, layer_id: str) -> str:
        """Resolve through decoration layers down to the node-bearing layer."""
        lay = self.by_id[layer_id]
        while lay.kind in DECORATION_KINDS:
            lay = self.by_id[lay.inputs[0]]
        return lay.id

    def bearing_layers(self) -> list[LayerSpec]:
        return [self.by_id[i] for i in self.topo_order if self.by_id[i].kind in BEARING_KINDS]

    def decoration_chain(self, bearing_id: str) -> list[LayerSpec]:
        """Decorations hanging off a bearing layer, in application order."""
        chain = []
        cur = bearing_id
        while True:
            nxt = [c for c in self.consumers.get(cur, ()) if self.by_id[c].kind in DECORATION_KINDS]
            if not nxt:
                return chain
            # validation guarantees a decorated layer has exactly one consumer
            chain.append(self.by_id[nxt[0]])
            cur = nxt[0]

    @property
    def input_layer(self) -> LayerSpec:
        return next(l for l in self.layers if l.kind == "input")

    @property
    def output_layer(self) -> LayerSpec:
        """Final node-bearing layer (pre-softmax logits live here)."""
        return self.by_id[self.bearing_source(self.topo_order[-1])]


def _as_pair(value, name: str, layer_id: str) -> tuple[int, int]:
    if isinstance(value, (int, np.integer)):
        return int(value), int(value)
    if len(value) != 2:
        raise ValidationError(f"layer {layer_id!r}: {name} must be an int or a pair")
    return int(value[0]), int(value[1])


def _conv_out_shape(layer: LayerSpec, in_shape: TensorShape) -> TensorShape:
    if len(in_shape.dims) != 3:
        raise ValidationError(f"layer {layer.id!r}: conv input must be 3-d (h, w, c)")
    h, w, _ = in_shape.dims
    kh, kw = _as_pair(layer.params["kernel"], "kernel", layer.id)
    sy, sx = _as_pair(layer.params.get("stride", 1), "stride", layer.id)
    py, px = _as_pair(layer.params.get("padding", 0), "padding", layer.id)
    if min(kh, kw) < 1 or min(sy, sx) < 1 or min(py, px) < 0:
        raise ValidationError(f"layer {layer.id!r}: bad kernel/stride/padding")
    oh = (h + 2 * py - kh) // sy + 1
    ow = (w + 2 * px - kw) // sx + 1
    if oh < 1 or ow < 1:
        raise ValidationError(f"layer {layer.id!r}: kernel larger than padded input")
    m = int(layer.params["out_channels"])
    return TensorShape((oh, ow, m))


def _pool_out_shape(layer: LayerSpec, in_shape: TensorShape) -> TensorShape:
    if len(in_shape.dims) != 3:
        raise ValidationError(f"layer {layer.id!r}: pool input must be 3-d (h, w, c)")
    h, w, c = in_shape.dims
    p = int(layer.params["window"])
    sy, sx = _as_pair(layer.params.get("stride", p), "stride", layer.id)
    py, px = _as_pair(layer.params.get("padding", 0), "padding", layer.id)
    if p < 1 or min(sy, sx) < 1 or min(py, px) < 0:
        raise ValidationError(f"layer {layer.id!r}: bad window/stride/padding")
    if p > h + 2 * py or p > w + 2 * px:
        raise ValidationError(f"layer {layer.id!r}: pool window larger than padded input")
    oh = (h + 2 * py - p) // sy + 1
    ow = (w + 2 * px - p) // sx + 1
    return TensorShape((oh, ow, c))


def _infer_shape(layer: LayerSpec, in_shapes: list[TensorShape]) -> TensorShape:
    kind = layer.kind
    if kind == "conv":
        return _conv_out_shape(layer, in_shapes[0])
    if kind == "grouped_conv":
        g = int(layer.params["groups"])
        c_in = in_shapes[0].channels
        m = int(layer.params["out_channels"])
        if g < 1 or c_in % g != 0:
            raise ValidationError(
                f"layer {layer.id!r}: {c_in} input channels not divisible by {g} groups"
            )
        if m % g != 0:
            raise ValidationError(
                f"layer {layer.id!r}: {m} output channels not divisible by {g} groups"
            )
        return _conv_out_shape(layer, in_shapes[0])
    if kind == "dense":
        return TensorShape((int(layer.params["out_features"]),))
    if kind in POOL_KINDS:
        return _pool_out_shape(layer, in_shapes[0])
    if kind == "add":
        if len(set(s.dims for s in in_shapes)) != 1:
            raise ValidationError(f"layer {layer.id!r}: add inputs have unequal shapes")
        return in_shapes[0]
    if kind == "concat":
        base = in_shapes[0].dims[:-1]
        if any(s.dims[:-1] != base for s in in_shapes):
            raise ValidationError(f"layer {layer.id!r}: concat inputs differ off the channel axis")
        return TensorShape(base + (sum(s.channels for s in in_shapes),))
    if kind in DECORATION_KINDS:
        return in_shapes[0]
    raise ValidationError(f"layer {layer.id!r}: unknown kind {kind!r}")


def _check_decoration_params(layer: LayerSpec, shape: TensorShape) -> None:
    if layer.kind == "batch_norm":
        c = shape.channels if len(shape.dims) == 3 else shape.count
        for key in ("gamma", "beta", "mean", "variance"):
            vals = layer.params.get(key)
            if vals is None or len(vals) != c:
                raise ValidationError(f"layer {layer.id!r}: batch_norm {key} must have length {c}")
        if any(g <= 0 for g in layer.params["gamma"]):
            raise ValidationError(f"layer {layer.id!r}: batch_norm gamma must be positive")
        if any(v <= 0 for v in layer.params["variance"]):
            raise ValidationError(f"layer {layer.id!r}: batch_norm variance must be positive")
    if layer.kind == "lrn":
        w = int(layer.params.get("window", LRN_DEFAULTS["window"]))
        if w < 1 or w % 2 == 0:
            raise ValidationError(f"layer {layer.id!r}: lrn window must be odd and >= 1")


def _topo_sort(layers: tuple[LayerSpec, ...]) -> tuple[str, ...]:
    """Kahn's algorithm; ready layers processed in manifest order."""
    position = {l.id: i for i, l in enumerate(layers)}
    indeg = {l.id: len(l.inputs) for l in layers}
    out_edges: dict[str, list[str]] = {l.id: [] for l in layers}
    for l in layers:
        for src in l.inputs:
            out_edges[src].append(l.id)
    ready = sorted((i for i, d in indeg.items() if d == 0), key=position.__getitem__)
    order: list[str] = []
    while ready:
        cur = ready.pop(0)
        order.append(cur)
        changed = False
        for dst in out_edges[cur]:
            indeg[dst] -= 1
            if indeg[dst] == 0:
                ready.append(dst)
                changed = True
        if changed:
            ready.sort(key=position.__getitem__)
    if len(order) != len(layers):
        stuck = sorted(i for i, d in indeg.items() if d > 0)
        raise ValidationError(f"cycle detected involving layers {stuck}")
    return tuple(order)


def build_manifest(
    layers: list[LayerSpec], input_shape: TensorShape, output_size: int
) -> NetworkManifest:
    """Validate the layer list and derive topological order and shapes."""
    ids = [l.id for l in layers]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"duplicate layer ids {dup}")
    by_id = {l.id: l for l in layers}

    inputs = [l for l in layers if l.kind == "input"]
    if len(inputs) != 1:
        raise ValidationError(f"expected exactly one input layer, found {len(inputs)}")
    for l in layers:
        if l.kind not in ALL_KINDS:
            raise ValidationError(f"layer {l.id!r}: unknown kind {l.kind!r}")
        if l.kind == "input":
            if l.inputs:
                raise ValidationError(f"layer {l.id!r}: input layer takes no inputs")
            continue
        if not l.inputs:
            raise ValidationError(f"layer {l.id!r}: inputs must be nonempty")
        for src in l.inputs:
            if src not in by_id:
                raise ValidationError(f"layer {l.id!r}: unknown input {src!r}")
        if l.kind not in {"add", "concat"} and len(l.inputs) != 1:
            raise ValidationError(f"layer {l.id!r}: kind {l.kind!r} takes exactly one input")
        if l.kind in {"add", "concat"} and len(l.inputs) < 2:
            raise ValidationError(f"layer {l.id!r}: {l.kind} needs at least two inputs")

    topo = _topo_sort(tuple(layers))

    consumers: dict[str, list[str]] = {l.id: [] for l in layers}
    for l in layers:
        for src in l.inputs:
            consumers[src].append(l.id)

    # A decorated layer is consumed only by its decoration; consumers that
    # want the activated value must reference the decoration layer itself.
    for l in layers:
        if l.kind in DECORATION_KINDS:
            src = by_id[l.inputs[0]]
            if src.kind == "input":
                raise ValidationError(
                    f"layer {l.id!r}: decorations on the input layer are not supported"
                )
            if len(consumers[src.id]) != 1:
                raise ValidationError(
                    f"layer {src.id!r} is decorated by {l.id!r} but has other consumers "
                    f"{sorted(set(consumers[src.id]) - {l.id})}"
                )

    shapes: dict[str, TensorShape] = {}
    for lid in topo:
        l = by_id[lid]
        if l.kind == "input":
            shapes[lid] = input_shape
        else:
            shapes[lid] = _infer_shape(l, [shapes[s] for s in l.inputs])
        if l.kind in DECORATION_KINDS:
            _check_decoration_params(l, shapes[lid])

    sinks = [lid for lid in topo if not consumers[lid]]
    if len(sinks) != 1:
        raise ValidationError(f"expected exactly one terminal layer, found {sorted(sinks)}")
    if shapes[sinks[0]].count != output_size:
        raise ValidationError(
            f"terminal layer {sinks[0]!r} has {shapes[sinks[0]].count} elements, "
            f"declared output_size is {output_size}"
        )

    return NetworkManifest(
        layers=tuple(layers),
        input_shape=input_shape,
        output_size=int(output_size),
        topo_order=topo,
        shapes=shapes,
        by_id=by_id,
        consumers={k: tuple(v) for k, v in consumers.items()},
    )


def expected_weight_shape(manifest: NetworkManifest, layer: LayerSpec) -> tuple[int, ...]:
    in_shape = manifest.shapes[layer.inputs[0]]
    if layer.kind == "conv":
        kh, kw = _as_pair(layer.params["kernel"], "kernel", layer.id)
        return (kh, kw, in_shape.channels, int(layer.params["out_channels"]))
    if layer.kind == "grouped_conv":
        kh, kw = _as_pair(layer.params["kernel"], "kernel", layer.id)
        g = int(layer.params["groups"])
        return (kh, kw, in_shape.channels // g, int(layer.params["out_channels"]))
    if layer.kind == "dense":
        return (in_shape.count, int(layer.params["out_features"]))
    raise ValidationError(f"layer {layer.id!r}: kind {layer.kind!r} carries no weights")


def validate_store(manifest: NetworkManifest, store: WeightStore) -> None:
    """Check that every weight_ref / bias_ref resolves with the right size."""
    for layer in manifest.layers:
        if layer.kind in WEIGHTED_KINDS:
            if layer.weight_ref is None:
                raise ValidationError(f"layer {layer.id!r}: missing weight_ref")
            want = expected_weight_shape(manifest, layer)
            blob = store[layer.weight_ref]
            if blob.size != int(np.prod(want)):
                raise ValidationError(
                    f"layer {layer.id!r}: blob length mismatch, "
                    f"expected {int(np.prod(want))} values for shape {want}, got {blob.size}"
                )
            if layer.bias_ref is not None:
                m = int(layer.params.get("out_features", layer.params.get("out_channels")))
                bias = store[layer.bias_ref]
                if bias.size != m:
                    raise ValidationError(
                        f"layer {layer.id!r}: bias blob length {bias.size} != {m}"
                    )
        elif layer.weight_ref is not None:
            raise ValidationError(f"layer {layer.id!r}: kind {layer.kind!r} carries no weights")


def layer_weights(manifest: NetworkManifest, store: WeightStore, layer: LayerSpec) -> np.ndarray:
    """Kernel/matrix of a weighted layer, shaped and in float64."""
    want = expected_weight_shape(manifest, layer)
    return store[layer.weight_ref].reshape(want).astype(np.float64)


def layer_bias(manifest: NetworkManifest, store: WeightStore, layer: LayerSpec) -> np.ndarray:
    m = manifest.shapes[layer.id].channels if layer.kind != "dense" else manifest.shapes[layer.id].count
    if layer.bias_ref is None:
        return np.zeros(m)
    return store[layer.bias_ref].astype(np.float64)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def write_blob(path: str | Path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(BLOB_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def read_blob(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != BLOB_MAGIC:
            raise ValidationError(f"{path}: bad blob magic {magic!r}")
        (rank,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != int(np.prod(dims)):
        raise ValidationError(f"{path}: payload length {data.size} != shape {dims}")
    return data.reshape(dims)


def manifest_to_dict(manifest: NetworkManifest) -> dict:
    layers = []
    for l in manifest.layers:
        entry = {"id": l.id, "kind": l.kind, "inputs": list(l.inputs), "params": l.params}
        if l.weight_ref is not None:
            entry["weight_ref"] = l.weight_ref
        layers.append(entry)
    return {
        "input_shape": list(manifest.input_shape.dims),
        "output_size": manifest.output_size,
        "layers": layers,
    }


def manifest_from_dict(doc: dict) -> NetworkManifest:
    try:
        layers = [
            LayerSpec(
                id=str(entry["id"]),
                kind=str(entry["kind"]),
                inputs=tuple(entry.get("inputs", ())),
                params=dict(entry.get("params", {})),
                weight_ref=entry.get("weight_ref"),
            )
            for entry in doc["layers"]
        ]
        input_shape = TensorShape(tuple(doc["input_shape"]))
        output_size = int(doc["output_size"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed manifest: {exc!r}") from exc
    return build_manifest(layers, input_shape, output_size)


def save_model(directory: str | Path, manifest: NetworkManifest, store: WeightStore) -> Path:
    """Write manifest.json plus one .blob file per weight tensor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest_to_dict(manifest), fh, indent=1)
        fh.write("\n")
    for name in store.names():
        write_blob(directory / f"{name}.blob", store[name])
    return path


def load_manifest(path: str | Path) -> NetworkManifest:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"manifest {path} does not exist")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return manifest_from_dict(doc)


def load_model(path: str | Path) -> tuple[NetworkManifest, WeightStore]:
    """Load manifest.json (or its directory) together with adjacent blobs."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    manifest = load_manifest(path)
    store = WeightStore()
    for blob_path in sorted(path.parent.glob("*.blob")):
        store.add(blob_path.stem, read_blob(blob_path))
    validate_store(manifest, store)
    return manifest, store


# ---------------------------------------------------------------------------
# Synthetic models
# ---------------------------------------------------------------------------

TEMPLATES = ("tiny_mlp", "tiny_cnn", "residual_cnn", "grouped_cnn")


def _draw_signed(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    """Sign-symmetric uniform draws with magnitudes in [0.05, 1] * scale.

    The floor keeps every weight's magnitude well away from zero so that
    sign-based checks (finite differences at 1e-6 tolerance) stay
    well-conditioned.
    """
    signs = rng.integers(0, 2, size=shape) * 2 - 1
    mags = rng.uniform(0.05 * scale, scale, size=shape)
    return (signs * mags).astype(np.float32)


def _bn_params(rng: np.random.Generator, c: int) -> dict:
    return {
        "gamma": [float(v) for v in rng.uniform(0.5, 1.5, c)],
        "beta": [float(v) for v in rng.uniform(-0.3, 0.3, c)],
        "mean": [float(v) for v in rng.uniform(-0.2, 0.2, c)],
        "variance": [float(v) for v in rng.uniform(0.5, 1.5, c)],
        "epsilon": 1e-5,
    }


def _conv_blobs(rng, store, name, kh, kw, cin, cout):
    scale = (3.0 / (kh * kw * cin)) ** 0.5
    store.add(f"{name}_w", _draw_signed(rng, (kh, kw, cin, cout), scale))
    store.add(f"{name}_b", _draw_signed(rng, (cout,), 0.1 * scale))


def _dense_blobs(rng, store, name, nin, nout):
    scale = (3.0 / nin) ** 0.5
    store.add(f"{name}_w", _draw_signed(rng, (nin, nout), scale))
    store.add(f"{name}_b", _draw_signed(rng, (nout,), 0.1 * scale))


def generate_synthetic(seed: int, template: str) -> tuple[NetworkManifest, WeightStore]:
    """Deterministic synthetic model; a pure function of (seed, template)."""
    if template not in TEMPLATES:
        raise ValidationError(f"unknown template {template!r}, expected one of {TEMPLATES}")
    rng = np.random.default_rng(seed)
    store = WeightStore()
    L = LayerSpec

    if template == "tiny_mlp":
        _dense_blobs(rng, store, "fc1", 16, 12)
        _dense_blobs(rng, store, "fc2", 12, 10)
        layers = [
            L("input", "input"),
            L("fc1", "dense", ("input",), {"out_features": 12, "bias_ref": "fc1_b"}, "fc1_w"),
            L("relu1", "relu", ("fc1",)),
            L("fc2", "dense", ("relu1",), {"out_features": 10, "bias_ref": "fc2_b"}, "fc2_w"),
            L("probs", "softmax", ("fc2",)),
        ]
        manifest = build_manifest(layers, TensorShape((16,)), 10)

    elif template == "tiny_cnn":
        _conv_blobs(rng, store, "conv1", 3, 3, 3, 4)
        _conv_blobs(rng, store, "conv2", 3, 3, 4, 8)
        _dense_blobs(rng, store, "fc", 32, 500)
        bn = _bn_params(rng, 4)
        layers = [
            L("input", "input"),
            L("conv1", "conv", ("input",),
              {"kernel": [3, 3], "stride": [1, 1], "padding": [1, 1],
               "out_channels": 4, "bias_ref": "conv1_b"}, "conv1_w"),
            L("bn1", "batch_norm", ("conv1",), bn),
            L("relu1", "relu", ("bn1",)),
            L("pool1", "max_pool", ("relu1",), {"window": 2}),
            L("conv2", "conv", ("pool1",),
              {"kernel": [3, 3], "stride": [1, 1], "padding": [1, 1],
               "out_channels": 8, "bias_ref": "conv2_b"}, "conv2_w"),
            L("relu2", "relu", ("conv2",)),
            L("pool2", "avg_pool", ("relu2",), {"window": 2}),
            L("fc", "dense", ("pool2",), {"out_features": 500, "bias_ref": "fc_b"}, "fc_w"),
            L("probs", "softmax", ("fc",)),
        ]
        manifest = build_manifest(layers, TensorShape((8, 8, 3)), 500)

    elif template == "residual_cnn":
        _conv_blobs(rng, store, "conv0", 3, 3, 2, 4)
        _conv_blobs(rng, store, "conv1", 3, 3, 4, 4)
        _conv_blobs(rng, store, "conv2", 3, 3, 4, 4)
        _dense_blobs(rng, store, "fc", 64, 10)
        bn = _bn_params(rng, 4)
        layers = [
            L("input", "input"),
            L("conv0", "conv", ("input",),
              {"kernel": [3, 3], "padding": [1, 1], "out_channels": 4,
               "bias_ref": "conv0_b"}, "conv0_w"),
            L("relu0", "relu", ("conv0",)),
            L("conv1", "conv", ("relu0",),
              {"kernel": [3, 3], "padding": [1, 1], "out_channels": 4,
               "bias_ref": "conv1_b"}, "conv1_w"),
            L("bn1", "batch_norm", ("conv1",), bn),
            L("relu1", "relu", ("bn1",)),
            L("conv2", "conv", ("relu1",),
              {"kernel": [3, 3], "padding": [1, 1], "out_channels": 4,
               "bias_ref": "conv2_b"}, "conv2_w"),
            L("res", "add", ("conv2", "relu0")),
            L("relu3", "relu", ("res",)),
            L("pool", "avg_pool", ("relu3",), {"window": 2}),
            L("fc", "dense", ("pool",), {"out_features": 10, "bias_ref": "fc_b"}, "fc_w"),
            L("probs", "softmax", ("fc",)),
        ]
        manifest = build_manifest(layers, TensorShape((8, 8, 2)), 10)

    else:  # grouped_cnn
        _conv_blobs(rng, store, "conv1", 3, 3, 4, 8)
        _conv_blobs(rng, store, "gconv", 3, 3, 4, 8)  # 8 in-channels over 2 groups
        _dense_blobs(rng, store, "fc", 32, 10)
        layers = [
            L("input", "input"),
            L("conv1", "conv", ("input",),
              {"kernel": [3, 3], "padding": [1, 1], "out_channels": 8,
               "bias_ref": "conv1_b"}, "conv1_w"),
            L("relu1", "relu", ("conv1",)),
            L("gconv", "grouped_conv", ("relu1",),
              {"kernel": [3, 3], "padding": [1, 1], "out_channels": 8,
               "groups": 2, "channel_shuffle": True, "bias_ref": "gconv_b"}, "gconv_w"),
            L("relu2", "relu", ("gconv",)),
            L("pool", "avg_pool", ("relu2",), {"window": 3}),
            L("fc", "dense", ("pool",), {"out_features": 10, "bias_ref": "fc_b"}, "fc_w"),
            L("probs", "softmax", ("fc",)),
        ]
        manifest = build_manifest(layers, TensorShape((6, 6, 4)), 10)

    validate_store(manifest, store)
    return manifest, store
