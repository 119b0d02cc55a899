"""Randomized baselines for a built graph.

N1 permutes parameter values within each convolutional/dense layer over
the layer's parameter slots, so Toeplitz repetition survives: every edge
inherits the value now sitting in its provenance slot.  N2 permutes the
weights of all conv+dense edges across those edge positions, destroying
the repetition pattern while keeping the nonzero pattern.  N3 redraws
conv/dense weights from Xavier-uniform or He-normal distributions and
rebuilds the graph.  Pooling (and add/concat) edges are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .graph_builder import SignedSparseGraph, assemble
from .model_ir import (
    WEIGHTED_KINDS,
    NetworkManifest,
    WeightStore,
    expected_weight_shape,
)

N3_INITS = ("xavier_uniform", "he_normal")


@dataclass(frozen=True)
class NullModelSpec:
    kind: str  # "N1" | "N2" | "N3"
    seed: int
    n3_init: str | None = None

    def __post_init__(self):
        if self.kind not in ("N1", "N2", "N3"):
            raise ValidationError(f"unknown null model kind {self.kind!r}")
        if (self.kind == "N3") != (self.n3_init is not None):
            raise ValidationError("n3_init must be given exactly when kind is N3")
        if self.n3_init is not None and self.n3_init not in N3_INITS:
            raise ValidationError(f"n3_init must be one of {N3_INITS}")


def _weighted_layer_ids(graph: SignedSparseGraph) -> list[int]:
    if graph.layers is None:
        raise ValidationError("graph carries no layer table / provenance")
    return graph.layer_of_kind(WEIGHTED_KINDS)


def n1_shuffle(graph: SignedSparseGraph, seed: int) -> SignedSparseGraph:
    """Within-layer parameter shuffle preserving the Toeplitz pattern."""
    rng = np.random.default_rng(seed)
    new_w = graph.weights.copy()
    for li in _weighted_layer_ids(graph):
        mask = graph.prov_layer == li
        slots = graph.prov_param[mask]
        if np.any(slots < 0):
            raise ValidationError(f"layer {graph.layers[li].id!r}: missing provenance")
        present, inverse = np.unique(slots, return_inverse=True)
        values = np.empty(len(present))
        values[inverse] = graph.weights[mask]  # repeated writes agree by construction
        perm = rng.permutation(len(present))
        new_w[np.flatnonzero(mask)] = values[perm][inverse]
    return graph.with_weights(new_w)


def n2_shuffle(graph: SignedSparseGraph, seed: int) -> SignedSparseGraph:
    """Global position-preserving shuffle over all conv+dense edge weights."""
    rng = np.random.default_rng(seed)
    weighted = set(_weighted_layer_ids(graph))
    mask = np.isin(graph.prov_layer, sorted(weighted))
    idx = np.flatnonzero(mask)
    new_w = graph.weights.copy()
    new_w[idx] = graph.weights[idx][rng.permutation(len(idx))]
    return graph.with_weights(new_w)


def _fans(manifest: NetworkManifest, layer) -> tuple[int, int]:
    shape = expected_weight_shape(manifest, layer)
    if layer.kind == "dense":
        return shape[0], shape[1]
    kh, kw, cin_per_group, cout = shape
    g = int(layer.params.get("groups", 1))
    return kh * kw * cin_per_group, kh * kw * (cout // g)


def _draw(rng: np.random.Generator, shape, init: str, fan_in: int, fan_out: int) -> np.ndarray:
    if init == "xavier_uniform":
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        vals = rng.uniform(-bound, bound, size=shape)
    else:
        vals = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    # exact zeros would drop edges and change the topology
    while np.any(vals == 0.0):
        zeros = vals == 0.0
        vals[zeros] = rng.uniform(-1e-6, 1e-6, size=int(zeros.sum()))
    return vals.astype(np.float32)


def n3_reinit(
    manifest: NetworkManifest, store: WeightStore, spec: NullModelSpec
) -> tuple[WeightStore, SignedSparseGraph]:
    """Redraw conv/dense weights as before training; biases reset to zero."""
    if spec.kind != "N3":
        raise ValidationError("n3_reinit requires a spec of kind N3")
    rng = np.random.default_rng(spec.seed)
    new_store = WeightStore({name: store[name] for name in store.names()})
    for layer in manifest.layers:
        if layer.kind not in WEIGHTED_KINDS:
            continue
        fan_in, fan_out = _fans(manifest, layer)
        shape = expected_weight_shape(manifest, layer)
        new_store.add(layer.weight_ref, _draw(rng, shape, spec.n3_init, fan_in, fan_out))
        if layer.bias_ref is not None:
            new_store.add(layer.bias_ref, np.zeros_like(store[layer.bias_ref]))
    return new_store, assemble(manifest, new_store)


def xavier_uniform_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))
