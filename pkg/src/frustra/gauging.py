"""Construction of exactly balanced, gauged variants of a model.

Taking absolute values of all trainable weights yields a structurally
balanced network (gauge = all ones).  A richer balanced fixture is made
by conjugating with a random node signature T: trainable blocks become
T_out W T_in, which stays representable as long as the signs respect the
weight sharing and the fixed-weight couplings:

  * conv / grouped_conv blocks force channel-uniform signs (a Toeplitz
    block conjugated by spatially varying signs is no longer a
    convolution), so signs are drawn per channel;
  * pooling, add and concat edges carry fixed positive weights, so the
    signs of the nodes they couple must agree.

Sign groups are merged with a union-find over (layer, channel) keys and
drawn once per group.  Dense outputs are vectors, so their "channels"
are single nodes and the output signature is fully random.
"""

from __future__ import annotations

import numpy as np

from .graph_builder import SignedSparseGraph, shuffle_permutation
from .model_ir import (
    POOL_KINDS,
    NetworkManifest,
    WeightStore,
    layer_weights,
)


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, k):
        self.parent.setdefault(k, k)
        root = k
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[k] != root:
            self.parent[k], k = root, self.parent[k]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def _channel_signs(manifest: NetworkManifest, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Random per-channel signs, constant on groups tied by fixed edges."""
    uf = _UnionFind()
    bearing = manifest.bearing_layers()
    for lay in bearing:
        srcs = [manifest.bearing_source(i) for i in lay.inputs]
        c_out = manifest.shapes[lay.id].channels
        if lay.kind in POOL_KINDS:
            for c in range(c_out):
                uf.union((lay.id, c), (srcs[0], c))
        elif lay.kind == "add":
            for src in srcs:
                for c in range(c_out):
                    uf.union((lay.id, c), (src, c))
        elif lay.kind == "concat":
            coff = 0
            for src, ref in zip(srcs, lay.inputs):
                ci = manifest.shapes[ref].channels
                for c in range(ci):
                    uf.union((lay.id, coff + c), (src, c))
                coff += ci
    roots: dict = {}
    signs: dict[str, np.ndarray] = {}
    for lay in bearing:
        c_out = manifest.shapes[lay.id].channels
        out = np.empty(c_out, dtype=np.int8)
        for c in range(c_out):
            root = uf.find((lay.id, c))
            if root not in roots:
                roots[root] = np.int8(rng.integers(0, 2) * 2 - 1)
            out[c] = roots[root]
        signs[lay.id] = out
    return signs


def _node_signs(manifest: NetworkManifest, chan: dict[str, np.ndarray]) -> np.ndarray:
    parts = []
    for lay in manifest.bearing_layers():
        shape = manifest.shapes[lay.id]
        spatial = shape.count // shape.channels
        parts.append(np.tile(chan[lay.id], spatial))
    return np.concatenate(parts)


def gauged_balanced_variant(
    manifest: NetworkManifest, store: WeightStore, seed: int
) -> tuple[WeightStore, np.ndarray]:
    """All-positive weights conjugated by a random realizable gauge.

    Returns the new store and the node signature t; the rebuilt graph
    satisfies diag(t) A diag(t) >= 0 elementwise.
    """
    rng = np.random.default_rng(seed)
    chan = _channel_signs(manifest, rng)
    new_store = WeightStore({name: store[name] for name in store.names()})
    for lay in manifest.layers:
        if lay.kind not in ("conv", "grouped_conv", "dense"):
            continue
        src = manifest.bearing_source(lay.inputs[0])
        kernel = np.abs(layer_weights(manifest, store, lay))
        s_out = chan[lay.id].astype(np.float64)
        if lay.kind == "conv":
            s_in = chan[src].astype(np.float64)
            kernel *= s_in[None, None, :, None] * s_out[None, None, None, :]
        elif lay.kind == "grouped_conv":
            g = int(lay.params["groups"])
            co = int(lay.params["out_channels"])
            cig = kernel.shape[2]
            perm = (shuffle_permutation(g, co) if lay.params.get("channel_shuffle")
                    else np.arange(co))
            s_in_full = chan[src].astype(np.float64)
            for oc in range(co):
                grp = oc // (co // g)
                s_in = s_in_full[grp * cig:(grp + 1) * cig]
                kernel[:, :, :, oc] *= s_out[perm[oc]] * s_in[None, None, :]
        else:  # dense: per-node input signs in raster order
            in_shape = manifest.shapes[lay.inputs[0]]
            spatial = in_shape.count // in_shape.channels
            t_in = np.tile(chan[src], spatial).astype(np.float64)
            kernel *= t_in[:, None] * s_out[None, :]
        new_store.add(lay.weight_ref, kernel.astype(np.float32))
        if lay.bias_ref is not None:
            bias = np.abs(store[lay.bias_ref]).astype(np.float64)
            new_store.add(lay.bias_ref, (bias * s_out).astype(np.float32))
    return new_store, _node_signs(manifest, chan)


def is_balanced_under(graph: SignedSparseGraph, t: np.ndarray) -> bool:
    """True iff diag(t) A diag(t) >= 0 elementwise."""
    rows = graph.row_indices()
    return bool(np.all(t[rows] * graph.weights * t[graph.indices] > 0))
