"""Expansion of a network manifest into a weighted signed sparse DAG.

Nodes are tensor elements of the node-bearing layers, numbered by
topological layer order and then raster order (row-major, channels-last)
within a layer.  Edges follow the convention A[i, j] != 0 iff there is an
edge from node j to node i, so the matrix is strictly lower
block-triangular and rows hold incoming edges.

Per-edge provenance records (layer, parameter slot) so that all Toeplitz
copies of a convolution parameter can be identified; fixed edges
(pooling, add, concat) carry slot -1.  Pooling edges get the fixed weight
0.01/p for a p x p window; max and average pooling are indistinguishable
at this level.  Activation layers contribute no edges.  Bias vectors are
deliberately absent from the graph.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .model_ir import (
    POOL_KINDS,
    POOL_WEIGHT_SCALE,
    WEIGHTED_KINDS,
    LayerSpec,
    NetworkManifest,
    TensorShape,
    WeightStore,
    _as_pair,
    layer_weights,
)

GRAPH_MAGIC = b"FRUSTGR1"


@dataclass(frozen=True)
class LayerInfo:
    id: str
    kind: str
    start: int
    stop: int
    param_count: int


@dataclass
class EdgeBlock:
    """Edges of one layer in local (row, col) coordinates."""

    rows: np.ndarray  # local output node index
    cols: np.ndarray  # local input node index
    weights: np.ndarray
    params: np.ndarray  # parameter slot per edge, -1 for fixed edges

    @property
    def nnz(self) -> int:
        return len(self.rows)


class SignedSparseGraph:
    """CSR adjacency of the signed DAG plus provenance and layer index."""

    def __init__(self, n, indptr, indices, weights, prov_layer, prov_param, layers=None):
        self.n = int(n)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        self.prov_layer = np.ascontiguousarray(prov_layer, dtype=np.int32)
        self.prov_param = np.ascontiguousarray(prov_param, dtype=np.int64)
        self.layers: tuple[LayerInfo, ...] | None = tuple(layers) if layers else None
        self._validate()

    def _validate(self):
        if len(self.indptr) != self.n + 1 or self.indptr[0] != 0:
            raise ValidationError("malformed indptr")
        nnz = self.nnz
        if not (len(self.indices) == len(self.weights) == len(self.prov_layer)
                == len(self.prov_param) == nnz):
            raise ValidationError("edge array lengths disagree")
        if nnz:
            if self.indices.min() < 0 or self.indices.max() >= self.n:
                raise ValidationError("edge endpoint out of range")
            rows = self.row_indices()
            if np.any(self.indices >= rows):
                raise ValidationError("graph is not strictly lower triangular (or has self-loops)")
            if not np.all(np.isfinite(self.weights)) or np.any(self.weights == 0.0):
                raise ValidationError("edge weights must be finite and nonzero")

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def row_indices(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))

    @property
    def node_index(self) -> dict[str, tuple[int, int]]:
        if self.layers is None:
            return {}
        return {li.id: (li.start, li.stop) for li in self.layers}

    def layer_of_kind(self, kinds) -> list[int]:
        if self.layers is None:
            raise ValidationError("graph carries no layer table")
        return [i for i, li in enumerate(self.layers) if li.kind in kinds]

    def with_weights(self, weights: np.ndarray) -> "SignedSparseGraph":
        """Same topology and provenance, new edge values."""
        return SignedSparseGraph(self.n, self.indptr, self.indices, weights,
                                 self.prov_layer, self.prov_param, self.layers)

    def subgraph(self, node_mask: np.ndarray, edge_mask: np.ndarray):
        """Compact restriction; returns (graph, kept original node ids)."""
        keep_nodes = np.flatnonzero(node_mask)
        remap = -np.ones(self.n, dtype=np.int64)
        remap[keep_nodes] = np.arange(len(keep_nodes))
        rows = self.row_indices()[edge_mask]
        cols = self.indices[edge_mask]
        if np.any(remap[rows] < 0) or np.any(remap[cols] < 0):
            raise ValidationError("edge_mask keeps an edge with a dropped endpoint")
        g = from_edges(
            len(keep_nodes), remap[rows], remap[cols], self.weights[edge_mask],
            prov_layer=self.prov_layer[edge_mask], prov_param=self.prov_param[edge_mask],
        )
        return g, keep_nodes

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.weights, self.indices, self.indptr), shape=(self.n, self.n))


def from_edges(n, rows, cols, weights, prov_layer=None, prov_param=None, layers=None):
    """Build a graph from explicit edge triples (row <- col)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(rows == cols):
        raise ValidationError("self-loops are not allowed")
    if prov_layer is None:
        prov_layer = np.full(len(rows), -1, dtype=np.int32)
    if prov_param is None:
        prov_param = np.full(len(rows), -1, dtype=np.int64)
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    if len(rows) > 1 and np.any((rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])):
        raise ValidationError("duplicate edges")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return SignedSparseGraph(
        n, indptr, cols, weights[order],
        np.asarray(prov_layer, dtype=np.int32)[order],
        np.asarray(prov_param, dtype=np.int64)[order],
        layers,
    )


# ---------------------------------------------------------------------------
# Per-layer edge expansion
# ---------------------------------------------------------------------------

def _conv_geometry(layer: LayerSpec, in_shape: TensorShape):
    kh, kw = _as_pair(layer.params["kernel"], "kernel", layer.id)
    sy, sx = _as_pair(layer.params.get("stride", 1), "stride", layer.id)
    py, px = _as_pair(layer.params.get("padding", 0), "padding", layer.id)
    h, w, c = in_shape.dims
    oh = (h + 2 * py - kh) // sy + 1
    ow = (w + 2 * px - kw) // sx + 1
    if oh < 1 or ow < 1:
        raise ValidationError(f"layer {layer.id!r}: kernel/stride inconsistent with input shape")
    return kh, kw, sy, sx, py, px, h, w, c, oh, ow


def shuffle_permutation(groups: int, channels: int) -> np.ndarray:
    """perm[c] = post-shuffle position of pre-shuffle channel c.

    Channel j of input group i becomes the i-th channel of output group j.
    """
    m = channels // groups
    old = np.arange(channels)
    return (old % m) * groups + (old // m)


def expand_conv(layer: LayerSpec, kernel: np.ndarray, in_shape: TensorShape) -> EdgeBlock:
    """Toeplitz expansion of a convolution.

    kernel has shape [kh, kw, in_c, out_c]; parameter slots are the
    C-order flat kernel indices, so repeated instances of a kernel entry
    share a slot.  Zero-padded input positions contribute no edges.
    """
    kh, kw, sy, sx, py, px, h, w, c, oh, ow = _conv_geometry(layer, in_shape)
    co = kernel.shape[-1]
    if kernel.shape != (kh, kw, c, co):
        raise ValidationError(f"layer {layer.id!r}: kernel shape {kernel.shape} mismatch")
    ics = np.arange(c, dtype=np.int64)
    ocs = np.arange(co, dtype=np.int64)
    # slot of (ky, kx, ic, oc) in C order
    slot_base = ((np.arange(kh)[:, None] * kw + np.arange(kw)[None, :]) * c)
    rows, cols, ws, params = [], [], [], []
    for oy in range(oh):
        for ox in range(ow):
            out_sp = oy * ow + ox
            for ky in range(kh):
                iy = oy * sy - py + ky
                if iy < 0 or iy >= h:
                    continue
                for kx in range(kw):
                    ix = ox * sx - px + kx
                    if ix < 0 or ix >= w:
                        continue
                    in_sp = iy * w + ix
                    # all (ic, oc) pairs at this tap
                    r = out_sp * co + np.broadcast_to(ocs, (c, co))
                    cl = in_sp * c + np.broadcast_to(ics[:, None], (c, co))
                    pv = (slot_base[ky, kx] + ics[:, None]) * co + ocs
                    rows.append(r.ravel())
                    cols.append(cl.ravel())
                    ws.append(kernel[ky, kx].ravel())
                    params.append(np.broadcast_to(pv, (c, co)).ravel())
    return _finish_block(rows, cols, ws, params)


def expand_grouped_conv(layer: LayerSpec, kernel: np.ndarray, in_shape: TensorShape) -> EdgeBlock:
    """Group convolution: block-diagonal over channel groups.

    With the channel_shuffle flag set, output rows are reordered so that
    channel j of output group i lands at position j*g + i.  With g = 1
    this reduces exactly to expand_conv.
    """
    g = int(layer.params["groups"])
    kh, kw, sy, sx, py, px, h, w, c, oh, ow = _conv_geometry(layer, in_shape)
    co = int(layer.params["out_channels"])
    cig, cog = c // g, co // g
    if kernel.shape != (kh, kw, cig, co):
        raise ValidationError(f"layer {layer.id!r}: kernel shape {kernel.shape} mismatch")
    perm = (shuffle_permutation(g, co) if layer.params.get("channel_shuffle")
            else np.arange(co, dtype=np.int64))
    rows, cols, ws, params = [], [], [], []
    ics = np.arange(cig, dtype=np.int64)
    for grp in range(g):
        ocs = grp * cog + np.arange(cog, dtype=np.int64)  # pre-shuffle out channels
        for oy in range(oh):
            for ox in range(ow):
                out_sp = oy * ow + ox
                for ky in range(kh):
                    iy = oy * sy - py + ky
                    if iy < 0 or iy >= h:
                        continue
                    for kx in range(kw):
                        ix = ox * sx - px + kx
                        if ix < 0 or ix >= w:
                            continue
                        in_sp = iy * w + ix
                        r = out_sp * co + np.broadcast_to(perm[ocs], (cig, cog))
                        cl = in_sp * c + np.broadcast_to((grp * cig + ics)[:, None], (cig, cog))
                        pv = (((ky * kw + kx) * cig + ics)[:, None]) * co + ocs
                        rows.append(r.ravel())
                        cols.append(cl.ravel())
                        ws.append(kernel[ky, kx][:, ocs].ravel())
                        params.append(pv.ravel())
    return _finish_block(rows, cols, ws, params)


def expand_pool(layer: LayerSpec, in_shape: TensorShape) -> EdgeBlock:
    """Pooling block: every in-window edge carries the fixed weight 0.01/p."""
    p = int(layer.params["window"])
    sy, sx = _as_pair(layer.params.get("stride", p), "stride", layer.id)
    py, px = _as_pair(layer.params.get("padding", 0), "padding", layer.id)
    h, w, c = in_shape.dims
    if p > h + 2 * py or p > w + 2 * px:
        raise ValidationError(f"layer {layer.id!r}: pool window larger than padded input")
    oh = (h + 2 * py - p) // sy + 1
    ow = (w + 2 * px - p) // sx + 1
    weight = POOL_WEIGHT_SCALE / p
    cs = np.arange(c, dtype=np.int64)
    rows, cols = [], []
    for oy in range(oh):
        for ox in range(ow):
            out_sp = oy * ow + ox
            for ky in range(p):
                iy = oy * sy - py + ky
                if iy < 0 or iy >= h:
                    continue
                for kx in range(p):
                    ix = ox * sx - px + kx
                    if ix < 0 or ix >= w:
                        continue
                    in_sp = iy * w + ix
                    rows.append(out_sp * c + cs)
                    cols.append(in_sp * c + cs)
    rows = np.concatenate(rows) if rows else np.empty(0, np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, np.int64)
    return EdgeBlock(rows, cols, np.full(len(rows), weight), np.full(len(rows), -1, np.int64))


def expand_dense(layer: LayerSpec, matrix: np.ndarray, in_shape: TensorShape) -> EdgeBlock:
    nin, nout = matrix.shape
    if nin != in_shape.count:
        raise ValidationError(f"layer {layer.id!r}: dense matrix rows {nin} != input {in_shape.count}")
    cols, rows = np.nonzero(matrix)  # (in, out) pairs
    return EdgeBlock(rows.astype(np.int64), cols.astype(np.int64),
                     matrix[cols, rows], cols * nout + rows)


def _finish_block(rows, cols, ws, params) -> EdgeBlock:
    rows = np.concatenate(rows) if rows else np.empty(0, np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, np.int64)
    ws = np.concatenate(ws) if ws else np.empty(0, np.float64)
    params = np.concatenate(params) if params else np.empty(0, np.int64)
    keep = ws != 0.0
    return EdgeBlock(rows[keep], cols[keep], ws[keep], params[keep])


# ---------------------------------------------------------------------------
# Assembly and symmetrization
# ---------------------------------------------------------------------------

def assemble(manifest: NetworkManifest, store: WeightStore) -> SignedSparseGraph:
    """Build the full adjacency DAG of a validated manifest."""
    bearing = manifest.bearing_layers()
    infos: list[LayerInfo] = []
    offset = 0
    for lay in bearing:
        cnt = manifest.shapes[lay.id].count
        pcount = 0
        if lay.kind in WEIGHTED_KINDS:
            pcount = store[lay.weight_ref].size
        infos.append(LayerInfo(lay.id, lay.kind, offset, offset + cnt, pcount))
        offset += cnt
    n = offset
    start = {li.id: li.start for li in infos}
    lidx = {li.id: i for i, li in enumerate(infos)}

    all_rows, all_cols, all_w, all_pl, all_pp = [], [], [], [], []

    def emit(block: EdgeBlock, layer_id: str, src_id: str):
        all_rows.append(block.rows + start[layer_id])
        all_cols.append(block.cols + start[src_id])
        all_w.append(block.weights)
        all_pl.append(np.full(block.nnz, lidx[layer_id], np.int32))
        all_pp.append(block.params)

    for lay in bearing:
        if lay.kind == "input":
            continue
        srcs = [manifest.bearing_source(i) for i in lay.inputs]
        in_shapes = [manifest.shapes[i] for i in lay.inputs]
        if lay.kind == "conv":
            emit(expand_conv(lay, layer_weights(manifest, store, lay), in_shapes[0]),
                 lay.id, srcs[0])
        elif lay.kind == "grouped_conv":
            emit(expand_grouped_conv(lay, layer_weights(manifest, store, lay), in_shapes[0]),
                 lay.id, srcs[0])
        elif lay.kind == "dense":
            emit(expand_dense(lay, layer_weights(manifest, store, lay), in_shapes[0]),
                 lay.id, srcs[0])
        elif lay.kind in POOL_KINDS:
            emit(expand_pool(lay, in_shapes[0]), lay.id, srcs[0])
        elif lay.kind == "add":
            cnt = manifest.shapes[lay.id].count
            idx = np.arange(cnt, dtype=np.int64)
            ones = np.ones(cnt)
            fixed = np.full(cnt, -1, np.int64)
            for src in srcs:
                emit(EdgeBlock(idx, idx, ones, fixed), lay.id, src)
        elif lay.kind == "concat":
            out_c = manifest.shapes[lay.id].channels
            spatial = manifest.shapes[lay.id].count // out_c
            coff = 0
            for src, shp in zip(srcs, in_shapes):
                ci = shp.channels
                sp = np.repeat(np.arange(spatial, dtype=np.int64), ci)
                cc = np.tile(np.arange(ci, dtype=np.int64), spatial)
                block = EdgeBlock(sp * out_c + coff + cc, sp * ci + cc,
                                  np.ones(spatial * ci), np.full(spatial * ci, -1, np.int64))
                emit(block, lay.id, src)
                coff += ci
        else:
            raise ValidationError(f"layer {lay.id!r}: cannot expand kind {lay.kind!r}")

    rows = np.concatenate(all_rows) if all_rows else np.empty(0, np.int64)
    cols = np.concatenate(all_cols) if all_cols else np.empty(0, np.int64)
    return from_edges(
        n, rows, cols,
        np.concatenate(all_w) if all_w else np.empty(0),
        prov_layer=np.concatenate(all_pl) if all_pl else np.empty(0, np.int32),
        prov_param=np.concatenate(all_pp) if all_pp else np.empty(0, np.int64),
        layers=infos,
    )


class SymmetrizedView:
    """A_u = A + A^T of a graph, with cached absolute row sums."""

    def __init__(self, graph: SignedSparseGraph):
        self.graph = graph
        a = graph.to_scipy()
        self._au = (a + a.T).tocsr()
        self._au.sort_indices()
        self.u_indptr = self._au.indptr.astype(np.int64)
        self.u_indices = self._au.indices.astype(np.int64)
        self.u_data = self._au.data.astype(np.float64)
        self.row_abs = np.asarray(abs(self._au).sum(axis=1)).ravel()
        self.total_abs = float(self.row_abs.sum())

    @property
    def n(self) -> int:
        return self.graph.n

    def rowsums(self, spins: np.ndarray) -> np.ndarray:
        """rowsum = S A_u S 1, recomputed from scratch."""
        s = np.asarray(spins, dtype=np.float64)
        return s * (self._au @ s)


def symmetrize(graph: SignedSparseGraph) -> SymmetrizedView:
    return SymmetrizedView(graph)


# ---------------------------------------------------------------------------
# Graph file format (.fsg)
# ---------------------------------------------------------------------------

def save_graph(path: str | Path, graph: SignedSparseGraph) -> None:
    meta = {
        "version": 1,
        "layers": [
            {"id": li.id, "kind": li.kind, "start": li.start, "stop": li.stop,
             "param_count": li.param_count}
            for li in (graph.layers or ())
        ],
    }
    blob = json.dumps(meta).encode()
    with open(path, "wb") as fh:
        fh.write(GRAPH_MAGIC)
        fh.write(struct.pack("<QQ", graph.n, graph.nnz))
        fh.write(graph.indptr.astype("<u8").tobytes())
        fh.write(graph.indices.astype("<u8").tobytes())
        fh.write(graph.weights.astype("<f8").tobytes())
        fh.write(graph.prov_layer.astype("<i4").tobytes())
        fh.write(graph.prov_param.astype("<i8").tobytes())
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)


def load_graph(path: str | Path) -> SignedSparseGraph:
    with open(path, "rb") as fh:
        if fh.read(8) != GRAPH_MAGIC:
            raise ValidationError(f"{path}: bad graph magic")
        n, nnz = struct.unpack("<QQ", fh.read(16))
        indptr = np.frombuffer(fh.read(8 * (n + 1)), dtype="<u8").astype(np.int64)
        indices = np.frombuffer(fh.read(8 * nnz), dtype="<u8").astype(np.int64)
        weights = np.frombuffer(fh.read(8 * nnz), dtype="<f8")
        prov_layer = np.frombuffer(fh.read(4 * nnz), dtype="<i4")
        prov_param = np.frombuffer(fh.read(8 * nnz), dtype="<i8")
        (meta_len,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(meta_len).decode())
    layers = [LayerInfo(d["id"], d["kind"], d["start"], d["stop"], d["param_count"])
              for d in meta.get("layers", [])]
    return SignedSparseGraph(n, indptr, indices, weights, prov_layer, prov_param,
                             layers or None)
