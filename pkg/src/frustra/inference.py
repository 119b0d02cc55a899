"""Forward evaluation, active subnetworks, and the Jacobian sign check.

States are kept per node-bearing layer; a node's state is the value after
the layer's whole decoration chain (batch norm, ReLU, ...).  Softmax never
alters the stored state: logits are the pre-softmax output and the
predicted class is their argmax (lowest index on ties).  Dropout is the
identity.  Arithmetic is float64 even though blobs are float32, which
leaves headroom for the finite-difference checks.

The per-node indicator is 1 unless a ReLU step in the node's decoration
chain received a nonpositive input.  Max-pool nodes stay active but keep
only their argmax edges in the active subnetwork; average pooling keeps
the whole window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .graph_builder import SignedSparseGraph, shuffle_permutation
from .model_ir import (
    LRN_DEFAULTS,
    POOL_KINDS,
    LayerSpec,
    NetworkManifest,
    WeightStore,
    _as_pair,
    layer_bias,
    layer_weights,
    validate_store,
)


@dataclass
class ActivationTrace:
    preactivations: dict[str, np.ndarray]
    states: dict[str, np.ndarray]
    indicator: np.ndarray  # uint8 over all graph nodes
    logits: np.ndarray
    predicted_class: int
    probabilities: np.ndarray | None
    kink_margin: float
    node_offsets: dict[str, tuple[int, int]]

    def global_state(self) -> np.ndarray:
        z = np.empty(self.indicator.shape[0])
        for lid, (a, b) in self.node_offsets.items():
            z[a:b] = self.states[lid]
        return z


@dataclass
class ActiveSubgraph:
    graph: SignedSparseGraph
    node_ids: np.ndarray  # original node index per compact node
    output_node: int  # original index of the retained output


def _window_plan(h, w, kh, kw, sy, sx, py, px):
    """(cols, mask): per output position, flat input positions of the
    window taps in row-major tap order; -1 (masked) where padding falls."""
    oh = (h + 2 * py - kh) // sy + 1
    ow = (w + 2 * px - kw) // sx + 1
    cols = np.full((oh * ow, kh * kw), -1, dtype=np.int64)
    for oy in range(oh):
        for ox in range(ow):
            o = oy * ow + ox
            for ky in range(kh):
                iy = oy * sy - py + ky
                if iy < 0 or iy >= h:
                    continue
                for kx in range(kw):
                    ix = ox * sx - px + kx
                    if 0 <= ix < w:
                        cols[o, ky * kw + kx] = iy * w + ix
    return cols, cols >= 0


class Executor:
    """Precompiled forward evaluator for one (manifest, store) pair."""

    def __init__(self, manifest: NetworkManifest, store: WeightStore):
        validate_store(manifest, store)
        self.manifest = manifest
        self.bearing = manifest.bearing_layers()
        self.offsets: dict[str, tuple[int, int]] = {}
        off = 0
        for lay in self.bearing:
            cnt = manifest.shapes[lay.id].count
            self.offsets[lay.id] = (off, off + cnt)
            off += cnt
        self.n = off
        self.chains = {lay.id: manifest.decoration_chain(lay.id) for lay in self.bearing}
        self._plan: dict[str, dict] = {}
        for lay in self.bearing:
            self._plan[lay.id] = self._compile(lay, store)

    def _compile(self, lay: LayerSpec, store: WeightStore) -> dict:
        m = self.manifest
        if lay.kind == "input":
            return {}
        in_shape = m.shapes[lay.inputs[0]]
        if lay.kind in ("conv", "grouped_conv"):
            kh, kw = _as_pair(lay.params["kernel"], "kernel", lay.id)
            sy, sx = _as_pair(lay.params.get("stride", 1), "stride", lay.id)
            py, px = _as_pair(lay.params.get("padding", 0), "padding", lay.id)
            h, w, c = in_shape.dims
            cols, mask = _window_plan(h, w, kh, kw, sy, sx, py, px)
            kernel = layer_weights(m, store, lay).reshape(kh * kw, -1, lay.params["out_channels"])
            plan = {"cols": cols, "mask": mask, "kernel": kernel, "cin": c,
                    "bias": layer_bias(m, store, lay)}
            if lay.kind == "grouped_conv":
                g = int(lay.params["groups"])
                co = int(lay.params["out_channels"])
                plan["groups"] = g
                plan["perm"] = (shuffle_permutation(g, co)
                                if lay.params.get("channel_shuffle") else None)
            return plan
        if lay.kind == "dense":
            return {"matrix": layer_weights(m, store, lay), "bias": layer_bias(m, store, lay)}
        if lay.kind in POOL_KINDS:
            p = int(lay.params["window"])
            sy, sx = _as_pair(lay.params.get("stride", p), "stride", lay.id)
            py, px = _as_pair(lay.params.get("padding", 0), "padding", lay.id)
            h, w, c = in_shape.dims
            cols, mask = _window_plan(h, w, p, p, sy, sx, py, px)
            return {"cols": cols, "mask": mask, "cin": c}
        if lay.kind == "concat":
            return {"channels": [m.shapes[i].channels for i in lay.inputs],
                    "out_channels": m.shapes[lay.id].channels}
        return {}

    # -- single layer -------------------------------------------------------

    def layer_op(self, lay: LayerSpec, srcs: list[np.ndarray]) -> np.ndarray:
        """Raw layer output (preactivation) from flat source states."""
        plan = self._plan[lay.id]
        if lay.kind == "conv":
            x = srcs[0].reshape(-1, plan["cin"])
            patches = x[np.maximum(plan["cols"], 0)] * plan["mask"][:, :, None]
            out = np.tensordot(patches, plan["kernel"], axes=([1, 2], [0, 1]))
            return (out + plan["bias"]).ravel()
        if lay.kind == "grouped_conv":
            g = plan["groups"]
            x = srcs[0].reshape(-1, plan["cin"])
            cig = plan["cin"] // g
            co = plan["kernel"].shape[-1]
            cog = co // g
            out = np.empty((plan["cols"].shape[0], co))
            for grp in range(g):
                xg = x[:, grp * cig:(grp + 1) * cig]
                patches = xg[np.maximum(plan["cols"], 0)] * plan["mask"][:, :, None]
                kg = plan["kernel"][:, :, grp * cog:(grp + 1) * cog]
                out[:, grp * cog:(grp + 1) * cog] = np.tensordot(
                    patches, kg, axes=([1, 2], [0, 1]))
            if plan["perm"] is not None:
                shuffled = np.empty_like(out)
                shuffled[:, plan["perm"]] = out
                out = shuffled
            return (out + plan["bias"]).ravel()
        if lay.kind == "dense":
            return srcs[0] @ plan["matrix"] + plan["bias"]
        if lay.kind == "max_pool":
            x = srcs[0].reshape(-1, plan["cin"])
            vals = np.where(plan["mask"][:, :, None], x[np.maximum(plan["cols"], 0)], -np.inf)
            return vals.max(axis=1).ravel()
        if lay.kind == "avg_pool":
            x = srcs[0].reshape(-1, plan["cin"])
            vals = x[np.maximum(plan["cols"], 0)] * plan["mask"][:, :, None]
            counts = plan["mask"].sum(axis=1)
            return (vals.sum(axis=1) / counts[:, None]).ravel()
        if lay.kind == "add":
            return np.sum(srcs, axis=0)
        if lay.kind == "concat":
            spatial = len(srcs[0]) // plan["channels"][0]
            parts = [s.reshape(spatial, c) for s, c in zip(srcs, plan["channels"])]
            return np.concatenate(parts, axis=1).ravel()
        raise ValidationError(f"layer {lay.id!r}: cannot evaluate kind {lay.kind!r}")

    def _apply_chain(self, lay: LayerSpec, q: np.ndarray):
        """Run the decoration chain; returns (state, active_mask, min_kink_margin)."""
        shape = self.manifest.shapes[lay.id]
        c = shape.channels if len(shape.dims) == 3 else shape.count
        z = q
        active = None
        margin = np.inf
        for deco in self.chains[lay.id]:
            if deco.kind == "relu":
                margin = min(margin, float(np.abs(z).min()) if z.size else np.inf)
                mask = z > 0
                active = mask if active is None else (active & mask)
                z = np.where(mask, z, 0.0)
            elif deco.kind == "batch_norm":
                p = deco.params
                g = np.asarray(p["gamma"])
                inv = 1.0 / np.sqrt(np.asarray(p["variance"]) + p["epsilon"])
                zz = z.reshape(-1, c)
                z = (g * inv * (zz - np.asarray(p["mean"])) + np.asarray(p["beta"])).ravel()
            elif deco.kind == "lrn":
                p = {**LRN_DEFAULTS, **deco.params}
                win = int(p["window"])
                r = win // 2
                zz = z.reshape(-1, c)
                s2 = np.cumsum(zz * zz, axis=1)
                hi = np.minimum(np.arange(c) + r, c - 1)
                lo = np.arange(c) - r - 1
                wsum = s2[:, hi] - np.where(lo >= 0, s2[:, np.maximum(lo, 0)], 0.0)
                k = p["k"] + (p["alpha"] / win) * wsum
                z = (zz / np.power(k, p["beta"])).ravel()
            elif deco.kind in ("dropout", "softmax"):
                pass  # identity on the stored state
            else:
                raise ValidationError(f"unknown decoration {deco.kind!r}")
        return z, active, margin

    def eval_layer(self, layer_id: str, src_states: dict[str, np.ndarray]):
        """(preactivation, state) of one bearing layer from given sources."""
        lay = self.manifest.by_id[layer_id]
        srcs = [src_states[self.manifest.bearing_source(i)] for i in lay.inputs]
        q = self.layer_op(lay, srcs)
        z, _, _ = self._apply_chain(lay, q)
        return q, z

    # -- full forward pass --------------------------------------------------

    def run(self, x: np.ndarray) -> ActivationTrace:
        m = self.manifest
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != m.input_shape.count:
            raise ValidationError(
                f"input has {x.size} elements, expected {m.input_shape.count}")
        states: dict[str, np.ndarray] = {}
        preacts: dict[str, np.ndarray] = {}
        indicator = np.ones(self.n, dtype=np.uint8)
        kink = np.inf
        for lay in self.bearing:
            if lay.kind == "input":
                q = x
            else:
                srcs = [states[m.bearing_source(i)] for i in lay.inputs]
                q = self.layer_op(lay, srcs)
                if lay.kind == "max_pool":
                    kink = min(kink, self._pool_gap(lay, states[m.bearing_source(lay.inputs[0])]))
            z, active, margin = self._apply_chain(lay, q)
            kink = min(kink, margin)
            if not np.all(np.isfinite(z)):
                raise NumericalError(f"layer {lay.id!r}: non-finite state")
            preacts[lay.id] = q
            states[lay.id] = z
            if active is not None:
                a, b = self.offsets[lay.id]
                indicator[a:b] = active.astype(np.uint8)
        out_lay = m.output_layer
        logits = states[out_lay.id]
        probs = None
        if any(d.kind == "softmax" for d in self.chains[out_lay.id]):
            e = np.exp(logits - logits.max())
            probs = e / e.sum()
        return ActivationTrace(
            preactivations=preacts,
            states=states,
            indicator=indicator,
            logits=logits,
            predicted_class=int(np.argmax(logits)),
            probabilities=probs,
            kink_margin=float(kink),
            node_offsets=dict(self.offsets),
        )

    def _pool_gap(self, lay: LayerSpec, src: np.ndarray) -> float:
        """Smallest positive max-vs-runner-up gap over all max-pool windows.

        Exact ties (typically several ReLU-clipped zeros) are excluded:
        with every tied member treated as an argmax they differentiate
        cleanly, whereas a tiny positive gap makes finite differences at
        a fixed step cross the reordering point.
        """
        plan = self._plan[lay.id]
        x = src.reshape(-1, plan["cin"])
        vals = np.where(plan["mask"][:, :, None], x[np.maximum(plan["cols"], 0)], -np.inf)
        if vals.shape[1] < 2:
            return np.inf
        part = np.sort(vals, axis=1)
        gap = part[:, -1] - part[:, -2]
        gap = gap[np.isfinite(gap) & (gap > 0)]
        return float(gap.min()) if gap.size else np.inf


def forward(manifest: NetworkManifest, store: WeightStore, x: np.ndarray) -> ActivationTrace:
    return Executor(manifest, store).run(x)


# ---------------------------------------------------------------------------
# Active subnetwork
# ---------------------------------------------------------------------------

def extract_active(graph: SignedSparseGraph, trace: ActivationTrace) -> ActiveSubgraph:
    """Restrict the graph to nodes/edges that transmit signal for one input.

    ReLU-inactive nodes lose all incident edges; max-pool outputs keep
    only edges to window argmax input(s); only the predicted output node
    is retained; nodes without a directed path to it are pruned.
    """
    if graph.layers is None:
        raise ValidationError("extract_active needs a graph with a layer table")
    if graph.n != trace.indicator.shape[0]:
        raise ValidationError("trace and graph disagree on node count")
    alive = trace.indicator.astype(bool).copy()
    out_start, out_stop = graph.node_index[_output_layer_id(graph)]
    retained = out_start + trace.predicted_class
    mask = np.zeros(graph.n, dtype=bool)
    mask[out_start:out_stop] = True
    mask[retained] = False
    alive[mask] = False

    rows = graph.row_indices()
    keep_edge = alive[rows] & alive[graph.indices]

    z = trace.global_state()
    for li in graph.layer_of_kind({"max_pool"}):
        info = graph.layers[li]
        for r in range(info.start, info.stop):
            lo, hi = graph.indptr[r], graph.indptr[r + 1]
            if lo == hi:
                continue
            members = graph.indices[lo:hi]
            vmax = z[members].max()
            keep_edge[lo:hi] &= z[members] == vmax

    # reverse reachability from the retained output over kept edges
    visited = np.zeros(graph.n, dtype=bool)
    visited[retained] = True
    stack = [retained]
    while stack:
        v = stack.pop()
        lo, hi = graph.indptr[v], graph.indptr[v + 1]
        for k in range(lo, hi):
            if keep_edge[k]:
                u = graph.indices[k]
                if not visited[u]:
                    visited[u] = True
                    stack.append(int(u))

    node_mask = visited
    edge_mask = keep_edge & visited[rows]
    if not edge_mask.any():
        raise NumericalError("active subnetwork is empty")
    sub, kept = graph.subgraph(node_mask, edge_mask)
    return ActiveSubgraph(graph=sub, node_ids=kept, output_node=int(retained))


def _output_layer_id(graph: SignedSparseGraph) -> str:
    return graph.layers[-1].id


# ---------------------------------------------------------------------------
# Jacobian sign law
# ---------------------------------------------------------------------------

@dataclass
class SignCheckReport:
    entries_checked: int
    violations: list[tuple] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def sample_kink_free_input(
    manifest: NetworkManifest,
    store: WeightStore,
    seed: int = 0,
    margin: float = 1e-3,
    max_tries: int = 200,
    scale: float = 1.0,
    executor: Executor | None = None,
) -> np.ndarray:
    """Random input whose ReLU preactivations and pool gaps clear `margin`."""
    ex = executor or Executor(manifest, store)
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        x = rng.uniform(-scale, scale, manifest.input_shape.count)
        if ex.run(x).kink_margin >= margin:
            return x
    raise NumericalError(f"no kink-free input found in {max_tries} tries (margin {margin})")


def jacobian_sign_check(
    manifest: NetworkManifest,
    store: WeightStore,
    x: np.ndarray,
    tolerance: float = 1e-6,
    step: float = 1e-4,
    graph: SignedSparseGraph | None = None,
    executor: Executor | None = None,
) -> SignCheckReport:
    """Compare finite differences of every layer-to-layer map against the
    sign pattern diag(I(z)) A, with max-pool rows masked to their argmax
    edges.  The input must be kink-free: central differences at `step`
    must not cross a ReLU kink or reorder a pool window.
    """
    from .graph_builder import assemble  # local import avoids a cycle at module load

    ex = executor or Executor(manifest, store)
    if graph is None:
        graph = assemble(manifest, store)
    trace = ex.run(x)
    if trace.kink_margin < 10 * step:
        raise NumericalError(
            f"input is within {trace.kink_margin:.2e} of a ReLU kink or pool tie; "
            f"need at least {10 * step:.2e} (resample the input)")

    rows = graph.row_indices()
    report = SignCheckReport(entries_checked=0)
    for lay in ex.bearing:
        if lay.kind == "input":
            continue
        l_start, l_stop = graph.node_index[lay.id]
        row_sel = (rows >= l_start) & (rows < l_stop)
        indicator = trace.indicator[l_start:l_stop]
        for src_ref in lay.inputs:
            src = manifest.bearing_source(src_ref)
            s_start, s_stop = graph.node_index[src]
            sel = row_sel & (graph.indices >= s_start) & (graph.indices < s_stop)
            block = np.zeros((l_stop - l_start, s_stop - s_start))
            block[rows[sel] - l_start, graph.indices[sel] - s_start] = graph.weights[sel]
            if lay.kind == "max_pool":
                ref = _maxpool_ref(graph, trace, lay.id, l_start, l_stop, s_start, s_stop)
            else:
                ref = np.sign(block)
            ref *= indicator[:, None]

            base = trace.states[src]
            others = {m: trace.states[m] for m in
                      (manifest.bearing_source(i) for i in lay.inputs)}
            for j in range(s_stop - s_start):
                zp = base.copy()
                zp[j] += step
                zm = base.copy()
                zm[j] -= step
                _, up = ex.eval_layer(lay.id, {**others, src: zp})
                _, um = ex.eval_layer(lay.id, {**others, src: zm})
                fd = (up - um) / (2 * step)
                fd_sign = np.where(np.abs(fd) <= tolerance, 0.0, np.sign(fd))
                bad = np.flatnonzero(fd_sign != ref[:, j])
                report.entries_checked += len(fd)
                for i in bad:
                    report.violations.append(
                        (lay.id, int(i), int(j), float(fd[i]), float(ref[i, j])))
    return report


def _maxpool_ref(graph, trace, layer_id, l_start, l_stop, s_start, s_stop):
    """Expected Jacobian signs of a max-pool block: +1 at argmax edges."""
    z = trace.global_state()
    ref = np.zeros((l_stop - l_start, s_stop - s_start))
    for r in range(l_start, l_stop):
        lo, hi = graph.indptr[r], graph.indptr[r + 1]
        members = graph.indices[lo:hi]
        in_block = (members >= s_start) & (members < s_stop)
        if not in_block.any():
            continue
        vals = z[members]
        ref[r - l_start, members[in_block] - s_start] = (vals == vals.max())[in_block]
    return ref
