"""Frustration-index estimation on weighted signed DAGs.

The normalized energy of a spin assignment s over adjacency A is

    e(s) = sum_ij(|A| - S A S) / (2 sum_ij |A|),   S = diag(s),

equivalently e(s) = (total weight of frustrated edges) / (total weight),
so 0 <= e(s) <= 1 and e = 0 exactly on structurally balanced graphs.
The frustration index is the minimum of e over all 2^n assignments.

The estimator is a greedy descent on the symmetrized matrix A_u = A + A^T:
start from a gauge with nu random single-spin flips, then repeatedly flip
the spin with the most negative row sum of S A_u S until none remains.
Each flip raises 1^T S A_u S 1 by -4 * rowsum[i] > 0, so the energy
strictly decreases and termination is guaranteed; an iteration cap M is
kept as a safety net.  Row sums are maintained incrementally in O(deg)
per flip, with the pending minimum tracked in a lazy binary heap keyed by
(rowsum, node index), which makes the argmin selection deterministic
(ties break to the lowest node index).

Row sums within -1e-12 * sum|A_u| of zero are treated as nonnegative to
avoid flip cycling on numerically zero sums, and the final energy is
recomputed from scratch to wash out incremental drift.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import NumericalError, ValidationError
from .graph_builder import SignedSparseGraph, SymmetrizedView, symmetrize

ZERO_THRESHOLD_SCALE = 1e-12


def check_spins(spins: np.ndarray, n: int) -> np.ndarray:
    spins = np.asarray(spins)
    if spins.shape != (n,):
        raise ValidationError(f"spin vector has shape {spins.shape}, expected ({n},)")
    if not np.all(np.abs(spins) == 1):
        raise ValidationError("spin entries must be +1 or -1")
    return spins.astype(np.int8)


@dataclass
class GroundStateResult:
    epsilon_hat: float
    spins: np.ndarray
    flips_performed: int
    replica_seed: int
    energy_trace: np.ndarray | None = None


@dataclass
class ReplicaConfig:
    replica_count: int = 80
    initial_flips: int = 1_000_000
    max_iterations: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.replica_count < 1:
            raise ValidationError("replica_count must be >= 1")
        if self.initial_flips < 0:
            raise ValidationError("initial_flips must be >= 0")


@dataclass
class ReplicaSet:
    results: list[GroundStateResult]
    best: GroundStateResult = field(init=False)

    def __post_init__(self):
        self.best = min(self.results, key=lambda r: r.epsilon_hat)

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([r.epsilon_hat for r in self.results])


def energy(view: SymmetrizedView, spins: np.ndarray) -> float:
    """e(s) in [0, 1]; exact zero when every edge is unfrustrated."""
    g = view.graph
    if g.nnz == 0:
        raise NumericalError("energy is undefined on a graph without edges")
    s = check_spins(spins, g.n).astype(np.float64)
    rows = g.row_indices()
    total = float(np.abs(g.weights).sum())
    aligned = float(np.sum(s[rows] * s[g.indices] * g.weights))
    return (total - aligned) / (2.0 * total)


class DescentState:
    """Spins plus incrementally maintained row sums of S A_u S.

    Pure-numpy reference for the compiled descent kernel; `flip` applies
    the O(deg) update rule and is an involution, `recompute_rowsums`
    rebuilds the state from scratch for drift checks.
    """

    def __init__(self, view: SymmetrizedView, spins: np.ndarray):
        self.view = view
        self.spins = check_spins(spins, view.n).copy()
        self.rowsums = view.rowsums(self.spins)

    def flip(self, i: int) -> None:
        """Negate spin i: rowsum_i flips sign, each neighbor j loses
        2 s_i s_j A_u[j, i] (pre-flip s_i)."""
        indptr, indices, data = self.view.u_indptr, self.view.u_indices, self.view.u_data
        lo, hi = indptr[i], indptr[i + 1]
        nb = indices[lo:hi]
        si = float(self.spins[i])
        self.rowsums[nb] -= 2.0 * si * self.spins[nb] * data[lo:hi]
        self.rowsums[i] = -self.rowsums[i]
        self.spins[i] = -self.spins[i]

    def recompute_rowsums(self) -> np.ndarray:
        return self.view.rowsums(self.spins)

    def most_negative(self, threshold: float) -> int | None:
        i = int(np.argmin(self.rowsums))
        return i if self.rowsums[i] < -threshold else None

    def energy(self) -> float:
        return 0.5 * (1.0 - self.rowsums.sum() / self.view.total_abs)


@njit(cache=True, nogil=True)
def _descend_kernel(indptr, indices, data, s, max_iter, thresh, trace, record):
    n = len(s)
    rowsum = np.empty(n, dtype=np.float64)
    total = 0.0
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * s[indices[k]]
        rowsum[i] = s[i] * acc
        total += rowsum[i]

    stamp = np.zeros(n, dtype=np.int64)
    cap = 64 + 2 * n
    hv = np.empty(cap, dtype=np.float64)
    hn = np.empty(cap, dtype=np.int64)
    hs = np.empty(cap, dtype=np.int64)
    size = 0
    for i in range(n):
        if rowsum[i] < -thresh:
            # push (initial stamp 0); sift up
            idx = size
            hv[idx] = rowsum[i]
            hn[idx] = i
            hs[idx] = 0
            size += 1
            while idx > 0:
                par = (idx - 1) // 2
                if hv[idx] < hv[par] or (hv[idx] == hv[par] and hn[idx] < hn[par]):
                    hv[idx], hv[par] = hv[par], hv[idx]
                    hn[idx], hn[par] = hn[par], hn[idx]
                    hs[idx], hs[par] = hs[par], hs[idx]
                    idx = par
                else:
                    break

    flips = 0
    while flips < max_iter:
        # pop entries until a live one surfaces
        node = -1
        while size > 0:
            topn = hn[0]
            tops = hs[0]
            size -= 1
            hv[0] = hv[size]
            hn[0] = hn[size]
            hs[0] = hs[size]
            idx = 0
            while True:
                left = 2 * idx + 1
                right = left + 1
                best = idx
                if left < size and (hv[left] < hv[best]
                                    or (hv[left] == hv[best] and hn[left] < hn[best])):
                    best = left
                if right < size and (hv[right] < hv[best]
                                     or (hv[right] == hv[best] and hn[right] < hn[best])):
                    best = right
                if best == idx:
                    break
                hv[idx], hv[best] = hv[best], hv[idx]
                hn[idx], hn[best] = hn[best], hn[idx]
                hs[idx], hs[best] = hs[best], hs[idx]
                idx = best
            if tops == stamp[topn]:
                node = topn
                break
        if node < 0:
            break

        i = node
        ri = rowsum[i]
        si = s[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            rowsum[j] -= 2.0 * si * s[j] * data[k]
            stamp[j] += 1
            if rowsum[j] < -thresh:
                if size == cap:
                    newcap = cap * 2
                    nhv = np.empty(newcap, dtype=np.float64)
                    nhn = np.empty(newcap, dtype=np.int64)
                    nhs = np.empty(newcap, dtype=np.int64)
                    nhv[:cap] = hv
                    nhn[:cap] = hn
                    nhs[:cap] = hs
                    hv, hn, hs = nhv, nhn, nhs
                    cap = newcap
                idx = size
                hv[idx] = rowsum[j]
                hn[idx] = j
                hs[idx] = stamp[j]
                size += 1
                while idx > 0:
                    par = (idx - 1) // 2
                    if hv[idx] < hv[par] or (hv[idx] == hv[par] and hn[idx] < hn[par]):
                        hv[idx], hv[par] = hv[par], hv[idx]
                        hn[idx], hn[par] = hn[par], hn[idx]
                        hs[idx], hs[par] = hs[par], hs[idx]
                        idx = par
                    else:
                        break
        rowsum[i] = -ri
        stamp[i] += 1
        s[i] = -si
        total -= 4.0 * ri
        if record:
            trace[flips] = total
        flips += 1

    return flips


def random_spins(n: int, nu: int, rng: np.random.Generator) -> np.ndarray:
    """Apply nu single-spin gauge flips (uniform with replacement) to all-ones."""
    if nu == 0:
        return np.ones(n, dtype=np.int8)
    counts = np.bincount(rng.integers(0, n, size=nu), minlength=n)
    return (1 - 2 * (counts % 2)).astype(np.int8)


def _resolve_max_iter(view: SymmetrizedView, max_iter: int | None) -> int:
    return max_iter if max_iter is not None else 100 * view.n + 10_000


def heuristic_ground_state(
    view: SymmetrizedView,
    seed: int = 0,
    nu: int = 0,
    max_iter: int | None = None,
    record_trace: bool = False,
) -> GroundStateResult:
    """One replica of the greedy gauge-flip descent."""
    if view.graph.nnz == 0:
        raise NumericalError("cannot estimate frustration of a graph without edges")
    max_iter = _resolve_max_iter(view, max_iter)
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    rng = np.random.default_rng(seed)
    s = random_spins(view.n, nu, rng)
    trace_buf = np.empty(max_iter if record_trace else 0, dtype=np.float64)
    flips = _descend_kernel(
        view.u_indptr, view.u_indices, view.u_data, s,
        max_iter, ZERO_THRESHOLD_SCALE * view.total_abs, trace_buf, record_trace,
    )
    trace = None
    if record_trace:
        trace = 0.5 * (1.0 - trace_buf[:flips] / view.total_abs)
    return GroundStateResult(
        epsilon_hat=energy(view, s),
        spins=s,
        flips_performed=int(flips),
        replica_seed=seed,
        energy_trace=trace,
    )


def _thread_count(n_tasks: int) -> int:
    cap = os.environ.get("FRUSTRA_THREADS")
    cap = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_tasks, cap, os.cpu_count() or 1))


def run_replicas(view: SymmetrizedView, config: ReplicaConfig) -> ReplicaSet:
    """Independent replicas r = 0..R-1 seeded with config.seed ^ r.

    Replicas share the read-only view; scheduling does not affect the
    result since every replica is deterministic in its own seed.
    """
    seeds = [config.seed ^ r for r in range(config.replica_count)]

    def one(seed):
        return heuristic_ground_state(view, seed=seed, nu=config.initial_flips,
                                      max_iter=config.max_iterations)

    workers = _thread_count(len(seeds))
    if workers == 1:
        results = [one(sd) for sd in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, seeds))
    return ReplicaSet(results)


def brute_force_frustration(
    view: SymmetrizedView, cap: int = 20, chunk: int = 1 << 14
) -> tuple[float, np.ndarray]:
    """Exact minimum of e(s) over the 2^(n-1) sign classes (s[0] fixed +1).

    Global spin flip leaves the energy invariant, so fixing one spin is
    lossless.  Intended as an oracle for small graphs.
    """
    g = view.graph
    n = g.n
    if n > cap:
        raise ValidationError(f"brute force capped at {cap} nodes, graph has {n}")
    if g.nnz == 0:
        raise NumericalError("frustration is undefined on a graph without edges")
    rows = g.row_indices()
    cols = g.indices
    w = g.weights
    total = float(np.abs(w).sum())
    n_assign = 1 << (n - 1)
    best_e = np.inf
    best_spins = None
    abs_w = np.abs(w)
    for lo in range(0, n_assign, chunk):
        codes = np.arange(lo, min(lo + chunk, n_assign), dtype=np.uint64)
        # bit b of the code drives spin b+1; spin 0 stays +1
        bits = (codes[:, None] >> np.arange(n - 1, dtype=np.uint64)[None, :]) & 1
        spins = np.ones((len(codes), n), dtype=np.int8)
        spins[:, 1:] = 1 - 2 * bits.astype(np.int8)
        # per-edge frustrated weight is exactly 0 or 2|w|, so balanced
        # assignments sum to an exact 0.0
        prod = (spins[:, rows] * spins[:, cols]).astype(np.float64)
        e = (abs_w[None, :] - prod * w[None, :]).sum(axis=1) / (2.0 * total)
        k = int(np.argmin(e))
        if e[k] < best_e:
            best_e = float(e[k])
            best_spins = spins[k].copy()
    return best_e, best_spins


def active_frustration(act_graph: SignedSparseGraph, config: ReplicaConfig) -> ReplicaSet:
    """Frustration of an active subnetwork through the identical pipeline."""
    if act_graph.nnz == 0:
        raise NumericalError("active subnetwork has no edges")
    return run_replicas(symmetrize(act_graph), config)
