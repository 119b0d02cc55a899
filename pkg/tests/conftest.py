import numpy as np
import pytest

from frustra import from_edges, heuristic_ground_state, symmetrize


def random_signed_graph(rng, n, density=0.3, weighted=False):
    """Random DAG on n nodes; edges on the strict lower triangle."""
    tri = np.tril(rng.random((n, n)) < density, k=-1)
    rows, cols = np.nonzero(tri)
    if len(rows) == 0:
        rows, cols = np.array([1]), np.array([0])
    if weighted:
        w = rng.uniform(0.1, 1.0, len(rows)) * rng.choice([-1.0, 1.0], len(rows))
    else:
        w = rng.choice([-1.0, 1.0], len(rows))
    return from_edges(n, rows, cols, w)


def gauged_positive_graph(rng, n, avg_degree=8):
    """Connected all-positive graph conjugated by a random gauge.

    Edges are sampled uniformly over node pairs (plus a chain for
    connectivity); the result is structurally balanced with gauge t.
    """
    m = max(1, int(avg_degree * n / 2 * 1.15))
    a = rng.integers(0, n, m)
    b = rng.integers(0, n, m)
    keep = a != b
    rows = np.maximum(a[keep], b[keep])
    cols = np.minimum(a[keep], b[keep])
    keys = np.unique(rows * n + cols)
    if n > 1:
        chain = np.arange(1, n) * n + np.arange(n - 1)
        keys = np.union1d(keys, chain)
    rows, cols = keys // n, keys % n
    w = rng.uniform(0.1, 1.0, len(rows))
    t = rng.choice([-1, 1], n).astype(np.int8)
    return from_edges(n, rows, cols, t[rows] * w * t[cols]), t


@pytest.fixture(scope="session", autouse=True)
def warm_kernel():
    """Compile the descent kernel once so timed tests measure the algorithm."""
    rng = np.random.default_rng(0)
    g = random_signed_graph(rng, 6, density=0.8)
    heuristic_ground_state(symmetrize(g), seed=0, nu=4)
