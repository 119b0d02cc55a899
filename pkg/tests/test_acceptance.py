"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""

import json
import time
from pathlib import Path

import networkx as nx
import numpy as np
import pytest

import frustra
from frustra import (
    DescentState,
    LayerSpec,
    ReplicaConfig,
    TensorShape,
    WeightStore,
    assemble,
    brute_force_frustration,
    extract_active,
    forward,
    from_edges,
    generate_synthetic,
    heuristic_ground_state,
    jacobian_sign_check,
    run_replicas,
    sample_kink_free_input,
    symmetrize,
    welch_t,
)
from frustra.frustration import ZERO_THRESHOLD_SCALE, active_frustration
from frustra.gauging import gauged_balanced_variant, is_balanced_under
from frustra.model_ir import build_manifest
from frustra.monotonicity import (
    lambda_from_samples,
    order_from_spins,
    random_null_order,
    run_protocol,
)
from frustra.null_models import NullModelSpec, n1_shuffle, n2_shuffle, n3_reinit

from conftest import gauged_positive_graph, random_signed_graph

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "exported_toy_cnn"


def ok(name, detail=""):
    print(f"[ACCEPTANCE] {name}: PASS {detail}")


def test_oracle_equivalence_200_small_graphs():
    rng = np.random.default_rng(100)
    t0 = time.monotonic()
    exact_hits = 0
    for trial in range(200):
        n = int(rng.integers(4, 15))
        g = random_signed_graph(rng, n, density=0.45, weighted=bool(trial % 2))
        v = symmetrize(g)
        eps_exact, _ = brute_force_frustration(v, cap=14)
        best = min(
            heuristic_ground_state(v, seed=k, nu=2 * n).epsilon_hat
            for k in range(20)
        )
        assert best >= eps_exact - 1e-12, f"heuristic beat brute force on trial {trial}"
        exact_hits += abs(best - eps_exact) <= 1e-9
    elapsed = time.monotonic() - t0
    assert exact_hits >= 180, f"only {exact_hits}/200 matched the exact optimum"
    assert elapsed < 60.0
    ok("oracle equivalence", f"({exact_hits}/200 exact, {elapsed:.1f}s)")


def test_balance_detection_100_gauged_graphs():
    rng = np.random.default_rng(200)
    t0 = time.monotonic()
    for trial in range(100):
        n = int(rng.integers(200, 10_001))
        g, _ = gauged_positive_graph(rng, n)
        v = symmetrize(g)
        best = min(
            (heuristic_ground_state(v, seed=k, nu=3 * n) for k in range(4)),
            key=lambda r: r.epsilon_hat,
        )
        assert best.epsilon_hat == 0.0, f"trial {trial}: eps {best.epsilon_hat}"
        s = best.spins.astype(np.float64)
        rows = g.row_indices()
        assert np.all(s[rows] * g.weights * s[g.indices] >= 0.0)
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0, f"balance detection took {elapsed:.1f}s"
    ok("balance detection", f"(100 graphs, {elapsed:.1f}s)")


def test_triangle_and_four_cycle_closed_forms():
    tri = from_edges(3, [1, 2, 2], [0, 0, 1], [1.0, 1.0, -1.0])
    cyc = from_edges(4, [1, 2, 3, 3], [0, 1, 2, 0], [1.0, 1.0, 1.0, -1.0])
    for g, expect in ((tri, 1 / 3), (cyc, 1 / 4)):
        v = symmetrize(g)
        e_brute, _ = brute_force_frustration(v)
        assert e_brute == expect
        rep = run_replicas(v, ReplicaConfig(replica_count=8, initial_flips=6, seed=0))
        assert rep.best.epsilon_hat == expect
    ok("triangle/4-cycle closed cases", "(1/3 and 1/4 exact)")


def test_energy_monotone_descent_and_incremental_state():
    rng = np.random.default_rng(300)
    for trial in range(50):
        n = int(rng.integers(20, 90))
        g = random_signed_graph(rng, n, density=0.3, weighted=True)
        v = symmetrize(g)
        res = heuristic_ground_state(v, seed=trial, nu=2 * n, record_trace=True)
        if res.flips_performed > 1:
            assert np.all(np.diff(res.energy_trace) < 0)
        # replay the same descent with the numpy reference, checking the
        # incremental row sums against a fresh recomputation at every flip
        st = DescentState(v, _initial_spins(v.n, 2 * n, trial))
        thresh = ZERO_THRESHOLD_SCALE * v.total_abs
        tol = 1e-9 * v.total_abs
        for _ in range(res.flips_performed):
            i = st.most_negative(thresh)
            assert i is not None
            st.flip(i)
            assert np.abs(st.rowsums - st.recompute_rowsums()).max() <= tol
        assert st.most_negative(thresh) is None
        np.testing.assert_array_equal(st.spins, res.spins)
    ok("energy monotone descent", "(50 graphs, per-flip drift <= 1e-9*sum|A_u|)")


def _initial_spins(n, nu, seed):
    from frustra.frustration import random_spins

    return random_spins(n, nu, np.random.default_rng(seed))


def test_random_graph_baseline_dense_pm1():
    n = 200
    rows, cols = np.tril_indices(n, k=-1)
    rng = np.random.default_rng(400)
    w = rng.choice([-1.0, 1.0], len(rows))
    g = from_edges(n, rows, cols, w)
    rep = run_replicas(symmetrize(g), ReplicaConfig(replica_count=8,
                                                    initial_flips=n, seed=1))
    eps = rep.best.epsilon_hat
    assert 0.30 <= eps <= 0.50
    assert eps < 0.5
    ok("random-graph baseline", f"(eps_hat = {eps:.4f})")


def test_null_model_conservation_on_tiny_cnn():
    m, s = generate_synthetic(1, "tiny_cnn")
    g = assemble(m, s)
    weighted = [i for i, li in enumerate(g.layers)
                if li.kind in ("conv", "grouped_conv", "dense")]
    pool_sel = np.zeros(g.nnz, bool)
    for li, info in enumerate(g.layers):
        if info.kind in ("max_pool", "avg_pool"):
            pool_sel |= g.prov_layer == li

    g1 = n1_shuffle(g, seed=0)
    for li in weighted:
        mask = g.prov_layer == li
        slots = g.prov_param[mask]
        vals = g1.weights[mask]
        per_slot = {}
        for slot, v in zip(slots, vals):
            assert per_slot.setdefault(int(slot), v) == v  # repetition class intact
        before = sorted(set(zip(g.prov_param[mask], g.weights[mask])))
        assert sorted(v for _, v in before) == sorted(per_slot.values())
    np.testing.assert_array_equal(g.indices, g1.indices)
    np.testing.assert_array_equal(g.weights[pool_sel], g1.weights[pool_sel])

    g2 = n2_shuffle(g, seed=0)
    sel = np.isin(g.prov_layer, weighted)
    assert sorted(g.weights[sel]) == sorted(g2.weights[sel])
    np.testing.assert_array_equal(g.indptr, g2.indptr)
    np.testing.assert_array_equal(g.indices, g2.indices)
    np.testing.assert_array_equal(g.weights[pool_sel], g2.weights[pool_sel])

    _, g3 = n3_reinit(m, s, NullModelSpec("N3", 0, "xavier_uniform"))
    np.testing.assert_array_equal(g.indptr, g3.indptr)
    np.testing.assert_array_equal(g.indices, g3.indices)
    np.testing.assert_array_equal(g.weights[pool_sel], g3.weights[pool_sel])
    ok("null-model conservation", "(N1 multisets+classes, N2 multiset, N3 topology)")


def test_jacobian_sign_law_20_inputs():
    total_entries = 0
    for template, n_inputs in (("tiny_mlp", 10), ("tiny_cnn", 10)):
        m, s = generate_synthetic(1, template)
        g = assemble(m, s)
        for k in range(n_inputs):
            x = sample_kink_free_input(m, s, seed=k)
            rep = jacobian_sign_check(m, s, x, tolerance=1e-6, step=1e-4, graph=g)
            assert rep.passed, f"{template} input {k}: {rep.violations[:5]}"
            total_entries += rep.entries_checked
    ok("Jacobian sign law", f"(20 kink-free inputs, {total_entries} entries, 100% match)")


@pytest.fixture(scope="module")
def gauged_cnn_fixture():
    m, s = generate_synthetic(1, "tiny_cnn")
    gs, t = gauged_balanced_variant(m, s, seed=21)
    g = assemble(m, gs)
    assert is_balanced_under(g, t)
    rng = np.random.default_rng(500)
    images = [rng.uniform(0.0, 1.0, m.input_shape.count) for _ in range(50)]
    return m, gs, g, t, images


def test_monotone_construction_omega_one(gauged_cnn_fixture):
    m, gs, g, t, images = gauged_cnn_fixture
    order = order_from_spins(g, t)
    samples = run_protocol(m, gs, order, images, per_image=20,
                           magnitudes=(0.5, 1.0, 2.0, 4.0), seed=7)
    oms = samples.omegas()
    assert len(oms) == 50 * 20
    assert np.all(oms == 1.0)
    lam = lambda_from_samples(samples).lam
    assert lam == 0.5
    ok("monotone construction", "(1000/1000 omega = 1.0, lambda = 0.5)")


def test_random_order_null(gauged_cnn_fixture):
    m, gs, g, t, images = gauged_cnn_fixture
    null = random_null_order(m.input_shape.count, m.output_size)
    samples = run_protocol(m, gs, null, images, per_image=20,
                           magnitudes=(0.5, 1.0, 2.0, 4.0), seed=8)
    oms = samples.omegas()
    se = oms.std(ddof=1) / np.sqrt(len(oms))
    assert abs(oms.mean() - 0.5) < 3 * se
    lam = lambda_from_samples(samples).lam
    assert lam <= 0.05
    ok("random-order null", f"(mean omega = {oms.mean():.4f}, lambda = {lam:.4f})")


def test_lambda_extraction_closed_cases():
    from test_monotonicity import samples_from

    assert lambda_from_samples(samples_from([1.0] * 30)).lam == 0.5
    assert lambda_from_samples(samples_from([0.5] * 30)).lam == 0.0
    assert lambda_from_samples(samples_from([0.9] * 15 + [0.1] * 15)).lam == 0.4
    ok("lambda extraction", "(three analytic cases exact)")


def _micro_net(seed):
    rng = np.random.default_rng(seed)
    w1 = (rng.uniform(0.2, 1.0, (4, 4)) * rng.choice([-1, 1], (4, 4))).astype(np.float32)
    w2 = (rng.uniform(0.2, 1.0, (4, 3)) * rng.choice([-1, 1], (4, 3))).astype(np.float32)
    layers = [
        LayerSpec("input", "input"),
        LayerSpec("h", "dense", ("input",), {"out_features": 4}, "w1"),
        LayerSpec("r", "relu", ("h",)),
        LayerSpec("out", "dense", ("r",), {"out_features": 3}, "w2"),
    ]
    m = build_manifest(layers, TensorShape((4,)), 3)
    return m, WeightStore({"w1": w1, "w2": w2})


def test_active_subnetwork_criteria():
    # path + argmax properties on tiny_cnn
    m, s = generate_synthetic(1, "tiny_cnn")
    g = assemble(m, s)
    rng = np.random.default_rng(600)
    for _ in range(3):
        x = rng.uniform(0, 1, m.input_shape.count)
        tr = forward(m, s, x)
        act = extract_active(g, tr)
        dg = nx.DiGraph()
        dg.add_nodes_from(range(act.graph.n))
        dg.add_edges_from(zip(act.graph.indices, act.graph.row_indices()))
        out_local = int(np.flatnonzero(act.node_ids == act.output_node)[0])
        assert nx.ancestors(dg, out_local) | {out_local} == set(range(act.graph.n))
        # retained max-pool edges all point at window argmax inputs
        z = tr.global_state()
        lo, hi = g.node_index["pool1"]
        parent_members = {}
        rows_g = g.row_indices()
        for r in range(lo, hi):
            parent_members[r] = g.indices[g.indptr[r]:g.indptr[r + 1]]
        sub_rows = act.graph.row_indices()
        for rr, cc in zip(sub_rows, act.graph.indices):
            orig_r, orig_c = int(act.node_ids[rr]), int(act.node_ids[cc])
            if lo <= orig_r < hi:
                members = parent_members[orig_r]
                assert z[orig_c] == z[members].max()

    # epsilon_act vs brute force on micro networks with <= 20 active nodes
    from frustra.errors import NumericalError

    checked = 0
    for seed in range(10):
        mm, ss = _micro_net(seed)
        gg = assemble(mm, ss)
        x = np.random.default_rng(seed).uniform(-1, 1, 4)
        try:
            act = extract_active(gg, forward(mm, ss, x))
        except NumericalError:
            continue  # every hidden unit dead: no active subnetwork
        if act.graph.n > 20 or act.graph.nnz == 0:
            continue
        exact, _ = brute_force_frustration(symmetrize(act.graph))
        rep = active_frustration(act.graph, ReplicaConfig(
            replica_count=10, initial_flips=8, seed=seed))
        assert abs(rep.best.epsilon_hat - exact) <= 1e-9
        checked += 1
    assert checked >= 4
    ok("active subnetwork", f"(paths+argmax on tiny_cnn, {checked} brute-force matches)")


# -- secondary-component criteria ------------------------------------------

needs_fixture = pytest.mark.skipif(
    not (FIXTURE_DIR / "manifest.json").exists(),
    reason="exported toy CNN fixture not present",
)


@needs_fixture
def test_trained_fixture_trend():
    manifest, store = frustra.load_model(FIXTURE_DIR)
    g = assemble(manifest, store)
    v = symmetrize(g)
    real = run_replicas(v, ReplicaConfig(replica_count=20, initial_flips=3 * g.n, seed=3))
    eps_r = [r.epsilon_hat for r in real.results]
    eps_n1, eps_n2 = [], []
    for inst in range(20):
        r1 = run_replicas(symmetrize(n1_shuffle(g, 100 + inst)),
                          ReplicaConfig(replica_count=2, initial_flips=3 * g.n, seed=inst))
        r2 = run_replicas(symmetrize(n2_shuffle(g, 200 + inst)),
                          ReplicaConfig(replica_count=2, initial_flips=3 * g.n, seed=inst))
        eps_n1.append(r1.best.epsilon_hat)
        eps_n2.append(r2.best.epsilon_hat)
    t1, df1, p1 = welch_t(eps_r, eps_n1)
    t2, df2, p2 = welch_t(eps_r, eps_n2)
    ordering = (bool(np.mean(eps_r) <= np.mean(eps_n1)),
                bool(np.mean(eps_n1) <= np.mean(eps_n2)))
    # the comparison and flags are the acceptance target; the ordering
    # itself is an empirical expectation at scale, reported not asserted
    ok("trained-fixture trend",
       f"(means R/N1/N2 = {np.mean(eps_r):.4f}/{np.mean(eps_n1):.4f}/"
       f"{np.mean(eps_n2):.4f}, welch p = {p1:.2e}/{p2:.2e}, "
       f"ordering flags = {ordering})")


@needs_fixture
def test_cross_engine_inference():
    manifest, store = frustra.load_model(FIXTURE_DIR)
    doc = json.loads((FIXTURE_DIR / "reference_activations.json").read_text())
    worst = 0.0
    for fixture in doc["fixtures"]:
        x = frustra.read_blob(FIXTURE_DIR / fixture["input"]).astype(np.float64)
        tr = forward(manifest, store, x)
        for layer_id, ref in fixture["states"].items():
            ref = np.asarray(ref, dtype=np.float64)
            got = tr.states[layer_id]
            scale = max(1e-6, float(np.abs(ref).max()))
            rel = float(np.abs(got - ref).max()) / scale
            worst = max(worst, rel)
            assert rel <= 1e-4, f"{fixture['input']}:{layer_id} rel err {rel:.2e}"
    ok("cross-engine inference", f"(max relative error {worst:.2e})")
