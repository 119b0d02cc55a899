import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frustra import (
    ValidationError,
    assemble,
    generate_synthetic,
    symmetrize,
)
from frustra.frustration import ReplicaConfig, run_replicas
from frustra.gauging import gauged_balanced_variant, is_balanced_under
from frustra.monotonicity import (
    OmegaRecord,
    OmegaSampleSet,
    PartialOrderPair,
    class_stability,
    direction_consistency,
    lambda_from_samples,
    omega,
    order_from_spins,
    perturb,
    random_null_order,
    run_protocol,
)


class TestPerturb:
    def test_all_ones_signature_increases_every_pixel(self):
        x1 = np.zeros(20)
        x2 = perturb(x1, np.ones(20, np.int8), 1.0, rng=0)
        assert np.all(x2 - x1 > 0)

    def test_signed_difference_positive_for_any_signature(self):
        rng = np.random.default_rng(1)
        s_x = rng.choice([-1, 1], 30).astype(np.int8)
        x1 = rng.normal(size=30)
        x2 = perturb(x1, s_x, 2.0, rng=rng)
        assert np.all(s_x * (x2 - x1) > 0)

    def test_norm_matches_magnitude(self):
        x1 = np.zeros(192)
        for seed in range(10):
            x2 = perturb(x1, np.ones(192, np.int8), 4.0, rng=seed)
            assert 3.9 <= np.linalg.norm(x2 - x1) <= 4.1

    def test_nonpositive_magnitude_rejected(self):
        with pytest.raises(ValidationError):
            perturb(np.zeros(3), np.ones(3, np.int8), 0.0, rng=0)


class TestOmega:
    def test_equal_outputs_fully_aligned(self):
        y = np.array([0.3, -0.2, 1.0])
        assert omega(y, y, np.array([1, -1, 1])) == 1.0

    def test_half_aligned(self):
        assert omega(np.zeros(2), np.array([1.0, -1.0]), np.array([1, 1])) == 0.5

    def test_flipped_order(self):
        assert omega(np.zeros(2), np.array([-2.0, -3.0]), np.array([-1, -1])) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            omega(np.zeros(2), np.zeros(3), np.ones(3))

    @settings(max_examples=50, deadline=None)
    @given(data=st.data(), n=st.integers(1, 12))
    def test_forward_plus_backward_at_least_one(self, data, n):
        y1 = np.array(data.draw(st.lists(
            st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n)))
        y2 = np.array(data.draw(st.lists(
            st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n)))
        s = np.array(data.draw(st.lists(
            st.sampled_from([-1, 1]), min_size=n, max_size=n)))
        total = omega(y1, y2, s) + omega(y2, y1, s)
        assert total >= 1.0 - 1e-12
        if not np.any(y1 == y2):
            assert total == pytest.approx(1.0, abs=1e-12)


def samples_from(omegas, per_image=None):
    recs = []
    per_image = per_image or len(omegas)
    for i, om in enumerate(omegas):
        recs.append(OmegaRecord(i // per_image, i % per_image, 1.0, float(om),
                                1.0, 0, 0))
    return OmegaSampleSet(recs)


class TestLambda:
    def test_all_aligned_gives_half(self):
        assert lambda_from_samples(samples_from([1.0] * 40)).lam == 0.5

    def test_all_ambivalent_gives_zero(self):
        assert lambda_from_samples(samples_from([0.5] * 40)).lam == 0.0

    def test_split_point_nine_point_one(self):
        lam = lambda_from_samples(samples_from([0.9] * 20 + [0.1] * 20)).lam
        assert lam == pytest.approx(0.4, abs=0)

    def test_empty_errors(self):
        with pytest.raises(ValidationError):
            lambda_from_samples(OmegaSampleSet())

    @settings(max_examples=50, deadline=None)
    @given(oms=st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=60))
    def test_relabeling_invariance_and_range(self, oms):
        lam = lambda_from_samples(samples_from(oms)).lam
        flipped = lambda_from_samples(samples_from([1 - o for o in oms])).lam
        assert lam == pytest.approx(flipped, abs=1e-12)
        assert 0.0 <= lam <= 0.5
        # definition check: G(lam) >= 2 lam holds at the returned value
        devs = np.abs(np.array(oms) - 0.5)
        g = np.mean(devs >= lam - 1e-15)
        assert g >= 2 * lam - 1e-12


@pytest.fixture(scope="module")
def gauged_cnn():
    m, s = generate_synthetic(1, "tiny_cnn")
    gs, t = gauged_balanced_variant(m, s, seed=11)
    g = assemble(m, gs)
    assert is_balanced_under(g, t)
    return m, gs, g, t


class TestProtocol:
    def test_balanced_gauged_network_fully_aligned(self, gauged_cnn):
        m, gs, g, t = gauged_cnn
        order = order_from_spins(g, t)
        rng = np.random.default_rng(2)
        images = [rng.uniform(0, 1, m.input_shape.count) for _ in range(8)]
        smp = run_protocol(m, gs, order, images, per_image=6, seed=5)
        assert np.all(smp.omegas() == 1.0)
        assert lambda_from_samples(smp).lam == 0.5
        assert all(v == 1.0 for v in direction_consistency(smp).values())

    def test_ground_state_spins_give_same_order_as_gauge(self, gauged_cnn):
        m, gs, g, t = gauged_cnn
        rep = run_replicas(symmetrize(g), ReplicaConfig(replica_count=2,
                                                        initial_flips=4000, seed=3))
        assert rep.best.epsilon_hat == 0.0
        order = order_from_spins(g, rep.best.spins)
        # a ground state of a balanced graph is the gauge up to global flip
        flip = order.s_x[0] * t[: len(order.s_x)][0]
        np.testing.assert_array_equal(order.s_x * flip, t[: len(order.s_x)])

    def test_random_null_mean_near_half(self, gauged_cnn):
        m, gs, g, t = gauged_cnn
        rng = np.random.default_rng(3)
        images = [rng.uniform(0, 1, m.input_shape.count) for _ in range(10)]
        null = random_null_order(m.input_shape.count, m.output_size)
        smp = run_protocol(m, gs, null, images, per_image=10, seed=6)
        oms = smp.omegas()
        se = oms.std(ddof=1) / np.sqrt(len(oms))
        assert abs(oms.mean() - 0.5) < 3 * se
        frac = list(direction_consistency(smp).values())
        assert np.mean([(0.1 < f < 0.9) for f in frac]) > 0.5

    def test_deterministic(self, gauged_cnn):
        m, gs, g, t = gauged_cnn
        order = order_from_spins(g, t)
        images = [np.linspace(0, 1, m.input_shape.count)]
        a = run_protocol(m, gs, order, images, per_image=4, seed=9)
        b = run_protocol(m, gs, order, images, per_image=4, seed=9)
        assert [r.omega for r in a.records] == [r.omega for r in b.records]
        assert [r.delta_norm for r in a.records] == [r.delta_norm for r in b.records]

    def test_magnitudes_cycle(self, gauged_cnn):
        m, gs, g, t = gauged_cnn
        order = order_from_spins(g, t)
        images = [np.zeros(m.input_shape.count)]
        smp = run_protocol(m, gs, order, images, per_image=4,
                           magnitudes=(0.5, 2.0), seed=0)
        assert [r.magnitude for r in smp.records] == [0.5, 2.0, 0.5, 2.0]

    def test_class_stability_tiny_magnitude(self):
        m, s = generate_synthetic(4, "tiny_mlp")
        rng = np.random.default_rng(4)
        images = [rng.uniform(0, 1, 16) for _ in range(5)]
        order = random_null_order(16, 10)
        smp = run_protocol(m, s, order, images, per_image=4,
                           magnitudes=(1e-9,), seed=1)
        assert class_stability(smp) == {1e-9: 1.0}

    def test_single_perturbation_consistency_degenerate(self):
        smp = samples_from([0.8, 0.2, 0.5], per_image=1)
        assert set(direction_consistency(smp).values()) <= {0.0, 1.0}


def test_csv_roundtrip(tmp_path):
    smp = samples_from([0.0, 0.25, 1.0], per_image=3)
    smp.records[1].magnitude = 2.5
    path = tmp_path / "omega.csv"
    smp.write_csv(path)
    back = OmegaSampleSet.read_csv(path)
    assert [r.__dict__ for r in back.records] == [r.__dict__ for r in smp.records]


def test_order_lengths_validated(gauged_cnn):
    m, gs, g, t = gauged_cnn
    with pytest.raises(ValidationError):
        run_protocol(m, gs, PartialOrderPair(np.ones(3, np.int8), np.ones(2, np.int8)),
                     [np.zeros(m.input_shape.count)], per_image=1)
