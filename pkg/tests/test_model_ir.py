import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frustra import (
    LayerSpec,
    TensorShape,
    ValidationError,
    WeightStore,
    generate_synthetic,
    load_model,
    read_blob,
    save_model,
    write_blob,
)
from frustra.model_ir import build_manifest, manifest_to_dict


def minimal_layers():
    return [
        LayerSpec("input", "input"),
        LayerSpec("fc", "dense", ("input",), {"out_features": 3}, "fc_w"),
    ]


def test_minimal_manifest():
    m = build_manifest(minimal_layers(), TensorShape((2, 2, 1)), 3)
    assert len(m.layers) == 2
    assert m.topo_order == ("input", "fc")
    assert m.shapes["fc"].dims == (3,)


def test_blob_length_mismatch(tmp_path):
    m = build_manifest(minimal_layers(), TensorShape((2, 2, 1)), 3)
    store = WeightStore({"fc_w": np.ones(7, np.float32)})  # needs 4*3
    save_model(tmp_path, m, store)
    with pytest.raises(ValidationError, match="blob length mismatch"):
        load_model(tmp_path)


def test_add_shape_mismatch():
    layers = [
        LayerSpec("input", "input"),
        LayerSpec("a", "dense", ("input",), {"out_features": 3}, "a_w"),
        LayerSpec("b", "dense", ("input",), {"out_features": 4}, "b_w"),
        LayerSpec("s", "add", ("a", "b")),
    ]
    with pytest.raises(ValidationError, match="unequal shapes"):
        build_manifest(layers, TensorShape((4,)), 3)


def test_cycle_detected():
    layers = [
        LayerSpec("input", "input"),
        LayerSpec("a", "dense", ("b",), {"out_features": 4}, "a_w"),
        LayerSpec("b", "dense", ("a",), {"out_features": 4}, "b_w"),
    ]
    with pytest.raises(ValidationError, match="cycle"):
        build_manifest(layers, TensorShape((4,)), 4)


def test_dangling_weight_ref(tmp_path):
    m = build_manifest(minimal_layers(), TensorShape((2, 2, 1)), 3)
    save_model(tmp_path, m, WeightStore())
    with pytest.raises(ValidationError, match="dangling weight_ref"):
        load_model(tmp_path)


def test_decorated_layer_cannot_have_other_consumers():
    layers = [
        LayerSpec("input", "input"),
        LayerSpec("a", "dense", ("input",), {"out_features": 4}, "a_w"),
        LayerSpec("r", "relu", ("a",)),
        LayerSpec("b", "dense", ("a",), {"out_features": 4}, "b_w"),
        LayerSpec("s", "add", ("r", "b")),
    ]
    with pytest.raises(ValidationError, match="other consumers"):
        build_manifest(layers, TensorShape((4,)), 4)


def test_synthetic_deterministic():
    m1, s1 = generate_synthetic(1, "tiny_mlp")
    m2, s2 = generate_synthetic(1, "tiny_mlp")
    assert manifest_to_dict(m1) == manifest_to_dict(m2)
    for name in s1.names():
        np.testing.assert_array_equal(s1[name], s2[name])


def test_synthetic_byte_identical_on_disk(tmp_path):
    for i, sub in enumerate(("a", "b")):
        m, s = generate_synthetic(3, "tiny_cnn")
        save_model(tmp_path / sub, m, s)
    fa = sorted((tmp_path / "a").iterdir())
    fb = sorted((tmp_path / "b").iterdir())
    assert [p.name for p in fa] == [p.name for p in fb]
    for pa, pb in zip(fa, fb):
        assert pa.read_bytes() == pb.read_bytes()


def test_residual_template_has_add():
    m, _ = generate_synthetic(1, "residual_cnn")
    adds = [l for l in m.layers if l.kind == "add"]
    assert len(adds) >= 1 and len(adds[0].inputs) == 2


def test_grouped_template_divisible():
    m, _ = generate_synthetic(2, "grouped_cnn")
    g = next(l for l in m.layers if l.kind == "grouped_conv")
    in_shape = m.shapes[g.inputs[0]]
    assert in_shape.channels % g.params["groups"] == 0


def test_unknown_template():
    with pytest.raises(ValidationError, match="unknown template"):
        generate_synthetic(1, "mystery_net")


def test_roundtrip_model(tmp_path):
    m, s = generate_synthetic(4, "residual_cnn")
    save_model(tmp_path, m, s)
    m2, s2 = load_model(tmp_path)
    assert manifest_to_dict(m) == manifest_to_dict(m2)
    assert s.names() == s2.names()
    for name in s.names():
        np.testing.assert_array_equal(s[name], s2[name])


def test_manifest_json_schema(tmp_path):
    m, s = generate_synthetic(1, "tiny_mlp")
    path = save_model(tmp_path, m, s)
    doc = json.loads(path.read_text())
    assert set(doc) == {"input_shape", "output_size", "layers"}
    assert all({"id", "kind", "inputs", "params"} <= set(l) for l in doc["layers"])


@settings(max_examples=30, deadline=None)
@given(
    dims=st.lists(st.integers(1, 5), min_size=1, max_size=3),
    data=st.data(),
)
def test_blob_roundtrip(tmp_path_factory, dims, data):
    arr = data.draw(
        st.lists(
            st.floats(-1e6, 1e6, width=32),
            min_size=int(np.prod(dims)),
            max_size=int(np.prod(dims)),
        )
    )
    arr = np.array(arr, np.float32).reshape(dims)
    path = tmp_path_factory.mktemp("blob") / "x.blob"
    write_blob(path, arr)
    back = read_blob(path)
    assert back.shape == tuple(dims)
    np.testing.assert_array_equal(arr, back)


def test_tensor_shape_invariants():
    with pytest.raises(ValidationError):
        TensorShape((0, 3))
    assert TensorShape((2, 3, 4)).count == 24
