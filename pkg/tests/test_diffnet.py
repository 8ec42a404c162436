import math
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pshape import diffnet as dn
from pshape.diffnet import container, tensor as T
from pshape.diffnet.layers import gru_forward_unfused


# container / parameter files ---------------------------------------------------
def test_container_layout(tmp_path):
    raw = container.dumps("params", {"a": np.arange(3.0)}, {"note": "x"})
    assert raw[:8] == b"PSHAPE01"
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = raw[16:16 + hlen].decode()
    assert '"kind":"params"' in header
    payload = np.frombuffer(raw[16 + hlen:], dtype="<f8")
    np.testing.assert_array_equal(payload, [0.0, 1.0, 2.0])


def test_container_roundtrip_and_kind(tmp_path):
    p = tmp_path / "c.pshape"
    arrays = {"w": np.random.default_rng(0).normal(size=(2, 3)), "s": np.array(4.5)}
    container.save(p, "blob", arrays, {"seed": 3})
    meta, back = container.load(p, "blob")
    assert meta["seed"] == 3 and meta["kind"] == "blob"
    np.testing.assert_array_equal(back["w"], arrays["w"])
    assert back["s"].shape == ()
    with pytest.raises(container.ContainerError):
        container.load(p, "policy")
    with pytest.raises(container.ContainerError):
        container.loads(b"NOTMAGIC" + bytes(8))
    with pytest.raises(container.ContainerError):
        container.dumps("x", {}, {"kind": "y"})


def test_parameter_save_load_save_byte_identical(tmp_path, rng):
    ps = dn.ParameterSet.merge({"enc": dn.init_mlp([5, 4, 3], rng), "gru": dn.init_gru(3, 2, rng)})
    a, b = tmp_path / "a.pshape", tmp_path / "b.pshape"
    ps.save(a, "params", {"extra": [1, 2]})
    back, meta = dn.ParameterSet.load(a, "params")
    assert meta["extra"] == [1, 2]
    back.save(b, "params", {"extra": [1, 2]})
    assert a.read_bytes() == b.read_bytes()
    assert back.sub("enc").layout["sizes"] == [5, 4, 3]


def test_parameter_sub_shares_storage(rng):
    ps = dn.ParameterSet.merge({"a": dn.init_mlp([2, 2], rng)})
    ps.sub("a")["l0.b"].data[:] = 7.0
    np.testing.assert_array_equal(ps["a.l0.b"].data, [7.0, 7.0])
    with pytest.raises(ValueError):
        ps.assign({"a.l0.b": np.zeros(3)})


# layers ---------------------------------------------------------------------------
def test_mlp_zero_network():
    ps = dn.init_mlp([867, 64, 64], np.random.default_rng(0))
    for _, t in ps.items():
        t.data[...] = 0.0
    out = dn.mlp_forward(ps, np.random.default_rng(1).normal(size=867))
    assert out.shape == (64,)
    assert np.all(out.data == 0.0)


def test_mlp_identity_passthrough():
    ps = dn.init_mlp([2, 2, 2], np.random.default_rng(0), activation="linear")
    ps.assign({"l0.w": np.eye(2), "l1.w": np.array([[2.0, 0.0], [0.0, 3.0]]), "l0.b": [0, 0], "l1.b": [0, 0]})
    out = dn.mlp_forward(ps, np.array([1.5, -2.0]))
    np.testing.assert_allclose(out.data, [3.0, -6.0])


def test_mlp_shape_error_names_shapes(rng):
    ps = dn.init_mlp([4, 3], rng)
    with pytest.raises(ValueError, match=r"\(N, 4\).*\(5,\)"):
        dn.mlp_forward(ps, np.zeros(5))


def test_mlp_apply_matches_forward_and_is_deterministic(rng):
    ps = dn.init_mlp([6, 64, 64], rng)
    x = rng.uniform(-1, 1, size=(9, 6))
    a = dn.mlp_forward(ps, x).data
    b = dn.mlp_forward(ps, x).data
    assert np.array_equal(a, b)
    np.testing.assert_allclose(dn.mlp_apply(ps, x), a, rtol=0, atol=1e-14)


def test_conv_zero_kernels_and_shape(rng):
    ps = dn.init_conv((32, 32, 3), rng)
    img = rng.uniform(0, 1, size=(32, 32, 3))
    out = dn.conv_forward(ps, img)
    assert out.shape == (64,)
    assert np.array_equal(out.data, dn.conv_forward(ps, img).data)
    for _, t in ps.items():
        t.data[...] = 0.0
    assert np.all(dn.conv_forward(ps, img).data == 0.0)


def test_conv_center_tap_subsamples(rng):
    ps = dn.init_conv((9, 9, 1), rng, channels=(1,), out_size=16)
    ps.assign({"c0.w": np.zeros((3, 3, 1, 1)), "c0.b": [0.0], "proj.b": np.zeros(16), "proj.w": np.eye(16)})
    ps["c0.w"].data[1, 1, 0, 0] = 1.0
    img = rng.uniform(-0.5, 0.5, size=(9, 9, 1))
    out = dn.conv_forward(ps, img).data
    # valid 3x3 stride-2 windows are centered at 1, 3, 5, 7
    np.testing.assert_allclose(out, np.tanh(img[1:8:2, 1:8:2, 0]).ravel(), atol=1e-15)


def test_conv_rejects_small_image(rng):
    ps = dn.init_conv((6, 6, 3), rng)
    with pytest.raises(ValueError, match="receptive field"):
        dn.conv_forward(ps, np.zeros((6, 6, 3)))


def test_gru_zero_weights_and_errors(rng):
    cell = dn.init_gru(3, 5, rng)
    with pytest.raises(ValueError):
        dn.gru_forward(cell, [])
    with pytest.raises(ValueError):
        dn.gru_forward(cell, [np.zeros(4)])
    for _, t in cell.items():
        t.data[...] = 0.0
    h = dn.gru_forward(cell, [rng.normal(size=3) for _ in range(4)])
    assert np.all(h.data == 0.0)


def test_gru_single_step_by_hand():
    cell = dn.init_gru(2, 2, np.random.default_rng(0))
    # reset gate irrelevant from h0 = 0; update gate logit 0 -> u = 0.5
    w_in = np.zeros((2, 6))
    w_in[:, 4:] = np.eye(2)  # candidate = tanh(x)
    cell.assign({"w_in": w_in, "w_hid": np.zeros((2, 6)), "b_in": np.zeros(6), "b_hid": np.zeros(6)})
    x = np.array([0.3, -0.7])
    h = dn.gru_forward(cell, [x]).data
    np.testing.assert_allclose(h, 0.5 * np.tanh(x), atol=1e-15)


def test_gru_context_size(rng):
    cell = dn.init_gru(64, 256, rng)
    h = dn.gru_forward(cell, [rng.normal(size=64) for _ in range(10)])
    assert h.shape == (256,)


def test_fused_gru_matches_unfused(rng):
    cell = dn.init_gru(3, 4, rng)
    for _, t in cell.items():
        t.data[...] = rng.uniform(-1, 1, size=t.shape)
    seq = T.Tensor(rng.uniform(-1, 1, size=(5, 2, 3)), requires_grad=True)
    h1, h2 = dn.gru_forward(cell, seq), gru_forward_unfused(cell, seq)
    np.testing.assert_allclose(h1.data, h2.data, atol=1e-14)
    np.testing.assert_allclose(dn.gru_apply(cell, seq.data), h1.data, atol=1e-14)
    wrt = [cell[n] for n in cell.names()] + [seq]
    g1 = T.grad((h1 * h1).sum(), wrt)
    g2 = T.grad((h2 * h2).sum(), wrt)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, atol=1e-12)


# backward / optimizer ---------------------------------------------------------------
def test_backward_quadratic_and_constant():
    ps = dn.ParameterSet({"w": np.array([1.0, 2.0]), "u": np.array([5.0])})
    g = dn.backward((ps["w"] * ps["w"]).sum(), ps)
    np.testing.assert_array_equal(g["w"].data, [2.0, 4.0])
    np.testing.assert_array_equal(g["u"].data, [0.0])  # unreached
    g0 = dn.backward(T.Tensor(np.array(3.0)) + 0.0, ps)
    assert all(np.all(t.data == 0.0) for _, t in g0.items())
    with pytest.raises(ValueError):
        dn.backward(ps["w"] * 2.0, ps)


def test_adam_zero_grad_identity(rng):
    ps = dn.init_mlp([3, 4, 2], rng)
    before = {k: v.copy() for k, v in ps.arrays().items()}
    st_ = dn.AdamState.for_params(ps)
    for _ in range(3):
        dn.adam_step(st_, ps, ps.zeros_like())
    for k, v in ps.arrays().items():
        assert np.array_equal(v, before[k])


def test_adam_first_step_oracle():
    # t=1: m = (1-b1) g, v = (1-b2) g^2; bias correction gives step lr * g / (|g| + eps')
    for g in (0.37, -12.0):
        ps = dn.ParameterSet({"w": np.array([1.0])})
        st_ = dn.AdamState.for_params(ps, lr=0.01)
        dn.adam_step(st_, ps, dn.ParameterSet({"w": np.array([g])}))
        expected = 1.0 - 0.01 * g / (abs(g) + 1e-8)
        assert ps["w"].data[0] == pytest.approx(expected, abs=1e-15)


def test_adam_converges_on_quadratic():
    ps = dn.ParameterSet({"w": np.array([0.0])})
    st_ = dn.AdamState.for_params(ps, lr=0.1)
    losses = []
    for _ in range(100):
        diff = ps["w"] - 3.0
        loss = (diff * diff).sum()
        losses.append(loss.item())
        dn.adam_step(st_, ps, dn.backward(loss, ps))
    assert abs(ps["w"].data[0] - 3.0) < 0.1
    assert np.mean(losses[-10:]) < np.mean(losses[:10])


def test_adam_rejects_nan_naming_param():
    ps = dn.ParameterSet({"w": np.array([0.0]), "bad": np.array([1.0])})
    st_ = dn.AdamState.for_params(ps)
    with pytest.raises(FloatingPointError, match="bad"):
        dn.adam_step(st_, ps, dn.ParameterSet({"w": np.array([0.0]), "bad": np.array([np.nan])}))


def test_clip_by_global_norm():
    g = dn.ParameterSet({"a": np.array([3.0]), "b": np.array([4.0])})
    assert dn.clip_by_global_norm(g, 0.5) == pytest.approx(5.0)
    assert dn.global_norm(g) == pytest.approx(0.5, rel=1e-5)


# gradient checker -----------------------------------------------------------------
def test_gradcheck_quadratic():
    ps = dn.ParameterSet({"w": np.random.default_rng(0).uniform(-1, 1, size=(7, 3))})
    rep = dn.finite_diff_check(lambda p: (p["w"] * p["w"]).sum(), ps)
    assert rep.max_rel_error < 1e-8
    assert rep.checked == 21


def test_gradcheck_mlp_softmax_xent(rng):
    ps = dn.init_mlp([5, 8, 4], rng)
    x = rng.uniform(-1, 1, size=(6, 5))
    y = rng.integers(4, size=6)
    rep = dn.finite_diff_check(lambda p: T.cross_entropy(dn.mlp_forward(p, x), y), ps)
    assert rep.passed, rep


def test_gradcheck_gru_five_steps(rng):
    cell = dn.init_gru(3, 4, rng)
    seq = rng.uniform(-1, 1, size=(5, 2, 3))
    rep = dn.finite_diff_check(lambda p: dn.gru_forward(p, T.Tensor(seq)).sum(), cell)
    assert rep.passed, rep


def test_gradcheck_reports_wrong_gradient():
    ps = dn.ParameterSet({"w": np.array([0.5, -0.25])})

    def broken(p):
        # forward is w^2 but the recorded backward is the identity
        w = p["w"]
        return T._node(w.data * w.data, (w,), lambda g: (g,)).sum()

    rep = dn.finite_diff_check(broken, ps)
    assert not rep.passed
    assert rep.worst_param == "w"


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_sigmoid_tanh_identity(a, b):
    x = T.Tensor(np.array([a, b]))
    np.testing.assert_allclose(T.sigmoid(x).data, 0.5 * (1 + np.tanh(0.5 * x.data)), atol=1e-15)
    assert math.isfinite(float(T.log_softmax(x).data.sum()))
