import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctpg.policy import (
    MlpArch,
    MlpPolicy,
    ScalarGainPolicy,
    init_params,
    load_params,
    mlp_forward,
    mlp_forward_many,
    mlp_jacobian_x,
    mlp_vjp_params,
    save_params,
    unpack_params,
)


def fd_jac_x(params, arch, x, eps=1e-6):
    cols = []
    for i in range(len(x)):
        xp = x.copy(); xp[i] += eps
        xm = x.copy(); xm[i] -= eps
        cols.append((mlp_forward(params, arch, xp)
                     - mlp_forward(params, arch, xm)) / (2 * eps))
    return np.stack(cols, axis=1)


def fd_vjp_params(params, arch, x, v, eps=1e-6):
    g = np.empty(len(params))
    for i in range(len(params)):
        tp = params.copy(); tp[i] += eps
        tm = params.copy(); tm[i] -= eps
        g[i] = (v @ mlp_forward(tp, arch, x) - v @ mlp_forward(tm, arch, x)) / (2 * eps)
    return g


class TestInit:
    def test_deterministic(self):
        arch = MlpArch((3, 16, 2))
        assert np.array_equal(init_params(arch, 7), init_params(arch, 7))
        assert not np.array_equal(init_params(arch, 7), init_params(arch, 8))

    def test_param_count(self):
        arch = MlpArch((2, 32, 2), last_layer_scale=0.1)
        assert arch.n_params == 2 * 32 + 32 + 32 * 2 + 2 == 162
        assert init_params(arch, 0).shape == (162,)

    def test_last_layer_scale_factor(self):
        a1 = MlpArch((2, 8, 2), last_layer_scale=0.1)
        a2 = MlpArch((2, 8, 2), last_layer_scale=1.0)
        p1, p2 = init_params(a1, 3), init_params(a2, 3)
        (w1, b1) = unpack_params(p1, a1)[-1]
        (w2, b2) = unpack_params(p2, a2)[-1]
        assert np.allclose(w2, 10.0 * w1)
        # hidden layer identical
        (h1, _), (h2, _) = unpack_params(p1, a1)[0], unpack_params(p2, a2)[0]
        assert np.array_equal(h1, h2)

    def test_biases_zero_and_bounds(self):
        arch = MlpArch((4, 9, 3))
        for w, b in unpack_params(init_params(arch, 11), arch):
            assert np.all(b == 0.0)
        w0, _ = unpack_params(init_params(arch, 11), arch)[0]
        assert np.all(np.abs(w0) <= 1 / np.sqrt(4))

    def test_validation(self):
        with pytest.raises(ValueError):
            MlpArch((3,))
        with pytest.raises(ValueError):
            MlpArch((3, 0, 1))
        with pytest.raises(ValueError):
            MlpArch((3, 2), last_layer_scale=0.0)


class TestForward:
    def test_zero_params_zero_output(self):
        arch = MlpArch((3, 5, 2))
        out = mlp_forward(np.zeros(arch.n_params), arch, np.array([1.0, -2.0, 0.5]))
        assert np.array_equal(out, [0.0, 0.0])

    def test_single_affine_layer(self):
        arch = MlpArch((1, 1))
        params = np.array([2.5, -0.5])  # w, b
        out = mlp_forward(params, arch, np.array([3.0]))
        assert np.allclose(out, [2.5 * 3.0 - 0.5])

    def test_matches_hand_composed_pass(self):
        arch = MlpArch((2, 3, 1))
        params = init_params(arch, 0)
        x = np.array([1.0, -1.0])
        (w1, b1), (w2, b2) = unpack_params(params, arch)
        expect = w2 @ np.tanh(w1 @ x + b1) + b2
        assert np.allclose(mlp_forward(params, arch, x), expect, atol=1e-15)

    def test_batched_forward_matches_rows(self):
        arch = MlpArch((3, 4, 2))
        params = init_params(arch, 5)
        X = np.random.default_rng(0).normal(size=(6, 3))
        batch = mlp_forward(params, arch, X)
        for i in range(6):
            assert np.allclose(batch[i], mlp_forward(params, arch, X[i]))

    def test_dim_mismatch(self):
        arch = MlpArch((2, 2))
        with pytest.raises(ValueError):
            mlp_forward(init_params(arch, 0), arch, np.zeros(3))


class TestJacobian:
    def test_zero_params(self):
        arch = MlpArch((2, 3, 2))
        jac = mlp_jacobian_x(np.zeros(arch.n_params), arch, np.array([0.3, -0.4]))
        assert np.array_equal(jac, np.zeros((2, 2)))

    def test_single_affine_layer_is_weight_matrix(self):
        arch = MlpArch((3, 2))
        params = init_params(arch, 4)
        w, _ = unpack_params(params, arch)[0]
        jac = mlp_jacobian_x(params, arch, np.array([0.1, 0.2, 0.3]))
        assert np.allclose(jac, w)

    def test_matches_finite_differences(self):
        arch = MlpArch((2, 3, 2))
        params = init_params(arch, 0)
        x = np.array([0.5, -0.2])
        assert np.allclose(mlp_jacobian_x(params, arch, x),
                           fd_jac_x(params, arch, x), atol=1e-6)


class TestVjp:
    def test_zero_cotangent(self):
        arch = MlpArch((2, 4, 3))
        params = init_params(arch, 1)
        out = mlp_vjp_params(params, arch, np.array([1.0, 2.0]), np.zeros(3))
        assert np.array_equal(out, np.zeros(arch.n_params))

    def test_single_affine_layer_structure(self):
        # for u = Wx + b and v = e1, the gradient block puts x in row 1
        # of the weight slots and 1 in bias slot 1
        arch = MlpArch((3, 2))
        params = init_params(arch, 2)
        x = np.array([1.0, -2.0, 3.0])
        v = np.array([1.0, 0.0])
        g = mlp_vjp_params(params, arch, x, v)
        expect = np.concatenate([x, np.zeros(3), [1.0, 0.0]])
        assert np.allclose(g, expect)

    def test_matches_finite_differences_13_params(self):
        arch = MlpArch((2, 3, 1))
        assert arch.n_params == 13
        params = init_params(arch, 0)
        x = np.array([0.7, -0.3])
        v = np.array([1.0])
        assert np.allclose(mlp_vjp_params(params, arch, x, v),
                           fd_vjp_params(params, arch, x, v), atol=1e-6)


@settings(deadline=None, max_examples=20)
@given(seed=st.integers(0, 10_000), hidden=st.integers(1, 6),
       data=st.data())
def test_vjp_fd_agreement_property(seed, hidden, data):
    arch = MlpArch((2, hidden, 2))
    params = init_params(arch, seed)
    rng = np.random.default_rng(seed + 1)
    x = rng.normal(size=2)
    v = rng.normal(size=2)
    exact = mlp_vjp_params(params, arch, x, v)
    approx = fd_vjp_params(params, arch, x, v)
    assert np.allclose(exact, approx, rtol=1e-5, atol=1e-7)


@settings(deadline=None, max_examples=20)
@given(seed=st.integers(0, 10_000))
def test_jacobian_fd_agreement_property(seed):
    arch = MlpArch((3, 4, 2))
    params = init_params(arch, seed)
    x = np.random.default_rng(seed).normal(size=3)
    assert np.allclose(mlp_jacobian_x(params, arch, x), fd_jac_x(params, arch, x),
                       rtol=1e-5, atol=1e-7)


@settings(deadline=None, max_examples=20)
@given(seed=st.integers(0, 10_000), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_vjp_linearity_property(seed, a, b):
    arch = MlpArch((2, 5, 3))
    params = init_params(arch, seed)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=2)
    v1, v2 = rng.normal(size=3), rng.normal(size=3)
    lhs = mlp_vjp_params(params, arch, x, a * v1 + b * v2)
    rhs = a * mlp_vjp_params(params, arch, x, v1) + b * mlp_vjp_params(params, arch, x, v2)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_hidden_activations_bounded():
    # strictly inside (-1, 1) away from float-tanh saturation (|z| < ~19)
    arch = MlpArch((2, 8, 8, 1))
    params = init_params(arch, 0) * 1.5
    x = np.array([2.0, -3.0])
    a = x
    for w, b in unpack_params(params, arch)[:-1]:
        a = np.tanh(a @ w.T + b)
        assert np.all(a > -1.0) and np.all(a < 1.0)


def test_forward_many_matches_per_row():
    arch = MlpArch((3, 4, 2))
    rng = np.random.default_rng(3)
    P = np.stack([init_params(arch, s) for s in range(5)])
    X = rng.normal(size=(5, 3))
    batch = mlp_forward_many(P, arch, X)
    for i in range(5):
        assert np.allclose(batch[i], mlp_forward(P[i], arch, X[i]), atol=1e-14)


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        arch = MlpArch((2, 32, 2), last_layer_scale=0.1)
        params = init_params(arch, 42)
        path = tmp_path / "policy.params"
        save_params(path, params, arch, seed=42)
        loaded, arch2, seed = load_params(path)
        assert np.array_equal(loaded, params)
        assert arch2 == arch
        assert seed == 42

    def test_header_layout(self, tmp_path):
        arch = MlpArch((1, 1))
        params = np.array([1.5, -2.5])
        path = tmp_path / "p.bin"
        save_params(path, params, arch)
        raw = path.read_bytes()
        assert raw[:8] == b"CTPGPRM1"
        assert int.from_bytes(raw[8:12], "little") == 1  # version
        assert int.from_bytes(raw[12:16], "little") == 2  # n_params
        assert len(raw) == 16 + 2 * 8
        assert np.frombuffer(raw[16:], dtype="<f8").tolist() == [1.5, -2.5]

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(ValueError):
            load_params(path)


class TestPolicyObjects:
    def test_scalar_gain(self):
        pol = ScalarGainPolicy(2.0)
        x = np.array([1.0, -3.0])
        assert np.array_equal(pol(x), [-2.0, 6.0])
        assert np.array_equal(pol.jac_x(x), -2.0 * np.eye(2))
        v = np.array([1.0, 1.0])
        assert np.allclose(pol.vjp_params(x, v), [-(1.0 - 3.0)])
        pol2 = pol.with_params(np.array([3.0]))
        assert pol2.params[0] == 3.0 and pol.params[0] == 2.0

    def test_mlp_policy_feature_chain(self):
        # feature map x -> (x, x^2) with its jacobian chained into jac_x
        def feat(x):
            return np.concatenate([x, x * x], axis=-1)

        def feat_jac(x):
            return np.vstack([np.eye(2), np.diag(2 * x)])

        arch = MlpArch((4, 5, 2))
        pol = MlpPolicy(arch, init_params(arch, 0), feat, feat_jac)
        x = np.array([0.3, -0.8])
        eps = 1e-6
        fd = np.empty((2, 2))
        for i in range(2):
            xp = x.copy(); xp[i] += eps
            xm = x.copy(); xm[i] -= eps
            fd[:, i] = (pol(xp) - pol(xm)) / (2 * eps)
        assert np.allclose(pol.jac_x(x), fd, atol=1e-6)
