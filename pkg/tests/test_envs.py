import numpy as np
import pytest
import scipy.linalg

from ctpg.envs import (
    counted_env,
    diffdrive_make,
    electric_make,
    finite_difference_adapter,
    lqr_appendix_env,
    lqr_make,
    lqr_optimal_gain,
    point_sampler,
    random_linear_env,
    square_electrodes,
)
from ctpg.solvers import NfeCounter


def central_fd_jac(fn, z, eps=1e-6):
    out0 = np.atleast_1d(fn(z))
    J = np.empty((len(out0), len(z)))
    for i in range(len(z)):
        zp = z.copy(); zp[i] += eps
        zm = z.copy(); zm[i] -= eps
        J[:, i] = (np.atleast_1d(fn(zp)) - np.atleast_1d(fn(zm))) / (2 * eps)
    return J


def check_env_derivatives(env, x, u, tol=1e-4):
    """analytic vs central-FD consistency for every derivative capability"""
    checks = [
        (env.dfdx(x, u), central_fd_jac(lambda z: env.f(z, u), x)),
        (env.dfdu(x, u), central_fd_jac(lambda z: env.f(x, z), u)),
        (env.dwdx(x, u), central_fd_jac(lambda z: env.w(z, u), x)[0]),
        (env.dwdu(x, u), central_fd_jac(lambda z: env.w(x, z), u)[0]),
        (env.dJdx(x), central_fd_jac(lambda z: env.J(z), x)[0]),
    ]
    for analytic, fd in checks:
        assert np.all(np.abs(analytic - fd) <= tol * (1.0 + np.abs(analytic)))


class TestLqr:
    def test_appendix_values(self):
        env = lqr_appendix_env()
        x = np.array([1.0, 1.0])
        u = np.array([-1.0, -1.0])
        assert np.array_equal(env.f(x, u), [-1.0, -1.0])
        assert env.w(x, u) == 4.0

    def test_zero_q_zero_u_cost(self):
        env = lqr_make(np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), np.eye(2), 1.0)
        assert env.w(np.array([9.0, -3.0]), np.zeros(2)) == 0.0

    def test_quadratic_form_gradient(self):
        env = lqr_appendix_env()
        assert np.array_equal(env.dwdx(np.array([1.0, 2.0]), np.zeros(2)), [2.0, 4.0])

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            lqr_make(np.zeros((2, 2)), np.eye(2), np.eye(3), np.eye(2), 1.0)
        with pytest.raises(ValueError):
            lqr_make(np.zeros((2, 2)), np.eye(2), np.eye(2), -np.eye(2), 1.0)

    def test_derivative_consistency(self):
        env = lqr_appendix_env()
        rng = np.random.default_rng(0)
        for _ in range(3):
            check_env_derivatives(env, rng.normal(size=2), rng.normal(size=2))


class TestOptimalGain:
    def test_identity_case(self):
        K = lqr_optimal_gain(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2))
        assert np.allclose(K, np.eye(2), atol=1e-9)

    def test_scaled_q(self):
        K = lqr_optimal_gain(np.zeros((2, 2)), np.eye(2), 4 * np.eye(2), np.eye(2))
        assert np.allclose(K, 2 * np.eye(2), atol=1e-9)

    def test_closed_loop_stable(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            A = rng.normal(size=(3, 3))
            B = rng.normal(size=(3, 2))
            K = lqr_optimal_gain(A, B, np.eye(3), np.eye(2))
            assert np.all(np.linalg.eigvals(A - B @ K).real < 0)

    def test_matches_scipy_riccati(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            A = rng.normal(size=(3, 3))
            B = rng.normal(size=(3, 2))
            Q = np.eye(3)
            R = np.eye(2) + 0.1 * np.diag(rng.uniform(0, 1, 2))
            K = lqr_optimal_gain(A, B, Q, R)
            P = scipy.linalg.solve_continuous_are(A, B, Q, R)
            K_ref = np.linalg.solve(R, B.T @ P)
            assert np.allclose(K, K_ref, atol=1e-7)


class TestDiffDrive:
    def test_straight_motion(self):
        env = diffdrive_make(L=1.0)
        x = np.array([0.0, 0.0, 0.0, 1.0, 1.0])
        f = env.f(x, np.zeros(2))
        assert np.allclose(f, [1.0, 0.0, 0.0, 0.0, 0.0])
        env2 = diffdrive_make(L=0.3)
        assert np.allclose(env2.f(x, np.zeros(2)), [1.0, 0.0, 0.0, 0.0, 0.0])

    def test_sideways_heading(self):
        env = diffdrive_make(L=1.0)
        x = np.array([0.0, 0.0, np.pi / 2, 1.0, 1.0])
        assert np.allclose(env.f(x, np.zeros(2)), [0.0, 1.0, 0.0, 0.0, 0.0],
                           atol=1e-15)

    def test_cost_at_rest_origin(self):
        env = diffdrive_make()
        assert env.w(np.zeros(5), np.zeros(2)) == 0.0

    def test_cost_weights(self):
        env = diffdrive_make(torque_cost_weight=0.1)
        x = np.array([1.0, 2.0, 0.5, 3.0, -1.0])
        u = np.array([2.0, 0.5])
        expect = 1 + 4 + 0.1 * (9 + 1 + 4 + 0.25)
        assert np.isclose(env.w(x, u), expect)

    def test_derivative_consistency(self):
        env = diffdrive_make()
        rng = np.random.default_rng(3)
        for _ in range(3):
            check_env_derivatives(env, rng.normal(size=5), rng.normal(size=2))

    def test_feature_map(self):
        env = diffdrive_make()
        x = np.array([1.0, 2.0, np.pi / 3, 0.1, -0.1])
        phi = env.feature_map(x)
        assert phi.shape == (7,)
        assert np.allclose(phi[5:], [np.cos(np.pi / 3), np.sin(np.pi / 3)])
        assert np.allclose(env.feature_jac(x),
                           central_fd_jac(env.feature_map, x), atol=1e-6)

    def test_x0_sampler_support(self):
        env = diffdrive_make()
        rng = np.random.default_rng(7)
        for _ in range(20):
            x0 = env.sample_x0(rng)
            assert np.all(np.abs(x0[:2]) <= 2.0)
            assert -np.pi <= x0[2] < np.pi
            assert x0[3] == x0[4] == 0.0


class TestElectric:
    def test_zero_charges_coast(self):
        env = electric_make()
        x = np.array([0.3, 0.4, 0.5, -0.2, 0.7])
        f = env.f(x, np.zeros(8))
        assert np.allclose(f, [0.5, -0.2, 0.0, 0.0, 1.0])

    def test_repulsion_sign(self):
        # one electrode at the origin, like charges push the ball along +x
        env = electric_make(electrode_layout=np.array([[0.0, 0.0]]))
        x = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
        u = np.array([2.0])
        f = env.f(x, u)
        assert f[2] > 0.0 and abs(f[3]) < 1e-12

    def test_force_flips_with_charge_sign(self):
        env = electric_make()
        x = np.array([0.4, 0.6, 0.0, 0.0, 0.0])
        u = np.random.default_rng(0).normal(size=8)
        f_pos = env.f(x, u)
        f_neg = env.f(x, -u)
        assert np.allclose(f_pos[2:4], -f_neg[2:4])

    def test_dfdu_matches_fd(self):
        env = electric_make()
        rng = np.random.default_rng(4)
        x = np.array([0.3, 0.7, 0.1, -0.1, 0.4])
        u = rng.normal(size=8)
        fd = central_fd_jac(lambda z: env.f(x, z), u)
        assert np.allclose(env.dfdu(x, u), fd, atol=1e-5)

    def test_derivative_consistency(self):
        env = electric_make()
        rng = np.random.default_rng(5)
        for _ in range(3):
            x = np.array([*rng.uniform(0.2, 0.8, 2), *rng.normal(size=2),
                          rng.uniform(0, 2)])
            check_env_derivatives(env, x, rng.normal(size=8))

    def test_electrode_layout(self):
        E = square_electrodes()
        assert E.shape == (8, 2)
        assert {(0, 0), (1, 0), (0, 1), (1, 1)} <= set(map(tuple, E))


class TestCounting:
    def test_each_capability_increments_its_field(self):
        env = lqr_appendix_env()
        c = NfeCounter()
        cenv = counted_env(env, c)
        x, u = np.ones(2), np.ones(2)
        cenv.f(x, u)
        assert (c.n_f, c.n_dfdx, c.n_dfdu) == (1, 0, 0)
        cenv.dfdx(x, u)
        assert (c.n_f, c.n_dfdx, c.n_dfdu) == (1, 1, 0)
        cenv.dfdu(x, u)
        assert (c.n_f, c.n_dfdx, c.n_dfdu) == (1, 1, 1)
        cenv.f_jacobians(x, u)
        assert (c.n_f, c.n_dfdx, c.n_dfdu) == (1, 2, 2)
        cenv.w(x, u)  # cost-side quantities are free
        assert c.total == 5

    def test_per_rollout_counters_sum(self):
        env = lqr_appendix_env()
        c1, c2 = NfeCounter(), NfeCounter()
        counted_env(env, c1).f(np.ones(2), np.ones(2))
        counted_env(env, c2).f(np.ones(2), np.ones(2))
        total = c1 + c2
        assert total.n_f == 2


class TestFdAdapter:
    def wrap_lqr(self, eps=1e-6):
        base = lqr_appendix_env()
        return finite_difference_adapter(
            base.f, base.w, base.J, 2, 2, eps, base.horizon,
            point_sampler([1.0, 1.0]))

    def test_jacobians_match_analytic(self):
        env = self.wrap_lqr()
        x, u = np.array([0.4, -0.2]), np.array([0.3, 0.1])
        assert np.allclose(env.dfdx(x, u), np.zeros((2, 2)), atol=1e-5)
        assert np.allclose(env.dfdu(x, u), np.eye(2), atol=1e-5)

    def test_call_counting_base_point_shared(self):
        # d=5, k=2 system: one jacobian pair costs exactly 1+5+2 = 8 f-calls
        dd = diffdrive_make()
        env = finite_difference_adapter(dd.f, dd.w, dd.J, 5, 2, 1e-6, dd.horizon,
                                        dd.sample_x0)
        c = NfeCounter()
        cenv = counted_env(env, c)
        cenv.f_jacobians(np.ones(5), np.ones(2))
        assert c.n_f == 8
        assert c.n_dfdx == 0 and c.n_dfdu == 0

    def test_eps_insensitivity(self):
        x, u = np.array([0.4, -0.2]), np.array([0.3, 0.1])
        coarse = self.wrap_lqr(1e-4)
        fine = self.wrap_lqr(1e-8)
        assert np.allclose(coarse.dfdx(x, u), fine.dfdx(x, u), atol=1e-3)
        assert np.allclose(coarse.dfdu(x, u), fine.dfdu(x, u), atol=1e-3)

    def test_adapter_on_nonlinear_env(self):
        dd = diffdrive_make()
        env = finite_difference_adapter(dd.f, dd.w, dd.J, 5, 2, 1e-6, dd.horizon,
                                        dd.sample_x0)
        rng = np.random.default_rng(6)
        x, u = rng.normal(size=5), rng.normal(size=2)
        assert np.allclose(env.dfdx(x, u), dd.dfdx(x, u), atol=1e-5)
        assert np.allclose(env.dfdu(x, u), dd.dfdu(x, u), atol=1e-5)
        assert np.allclose(env.dwdx(x, u), dd.dwdx(x, u), atol=1e-5)
        assert np.allclose(env.dwdu(x, u), dd.dwdu(x, u), atol=1e-5)

    def test_bad_eps(self):
        with pytest.raises(ValueError):
            self.wrap_lqr(eps=0.0)


def test_random_linear_env_derivatives():
    env = random_linear_env(3, seed=9)
    rng = np.random.default_rng(9)
    check_env_derivatives(env, rng.normal(size=3), rng.normal(size=3))


def test_batched_f_w_match_rows():
    for env in (lqr_appendix_env(), diffdrive_make(), electric_make()):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(4, env.dim_x))
        U = rng.normal(size=(4, env.dim_u))
        if env.name == "electric":
            X[:, :2] = rng.uniform(0.2, 0.8, size=(4, 2))
        F = env.f(X, U)
        W = env.w(X, U)
        for i in range(4):
            assert np.allclose(F[i], env.f(X[i], U[i]), atol=1e-14)
            assert np.allclose(W[i], env.w(X[i], U[i]), atol=1e-14)
