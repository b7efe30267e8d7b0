"""Differentiable continuous-time control environments.

Each environment bundles the simulator-side quantities the gradient
estimators consume: dynamics f(x, u) with Jacobians df/dx and df/du,
running cost w(x, u) with its partials, terminal cost J(x) with dJ/dx, an
optional policy-input feature map, and a seeded initial-state sampler.

Oracle-call accounting follows the convention that only f, df/dx and
df/du evaluations count (they stand in for simulator calls); cost-side
quantities are free.  Use `counted_env` to get a per-rollout counting
view; for finite-difference environments the Jacobians are rebuilt on top
of the counted f so that every underlying dynamics call is charged to n_f.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .solvers import NfeCounter

Array = np.ndarray


def _identity_features(x: Array) -> Array:
    return x


def _matrix(m, name: str, shape: tuple[int, int]) -> Array:
    m = np.asarray(m, dtype=float)
    if m.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
    return m


@dataclass
class EnvSpec:
    """Differentiable-environment capability bundle."""

    name: str
    dim_x: int
    dim_u: int
    horizon: float
    f: Callable[[Array, Array], Array]
    dfdx: Callable[[Array, Array], Array]
    dfdu: Callable[[Array, Array], Array]
    w: Callable[[Array, Array], float]
    dwdx: Callable[[Array, Array], Array]
    dwdu: Callable[[Array, Array], Array]
    J: Callable[[Array], float]
    dJdx: Callable[[Array], Array]
    sample_x0: Callable[[np.random.Generator], Array]
    feature_map: Callable[[Array], Array] = _identity_features
    feature_jac: Callable[[Array], Array] | None = None
    feature_dim: int | None = None
    batched: bool = False  # f and w broadcast over a leading batch axis
    fd_eps: float | None = None  # set when Jacobians are forward differences of f

    def __post_init__(self):
        if self.feature_dim is None:
            self.feature_dim = self.dim_x
        if self.feature_jac is None:
            d = self.dim_x
            self.feature_jac = lambda x: np.eye(d)

    def f_jacobians(self, x: Array, u: Array) -> tuple[Array, Array]:
        """(df/dx, df/du) at one point; overridden by counting views."""
        return self.dfdx(x, u), self.dfdu(x, u)


def _fd_jacobians(f: Callable[[Array, Array], Array], x: Array, u: Array,
                  eps: float, f0: Array | None = None) -> tuple[Array, Array]:
    """Forward-difference Jacobians sharing one base evaluation."""
    if f0 is None:
        f0 = f(x, u)
    d, k = len(x), len(u)
    A = np.empty((len(f0), d))
    for i in range(d):
        xp = x.copy()
        xp[i] += eps
        A[:, i] = (f(xp, u) - f0) / eps
    B = np.empty((len(f0), k))
    for j in range(k):
        up = u.copy()
        up[j] += eps
        B[:, j] = (f(x, up) - f0) / eps
    return A, B


class CountedEnv:
    """Per-rollout counting view of an EnvSpec.

    Each capability call increments exactly its own counter field.  For
    fd-backed environments the Jacobian capabilities are rebuilt from the
    counted f, so a df/dx+df/du evaluation on a (d, k) system costs
    exactly 1 + d + k f-calls (shared base point).
    """

    def __init__(self, spec: EnvSpec, counter: NfeCounter):
        self.spec = spec
        self.counter = counter
        self.name = spec.name
        self.dim_x = spec.dim_x
        self.dim_u = spec.dim_u
        self.horizon = spec.horizon
        self.feature_map = spec.feature_map
        self.feature_jac = spec.feature_jac
        self.feature_dim = spec.feature_dim
        self.batched = spec.batched
        self.fd_eps = spec.fd_eps
        self.w = spec.w
        self.dwdx = spec.dwdx
        self.dwdu = spec.dwdu
        self.J = spec.J
        self.dJdx = spec.dJdx
        self.sample_x0 = spec.sample_x0

    def f(self, x: Array, u: Array) -> Array:
        self.counter.n_f += 1
        return self.spec.f(x, u)

    def dfdx(self, x: Array, u: Array) -> Array:
        if self.spec.fd_eps is not None:
            A, _ = _fd_jacobians(self.f, x, u, self.spec.fd_eps)
            return A
        self.counter.n_dfdx += 1
        return self.spec.dfdx(x, u)

    def dfdu(self, x: Array, u: Array) -> Array:
        if self.spec.fd_eps is not None:
            _, B = _fd_jacobians(self.f, x, u, self.spec.fd_eps)
            return B
        self.counter.n_dfdu += 1
        return self.spec.dfdu(x, u)

    def f_jacobians(self, x: Array, u: Array) -> tuple[Array, Array]:
        if self.spec.fd_eps is not None:
            return _fd_jacobians(self.f, x, u, self.spec.fd_eps)
        self.counter.n_dfdx += 1
        self.counter.n_dfdu += 1
        return self.spec.dfdx(x, u), self.spec.dfdu(x, u)


def counted_env(spec: EnvSpec, counter: NfeCounter) -> CountedEnv:
    """Bind a fresh per-rollout counter to an environment."""
    return CountedEnv(spec, counter)


def point_sampler(x0) -> Callable[[np.random.Generator], Array]:
    x0 = np.asarray(x0, dtype=float)
    return lambda rng: x0.copy()


def lqr_make(A, B, Q, R, T: float,
             x0_sampler: Callable[[np.random.Generator], Array] | None = None,
             ) -> EnvSpec:
    """Linear dynamics f = Ax + Bu with quadratic cost x'Qx + u'Ru."""
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    A = _matrix(A, "A", (d, d))
    B = np.asarray(B, dtype=float)
    k = B.shape[1]
    B = _matrix(B, "B", (d, k))
    Q = _matrix(Q, "Q", (d, d))
    R = _matrix(R, "R", (k, k))
    if not np.allclose(Q, Q.T):
        raise ValueError("Q must be symmetric")
    if not np.allclose(R, R.T):
        raise ValueError("R must be symmetric")
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise ValueError("R must be positive definite") from None
    if x0_sampler is None:
        x0_sampler = point_sampler(np.ones(d))

    def f(x, u):
        return x @ A.T + u @ B.T

    def w(x, u):
        return np.sum((x @ Q) * x, axis=-1) + np.sum((u @ R) * u, axis=-1)

    return EnvSpec(
        name="lqr", dim_x=d, dim_u=k, horizon=T,
        f=f,
        dfdx=lambda x, u: A.copy(),
        dfdu=lambda x, u: B.copy(),
        w=w,
        dwdx=lambda x, u: 2.0 * (Q @ x),
        dwdu=lambda x, u: 2.0 * (R @ u),
        J=lambda x: 0.0,
        dJdx=lambda x: np.zeros(d),
        sample_x0=x0_sampler,
        batched=True,
    )


def lqr_appendix_env(T: float = 25.0) -> EnvSpec:
    """The 2-state benchmark instance: A = 0, B = Q = R = I, x0 = [1, 1]."""
    eye = np.eye(2)
    return lqr_make(np.zeros((2, 2)), eye, eye, eye, T,
                    point_sampler([1.0, 1.0]))


def _lyapunov_solve(A: Array, C: Array) -> Array:
    """Solve A'P + PA + C = 0 by Kronecker vectorization (small d only)."""
    d = A.shape[0]
    M = np.kron(np.eye(d), A.T) + np.kron(A.T, np.eye(d))
    P = np.linalg.solve(M, -C.ravel()).reshape(d, d)
    return 0.5 * (P + P.T)


def _care_residual(P, A, B, Q, R) -> float:
    res = A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q
    return float(np.linalg.norm(res))


def lqr_optimal_gain(A, B, Q, R, tol: float = 1e-10,
                     max_iter: int = 100) -> Array:
    """Stabilizing state-feedback gain K = R^-1 B' P from the Riccati equation.

    Kleinman-Newton iteration: each step solves one Lyapunov equation for
    the closed-loop cost-to-go, converging quadratically from any
    stabilizing initial gain (Bass construction used when A is unstable).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    d = A.shape[0]

    if np.all(np.linalg.eigvals(A).real < 0):
        K = np.zeros((B.shape[1], d))
    else:
        # Bass stabilization: shift past the spectral abscissa, solve
        # (A + beta I) Z + Z (A + beta I)' = 2 B B', take K0 = B' Z^-1
        beta = float(np.linalg.norm(A, "fro")) + 1.0
        Z = _lyapunov_solve((A + beta * np.eye(d)).T, -2.0 * B @ B.T)
        K = B.T @ np.linalg.inv(Z)
        if not np.all(np.linalg.eigvals(A - B @ K).real < 0):
            raise RuntimeError("failed to construct a stabilizing initial gain")

    for _ in range(max_iter):
        Acl = A - B @ K
        P = _lyapunov_solve(Acl, Q + K.T @ R @ K)
        K = np.linalg.solve(R, B.T @ P)
        if _care_residual(P, A, B, Q, R) < tol:
            return K
    raise RuntimeError(f"Riccati iteration did not converge in {max_iter} steps")


def box_sampler(lo, hi) -> Callable[[np.random.Generator], Array]:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    def sample(rng):
        return rng.uniform(lo, hi)

    return sample


def diffdrive_x0_sampler(rng: np.random.Generator) -> Array:
    """Uniform position in [-2,2]^2, heading in [-pi,pi), wheels at rest."""
    x, y = rng.uniform(-2.0, 2.0, size=2)
    th = rng.uniform(-np.pi, np.pi)
    return np.array([x, y, th, 0.0, 0.0])


def diffdrive_features(x: Array) -> Array:
    """State augmented with (cos theta, sin theta)."""
    th = x[..., 2]
    return np.concatenate(
        [x, np.stack([np.cos(th), np.sin(th)], axis=-1)], axis=-1)


def _diffdrive_feature_jac(x: Array) -> Array:
    th = x[2]
    jac = np.zeros((7, 5))
    jac[:5, :5] = np.eye(5)
    jac[5, 2] = -np.sin(th)
    jac[6, 2] = np.cos(th)
    return jac


def diffdrive_make(L: float = 0.5, torque_cost_weight: float = 0.1,
                   T: float = 3.0,
                   x0_sampler: Callable[[np.random.Generator], Array] | None = None,
                   ) -> EnvSpec:
    """Two-wheel planar robot; torques drive wheel speeds directly.

    State (x, y, theta, w_l, w_r); controls are the wheel torques.
    Cost x^2 + y^2 + c*(w_l^2 + w_r^2 + u_l^2 + u_r^2) pulls it to the
    origin; the policy input is augmented with (cos theta, sin theta).
    """
    if L <= 0:
        raise ValueError("wheelbase must be positive")
    c = torque_cost_weight
    if x0_sampler is None:
        x0_sampler = diffdrive_x0_sampler

    def f(x, u):
        th = x[..., 2]
        wl = x[..., 3]
        wr = x[..., 4]
        v = 0.5 * (wl + wr)
        return np.stack([v * np.cos(th), v * np.sin(th), (wr - wl) / L,
                         u[..., 0], u[..., 1]], axis=-1)

    def dfdx(x, u):
        th, wl, wr = x[2], x[3], x[4]
        v = 0.5 * (wl + wr)
        A = np.zeros((5, 5))
        A[0, 2] = -v * np.sin(th)
        A[0, 3] = A[0, 4] = 0.5 * np.cos(th)
        A[1, 2] = v * np.cos(th)
        A[1, 3] = A[1, 4] = 0.5 * np.sin(th)
        A[2, 3] = -1.0 / L
        A[2, 4] = 1.0 / L
        return A

    dfdu_const = np.zeros((5, 2))
    dfdu_const[3, 0] = 1.0
    dfdu_const[4, 1] = 1.0

    def w(x, u):
        return (x[..., 0] ** 2 + x[..., 1] ** 2
                + c * (x[..., 3] ** 2 + x[..., 4] ** 2
                       + u[..., 0] ** 2 + u[..., 1] ** 2))

    def dwdx(x, u):
        return np.array([2 * x[0], 2 * x[1], 0.0, 2 * c * x[3], 2 * c * x[4]])

    return EnvSpec(
        name="diffdrive", dim_x=5, dim_u=2, horizon=T,
        f=f, dfdx=dfdx, dfdu=lambda x, u: dfdu_const.copy(),
        w=w, dwdx=dwdx, dwdu=lambda x, u: 2 * c * u,
        J=lambda x: 0.0, dJdx=lambda x: np.zeros(5),
        sample_x0=x0_sampler,
        feature_map=diffdrive_features,
        feature_jac=_diffdrive_feature_jac,
        feature_dim=7,
        batched=True,
    )


def square_electrodes() -> Array:
    """Eight electrodes on the unit square: corners plus edge midpoints."""
    return np.array([
        [0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [1.0, 0.5],
        [1.0, 1.0], [0.5, 1.0], [0.0, 1.0], [0.0, 0.5],
    ])


def circular_target(radius: float = 0.25, period: float = 2.0,
                    center=(0.5, 0.5)):
    """Reference path: one lap around the square's center per period."""
    cx, cy = center
    omega = 2.0 * np.pi / period

    def target(tau):
        return np.stack([cx + radius * np.cos(omega * tau),
                         cy + radius * np.sin(omega * tau)], axis=-1)

    def target_dot(tau):
        return np.stack([-radius * omega * np.sin(omega * tau),
                         radius * omega * np.cos(omega * tau)], axis=-1)

    return target, target_dot


def electric_x0_sampler(target) -> Callable[[np.random.Generator], Array]:
    def sample(rng):
        p = target(0.0) + rng.uniform(-0.1, 0.1, size=2)
        return np.array([p[0], p[1], 0.0, 0.0, 0.0])

    return sample


def electric_make(k_e: float = 1.0, q: float = 1.0, m: float = 1.0,
                  electrode_layout: Array | None = None,
                  target_path=None,
                  T: float = 2.0,
                  x0_sampler: Callable[[np.random.Generator], Array] | None = None,
                  softening: float = 1e-4,
                  control_cost: float = 0.1,
                  ) -> EnvSpec:
    """Charged ball steered by eight modulated electrode charges.

    State (p_x, p_y, v_x, v_y, tau) where tau is a clock coordinate with
    d tau/dt = 1, folding the moving reference target into autonomous
    dynamics.  Softened Coulomb forces bound the field near electrodes.
    """
    E = square_electrodes() if electrode_layout is None else np.asarray(electrode_layout, float)
    n_e = len(E)
    if target_path is None:
        target, target_dot = circular_target(period=T)
    else:
        target, target_dot = target_path
    if x0_sampler is None:
        x0_sampler = electric_x0_sampler(target)
    qm = q / m
    eps = softening
    cu = control_cost

    def accel(p, u):
        # p: (..., 2), u: (..., n_e)
        r = p[..., None, :] - E  # (..., n_e, 2)
        r2 = np.sum(r * r, axis=-1) + eps
        coef = k_e * u / r2 ** 1.5  # (..., n_e)
        return qm * np.sum(coef[..., None] * r, axis=-2)

    def f(x, u):
        a = accel(x[..., 0:2], u)
        ones = np.ones(x.shape[:-1])
        return np.concatenate([x[..., 2:4], a, ones[..., None]], axis=-1)

    def dfdx(x, u):
        p = x[0:2]
        r = p[None, :] - E
        r2 = np.sum(r * r, axis=-1) + eps
        # d a / d p = (q/m) k_e sum_i u_i [I/r2^1.5 - 3 r r^T / r2^2.5]
        dadp = np.zeros((2, 2))
        for i in range(n_e):
            ri = r[i]
            dadp += k_e * u[i] * (np.eye(2) / r2[i] ** 1.5
                                  - 3.0 * np.outer(ri, ri) / r2[i] ** 2.5)
        dadp *= qm
        A = np.zeros((5, 5))
        A[0, 2] = A[1, 3] = 1.0
        A[2:4, 0:2] = dadp
        return A

    def dfdu(x, u):
        p = x[0:2]
        r = p[None, :] - E
        r2 = np.sum(r * r, axis=-1) + eps
        B = np.zeros((5, n_e))
        B[2:4, :] = qm * k_e * (r / r2[:, None] ** 1.5).T
        return B

    def w(x, u):
        diff = x[..., 0:2] - target(x[..., 4])
        return np.sum(diff * diff, axis=-1) + cu * np.sum(u * u, axis=-1)

    def dwdx(x, u):
        diff = x[0:2] - target(x[4])
        out = np.zeros(5)
        out[0:2] = 2.0 * diff
        out[4] = -2.0 * float(diff @ target_dot(x[4]))
        return out

    return EnvSpec(
        name="electric", dim_x=5, dim_u=n_e, horizon=T,
        f=f, dfdx=dfdx, dfdu=dfdu,
        w=w, dwdx=dwdx, dwdu=lambda x, u: 2.0 * cu * u,
        J=lambda x: 0.0, dJdx=lambda x: np.zeros(5),
        sample_x0=x0_sampler,
        batched=True,
    )


def finite_difference_adapter(blackbox_f, blackbox_w, blackbox_J,
                              dim_x: int, dim_u: int, eps: float, T: float,
                              x0_sampler: Callable[[np.random.Generator], Array],
                              name: str = "fd-adapter") -> EnvSpec:
    """Wrap black-box dynamics, deriving Jacobians by forward differences.

    df/dx and df/du cost one extra dynamics call per perturbed coordinate
    (d + k extra calls per Jacobian pair, base point shared).  Under a
    counting view every underlying dynamics call is charged to n_f,
    matching how simulator cost is measured for engines that are
    finite-differenced rather than differentiated.

    Cost-side partials are central differences of the black-box costs;
    those calls are not part of the oracle-call measure.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")

    def dfdx(x, u):
        A, _ = _fd_jacobians(blackbox_f, x, u, eps)
        return A

    def dfdu(x, u):
        _, B = _fd_jacobians(blackbox_f, x, u, eps)
        return B

    def dwdx(x, u):
        g = np.empty(dim_x)
        for i in range(dim_x):
            xp = x.copy(); xp[i] += eps
            xm = x.copy(); xm[i] -= eps
            g[i] = (blackbox_w(xp, u) - blackbox_w(xm, u)) / (2 * eps)
        return g

    def dwdu(x, u):
        g = np.empty(dim_u)
        for j in range(dim_u):
            up = u.copy(); up[j] += eps
            um = u.copy(); um[j] -= eps
            g[j] = (blackbox_w(x, up) - blackbox_w(x, um)) / (2 * eps)
        return g

    def dJdx(x):
        g = np.empty(dim_x)
        for i in range(dim_x):
            xp = x.copy(); xp[i] += eps
            xm = x.copy(); xm[i] -= eps
            g[i] = (blackbox_J(xp) - blackbox_J(xm)) / (2 * eps)
        return g

    return EnvSpec(
        name=name, dim_x=dim_x, dim_u=dim_u, horizon=T,
        f=blackbox_f, dfdx=dfdx, dfdu=dfdu,
        w=blackbox_w, dwdx=dwdx, dwdu=dwdu,
        J=blackbox_J, dJdx=dJdx,
        sample_x0=x0_sampler,
        batched=False,
        fd_eps=eps,
    )


def random_linear_env(dim: int, seed: int, T: float = 1.0) -> EnvSpec:
    """Random controllable linear system with quadratic cost (diagnostics)."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(dim, dim))
    B = rng.normal(size=(dim, dim))
    Q = np.eye(dim)
    R = np.eye(dim)
    env = lqr_make(A, B, Q, R, T, point_sampler(np.ones(dim)))
    return replace(env, name=f"random-linear-{seed}")
