"""Policy-gradient estimators for continuous-time control.

All estimators compute d(loss)/d(params) for the rollout loss
integral(w(x, pi(x))) dt + J(x(T)) under dx/dt = f(x, pi(x)), and report
oracle-call counts alongside the gradient so accuracy/cost tradeoffs can
be compared:

- ctpg_gradient: adaptive forward solve that stores a dense trajectory,
  then one fused backward solve of the adjoint + parameter-gradient
  system against the stored spline.
- bptt_gradient: fixed-step Euler forward, exact reverse-mode sweep of
  the discretized computation graph (exact for the discrete loss).
- node_gradient: constant-memory variant that reconstructs the state
  backward by integrating -f; numerically unstable once the policy
  stabilizes the system, which is reported as data via the
  reconstruction discrepancy.
- fd_gradient_oracle: brute-force central differences of the rollout
  loss, the independent reference all estimators are tested against.

A sign note used throughout: with u = pi(x) substituted, the adjoint
source terms are total derivatives through the policy.  Writing
D = df/dx + df/du * dpi/dx and grad_W = dw/dx + (dpi/dx)^T dw/du:

    d(alpha)/dt = -(D^T alpha + grad_W),        alpha(T) = dJ/dx(T)
    d(g)/dt     = -vjp_params(df/du^T alpha + dw/du),   g(T) = 0

Omitting the policy chain terms yields the open-loop adjoint, which is
wrong for feedback policies; a debug switch exists to demonstrate this.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .solvers import (
    DenseTrajectory,
    NfeCounter,
    SolverConfig,
    SolverError,
    solve_ivp,
    trajectory_eval,
)
from .envs import EnvSpec, CountedEnv, counted_env

Array = np.ndarray


@dataclass
class GradientEstimate:
    """One gradient evaluation: value, loss, and its measured cost."""

    grad: Array
    loss: float
    nfe: NfeCounter
    wallclock: float
    forward_knots: int
    backward_knots: int
    aux: float | None = None
    diverged: bool = False


def _augmented_rhs(env, policy):
    """rhs of (x, running cost) under the closed-loop dynamics."""

    def rhs(z, t):
        x = z[:-1]
        u = policy(x)
        dx = env.f(x, u)
        dc = env.w(x, u)
        return np.append(dx, dc)

    return rhs


def rollout_loss(env, policy, x0: Array, solver_config: SolverConfig,
                 counter: NfeCounter | None = None,
                 dense: bool = True):
    """Integrate the augmented (state, running-cost) system over [0, T].

    Returns (loss, trajectory).  The trajectory's last coordinate is the
    accumulated running cost; it participates in adaptive error control
    and is stripped off by the backward pass.  With dense=False only the
    final augmented state is kept and trajectory is None.
    """
    if env.horizon == 0.0:
        return float(env.J(np.asarray(x0, dtype=float))), None
    cenv = env if isinstance(env, CountedEnv) or counter is None \
        else counted_env(env, counter)
    rhs = _augmented_rhs(cenv, policy)
    z0 = np.append(np.asarray(x0, dtype=float), 0.0)
    out = solve_ivp(rhs, z0, 0.0, env.horizon, solver_config, dense=dense)
    if dense:
        zT = out.knot_states[-1]
        loss = float(zT[-1] + cenv.J(zT[:-1]))
        return loss, out
    loss = float(out[-1] + cenv.J(out[:-1]))
    return loss, out


def _closed_loop_terms(env, policy, x, alpha, include_policy_chain=True):
    """Total-derivative adjoint source terms at one state."""
    u = policy(x)
    A, B = env.f_jacobians(x, u)
    dwdx = env.dwdx(x, u)
    dwdu = env.dwdu(x, u)
    if include_policy_chain:
        P = policy.jac_x(x)
        D = A + B @ P
        grad_w = dwdx + P.T @ dwdu
    else:
        D = A
        grad_w = dwdx
    dalpha = -(D.T @ alpha + grad_w)
    v = B.T @ alpha + dwdu
    return dalpha, v, u


def adjoint_rhs(env, policy, traj: DenseTrajectory, alpha: Array,
                t: float, include_policy_chain: bool = True) -> Array:
    """d(alpha)/dt at time t, querying the stored forward trajectory."""
    x = trajectory_eval(traj, t)[:env.dim_x]
    dalpha, _, _ = _closed_loop_terms(env, policy, x, alpha,
                                      include_policy_chain)
    return dalpha


def gradient_rhs(env, policy, traj: DenseTrajectory, alpha: Array,
                 t: float) -> Array:
    """d(g)/dt at time t; consumes dpi/dparams only as a VJP."""
    x = trajectory_eval(traj, t)[:env.dim_x]
    u = policy(x)
    _, B = env.f_jacobians(x, u)
    v = B.T @ alpha + env.dwdu(x, u)
    return -policy.vjp_params(x, v)


class KnotJacobians:
    """Simulator Jacobians evaluated once per stored forward knot.

    The backward pass already consumes trajectory data through an O(h^4)
    interpolant, so df/dx and df/du are queried at the forward knots only
    (two oracle calls per knot) and interpolated in time with piecewise
    cubic Lagrange polynomials, which is the same accuracy order.  This
    keeps the backward pass's oracle-call count proportional to the
    number of stored states rather than to backward solver stages.
    """

    def __init__(self, env, policy, traj: DenseTrajectory):
        d = env.dim_x
        ts = traj.knot_times
        A_list, B_list = [], []
        for i in range(len(ts)):
            x = traj.knot_states[i][:d]
            u = policy(x)
            A, B = env.f_jacobians(x, u)
            A_list.append(A)
            B_list.append(B)
        order = np.argsort(ts)
        self.ts = ts[order]
        self.A = np.stack(A_list)[order]
        self.B = np.stack(B_list)[order]

    def eval(self, t: float) -> tuple[Array, Array]:
        ts = self.ts
        n = len(ts)
        if n == 1:
            return self.A[0], self.B[0]
        j = int(np.searchsorted(ts, t, side="left"))
        if j < n and ts[j] == t:
            return self.A[j], self.B[j]
        # 4-point stencil around the bracketing interval (clamped at ends)
        lo = max(0, min(j - 2, n - 4))
        hi = min(n, lo + 4)
        tk = ts[lo:hi]
        w = np.ones(len(tk))
        for a in range(len(tk)):
            for b in range(len(tk)):
                if a != b:
                    w[a] *= (t - tk[b]) / (tk[a] - tk[b])
        A = np.tensordot(w, self.A[lo:hi], axes=1)
        B = np.tensordot(w, self.B[lo:hi], axes=1)
        return A, B


def _backward_weights(d: int, n_params: int, extra_state: int = 0) -> Array:
    """Error-norm scale weights for fused backward solves.

    The parameter-gradient block can dominate the error norm when
    n_params >> d, which would drown out adjoint accuracy; weighting its
    tolerance scale by sqrt(n_params) makes the whole block contribute
    like a single component.
    """
    w = np.ones(extra_state + d + n_params)
    w[extra_state + d:] = np.sqrt(max(n_params, 1))
    return w


def ctpg_gradient(env: EnvSpec, policy, x0: Array,
                  fwd_config: SolverConfig, bwd_config: SolverConfig,
                  include_policy_chain: bool = True) -> GradientEstimate:
    """Forward dense solve + fused backward adjoint/gradient solve.

    The backward pass integrates the concatenated (alpha, g) system from
    T to 0 against the stored forward spline, so the gradient accumulates
    during the same solve that propagates the adjoint.  Simulator
    Jacobians are taken from KnotJacobians (evaluated once per stored
    forward knot); policy- and cost-side derivatives are evaluated live
    at every stage since they are not oracle calls.
    """
    t_begin = time.perf_counter()
    counter = NfeCounter()
    cenv = counted_env(env, counter)
    loss, traj = rollout_loss(cenv, policy, x0, fwd_config)
    if traj is None:  # zero horizon: gradient is d J(x0)/d params = 0
        return GradientEstimate(np.zeros(policy.n_params), loss,
                                counter, time.perf_counter() - t_begin, 0, 0)
    xT = traj.knot_states[-1][:env.dim_x]
    d = env.dim_x
    n_p = policy.n_params
    jacs = KnotJacobians(cenv, policy, traj)

    def bwd_rhs(y, t):
        alpha = y[:d]
        x = trajectory_eval(traj, t)[:d]
        A, B = jacs.eval(t)
        u = policy(x)
        dwdx = cenv.dwdx(x, u)
        dwdu = cenv.dwdu(x, u)
        if include_policy_chain:
            P = policy.jac_x(x)
            dalpha = -((A + B @ P).T @ alpha + dwdx + P.T @ dwdu)
        else:
            dalpha = -(A.T @ alpha + dwdx)
        v = B.T @ alpha + dwdu
        return np.concatenate([dalpha, -policy.vjp_params(x, v)])

    y_T = np.concatenate([cenv.dJdx(xT), np.zeros(n_p)])
    weights = _backward_weights(d, n_p)
    back = solve_ivp(bwd_rhs, y_T, env.horizon, 0.0, bwd_config,
                     err_weights=weights)
    grad = back.knot_states[-1][d:]
    return GradientEstimate(
        grad=grad, loss=loss, nfe=counter,
        wallclock=time.perf_counter() - t_begin,
        forward_knots=traj.n_knots, backward_knots=back.n_knots,
    )


def ctpg_gradient_two_pass(env: EnvSpec, policy, x0: Array,
                           fwd_config: SolverConfig,
                           bwd_config: SolverConfig) -> GradientEstimate:
    """Unfused variant: solve the adjoint alone, then integrate the
    parameter-gradient dynamics against the stored adjoint spline.

    Exists as a cross-check that fusing the two backward systems is a
    pure implementation choice.
    """
    t_begin = time.perf_counter()
    counter = NfeCounter()
    cenv = counted_env(env, counter)
    loss, traj = rollout_loss(cenv, policy, x0, fwd_config)
    d = env.dim_x
    xT = traj.knot_states[-1][:d]
    jacs = KnotJacobians(cenv, policy, traj)

    def alpha_rhs(alpha, t):
        x = trajectory_eval(traj, t)[:d]
        A, B = jacs.eval(t)
        u = policy(x)
        P = policy.jac_x(x)
        return -((A + B @ P).T @ alpha + cenv.dwdx(x, u) + P.T @ cenv.dwdu(x, u))

    alpha_traj = solve_ivp(alpha_rhs, cenv.dJdx(xT), env.horizon, 0.0,
                           bwd_config)

    def g_rhs(g, t):
        alpha = trajectory_eval(alpha_traj, t)
        x = trajectory_eval(traj, t)[:d]
        _, B = jacs.eval(t)
        v = B.T @ alpha + cenv.dwdu(x, policy(x))
        return -policy.vjp_params(x, v)

    weights = _backward_weights(0, policy.n_params)
    g_traj = solve_ivp(g_rhs, np.zeros(policy.n_params), env.horizon, 0.0,
                       bwd_config, err_weights=weights)
    grad = g_traj.knot_states[-1]
    return GradientEstimate(
        grad=grad, loss=loss, nfe=counter,
        wallclock=time.perf_counter() - t_begin,
        forward_knots=traj.n_knots,
        backward_knots=alpha_traj.n_knots + g_traj.n_knots,
    )


def bptt_gradient(env: EnvSpec, policy, x0: Array, h: float) -> GradientEstimate:
    """Exact reverse-mode gradient of the Euler-discretized rollout.

    Forward: explicit Euler on the augmented system, storing all states.
    Backward: the exact discrete adjoint recursion
        lambda_n = lambda_{n+1} + h (D_n^T lambda_{n+1} + grad_W_n)
    with the parameter gradient accumulated through VJPs at every step.
    The result is the exact gradient of the discrete loss, not an ODE
    approximation; its distance to the continuous gradient is O(h).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    t_begin = time.perf_counter()
    counter = NfeCounter()
    cenv = counted_env(env, counter)
    T = env.horizon
    n = max(1, int(np.ceil(T / h - 1e-12)))
    x = np.asarray(x0, dtype=float)
    d = env.dim_x

    # forward pass: store every state and the (possibly truncated) steps
    states = np.empty((n + 1, d))
    steps = np.empty(n)
    states[0] = x
    cost = 0.0
    t = 0.0
    for i in range(n):
        t_next = T if i == n - 1 else (i + 1) * h
        hi = t_next - t
        u = policy(x)
        fx = cenv.f(x, u)
        cost += hi * float(cenv.w(x, u))
        x = x + hi * fx
        if not np.all(np.isfinite(x)):
            raise SolverError(f"bptt forward diverged at step {i}")
        states[i + 1] = x
        steps[i] = hi
        t = t_next
    loss = cost + float(cenv.J(x))

    # backward pass: exact reverse-mode of the forward graph
    lam = cenv.dJdx(x)
    grad = np.zeros(policy.n_params)
    for i in range(n - 1, -1, -1):
        xi = states[i]
        hi = steps[i]
        dalpha, v, _ = _closed_loop_terms(cenv, policy, xi, lam)
        grad += hi * policy.vjp_params(xi, v)
        lam = lam - hi * dalpha  # lam + h (D^T lam + grad_W)
    return GradientEstimate(
        grad=grad, loss=loss, nfe=counter,
        wallclock=time.perf_counter() - t_begin,
        forward_knots=n + 1, backward_knots=n + 1,
    )


def node_gradient(env: EnvSpec, policy, x0: Array,
                  config: SolverConfig) -> GradientEstimate:
    """Constant-memory estimator: reconstruct x backward instead of storing it.

    Forward pass keeps only the final state.  The backward pass
    integrates the combined (x~, alpha, g) system from T to 0, where x~
    re-solves the dynamics in reverse.  For stabilizing policies the
    reverse reconstruction is exponentially unstable; the squared
    reconstruction error |x(0) - x~(0)|^2 is returned in aux, and
    backward divergence is reported as data (aux = inf) rather than as
    failure.
    """
    t_begin = time.perf_counter()
    counter = NfeCounter()
    cenv = counted_env(env, counter)
    x0 = np.asarray(x0, dtype=float)
    loss, zT = rollout_loss(cenv, policy, x0, config, dense=False)
    if zT is None:  # zero horizon
        return GradientEstimate(np.zeros(policy.n_params), loss, counter,
                                time.perf_counter() - t_begin, 0, 0, aux=0.0)
    xT = zT[:-1]
    d = env.dim_x
    n_p = policy.n_params

    def bwd_rhs(y, t):
        x = y[:d]
        alpha = y[d:2 * d]
        dalpha, v, u = _closed_loop_terms(cenv, policy, x, alpha)
        dx = cenv.f(x, u)
        return np.concatenate([dx, dalpha, -policy.vjp_params(x, v)])

    y_T = np.concatenate([xT, cenv.dJdx(xT), np.zeros(n_p)])
    weights = _backward_weights(d, n_p, extra_state=d)
    try:
        back = solve_ivp(bwd_rhs, y_T, env.horizon, 0.0, config,
                         err_weights=weights)
        y0 = back.knot_states[-1]
        aux = float(np.sum((y0[:d] - x0) ** 2))
        return GradientEstimate(
            grad=y0[d + d:], loss=loss, nfe=counter,
            wallclock=time.perf_counter() - t_begin,
            forward_knots=1, backward_knots=back.n_knots,
            aux=aux, diverged=False,
        )
    except SolverError:
        return GradientEstimate(
            grad=np.full(n_p, np.nan), loss=loss, nfe=counter,
            wallclock=time.perf_counter() - t_begin,
            forward_knots=1, backward_knots=0,
            aux=np.inf, diverged=True,
        )


def _euler_loss(env, policy, x0: Array, h: float) -> float:
    """Plain Euler rollout loss; the oracle for bptt exactness tests."""
    T = env.horizon
    n = max(1, int(np.ceil(T / h - 1e-12)))
    x = np.asarray(x0, dtype=float)
    cost = 0.0
    t = 0.0
    for i in range(n):
        t_next = T if i == n - 1 else (i + 1) * h
        hi = t_next - t
        u = policy(x)
        cost += hi * float(env.w(x, u))
        x = x + hi * env.f(x, u)
        t = t_next
    return cost + float(env.J(x))


def fd_discrete_gradient(env, policy, x0: Array, h: float,
                         eps: float = 1e-6) -> Array:
    """Central differences of the Euler-discretized loss in the params."""
    theta = policy.params
    grad = np.empty(len(theta))
    for i in range(len(theta)):
        tp = theta.copy(); tp[i] += eps
        tm = theta.copy(); tm[i] -= eps
        lp = _euler_loss(env, policy.with_params(tp), x0, h)
        lm = _euler_loss(env, policy.with_params(tm), x0, h)
        grad[i] = (lp - lm) / (2 * eps)
    return grad


def _rk4_loss_batch(env, policy, params_matrix: Array, x0: Array,
                    h: float) -> Array:
    """Fixed-step RK4 rollout losses for many parameter vectors at once.

    Independent of the solvers module on purpose: this is the brute-force
    reference path, so it shares no integrator code with what it checks.
    """
    n_var = params_matrix.shape[0]
    X = np.tile(np.asarray(x0, dtype=float), (n_var, 1))
    C = np.zeros(n_var)

    def zdot(Xc):
        X_, C_ = Xc
        U = policy.batch_forward(params_matrix, X_)
        return env.f(X_, U), env.w(X_, U)

    T = env.horizon
    n = max(1, int(np.ceil(T / h - 1e-12)))
    t = 0.0
    for i in range(n):
        t_next = T if i == n - 1 else (i + 1) * h
        hi = t_next - t
        k1x, k1c = zdot((X, C))
        k2x, k2c = zdot((X + 0.5 * hi * k1x, C))
        k3x, k3c = zdot((X + 0.5 * hi * k2x, C))
        k4x, k4c = zdot((X + hi * k3x, C))
        X = X + (hi / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        C = C + (hi / 6.0) * (k1c + 2 * k2c + 2 * k3c + k4c)
        t = t_next
    return C + np.array([env.J(x) for x in X])


def _rk4_loss_single(env, policy, x0: Array, h: float) -> float:
    x = np.asarray(x0, dtype=float)
    c = 0.0

    def zdot(x_, c_):
        u = policy(x_)
        return env.f(x_, u), float(env.w(x_, u))

    T = env.horizon
    n = max(1, int(np.ceil(T / h - 1e-12)))
    t = 0.0
    for i in range(n):
        t_next = T if i == n - 1 else (i + 1) * h
        hi = t_next - t
        k1x, k1c = zdot(x, c)
        k2x, k2c = zdot(x + 0.5 * hi * k1x, c)
        k3x, k3c = zdot(x + 0.5 * hi * k2x, c)
        k4x, k4c = zdot(x + hi * k3x, c)
        x = x + (hi / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        c = c + (hi / 6.0) * (k1c + 2 * k2c + 2 * k3c + k4c)
        t = t_next
    return c + float(env.J(x))


def fd_gradient_oracle(env: EnvSpec, policy, x0: Array,
                       fine_h: float = 1e-4, eps: float = 1e-6) -> Array:
    """Brute-force reference gradient: central differences of the rollout
    loss computed with fixed-step RK4 at fine_h, over every parameter.

    Costs 2 * n_params rollouts.  fine_h must be small enough that the
    discretization error is negligible next to eps; callers pick it per
    problem.  When the environment supports batched dynamics all
    perturbed rollouts are integrated simultaneously.
    """
    theta = policy.params
    n_p = len(theta)
    if getattr(env, "batched", False) and hasattr(policy, "batch_forward"):
        P = np.tile(theta, (2 * n_p, 1))
        idx = np.arange(n_p)
        P[2 * idx, idx] += eps
        P[2 * idx + 1, idx] -= eps
        losses = _rk4_loss_batch(env, policy, P, x0, fine_h)
        return (losses[0::2] - losses[1::2]) / (2 * eps)
    grad = np.empty(n_p)
    for i in range(n_p):
        tp = theta.copy(); tp[i] += eps
        tm = theta.copy(); tm[i] -= eps
        lp = _rk4_loss_single(env, policy.with_params(tp), x0, fine_h)
        lm = _rk4_loss_single(env, policy.with_params(tm), x0, fine_h)
        grad[i] = (lp - lm) / (2 * eps)
    return grad


def reverse_jacobian_eigs(env: EnvSpec, policy, x: Array,
                          alpha: Array, fd_eps: float = 1e-6) -> Array:
    """Eigenvalues of the reverse-time combined (x, alpha, g) process.

    The Jacobian of the negated combined dynamics is block triangular in
    (x | alpha | g): diag blocks -D and +D^T with D the closed-loop
    state Jacobian, and a zero column for g.  Its spectrum is therefore
    {+lambda_i, -lambda_i} over eig(D) plus n_params zeros, so some
    eigenvalue has positive real part whenever the forward loop is
    strictly stable: the reverse reconstruction is linearly unstable.

    The second-derivative coupling block is finite-differenced from the
    adjoint dynamics rather than demanding Hessians from environments.
    """
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    d = env.dim_x
    n_p = policy.n_params
    u = policy(x)
    A, B = env.f_jacobians(x, u)
    P = policy.jac_x(x)
    D = A + B @ P

    def neg_alpha_dot(xq):
        dalpha, _, _ = _closed_loop_terms(env, policy, xq, alpha)
        return -dalpha

    S = np.empty((d, d))
    for j in range(d):
        step = fd_eps * (1.0 + abs(x[j]))
        xp = x.copy(); xp[j] += step
        xm = x.copy(); xm[j] -= step
        S[:, j] = (neg_alpha_dot(xp) - neg_alpha_dot(xm)) / (2 * step)

    # d f(x, pi(x)) / d params, materialized column-block via VJPs (k rows)
    dfdtheta = B @ np.vstack([policy.vjp_params(x, e)
                              for e in np.eye(env.dim_u)])

    n = 2 * d + n_p
    M = np.zeros((n, n))
    M[:d, :d] = -D
    M[d:2 * d, :d] = S
    M[d:2 * d, d:2 * d] = D.T
    M[2 * d:, d:2 * d] = dfdtheta.T
    return np.linalg.eigvals(M)


def spectrum_pairing_residual(eigs: Array) -> float:
    """How far a spectrum is from being symmetric under negation."""
    order = np.lexsort((eigs.imag, eigs.real))
    neg = -eigs
    order_neg = np.lexsort((neg.imag, neg.real))
    return float(np.max(np.abs(eigs[order] - neg[order_neg])))
