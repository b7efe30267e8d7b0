"""Continuous-time policy gradients for control with known dynamics.

Library layout:

- solvers: explicit ODE steppers (Euler, RK4, embedded 5(4) pair) with
  dense-output trajectories and oracle-call counting.
- policy: small tanh MLP policies with hand-derived reverse-mode
  derivatives, plus flat-parameter serialization.
- envs: differentiable benchmark environments (LQR, differential drive,
  electrostatic ball steering) and a finite-difference adapter for
  black-box dynamics.
- gradients: the gradient estimators (adaptive adjoint / ctpg, bptt,
  reverse-reconstruction / node), the brute-force oracle, and the
  reverse-process spectrum diagnostic.
- training: minibatch Adam loop with seeded determinism.
- bench / cli: benchmark commands emitting CSV data and plot scripts.
"""

__version__ = "0.1.0"

from .solvers import (
    DenseTrajectory,
    DivergenceError,
    MaxStepsError,
    NfeCounter,
    SolverConfig,
    SolverError,
    StepSizeError,
    solve_ivp,
    step_adaptive,
    step_euler,
    step_rk4,
    trajectory_eval,
)
from .policy import (
    MlpArch,
    MlpPolicy,
    ScalarGainPolicy,
    init_params,
    load_params,
    mlp_forward,
    mlp_jacobian_x,
    mlp_policy_for,
    mlp_vjp_params,
    save_params,
)
from .envs import (
    EnvSpec,
    counted_env,
    diffdrive_make,
    electric_make,
    finite_difference_adapter,
    lqr_make,
    lqr_optimal_gain,
)
from .gradients import (
    GradientEstimate,
    adjoint_rhs,
    bptt_gradient,
    ctpg_gradient,
    ctpg_gradient_two_pass,
    fd_gradient_oracle,
    gradient_rhs,
    node_gradient,
    reverse_jacobian_eigs,
    rollout_loss,
)
from .training import (
    AdamParams,
    AdamState,
    TrainConfig,
    TrainHistory,
    adam_step,
    clip_grad,
    sample_initial_states,
    train_policy,
)
