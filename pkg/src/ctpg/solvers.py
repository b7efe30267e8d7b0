"""Explicit ODE solvers with dense-output trajectory storage.

Fixed-step Euler/RK4 and an embedded Dormand-Prince 5(4) adaptive pair, all
usable forward or backward in time (t1 < t0 is a backward solve).  Every
accepted step stores (t, x, dx/dt) knots; `DenseTrajectory` interpolates
between them with cubic Hermite polynomials, so a later pass can query the
solution at arbitrary times without re-integrating.

Function-evaluation bookkeeping is explicit: pass an `NfeCounter` and every
rhs call, including rejected adaptive trials, is counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

RHS = Callable[[np.ndarray, float], np.ndarray]

# Dormand-Prince 5(4) tableau.  Row 7 equals the 5th-order weights (FSAL).
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)
_DP_E = tuple(b5 - b4 for b5, b4 in zip(_DP_B5, _DP_B4))

# Elementary step-size controller constants: h_next = h * clamp(0.9*err^-0.2, ...)
_SAFETY = 0.9
_SHRINK_MIN = 0.2
_GROW_MAX = 5.0
_CTRL_EXPONENT = -0.2


class SolverError(Exception):
    """Base class for integration failures."""


class DivergenceError(SolverError):
    """State became non-finite during a solve."""

    def __init__(self, t: float):
        self.t = t
        super().__init__(f"non-finite state at t={t!r}")


class StepSizeError(SolverError):
    """Stiffness/accuracy failure: step size fell below min_step."""

    def __init__(self, t: float, err_norm: float):
        self.t = t
        self.err_norm = err_norm
        super().__init__(
            f"stiffness/accuracy failure: step below min_step at t={t!r} "
            f"(err_norm={err_norm!r})"
        )


class MaxStepsError(SolverError):
    def __init__(self, t: float, max_steps: int):
        self.t = t
        super().__init__(f"max_steps={max_steps} exceeded at t={t!r}")


@dataclass
class NfeCounter:
    """Oracle-call counters: f, df/dx, df/du evaluations."""

    n_f: int = 0
    n_dfdx: int = 0
    n_dfdu: int = 0

    @property
    def total(self) -> int:
        return self.n_f + self.n_dfdx + self.n_dfdu

    def copy(self) -> "NfeCounter":
        return NfeCounter(self.n_f, self.n_dfdx, self.n_dfdu)

    def __add__(self, other: "NfeCounter") -> "NfeCounter":
        return NfeCounter(self.n_f + other.n_f,
                          self.n_dfdx + other.n_dfdx,
                          self.n_dfdu + other.n_dfdu)

    def __iadd__(self, other: "NfeCounter") -> "NfeCounter":
        self.n_f += other.n_f
        self.n_dfdx += other.n_dfdx
        self.n_dfdu += other.n_dfdu
        return self


@dataclass(frozen=True)
class SolverConfig:
    """Stepping policy for a single solve.

    method "euler"/"rk4" use `step_size`; "adaptive" uses (abstol, reltol).
    `min_step` defaults to 1e-10 * |t1 - t0| at solve time; `max_steps`
    bounds every solve.  `h_init` seeds the adaptive controller (otherwise
    an automatic initial step is chosen).
    """

    method: str
    step_size: float | None = None
    abstol: float | None = None
    reltol: float | None = None
    max_steps: int = 1_000_000
    min_step: float | None = None
    h_init: float | None = None

    def __post_init__(self):
        if self.method in ("euler", "rk4"):
            if self.step_size is None or self.step_size <= 0:
                raise ValueError(f"{self.method} needs step_size > 0")
        elif self.method == "adaptive":
            if (self.abstol is None or self.reltol is None
                    or self.abstol <= 0 or self.reltol <= 0):
                raise ValueError("adaptive needs abstol > 0 and reltol > 0")
        else:
            raise ValueError(f"unknown method {self.method!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass
class DenseTrajectory:
    """Knot sequence (t, x, dx/dt) with cubic Hermite evaluation.

    knot_times is strictly monotone: increasing for forward solves,
    decreasing for backward ones.  Evaluation at a knot time returns the
    stored state exactly.
    """

    knot_times: np.ndarray
    knot_states: np.ndarray
    knot_derivs: np.ndarray
    t_start: float
    t_end: float

    def __post_init__(self):
        n = len(self.knot_times)
        if n < 2 or len(self.knot_states) != n or len(self.knot_derivs) != n:
            raise ValueError("need >= 2 knots with matching states/derivs")

    @property
    def span(self) -> tuple[float, float]:
        return (min(self.t_start, self.t_end), max(self.t_start, self.t_end))

    def eval(self, t: float) -> np.ndarray:
        lo, hi = self.span
        if not (lo <= t <= hi):
            raise ValueError(f"t={t!r} outside trajectory span [{lo}, {hi}]")
        times = self.knot_times
        backward = times[0] > times[-1]
        # searchsorted needs ascending order; index back if reversed
        if backward:
            j = np.searchsorted(times[::-1], t, side="left")
            i = len(times) - 1 - j
            # i indexes the knot with time <= t; bracket is (i-1, i) in
            # storage order, i.e. times[i-1] >= t >= times[i]
            if i >= 0 and i < len(times) and times[i] == t:
                return self.knot_states[i].copy()
            i0, i1 = i + 1, i
            if times[i1] == t:
                return self.knot_states[i1].copy()
        else:
            i = np.searchsorted(times, t, side="left")
            if i < len(times) and times[i] == t:
                return self.knot_states[i].copy()
            i0, i1 = i - 1, i
        t0, t1 = times[i0], times[i1]
        h = t1 - t0
        s = (t - t0) / h
        s2 = s * s
        s3 = s2 * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        return (h00 * self.knot_states[i0] + (h10 * h) * self.knot_derivs[i0]
                + h01 * self.knot_states[i1] + (h11 * h) * self.knot_derivs[i1])

    @property
    def n_knots(self) -> int:
        return len(self.knot_times)


def trajectory_eval(traj: DenseTrajectory, t: float) -> np.ndarray:
    """Cubic Hermite evaluation of a stored trajectory; exact at knots."""
    return traj.eval(t)


def _check_finite(x: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(x)):
        raise DivergenceError(t)


def step_euler(rhs: RHS, x: np.ndarray, t: float, h: float,
               counter: NfeCounter | None = None) -> np.ndarray:
    """One explicit Euler step x + h*rhs(x, t); one f-evaluation."""
    if h == 0:
        raise ValueError("h must be nonzero")
    if counter is not None:
        counter.n_f += 1
    out = x + h * rhs(x, t)
    _check_finite(out, t + h)
    return out


def step_rk4(rhs: RHS, x: np.ndarray, t: float, h: float,
             counter: NfeCounter | None = None) -> np.ndarray:
    """One classical 4-stage Runge-Kutta step; four f-evaluations."""
    if h == 0:
        raise ValueError("h must be nonzero")
    if counter is not None:
        counter.n_f += 4
    k1 = rhs(x, t)
    k2 = rhs(x + 0.5 * h * k1, t + 0.5 * h)
    k3 = rhs(x + 0.5 * h * k2, t + 0.5 * h)
    k4 = rhs(x + h * k3, t + h)
    out = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    _check_finite(out, t + h)
    return out


def _dopri_stages(rhs, x, t, h, k1, counter, err_weights):
    """Stages 2..7 of DP5(4) given k1.  Returns (x5, err_norm, k7)."""
    k = [k1]
    for i in range(1, 7):
        xi = x + h * sum(a * kj for a, kj in zip(_DP_A[i], k))
        if counter is not None:
            counter.n_f += 1
        k.append(rhs(xi, t + _DP_C[i] * h))
    x5 = x + h * sum(b * kj for b, kj in zip(_DP_B5, k) if b != 0.0)
    err = h * sum(e * kj for e, kj in zip(_DP_E, k) if e != 0.0)
    return x5, err, k[6]


def _err_norm(err, x0, x1, abstol, reltol, err_weights):
    scale = abstol + reltol * np.maximum(np.abs(x0), np.abs(x1))
    if err_weights is not None:
        scale = scale * err_weights
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _step_factor(err_norm: float) -> float:
    if err_norm == 0.0:
        return _GROW_MAX
    return min(_GROW_MAX, max(_SHRINK_MIN, _SAFETY * err_norm ** _CTRL_EXPONENT))


def step_adaptive(rhs: RHS, x: np.ndarray, t: float, h_try: float,
                  abstol: float, reltol: float,
                  min_step: float = 0.0,
                  counter: NfeCounter | None = None,
                  err_weights: np.ndarray | None = None,
                  ) -> tuple[np.ndarray, float, float, float]:
    """One accepted DP5(4) step, retrying internally with shrunk h.

    Returns (x_next, h_used, h_next, err_norm).  Raises StepSizeError if
    |h| falls below min_step before acceptance.
    """
    if h_try == 0:
        raise ValueError("h_try must be nonzero")
    h = h_try
    if counter is not None:
        counter.n_f += 1
    k1 = rhs(x, t)
    while True:
        x5, err, _ = _dopri_stages(rhs, x, t, h, k1, counter, err_weights)
        if np.all(np.isfinite(x5)):
            en = _err_norm(err, x, x5, abstol, reltol, err_weights)
        else:
            en = math.inf  # overflow on trial: reject and shrink
        fac = _step_factor(en)
        if en <= 1.0:
            return x5, h, h * fac, en
        h = h * fac
        if abs(h) < min_step:
            raise StepSizeError(t, en)


def _auto_h0(rhs, x0, t0, span, direction, abstol, reltol, counter) -> tuple[float, np.ndarray]:
    """Standard order-5 initial step-size heuristic.  Also returns f(x0,t0)."""
    if counter is not None:
        counter.n_f += 2
    f0 = rhs(x0, t0)
    scale = abstol + reltol * np.abs(x0)
    d0 = float(np.sqrt(np.mean((x0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    if d0 < 1e-5 or d1 < 1e-5:
        # degenerate scales (e.g. zero boundary data): fall back to a
        # span-relative guess instead of an absolute epsilon, otherwise
        # quiet starts waste steps growing the step size back up
        h0 = max(1e-6, 1e-3 * span)
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, 0.5 * span)  # probe must stay inside the solve span
    x1 = x0 + direction * h0 * f0
    f1 = rhs(x1, t0 + direction * h0)
    if not np.all(np.isfinite(f1)):
        return direction * h0, f0
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    dm = max(d1, d2)
    h1 = max(1e-6, (0.01 / dm) ** 0.2) if dm > 1e-15 else max(1e-6, 100 * h0)
    return direction * min(100 * h0, h1, span), f0


def solve_ivp(rhs: RHS, x0: np.ndarray, t0: float, t1: float,
              config: SolverConfig, counter: NfeCounter | None = None,
              dense: bool = True,
              err_weights: np.ndarray | None = None,
              ) -> DenseTrajectory | np.ndarray:
    """Integrate rhs from t0 to t1, landing exactly on t1.

    Returns a DenseTrajectory with every accepted knot (dense=True) or just
    the final state (dense=False).  t1 < t0 is a backward solve.  The
    counter records every rhs call, rejected adaptive trials included.
    """
    if t0 == t1:
        raise ValueError("t0 must differ from t1")
    x0 = np.asarray(x0, dtype=float)
    _check_finite(x0, t0)
    if config.method == "adaptive":
        return _solve_adaptive(rhs, x0, t0, t1, config, counter, dense, err_weights)
    return _solve_fixed(rhs, x0, t0, t1, config, counter, dense)


def _solve_fixed(rhs, x0, t0, t1, config, counter, dense):
    h_mag = config.step_size
    span = t1 - t0
    direction = 1.0 if span > 0 else -1.0
    n_steps = max(1, math.ceil(abs(span) / h_mag - 1e-12))
    if n_steps > config.max_steps:
        raise MaxStepsError(t0, config.max_steps)
    euler = config.method == "euler"

    times = [t0]
    states = [x0.copy()]
    derivs = []
    x, t = x0, t0
    last_slope = None
    for i in range(n_steps):
        # truncate the final step to land exactly on t1
        t_next = t1 if i == n_steps - 1 else t0 + (i + 1) * direction * h_mag
        h = t_next - t
        if euler:
            if counter is not None:
                counter.n_f += 1
            k1 = rhs(x, t)
            x = x + h * k1
            last_slope = k1
        else:
            if counter is not None:
                counter.n_f += 4
            k1 = rhs(x, t)
            k2 = rhs(x + 0.5 * h * k1, t + 0.5 * h)
            k3 = rhs(x + 0.5 * h * k2, t + 0.5 * h)
            k4 = rhs(x + h * k3, t + h)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            last_slope = k4  # f at (x + h*k3, t+h): O(h^3) from the new knot
        _check_finite(x, t_next)
        t = t_next
        if dense:
            derivs.append(k1)
            times.append(t)
            states.append(x.copy())
    if not dense:
        return x
    # terminal knot reuses the last stage slope: keeps rhs-call counts at
    # exactly n (Euler) / 4n (RK4) while staying O(h^3)-close for RK4
    derivs.append(last_slope)
    return DenseTrajectory(np.array(times), np.vstack(states), np.vstack(derivs),
                           t0, t1)


def _solve_adaptive(rhs, x0, t0, t1, config, counter, dense, err_weights):
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    min_step = config.min_step if config.min_step is not None else 1e-10 * span
    abstol, reltol = config.abstol, config.reltol

    if config.h_init is not None:
        h = direction * abs(config.h_init)
        if counter is not None:
            counter.n_f += 1
        k1 = rhs(x0, t0)
    else:
        h, k1 = _auto_h0(rhs, x0, t0, span, direction, abstol, reltol, counter)

    times = [t0]
    states = [x0.copy()]
    derivs = [k1]
    x, t = x0, t0
    n_trials = 0
    while t != t1:
        final = abs(h) >= abs(t1 - t)
        if final:
            h = t1 - t
        n_trials += 1
        if n_trials > config.max_steps:
            raise MaxStepsError(t, config.max_steps)
        x5, err, k7 = _dopri_stages(rhs, x, t, h, k1, counter, err_weights)
        if np.all(np.isfinite(x5)):
            en = _err_norm(err, x, x5, abstol, reltol, err_weights)
        else:
            en = math.inf  # overflow on trial: reject and shrink
        fac = _step_factor(en)
        if en <= 1.0:
            t = t1 if final else t + h
            x = x5
            k1 = k7  # FSAL: stage 7 is f at the accepted point
            if dense:
                times.append(t)
                states.append(x.copy())
                derivs.append(k7)
            h = h * fac
        else:
            h = h * fac
            if abs(h) < min_step:
                raise StepSizeError(t, en)
    if not dense:
        return x
    return DenseTrajectory(np.array(times), np.vstack(states), np.vstack(derivs),
                           t0, t1)
