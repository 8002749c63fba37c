"""Adaptive Dormand-Prince 5(4) integration with dense output and events.

Each accepted step stores its start point, size and the quartic dense-output
coefficients, so the trajectory can be evaluated anywhere in its span with
4th-order accuracy. Two terminal events are monitored after every step:

* blowup: ``min_i a_i`` falls to ``blowup_floor``
* escape: ``max(|a_i|, |adot_i|)`` exceeds ``escape_ceiling``

Event times are refined by bisection on the step interpolant.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, RangeError, ValidationError
from .model import EmdenSpec, PhaseState, vector_field

__all__ = [
    "IntegrationConfig",
    "TerminationKind",
    "Termination",
    "Trajectory",
    "integrate",
    "dense_eval",
    "solve_ode",
]

# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# 5th-order minus embedded 4th-order weights, over all seven stages (FSAL).
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# Dense output: y(t0 + s h) = y0 + h * (K.T @ _P) @ [s, s^2, s^3, s^4]
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
# PI controller exponents (Gustafsson; as used in DOPRI5)
_BETA1 = 0.7 / 5.0
_BETA2 = 0.4 / 5.0
_MIN_STEP_FRACTION = 1e-14
# A collapsing a_i whose time-to-zero estimate a_i/|adot_i| is within this many
# minimal steps is treated as blowup when the step size underflows.
_COLLAPSE_STEPS = 1e3


@dataclass(frozen=True)
class IntegrationConfig:
    t_end: float
    rtol: float = 1e-9
    atol: float = 1e-12
    blowup_floor: float = 1e-8
    escape_ceiling: float = 1e12
    max_steps: int = 10**7
    dense_dt: Optional[float] = None

    def __post_init__(self):
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValidationError("t_end must be a positive finite number")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValidationError("rtol and atol must be positive")
        if not self.blowup_floor > 0:
            raise ValidationError("blowup_floor must be positive")
        if not self.escape_ceiling > 0:
            raise ValidationError("escape_ceiling must be positive")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ValidationError("max_steps must be a positive integer")
        if self.dense_dt is not None and not self.dense_dt > 0:
            raise ValidationError("dense_dt must be positive")

    @property
    def sample_interval(self):
        return self.dense_dt if self.dense_dt is not None else self.t_end / 1000.0

    def check_against(self, spec: EmdenSpec):
        if not self.blowup_floor < min(spec.a0):
            raise ValidationError("blowup_floor must be below min(a0)")

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self):
        return {
            "t_end": self.t_end,
            "rtol": self.rtol,
            "atol": self.atol,
            "blowup_floor": self.blowup_floor,
            "escape_ceiling": self.escape_ceiling,
            "max_steps": self.max_steps,
            "dense_dt": self.dense_dt,
        }


class TerminationKind(str, enum.Enum):
    REACHED_T_END = "ReachedTEnd"
    BLOWUP = "BlowupEvent"
    ESCAPE = "EscapeEvent"
    STEP_FAILURE = "StepFailure"


@dataclass(frozen=True)
class Termination:
    kind: TerminationKind
    time: float
    index: Optional[int] = None
    detail: str = ""

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "time": self.time,
            "index": self.index,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class _Steps:
    """Raw output of :func:`solve_ode`: accepted steps plus how it ended."""

    t0: np.ndarray  # (K,) step start times
    h: np.ndarray  # (K,) step sizes
    y0: np.ndarray  # (K, dim) step start states
    q: np.ndarray  # (K, dim, 4) dense coefficients
    t_final: float
    y_final: np.ndarray
    termination: Termination
    n_rejected: int = 0
    nfev: int = 0

    def evaluate(self, t):
        if self.t0.size == 0:
            return self.y_final.copy()
        k = int(np.searchsorted(self.t0, t, side="right")) - 1
        k = min(max(k, 0), self.t0.size - 1)
        return _interp(self.y0[k], self.q[k], self.h[k], (t - self.t0[k]) / self.h[k])


def _interp(y0, q, h, s):
    return y0 + h * (q @ np.array([s, s * s, s**3, s**4]))


def _norm_inf(err, y_old, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.max(np.abs(err) / scale))


def _initial_step(fun, y0, f0, rtol, atol, span):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    try:
        f1 = fun(y0 + h0 * f0)
    except DomainError:
        return h0
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def _bisect(g, interp, lo, hi, tol):
    """Locate the first zero of ``g(interp(t))`` with ``g > 0`` at lo and ``<= 0`` at hi."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(interp(mid)) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo, hi


def solve_ode(
    fun: Callable[[np.ndarray], np.ndarray],
    y0,
    t_end,
    rtol=1e-9,
    atol=1e-12,
    max_steps=10**7,
    events=(),
    collapse_dim=None,
    t0=0.0,
):
    """Integrate the autonomous system ``y' = fun(y)`` from ``t0`` to ``t_end``.

    ``events`` is a sequence of ``(kind, index_fn, g)`` where ``g(y) > 0``
    holds in the admissible region; the first step on which some ``g`` turns
    non-positive terminates the run at the bisected crossing. ``index_fn(y)``
    names the offending component. A stage on which ``fun`` raises
    :class:`DomainError` is rejected and retried with a smaller step.

    When ``collapse_dim`` is given, a step-size underflow while some
    ``y[i]`` (``i < collapse_dim``) is collapsing toward zero within a few
    minimal steps is reported as a blowup rather than a step failure.
    """
    y = np.array(y0, dtype=float)
    dim = y.size
    t = float(t0)
    span = float(t_end) - t
    h_min = _MIN_STEP_FRACTION * max(abs(t_end), span)
    f = fun(y)
    nfev = 1
    h = _initial_step(fun, y, f, rtol, atol, span)
    nfev += 1

    t0s, hs, y0s, qs = [], [], [], []
    err_prev = 1e-4
    rejected_last = False
    n_rejected = 0
    K = np.empty((7, dim))
    termination = None

    for g_kind, g_index, g in events:
        if g(y) <= 0.0:
            termination = Termination(g_kind, t, g_index(y), "event condition holds at the initial state")
            break

    n_steps = 0
    while termination is None:
        if t >= t_end:
            termination = Termination(TerminationKind.REACHED_T_END, t)
            break
        if n_steps >= max_steps:
            termination = Termination(TerminationKind.STEP_FAILURE, t, None, "max_steps exhausted")
            break
        if h < h_min:
            termination = _underflow(t, y, collapse_dim, h_min)
            break

        last = t + h >= t_end or t_end - (t + h) < h_min
        if last:
            h = t_end - t

        K[0] = f
        try:
            for i in range(1, 6):
                K[i] = fun(y + h * (_A[i] @ K[:i]))
            y_new = y + h * (_B @ K[:6])
            f_new = fun(y_new)
            nfev += 6
        except DomainError:
            nfev += 6
            h *= 0.25
            rejected_last = True
            n_rejected += 1
            continue
        K[6] = f_new

        err = _norm_inf(h * (_E @ K), y, y_new, rtol, atol)
        if not math.isfinite(err):
            h *= 0.25
            rejected_last = True
            n_rejected += 1
            continue

        if err > 1.0:
            h *= max(_MIN_FACTOR, _SAFETY * err ** (-1 / 5))
            rejected_last = True
            n_rejected += 1
            continue

        # accepted
        q = K.T @ _P
        t_new = t_end if last else t + h
        t0s.append(t)
        hs.append(h)
        y0s.append(y.copy())
        qs.append(q.copy())
        n_steps += 1

        for g_kind, g_index, g in events:
            if g(y_new) <= 0.0:
                y_step, q_step, t_step, h_step = y.copy(), q.copy(), t, h

                def interp(tt):
                    return _interp(y_step, q_step, h_step, (tt - t_step) / h_step)

                tol = rtol * max(1.0, abs(t_new))
                _, hi = _bisect(g, interp, t, t_new, tol)
                y_hit = interp(hi)
                termination = Termination(g_kind, float(hi), g_index(y_hit))
                t, y = hi, y_hit
                break
        if termination is not None:
            break

        t, y, f = t_new, y_new, f_new
        if err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = _SAFETY * err ** (-_BETA1) * err_prev**_BETA2
            factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        if rejected_last:
            factor = min(factor, 1.0)
        err_prev = max(err, 1e-4)
        rejected_last = False
        h *= factor

    def stack(items, shape):
        return np.array(items) if items else np.empty(shape)

    return _Steps(
        t0=stack(t0s, (0,)),
        h=stack(hs, (0,)),
        y0=stack(y0s, (0, dim)),
        q=stack(qs, (0, dim, 4)),
        t_final=t,
        y_final=y,
        termination=termination,
        n_rejected=n_rejected,
        nfev=nfev,
    )


def _underflow(t, y, collapse_dim, h_min):
    if collapse_dim is not None:
        a, v = y[:collapse_dim], y[collapse_dim:2 * collapse_dim]
        with np.errstate(divide="ignore"):
            time_to_zero = np.where(v < 0.0, a / np.abs(v), np.inf)
        i = int(np.argmin(time_to_zero))
        if time_to_zero[i] <= _COLLAPSE_STEPS * h_min:
            return Termination(
                TerminationKind.BLOWUP,
                float(t),
                i,
                f"step size underflow while a_{i + 1}={a[i]:.3e} collapses",
            )
    return Termination(TerminationKind.STEP_FAILURE, float(t), None, "step size underflow")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense-output solution of one Emden system.

    ``times``/``states`` hold the uniform samples plus the terminal state;
    the step data behind :func:`dense_eval` are kept in ``steps``.
    """

    spec: EmdenSpec
    config: IntegrationConfig
    times: np.ndarray
    states: np.ndarray
    termination: Termination
    steps: _Steps = field(repr=False)

    @property
    def samples(self):
        return [PhaseState.from_vector(t, y) for t, y in zip(self.times, self.states)]

    @property
    def t_final(self):
        return float(self.steps.t_final)

    @property
    def final_state(self):
        return PhaseState.from_vector(self.steps.t_final, self.steps.y_final)

    @property
    def n_steps(self):
        return int(self.steps.t0.size)


def integrate(spec: EmdenSpec, cfg: IntegrationConfig) -> Trajectory:
    """Integrate ``spec`` from its initial data up to ``cfg.t_end`` or a terminal event."""
    cfg.check_against(spec)
    n = spec.dimension
    floor = cfg.blowup_floor
    ceiling = cfg.escape_ceiling
    events = (
        (TerminationKind.BLOWUP, lambda y: int(np.argmin(y[:n])), lambda y: float(np.min(y[:n]) - floor)),
        (TerminationKind.ESCAPE, lambda y: int(np.argmax(np.abs(y))) % n, lambda y: float(ceiling - np.max(np.abs(y)))),
    )
    y0 = np.concatenate([spec.a0, spec.a1])
    steps = solve_ode(
        vector_field(spec),
        y0,
        cfg.t_end,
        rtol=cfg.rtol,
        atol=cfg.atol,
        max_steps=cfg.max_steps,
        events=events,
        collapse_dim=n,
    )
    times, states = _dense_samples(steps, cfg.sample_interval)
    return Trajectory(spec, cfg, times, states, steps.termination, steps)


def _dense_samples(steps: _Steps, dt):
    t_final = steps.t_final
    count = int(math.floor(t_final / dt + 1e-12)) + 1
    grid = np.arange(count) * dt
    grid = grid[grid < t_final]
    if steps.t0.size == 0:
        grid = grid[:0]
    states = [steps.evaluate(t) for t in grid]
    times = np.append(grid, t_final)
    states.append(steps.y_final.copy())
    return times, np.array(states)


def dense_eval(traj: Trajectory, t) -> PhaseState:
    """Evaluate the trajectory's interpolant at time ``t``."""
    t = float(t)
    if not (0.0 <= t <= traj.t_final):
        raise RangeError(f"t={t} outside trajectory span [0, {traj.t_final}]")
    if t == traj.t_final:
        return traj.final_state
    return PhaseState.from_vector(t, traj.steps.evaluate(t))
