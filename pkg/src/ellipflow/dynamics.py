"""Long-time behaviour of the Emden systems.

Blowup/global classification against the closed-form blowup-time bound,
first integrals of the decoupled systems, Lyapunov spectra by tangent-space
integration with QR re-orthonormalisation, Poincare sections, and parameter
sweeps. Chaos and periodicity are only ever reported as candidate flags.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Optional, Sequence

import numpy as np

from .errors import BlowupDuringLyapunov, DomainError, EllipflowError
from .integrator import (
    IntegrationConfig,
    TerminationKind,
    Trajectory,
    integrate,
    solve_ode,
    _interp,
)
from .model import EmdenSpec, PhaseState, System, _fd_jacobian, vector_field

__all__ = [
    "ClassKind",
    "Classification",
    "theorem_bound",
    "predicts_global",
    "bound_tolerance",
    "classify",
    "first_integral",
    "first_integral_drift",
    "LyapunovResult",
    "lyapunov_spectrum",
    "trace_average",
    "Section",
    "section_crossings",
    "poincare_section",
    "recurrence_min",
    "RunReport",
    "analyze",
    "sweep",
    "default_grid",
    "spec_hash",
    "worker_count",
]

PERIODIC_THRESHOLD = 1e-4
_GROWTH_TREND = 1.1


class ClassKind(str, enum.Enum):
    BLOWUP = "BlowupDetected"
    GLOBAL_BOUNDED = "GlobalBounded"
    GLOBAL_GROWING = "GlobalGrowing"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class Classification:
    kind: ClassKind
    t_star: Optional[float] = None

    def to_dict(self):
        return {"kind": self.kind.value, "t_star": self.t_star}


def theorem_bound(spec: EmdenSpec) -> Optional[float]:
    """Blowup-time bound ``min(-a_i0/a_i1 : a_i1 < 0)`` when its hypotheses hold.

    Requires xi < 0 and, for system A, every a_i1 < 0; for the viscous
    B systems at least one a_i1 < 0. Returns ``None`` otherwise (including
    for system P, which has no such statement).
    """
    if spec.xi >= 0.0 or spec.system is System.P:
        return None
    a0 = np.asarray(spec.a0)
    a1 = np.asarray(spec.a1)
    neg = a1 < 0.0
    if spec.system is System.A:
        if not np.all(neg):
            return None
    elif not np.any(neg):
        return None
    return float(np.min(-a0[neg] / a1[neg]))


def predicts_global(spec: EmdenSpec) -> bool:
    """True when xi < 0 and all a_i1 >= 0, the global-existence hypothesis."""
    return spec.system is not System.P and spec.xi < 0.0 and all(v >= 0.0 for v in spec.a1)


def bound_tolerance(bound):
    return 1e-6 * max(1.0, bound)


def classify(traj: Trajectory, cfg: IntegrationConfig | None = None) -> Classification:
    """Blowup / bounded / growing / undetermined, from how the run ended.

    A run reaching ``t_end`` is *growing* if it came within a factor 10^3 of
    the escape ceiling, if its scale factors spread over six decades, or if
    the largest a_i over the second half of the run exceeds the first half's
    by more than 10%. Otherwise it is *bounded*.
    """
    cfg = traj.config if cfg is None else cfg
    term = traj.termination
    if term.kind is TerminationKind.BLOWUP:
        return Classification(ClassKind.BLOWUP, term.time)
    if term.kind is TerminationKind.ESCAPE:
        return Classification(ClassKind.GLOBAL_GROWING)
    if term.kind is TerminationKind.STEP_FAILURE:
        return Classification(ClassKind.UNDETERMINED)
    n = traj.spec.dimension
    a = traj.states[:, :n]
    if np.max(np.abs(a)) >= cfg.escape_ceiling / 1e3 or np.max(a) / np.min(a) >= 1e6:
        return Classification(ClassKind.GLOBAL_GROWING)
    half = traj.times <= 0.5 * traj.t_final
    first = np.max(a[half])
    second = np.max(a[~half]) if np.any(~half) else first
    if second > _GROWTH_TREND * first:
        return Classification(ClassKind.GLOBAL_GROWING)
    return Classification(ClassKind.GLOBAL_BOUNDED)


def _integral_exponent(spec: EmdenSpec):
    """Exponent m with a_i'' = -xi a_i' / a_i^m when the system decouples, else None."""
    n = spec.dimension
    if spec.system is System.BTHEOREM:
        return n * (spec.theta - 1.0) + 2.0
    if spec.system is System.BPROOF and (spec.theta == 1.0 or n == 1):
        return n * (spec.theta - 1.0) + 2.0
    if spec.system is System.A and n == 1:
        return spec.theta + 1.0
    return None


def first_integral(spec: EmdenSpec, state: PhaseState) -> Optional[np.ndarray]:
    """Conserved quantities ``I_i = a_i' + xi a_i^(1-m)/(1-m)`` of a decoupled system.

    ``m = 1`` uses ``I_i = a_i' + xi log a_i``. ``None`` for coupled systems.
    """
    m = _integral_exponent(spec)
    if m is None:
        return None
    a = np.asarray(state.a, dtype=float)
    v = np.asarray(state.adot, dtype=float)
    if m == 1.0:
        return v + spec.xi * np.log(a)
    return v + spec.xi * a ** (1.0 - m) / (1.0 - m)


def first_integral_drift(traj: Trajectory) -> Optional[float]:
    """``max_{i,t} |I_i(t) - I_i(0)|`` over the stored samples."""
    spec = traj.spec
    base = first_integral(spec, spec.initial_state)
    if base is None:
        return None
    drift = 0.0
    for state in traj.samples:
        drift = max(drift, float(np.max(np.abs(first_integral(spec, state) - base))))
    return drift


@dataclass(frozen=True)
class LyapunovResult:
    spectrum: np.ndarray
    history: np.ndarray  # (K, 2N) running estimates after each re-orthonormalisation
    times: np.ndarray  # (K,) elapsed time within the averaging window
    t_span: float
    final_state: np.ndarray

    @property
    def leading(self):
        return float(self.spectrum[0])

    @property
    def leading_spread(self):
        """Standard deviation of the running leading exponent over the last half of the window."""
        tail = self.history[len(self.history) // 2:, 0]
        return float(np.std(tail)) if tail.size > 1 else math.inf

    @property
    def chaotic_candidate(self):
        return self.leading > 0.0 and self.leading > 3.0 * self.leading_spread

    def to_dict(self):
        return {
            "spectrum": [float(v) for v in self.spectrum],
            "sum": float(np.sum(self.spectrum)),
            "t_span": self.t_span,
            "leading_spread": self.leading_spread,
            "chaotic_candidate": self.chaotic_candidate,
        }


def lyapunov_spectrum(spec: EmdenSpec, cfg: IntegrationConfig, t_transient, t_span, renorm_dt) -> LyapunovResult:
    """Full Lyapunov spectrum by tangent-space integration (Benettin's method).

    The base flow and 2N tangent vectors are advanced together with the FD
    Jacobian; every ``renorm_dt`` the tangent frame is QR-factorised and the
    logs of ``|R_jj|`` accumulated. Exponents are returned in decreasing order.
    """
    if not renorm_dt > 0.0 or not t_span > 0.0 or t_transient < 0.0:
        raise ValueError("need renorm_dt > 0, t_span > 0, t_transient >= 0")
    n = spec.dimension
    dim = 2 * n
    f = vector_field(spec)
    y = np.concatenate([spec.a0, spec.a1])
    if t_transient > 0.0:
        base = integrate(spec, cfg.replace(t_end=t_transient))
        if base.termination.kind is not TerminationKind.REACHED_T_END:
            raise BlowupDuringLyapunov(f"base trajectory ended during transient: {base.termination.kind.value}")
        y = base.final_state.vector

    def augmented(state):
        z = state[:dim]
        frame = state[dim:].reshape(dim, dim)
        jac = _fd_jacobian(f, z, n)
        return np.concatenate([f(z), (jac @ frame).ravel()])

    frame = np.eye(dim)
    logs = np.zeros(dim)
    count = max(1, int(round(t_span / renorm_dt)))
    dt = t_span / count
    history = np.empty((count, dim))
    elapsed = np.empty(count)
    t = t_transient
    for k in range(count):
        run = solve_ode(augmented, np.concatenate([y, frame.ravel()]), t + dt, rtol=cfg.rtol, atol=cfg.atol,
                        max_steps=cfg.max_steps, t0=t)
        if run.termination.kind is not TerminationKind.REACHED_T_END:
            raise BlowupDuringLyapunov(f"base trajectory failed at t={run.t_final:.6g}: {run.termination.detail}")
        y = run.y_final[:dim]
        if np.min(y[:n]) <= cfg.blowup_floor or np.max(np.abs(y)) >= cfg.escape_ceiling:
            raise BlowupDuringLyapunov(f"base trajectory left the admissible region at t={run.t_final:.6g}")
        q, r = np.linalg.qr(run.y_final[dim:].reshape(dim, dim))
        signs = np.sign(np.diag(r))
        signs[signs == 0.0] = 1.0
        frame = q * signs
        logs += np.log(np.abs(np.diag(r)))
        t += dt
        elapsed[k] = (k + 1) * dt
        history[k] = logs / elapsed[k]
    spectrum = np.sort(logs / t_span)[::-1]
    return LyapunovResult(spectrum, history, elapsed, float(t_span), y)


def trace_average(traj: Trajectory, t0, t1, points=4001):
    """Time average of ``tr J`` along the trajectory over [t0, t1] (Simpson's rule)."""
    from scipy.integrate import simpson

    f = vector_field(traj.spec)
    n = traj.spec.dimension
    grid = np.linspace(t0, t1, points)
    traces = np.array([np.trace(_fd_jacobian(f, traj.steps.evaluate(t), n)) for t in grid])
    return float(simpson(traces, x=grid) / (t1 - t0))


@dataclass(frozen=True)
class Section:
    """Poincare section: ``kind="flux"`` is sum_k a_k'/a_k = 0, ``"coordinate"`` is a_j = value.

    ``direction`` -1 keeps crossings where the section function decreases,
    +1 increasing ones, 0 both.
    """

    kind: str = "flux"
    index: int = 0
    value: float = 0.0
    direction: int = -1

    def function(self, n):
        if self.kind == "flux":
            return lambda y: float(np.sum(y[n:2 * n] / y[:n]))
        if self.kind == "coordinate":
            j, c = self.index, self.value
            return lambda y: float(y[j] - c)
        raise ValueError(f"unknown section kind {self.kind!r}")

    def dropped(self, n):
        return 2 * n - 1 if self.kind == "flux" else self.index

    def to_dict(self):
        return {"kind": self.kind, "index": self.index, "value": self.value, "direction": self.direction}


def _crosses(g0, g1, direction):
    if direction <= 0 and g0 > 0.0 and g1 <= 0.0:
        return True
    if direction >= 0 and g0 < 0.0 and g1 >= 0.0:
        return True
    return False


def section_crossings(traj: Trajectory, section: Section = Section(), subdivisions=4):
    """Event-located crossings ``(times (K,), points (K, 2N-1))`` in time order."""
    n = traj.spec.dimension
    g = section.function(n)
    drop = section.dropped(n)
    steps = traj.steps
    times, points = [], []
    for k in range(steps.t0.size):
        t_start = steps.t0[k]
        t_stop = min(t_start + steps.h[k], traj.t_final)
        if t_stop <= t_start:
            continue

        def state(t, k=k):
            return _interp(steps.y0[k], steps.q[k], steps.h[k], (t - steps.t0[k]) / steps.h[k])

        grid = np.linspace(t_start, t_stop, subdivisions + 1)
        values = [g(state(t)) for t in grid]
        for j in range(subdivisions):
            lo, hi = grid[j], grid[j + 1]
            g_lo, g_hi = values[j], values[j + 1]
            if not _crosses(g_lo, g_hi, section.direction):
                continue
            sign_lo = math.copysign(1.0, g_lo)
            tol = 1e-13 * max(1.0, abs(hi))
            for _ in range(200):
                if hi - lo <= tol:
                    break
                mid = 0.5 * (lo + hi)
                g_mid = g(state(mid))
                if g_mid != 0.0 and math.copysign(1.0, g_mid) == sign_lo:
                    lo = mid
                else:
                    hi = mid
            t_hit = 0.5 * (lo + hi)
            times.append(t_hit)
            points.append(np.delete(state(t_hit), drop))
    return np.array(times), np.array(points).reshape(len(points), 2 * n - 1)


def poincare_section(traj_or_spec, section: Section = Section(), cfg: IntegrationConfig | None = None):
    """Section points (``(K, 2N-1)`` array) for a trajectory, or for a spec integrated with ``cfg``."""
    traj = traj_or_spec
    if isinstance(traj_or_spec, EmdenSpec):
        if cfg is None:
            raise ValueError("integrating a spec requires an IntegrationConfig")
        traj = integrate(traj_or_spec, cfg)
    return section_crossings(traj, section)[1]


def recurrence_min(points):
    """Smallest relative gap between consecutive section points (``inf`` if fewer than two)."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return math.inf
    gaps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    scale = np.maximum(1.0, np.linalg.norm(points[:-1], axis=1))
    return float(np.min(gaps / scale))


def spec_hash(spec: EmdenSpec) -> str:
    blob = json.dumps(spec.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class RunReport:
    spec: EmdenSpec
    classification: Classification
    theorem_bound: Optional[float] = None
    bound_satisfied: Optional[bool] = None
    predicts_global: bool = False
    first_integral_drift: Optional[float] = None
    lyapunov: Optional[tuple] = None
    poincare_points: list = field(default_factory=list)
    recurrence_min: float = math.inf
    chaotic_candidate: bool = False
    periodic_candidate: bool = False
    error: Optional[str] = None

    @property
    def leading_exponent(self):
        return None if self.lyapunov is None else float(self.lyapunov[0])

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "spec_hash": spec_hash(self.spec),
            "classification": self.classification.to_dict(),
            "theorem_bound": self.theorem_bound,
            "bound_satisfied": self.bound_satisfied,
            "predicts_global": self.predicts_global,
            "first_integral_drift": self.first_integral_drift,
            "lyapunov": None if self.lyapunov is None else [float(v) for v in self.lyapunov],
            "poincare_points": [[float(v) for v in p] for p in self.poincare_points],
            "recurrence_min": self.recurrence_min,
            "chaotic_candidate": self.chaotic_candidate,
            "periodic_candidate": self.periodic_candidate,
            "error": self.error,
        }


def analyze(spec: EmdenSpec, cfg: IntegrationConfig, lyapunov: dict | None = None,
            section: Section = Section()) -> RunReport:
    """Integrate one spec and assemble its :class:`RunReport`.

    ``lyapunov`` may hold ``t_transient``, ``t_span`` and ``renorm_dt``; the
    spectrum is only computed for runs that stay global. Failures are
    recorded in ``error`` rather than raised.
    """
    bound = theorem_bound(spec)
    try:
        traj = integrate(spec, cfg)
        cls = classify(traj, cfg)
        satisfied = None
        if bound is not None and cls.kind is ClassKind.BLOWUP:
            satisfied = bool(cls.t_star <= bound + bound_tolerance(bound))
        elif bound is not None and traj.t_final >= bound + bound_tolerance(bound):
            satisfied = False
        points = section_crossings(traj, section)[1]
        rec = recurrence_min(points)
        spectrum = None
        chaotic = False
        if lyapunov and cls.kind in (ClassKind.GLOBAL_BOUNDED, ClassKind.GLOBAL_GROWING):
            result = lyapunov_spectrum(
                spec,
                cfg,
                lyapunov.get("t_transient", 0.0),
                lyapunov.get("t_span", cfg.t_end),
                lyapunov.get("renorm_dt", 1.0),
            )
            spectrum = tuple(float(v) for v in result.spectrum)
            chaotic = cls.kind is ClassKind.GLOBAL_BOUNDED and result.chaotic_candidate
        return RunReport(
            spec=spec,
            classification=cls,
            theorem_bound=bound,
            bound_satisfied=satisfied,
            predicts_global=predicts_global(spec),
            first_integral_drift=first_integral_drift(traj),
            lyapunov=spectrum,
            poincare_points=[tuple(p) for p in points],
            recurrence_min=rec,
            chaotic_candidate=chaotic,
            periodic_candidate=rec < PERIODIC_THRESHOLD,
        )
    except (EllipflowError, ArithmeticError, ValueError) as exc:
        return RunReport(
            spec=spec,
            classification=Classification(ClassKind.UNDETERMINED),
            theorem_bound=bound,
            predicts_global=predicts_global(spec),
            error=f"{type(exc).__name__}: {exc}",
        )


def worker_count(default=None):
    """Sweep worker count: ``ELF_WORKERS`` if set, else the number of logical CPUs."""
    env = os.environ.get("ELF_WORKERS")
    if env:
        return max(1, int(env))
    return default or os.cpu_count() or 1


def sweep(grid: Sequence[EmdenSpec], cfg: IntegrationConfig, lyapunov: dict | None = None,
          workers: int | None = None) -> list:
    """One :class:`RunReport` per spec, in input order."""
    grid = list(grid)
    if not grid:
        return []
    workers = worker_count() if workers is None else workers
    job = partial(analyze, cfg=cfg, lyapunov=lyapunov)
    if workers <= 1 or len(grid) == 1:
        return [job(spec) for spec in grid]
    with ProcessPoolExecutor(max_workers=min(workers, len(grid))) as pool:
        return list(pool.map(job, grid))


def default_grid():
    """Specs spanning xi in [-2, 2], theta in {0.5, 1, 2}, N in {2, 3}, both viscous families."""
    specs = []
    patterns = {"contracting": -0.5, "mixed": None, "expanding": 0.5}
    for system, xi, theta, n, pattern in itertools.product(
        (System.A, System.BPROOF), (-2.0, -1.0, 1.0, 2.0), (0.5, 1.0, 2.0), (2, 3), patterns
    ):
        a0 = (1.0, 1.5, 0.75)[:n]
        if pattern == "mixed":
            a1 = tuple(0.5 if i % 2 == 0 else -0.5 for i in range(n))
        else:
            a1 = (patterns[pattern],) * n
        kappa = dict(kappa1=1.0) if system is System.A else dict(kappa2=1.0)
        specs.append(EmdenSpec(system, n, theta, xi, a0, a1, alpha=1.0, **kappa))
    return specs
