"""Domain types and right-hand sides of the Emden dynamical systems.

Four systems for the scale factors a_i(t) are available, all of the form
``a_i'' = F_i(a, a')``:

* ``A``        -- force-force interaction, driven by the dilatation sum(a_k'/a_k)
* ``BProof``   -- a_i'' = -xi a_i' / (a_i^2 (prod a_k)^(theta-1))
* ``BTheorem`` -- a_i'' = -xi a_i' / a_i^(N(theta-1)+2)  (decoupled)
* ``P``        -- a_i'' = xi / (a_i (prod a_k)^(gamma-1)), the pressure-driven comparison system

``BProof`` and ``BTheorem`` coincide when theta = 1, when N = 1, or when all
a_i are equal.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "System",
    "EmdenSpec",
    "PhaseState",
    "vector_field",
    "rhs",
    "jacobian",
    "FD_REL_STEP",
    "FD_ABS_STEP",
    "permute_spec",
]

FD_REL_STEP = 1e-6
FD_ABS_STEP = 1e-9


class System(str, enum.Enum):
    A = "A"
    BPROOF = "BProof"
    BTHEOREM = "BTheorem"
    P = "P"

    def __str__(self):
        return self.value


def _floats(values, name, n):
    try:
        out = tuple(float(v) for v in values)
    except TypeError as exc:
        raise ValidationError(f"{name} must be a sequence of numbers") from exc
    if len(out) != n:
        raise ValidationError(f"{name} must have length N={n}, got {len(out)}")
    if not all(math.isfinite(v) for v in out):
        raise ValidationError(f"{name} entries must be finite")
    return out


@dataclass(frozen=True)
class EmdenSpec:
    """Parameters of one self-similar solution family and its initial data.

    For ``system == P`` the ``theta`` slot holds the adiabatic exponent gamma
    and ``kappa1`` holds the pressure constant K.
    """

    system: System
    dimension: int
    theta: float
    xi: float
    a0: tuple
    a1: tuple
    kappa1: float = 0.0
    kappa2: float = 0.0
    alpha: float = 1.0
    drifts: tuple = field(default=None)

    def __post_init__(self):
        try:
            system = System(self.system)
        except ValueError as exc:
            raise ValidationError(f"unknown system {self.system!r}") from exc
        object.__setattr__(self, "system", system)

        n = self.dimension
        if isinstance(n, bool) or int(n) != n or n < 1:
            raise ValidationError(f"dimension must be an integer >= 1, got {n!r}")
        n = int(n)
        object.__setattr__(self, "dimension", n)

        for name in ("theta", "xi", "kappa1", "kappa2", "alpha"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite")
            object.__setattr__(self, name, value)

        a0 = _floats(self.a0, "a0", n)
        if min(a0) <= 0.0:
            raise ValidationError("a0 entries must satisfy a_i0 > 0")
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "a1", _floats(self.a1, "a1", n))
        drifts = (0.0,) * n if self.drifts is None else _floats(self.drifts, "drifts", n)
        object.__setattr__(self, "drifts", drifts)

        if self.theta < 0.0:
            raise ValidationError("theta must be >= 0")
        if self.alpha < 0.0:
            raise ValidationError("alpha must be >= 0")
        if self.kappa1 < 0.0 or self.kappa2 < 0.0:
            raise ValidationError("kappa1 and kappa2 must be >= 0")
        if system is System.A:
            if not (self.kappa1 > 0.0 and self.kappa2 == 0.0):
                raise ValidationError("system A requires kappa1 > 0 and kappa2 = 0")
        elif system in (System.BPROOF, System.BTHEOREM):
            if not (self.kappa1 == 0.0 and self.kappa2 > 0.0):
                raise ValidationError(f"system {system} requires kappa1 = 0 and kappa2 > 0")
        else:
            if self.theta < 1.0:
                raise ValidationError("system P requires gamma (theta slot) >= 1")
            if self.kappa1 <= 0.0:
                raise ValidationError("system P requires the pressure constant K (kappa1 slot) > 0")

    @property
    def kappa(self):
        """The active viscosity constant (kappa1 for A, kappa2 for the B systems)."""
        if self.system is System.A:
            return self.kappa1
        if self.system in (System.BPROOF, System.BTHEOREM):
            return self.kappa2
        raise ValidationError("system P has no pressureless viscosity constant")

    @property
    def initial_state(self):
        return PhaseState(0.0, np.array(self.a0), np.array(self.a1))

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {
            "system": self.system.value,
            "N": self.dimension,
            "theta": self.theta,
            "xi": self.xi,
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "alpha": self.alpha,
            "d": list(self.drifts),
            "a0": list(self.a0),
            "a1": list(self.a1),
        }


@dataclass(frozen=True)
class PhaseState:
    t: float
    a: np.ndarray
    adot: np.ndarray

    @classmethod
    def from_vector(cls, t, y):
        y = np.asarray(y, dtype=float)
        n = y.size // 2
        return cls(float(t), y[:n].copy(), y[n:].copy())

    @property
    def vector(self):
        return np.concatenate([self.a, self.adot])

    def __eq__(self, other):
        if not isinstance(other, PhaseState):
            return NotImplemented
        return (
            self.t == other.t
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.adot, other.adot)
        )

    __hash__ = None


def vector_field(spec: EmdenSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``f(y)`` giving d/dt of the phase vector ``y = (a, adot)``.

    The returned callable raises :class:`DomainError` when some a_i <= 0 or
    the state is not finite. It is what the integrators call in their inner
    loops, so the system dispatch happens once here.
    """
    n = spec.dimension
    xi = spec.xi
    expo = spec.theta - 1.0
    system = spec.system

    def check(a):
        if not np.all(a > 0.0):
            raise DomainError("scale factors must satisfy a_i > 0")

    if system is System.A:
        def f(y):
            a, v = y[:n], y[n:]
            check(a)
            dil = np.sum(v / a)
            acc = -xi * dil / (a * np.prod(a) ** expo)
            return np.concatenate([v, acc])
    elif system is System.BPROOF:
        def f(y):
            a, v = y[:n], y[n:]
            check(a)
            acc = -xi * v / (a * a * np.prod(a) ** expo)
            return np.concatenate([v, acc])
    elif system is System.BTHEOREM:
        m = n * expo + 2.0

        def f(y):
            a, v = y[:n], y[n:]
            check(a)
            acc = -xi * v / a**m
            return np.concatenate([v, acc])
    else:
        def f(y):
            a, v = y[:n], y[n:]
            check(a)
            acc = xi / (a * np.prod(a) ** expo)
            return np.concatenate([v, acc])

    def guarded(y):
        y = np.asarray(y, dtype=float)
        out = f(y)
        if not np.all(np.isfinite(out)):
            raise DomainError("right-hand side is not finite at this state")
        return out

    return guarded


def rhs(spec: EmdenSpec, state: PhaseState) -> np.ndarray:
    """Time derivative ``(adot, addot)`` of the phase state."""
    return vector_field(spec)(state.vector)


def jacobian(spec: EmdenSpec, state: PhaseState, rel_step=FD_REL_STEP, abs_step=FD_ABS_STEP):
    """Central finite-difference Jacobian of :func:`rhs` w.r.t. ``(a, adot)``.

    Steps are ``h_i = rel_step*|v_i| + abs_step``. A step that would push a
    scale factor to a non-positive value is halved, at most five times.
    """
    return _fd_jacobian(vector_field(spec), state.vector, spec.dimension, rel_step, abs_step)


def _fd_jacobian(f, y, n, rel_step=FD_REL_STEP, abs_step=FD_ABS_STEP):
    y = np.asarray(y, dtype=float)
    if not np.all(y[:n] > 0.0):
        raise DomainError("scale factors must satisfy a_i > 0")
    dim = y.size
    jac = np.empty((dim, dim))
    for j in range(dim):
        h = rel_step * abs(y[j]) + abs_step
        for _ in range(6):
            if j >= n or y[j] - h > 0.0:
                break
            h *= 0.5
        else:
            raise DomainError(f"finite-difference step for a_{j + 1} cannot stay positive")
        yp = y.copy()
        ym = y.copy()
        yp[j] += h
        ym[j] -= h
        jac[:, j] = (f(yp) - f(ym)) / (yp[j] - ym[j])
    return jac


def permute_spec(spec: EmdenSpec, perm: Sequence[int]) -> EmdenSpec:
    """Relabel coordinates of ``spec`` according to ``perm``."""
    p = list(perm)
    return spec.replace(
        a0=tuple(spec.a0[i] for i in p),
        a1=tuple(spec.a1[i] for i in p),
        drifts=tuple(spec.drifts[i] for i in p),
    )
