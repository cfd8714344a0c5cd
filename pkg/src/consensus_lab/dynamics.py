"""Fixed-step RK4 integration of the consensus dynamics.

Three right-hand sides are covered:

* networked, first order: ``x' = -L x + B u(t)``,
* alignment, first order: ``x_i' = (1/N) sum_j a(|x_j - x_i|) (x_j - x_i)``,
* second order with unit damping: ``x'' + x' = F(x)`` where ``F`` is either
  ``-L x`` or the alignment sum above.

The step is shortened automatically when it exceeds the explicit stability
bound ``1.8 / rho`` (``rho`` the spectral radius of the linear part), then
equalised so that an integer number of steps lands exactly on ``T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigvalsh

from ._backend import load as _load_backend
from ._kernels_py import alignment_rhs_nd
from .errors import (
    OutOfRangeError,
    ShapeError,
    SignalDomainError,
    StepSizeError,
)
from .io import write_csv
from .network import NetworkModel

__all__ = [
    "Trajectory",
    "InfluenceFunction",
    "Constant",
    "RationalDecay",
    "Indicator",
    "ControlSignal",
    "simulate_linear",
    "simulate_alignment",
    "simulate_second_order",
    "disagreement",
    "random_state",
    "lambda_max",
    "STABILITY_FACTOR",
]

STABILITY_FACTOR = 1.8
MAX_STEPS = 2_000_000


# -- data types -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    """States on a uniform time grid ``t_m = m dt``, ``m = 0..M``.

    ``states`` has one row per time and ``n_agents * dim`` columns; agent
    ``i`` owns columns ``i*dim .. i*dim + dim - 1``.
    """

    times: np.ndarray
    states: np.ndarray
    dt: float
    dim: int = 1
    velocities: Optional[np.ndarray] = None
    dt_requested: float = field(default=math.nan, compare=False)

    def __post_init__(self):
        for name in ("times", "states", "velocities"):
            a = getattr(self, name)
            if a is not None:
                a.setflags(write=False)

    @property
    def n_agents(self):
        return self.states.shape[1] // self.dim

    @property
    def n_steps(self):
        return self.times.size - 1

    @property
    def final(self):
        return self.states[-1]

    def agent_states(self, m=-1):
        """State at step ``m`` as an ``(n_agents, dim)`` array."""
        return self.states[m].reshape(self.n_agents, self.dim)

    def to_csv(self, path):
        n, d = self.n_agents, self.dim
        if d == 1:
            xs = [f"x_{i + 1}" for i in range(n)]
            vs = [f"v_{i + 1}" for i in range(n)]
        else:
            xs = [f"x_{i + 1}_{c + 1}" for i in range(n) for c in range(d)]
            vs = [f"v_{i + 1}_{c + 1}" for i in range(n) for c in range(d)]
        blocks = [self.times[:, None], self.states]
        header = ["time"] + xs
        if self.velocities is not None:
            blocks.append(self.velocities)
            header += vs
        return write_csv(path, header, np.hstack(blocks))


@dataclass(frozen=True)
class InfluenceFunction:
    """Nonnegative, bounded interaction strength ``a(s)`` for ``s >= 0``."""

    code = -1

    @property
    def param(self):
        raise NotImplementedError

    @property
    def sup(self):
        raise NotImplementedError

    def __call__(self, s):
        from ._kernels_py import influence
        return influence(np.asarray(s, dtype=float), self.code, self.param)


@dataclass(frozen=True)
class Constant(InfluenceFunction):
    value: float = 1.0
    code = 0

    def __post_init__(self):
        if not self.value >= 0:
            raise OutOfRangeError(f"constant influence must be >= 0, got {self.value}")

    @property
    def param(self):
        return float(self.value)

    @property
    def sup(self):
        return float(self.value)


@dataclass(frozen=True)
class RationalDecay(InfluenceFunction):
    """``a(s) = (1 + s^2)^(-beta)``."""

    beta: float = 1.0
    code = 1

    def __post_init__(self):
        if not self.beta >= 0:
            raise OutOfRangeError(f"beta must be >= 0, got {self.beta}")

    @property
    def param(self):
        return float(self.beta)

    @property
    def sup(self):
        return 1.0


@dataclass(frozen=True)
class Indicator(InfluenceFunction):
    """``a(s) = 1`` for ``s <= radius``, 0 beyond."""

    radius: float = 1.0
    code = 2

    def __post_init__(self):
        if not self.radius >= 0:
            raise OutOfRangeError(f"radius must be >= 0, got {self.radius}")

    @property
    def param(self):
        return float(self.radius)

    @property
    def sup(self):
        return 1.0


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Sampled control, linearly interpolated; ``values`` has one row per sample."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or v.shape[0] != t.size or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ShapeError("control samples need increasing times and one value row per time")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def n_inputs(self):
        return self.values.shape[1]

    def __call__(self, t):
        return np.array([np.interp(t, self.times, self.values[:, c])
                         for c in range(self.values.shape[1])])


# -- helpers ----------------------------------------------------------------

_lmax_cache: dict = {}


def lambda_max(model: NetworkModel) -> float:
    """Largest eigenvalue of ``model.laplacian`` (cached per model key)."""
    key = model.key
    val = _lmax_cache.get(key)
    if val is None:
        n = model.n_agents
        val = float(eigvalsh(model.laplacian, subset_by_index=[n - 1, n - 1])[0])
        _lmax_cache[key] = val
    return val


def random_state(n: int, seed: int, low: float = -1.0, high: float = 1.0, dim: int = 1):
    """Seeded uniform initial opinions; ``seed`` is required on purpose."""
    if seed is None:
        raise OutOfRangeError("random initial data needs an explicit seed")
    rng = np.random.default_rng(int(seed))
    x = rng.uniform(low, high, size=(n, dim))
    return x[:, 0] if dim == 1 else x


def _check_horizon(T, dt):
    if not (T > 0 and math.isfinite(T)):
        raise OutOfRangeError(f"T must be positive and finite, got {T}")
    if not (dt > 0 and math.isfinite(dt)):
        raise OutOfRangeError(f"dt must be positive and finite, got {dt}")


def _steps(T, dt, limit, max_steps):
    """Equalised step count and step after enforcing the stability bound."""
    if limit is not None and dt > limit:
        dt = limit
    M = max(1, math.ceil(T / dt - 1e-9))
    if M > max_steps:
        raise StepSizeError(
            f"{M} steps of size <= {dt:.3e} needed to reach T={T}; cap is {max_steps}")
    return M, T / M


def _rk4(f, y0, M, h):
    ys = np.empty((M + 1, y0.size))
    ys[0] = y = y0
    for m in range(M):
        t = m * h
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ys[m + 1] = y
    if not np.all(np.isfinite(ys)):
        raise StepSizeError("integration produced non-finite values")
    return h * np.arange(M + 1), ys


def _as_agents(x0, n=None):
    x = np.array(x0, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or (n is not None and x.shape[0] != n):
        raise ShapeError(f"initial state of shape {np.shape(x0)} does not fit {n} agents")
    return x


def _signal_fn(signal, T):
    horizon = getattr(signal, "horizon", math.inf)
    if horizon < T * (1 - 1e-12):
        raise SignalDomainError(f"control is defined up to t={horizon}, horizon T={T}")
    return signal


# -- integrators ------------------------------------------------------------

def simulate_linear(model: NetworkModel, x0, T: float, dt: float, control=None,
                    max_steps: int = MAX_STEPS) -> Trajectory:
    """RK4 for ``x' = -L x + B u(t)``.

    Parameters
    ----------
    model : NetworkModel
    x0 : array, shape (n,) or (n, d)
    T, dt : float
        Horizon and requested step; the step is reduced to ``1.8 / lambda_max``
        if needed and then to ``T / ceil(T / dt)``.
    control : (ControlPattern, signal), optional
        ``signal(t)`` returns the ``m`` input values (or ``(m, d)``); sampled
        signals are :class:`ControlSignal`.
    """
    _check_horizon(T, dt)
    n = model.n_agents
    X0 = _as_agents(x0, n)
    d = X0.shape[1]
    L = model.laplacian
    lmax = lambda_max(model)
    limit = STABILITY_FACTOR / lmax if lmax > 0 else None
    M, h = _steps(T, dt, limit, max_steps)

    if control is None:
        def f(t, y):
            return -(L @ y.reshape(n, d)).ravel()
    else:
        pattern, signal = control
        B = np.asarray(getattr(pattern, "matrix", pattern), dtype=float)
        if B.shape[0] != n:
            raise ShapeError(f"input matrix has {B.shape[0]} rows for {n} agents")
        u = _signal_fn(signal, T)

        def f(t, y):
            ut = np.asarray(u(t), dtype=float).reshape(B.shape[1], -1)
            return (-(L @ y.reshape(n, d)) + B @ ut).ravel()

    times, ys = _rk4(f, X0.ravel(), M, h)
    return Trajectory(times, ys, h, d, dt_requested=dt)


def simulate_alignment(n: int, a: InfluenceFunction, x0, T: float, dt: float,
                       backend: str | None = None, max_steps: int = MAX_STEPS) -> Trajectory:
    """RK4 for ``x_i' = (1/N) sum_j a(|x_j - x_i|) (x_j - x_i)``."""
    _check_horizon(T, dt)
    X0 = _as_agents(x0, n)
    d = X0.shape[1]
    sup = a.sup
    limit = STABILITY_FACTOR / (2.0 * sup) if sup > 0 else None
    M, h = _steps(T, dt, limit, max_steps)
    f = _alignment_force(n, d, a, backend)
    times, ys = _rk4(lambda t, y: f(y), X0.ravel(), M, h)
    return Trajectory(times, ys, h, d, dt_requested=dt)


def _alignment_force(n, d, a, backend=None):
    code, param = a.code, a.param
    if d == 1:
        kern, _ = _load_backend(backend)
        return lambda y: kern.alignment_rhs(np.ascontiguousarray(y), code, param) / n
    return lambda y: alignment_rhs_nd(y.reshape(n, d), code, param).ravel() / n


def simulate_second_order(system, x0, v0, T: float, dt: float, n: int | None = None,
                          backend: str | None = None,
                          max_steps: int = MAX_STEPS) -> Trajectory:
    """RK4 for ``x'' + x' = F(x)`` written as ``x' = v, v' = -v + F(x)``.

    ``system`` is a :class:`NetworkModel` (``F = -L x``, any ``1/N`` factor
    lives in ``L``) or an :class:`InfluenceFunction` (alignment force with
    the ``1/N`` factor).
    """
    _check_horizon(T, dt)
    if isinstance(system, NetworkModel):
        n = system.n_agents
        X0, V0 = _as_agents(x0, n), _as_agents(v0, n)
        d = X0.shape[1]
        L = system.laplacian
        force = lambda y: -(L @ y.reshape(n, d)).ravel()  # noqa: E731
        lam = lambda_max(system)
    elif isinstance(system, InfluenceFunction):
        X0 = _as_agents(x0, n)
        n = X0.shape[0]
        V0 = _as_agents(v0, n)
        d = X0.shape[1]
        force = _alignment_force(n, d, system, backend)
        lam = 2.0 * system.sup
    else:
        raise TypeError(f"expected a NetworkModel or InfluenceFunction, got {system!r}")
    if V0.shape != X0.shape:
        raise ShapeError("positions and velocities must have the same shape")
    # eigenvalues of [[0, I], [-L, -I]] solve mu^2 + mu + lambda = 0
    rho = max(1.0, math.sqrt(lam))
    M, h = _steps(T, dt, STABILITY_FACTOR / rho, max_steps)
    k = n * d

    def f(t, y):
        x, v = y[:k], y[k:]
        return np.concatenate((v, force(x) - v))

    times, ys = _rk4(f, np.concatenate((X0.ravel(), V0.ravel())), M, h)
    return Trajectory(times, ys[:, :k].copy(), h, d, velocities=ys[:, k:].copy(),
                      dt_requested=dt)


def disagreement(trajectory: Trajectory) -> np.ndarray:
    """Per-step distance ``||x - mean(x) 1||_2`` to the consensus subspace."""
    n, d = trajectory.n_agents, trajectory.dim
    X = trajectory.states.reshape(-1, n, d)
    dev = X - X.mean(axis=1, keepdims=True)
    return np.sqrt((dev * dev).sum(axis=(1, 2)))
