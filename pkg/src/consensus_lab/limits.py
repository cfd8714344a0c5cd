"""Continuum descriptions of large consensus networks.

Two limits are provided.  The graph limit keeps the agent label
``s in [0, 1)`` and describes the opinions as a piecewise-constant function
``x^N(s, t)`` solving a non-local diffusion equation with kernel
``W(s, s*)``.  The mean-field limit forgets labels and tracks the empirical
measure of opinions, compared through the Wasserstein-1 distance.  The two
are linked by pushing ``x(s, t)`` forward to opinion space, which is checked
through weak-form residuals with polynomial test functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._backend import load as _load_backend
from .dynamics import (
    STABILITY_FACTOR,
    InfluenceFunction,
    Trajectory,
    _rk4,
    _steps,
    lambda_max,
    simulate_alignment,
    simulate_linear,
)
from .errors import (
    OutOfRangeError,
    ShapeError,
    ScalingMismatchError,
    UnsupportedDimensionError,
    UnsupportedKernelError,
    VacuousTestError,
)
from .io import write_csv
from .network import Family, NetworkModel, _parse_family, build_model

__all__ = [
    "DistributionField",
    "Kernel",
    "StepKernel",
    "IndicatorBand",
    "FractionalPower",
    "ZeroKernel",
    "Identity",
    "Alignment",
    "Profile",
    "PROFILES",
    "get_profile",
    "EmpiricalMeasure",
    "ResidualTable",
    "to_distribution",
    "kernel_from_model",
    "limit_kernel",
    "kernel_distance",
    "kernel_distance_quadrature",
    "solve_nonlocal_diffusion",
    "graph_limit_convergence",
    "to_empirical",
    "wasserstein1",
    "meanfield_convergence",
    "subordination_residual",
    "second_order_weak_residual",
    "write_distance_table",
]


# -- fields -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DistributionField:
    """Piecewise-constant ``x(s, t)`` with value ``values[m, i]`` on ``[i/n, (i+1)/n)``."""

    times: np.ndarray
    values: np.ndarray
    velocities: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("times", "values", "velocities"):
            a = getattr(self, name)
            if a is not None:
                a = np.array(a, dtype=float)
                a.setflags(write=False)
                object.__setattr__(self, name, a)
        if self.values.ndim != 2 or self.values.shape[0] != self.times.size:
            raise ShapeError("values need one row per time")

    @property
    def n_cells(self):
        return self.values.shape[1]

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def midpoints(self):
        return (np.arange(self.n_cells) + 0.5) / self.n_cells

    def l2_norm(self, m=-1):
        """``||x(., t_m)||_{L^2(I)}``."""
        return float(np.sqrt(np.mean(self.values[m] ** 2)))

    def refined(self, m):
        """Values embedded on ``m`` cells (``m`` a multiple of ``n_cells``)."""
        if m % self.n_cells:
            raise ShapeError(f"{m} cells do not refine {self.n_cells}")
        return np.repeat(self.values, m // self.n_cells, axis=1)

    def snapshot_csv(self, path, m=-1):
        """``(s_mid, value)`` rows at time index ``m``."""
        return write_csv(path, ["s_mid", "value"], zip(self.midpoints, self.values[m]))


def to_distribution(trajectory: Trajectory) -> DistributionField:
    """Agent ``i`` becomes the value on ``[(i-1)/N, i/N)``, time by time."""
    if trajectory.dim != 1:
        raise UnsupportedDimensionError("distributions are built from scalar opinions")
    return DistributionField(trajectory.times, trajectory.states, trajectory.velocities)


# -- kernels ----------------------------------------------------------------

class Kernel:
    """Symmetric interaction kernel ``W(s, s*)`` on the unit square."""

    singular = False

    def __call__(self, s, s_star):
        raise NotImplementedError

    def nystrom_matrix(self, m):
        """``W`` at cell midpoints, the midpoint-rule weights without ``1/m``."""
        if self.singular:
            raise UnsupportedKernelError(f"{self!r} is singular on the diagonal")
        mid = (np.arange(m) + 0.5) / m
        return np.ascontiguousarray(self(mid[:, None], mid[None, :]), dtype=float)


@dataclass(frozen=True, eq=False)
class StepKernel(Kernel):
    """``W^N(s, s*) = w[i, j]`` on cell ``I_i x I_j``."""

    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.weights.shape[0]

    def __call__(self, s, s_star):
        n = self.n
        i = np.clip((np.asarray(s) * n).astype(int), 0, n - 1)
        j = np.clip((np.asarray(s_star) * n).astype(int), 0, n - 1)
        return self.weights[i, j]


@dataclass(frozen=True)
class IndicatorBand(Kernel):
    """``height`` where the (circular, if ``periodic``) distance is at most ``r``."""

    r: float
    height: float = 1.0
    periodic: bool = True

    def distance(self, s, s_star):
        u = np.abs(np.asarray(s) - np.asarray(s_star))
        return np.minimum(u, 1.0 - u) if self.periodic else u

    def __call__(self, s, s_star):
        return np.where(self.distance(s, s_star) <= self.r, self.height, 0.0)


@dataclass(frozen=True)
class FractionalPower(Kernel):
    """``c / |s - s*|^(1 + 2 alpha)``; singular, so no Nystrom solve."""

    alpha: float
    c: float = 1.0
    singular = True

    def __call__(self, s, s_star):
        u = np.abs(np.asarray(s, dtype=float) - np.asarray(s_star, dtype=float))
        with np.errstate(divide="ignore"):
            return self.c / u ** (1.0 + 2.0 * self.alpha)


@dataclass(frozen=True)
class ZeroKernel(Kernel):
    """The trivial limit of sparse families."""

    def __call__(self, s, s_star):
        return np.zeros(np.broadcast(np.asarray(s), np.asarray(s_star)).shape)


def kernel_from_model(model: NetworkModel, normalization: str = "adjacency") -> StepKernel:
    """Step kernel of an unscaled network.

    ``"adjacency"`` uses unit interaction weights (the dense periodic
    ``1/l`` is removed), which is the kernel that converges to the indicator
    of ``[0, r]``.  ``"dynamics"`` uses ``-N L_ij`` so that the midpoint rule
    on ``N`` cells reproduces ``x' = -L x`` exactly.
    """
    if model.scaled:
        raise ScalingMismatchError("step kernels are built from the consensus scaling")
    L = np.asarray(model.laplacian)
    W = -L.copy()
    np.fill_diagonal(W, 0.0)
    if normalization == "adjacency":
        if model.family is Family.DENSE_PERIODIC:
            W *= model.params["ell"]
    elif normalization == "dynamics":
        W *= model.n_agents
    else:
        raise OutOfRangeError(f"unknown normalization {normalization!r}")
    return StepKernel(W)


def limit_kernel(family, normalization: str = "dynamics", **params) -> Kernel:
    """Graph limit of ``kernel_from_model`` for the families that have one."""
    fam = _parse_family(family)
    if fam is Family.DENSE_PERIODIC:
        r = float(params["r"])
        return IndicatorBand(r, 1.0 / r if normalization == "dynamics" else 1.0)
    if fam is Family.PATH:
        return ZeroKernel()
    if fam is Family.FRACTIONAL:
        return FractionalPower(params["alpha"], params.get("c_alpha", 1.0))
    raise UnsupportedKernelError(f"no one-dimensional graph limit for {fam.value}")


def _tri_cdf(z):
    # CDF of the triangular density 1 - |z| on [-1, 1]
    z = np.clip(z, -1.0, 1.0)
    return np.where(z < 0, 0.5 * (1 + z) ** 2, 1.0 - 0.5 * (1 - z) ** 2)


def _band_probability(n, band: IndicatorBand):
    """``P[offset delta]``: measure share of cell pair (i, i + delta) inside the band.

    For ``s`` in cell ``i`` and ``s*`` in cell ``i + delta`` (uniform),
    ``s* - s = (delta + z) / n`` with ``z`` triangular on ``[-1, 1]``.
    """
    r = band.r
    intervals = [(-r, r)]
    if band.periodic:
        intervals += [(1.0 - r, 1.0 + r), (-1.0 - r, -1.0 + r)]
    delta = np.arange(-(n - 1), n)
    P = np.zeros(delta.size)
    # the intervals are disjoint apart from endpoints when r <= 1/2
    for lo, hi in intervals:
        P += _tri_cdf(n * hi - delta) - _tri_cdf(n * lo - delta)
    return delta, np.minimum(P, 1.0)


def kernel_distance(step: StepKernel, limit: Kernel) -> float:
    """Exact ``int int (W^N - W)^2`` for a step kernel against an indicator band or zero."""
    w = step.weights
    n = step.n
    area = 1.0 / (n * n)
    if isinstance(limit, ZeroKernel):
        return float(np.sum(w * w) * area)
    if not isinstance(limit, IndicatorBand):
        raise UnsupportedKernelError("exact distance is implemented for indicator bands")
    h = limit.height
    delta, P = _band_probability(n, limit)
    idx = np.arange(n)
    Pij = P[(idx[None, :] - idx[:, None]) + (n - 1)]
    total = np.sum(w * w) - 2.0 * h * np.sum(w * Pij) + h * h * np.sum((n - np.abs(delta)) * P)
    return float(max(total, 0.0) * area)


def kernel_distance_quadrature(k1: Kernel, k2: Kernel, m: int) -> float:
    """Midpoint-rule ``int int (k1 - k2)^2`` on an ``m x m`` grid."""
    mid = (np.arange(m) + 0.5) / m
    S, Ss = mid[:, None], mid[None, :]
    d = np.asarray(k1(S, Ss), dtype=float) - np.asarray(k2(S, Ss), dtype=float)
    return float(np.mean(d * d))


# -- initial profiles -------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Initial datum ``g`` with an antiderivative for exact cell averages."""

    name: str
    func: Callable = field(repr=False)
    antiderivative: Callable = field(repr=False)

    def __call__(self, s):
        return self.func(np.asarray(s, dtype=float))

    def cell_averages(self, n):
        edges = np.arange(n + 1) / n
        F = self.antiderivative(edges)
        return (F[1:] - F[:-1]) * n


def _const(c):
    return Profile(f"const{c:g}", lambda s: np.full_like(s, c), lambda s: c * s)


PROFILES = {
    "sin": Profile("sin", lambda s: np.sin(2 * np.pi * s),
                   lambda s: -np.cos(2 * np.pi * s) / (2 * np.pi)),
    "linear": Profile("linear", lambda s: s, lambda s: 0.5 * s * s),
    "cos": Profile("cos", lambda s: np.cos(np.pi * s), lambda s: np.sin(np.pi * s) / np.pi),
    "constant": _const(1.0),
}


def get_profile(g):
    if isinstance(g, Profile):
        return g
    if isinstance(g, str):
        try:
            return PROFILES[g]
        except KeyError:
            raise OutOfRangeError(f"unknown profile {g!r}; choose from {sorted(PROFILES)}") from None
    if isinstance(g, (int, float)):
        return _const(float(g))
    raise OutOfRangeError(f"cannot interpret {g!r} as a profile")


def _initial_values(g, m):
    if isinstance(g, np.ndarray) or isinstance(g, (list, tuple)):
        x = np.asarray(g, dtype=float)
        if x.shape != (m,):
            raise ShapeError(f"initial values of shape {x.shape} for {m} cells")
        return x
    return get_profile(g).cell_averages(m)


# -- non-local diffusion ----------------------------------------------------

@dataclass(frozen=True)
class Identity:
    """``psi(u) = u``: linear non-local diffusion."""


@dataclass(frozen=True)
class Alignment:
    """``psi(u) = a(|u|) u``."""

    a: InfluenceFunction


def _nystrom_rhs(W, m, psi, backend=None):
    if isinstance(psi, Identity):
        rowsum = W.sum(axis=1)
        return lambda t, x: (W @ x - rowsum * x) / m
    if isinstance(psi, Alignment):
        kern, _ = _load_backend(backend)
        code, param = psi.a.code, psi.a.param
        return lambda t, x: kern.weighted_alignment_rhs(x, W, code, param) / m
    raise OutOfRangeError(f"unknown psi {psi!r}")


def _nystrom_limit(W, m, psi):
    bound = 2.0 * float(np.max(np.abs(W).sum(axis=1))) / m
    if isinstance(psi, Alignment):
        bound *= psi.a.sup
    return STABILITY_FACTOR / bound if bound > 0 else None


def solve_nonlocal_diffusion(kernel: Kernel, g, m_quad: int, T: float, dt: float,
                             psi=Identity(), backend: str | None = None,
                             min_cells: int = 32) -> DistributionField:
    """Midpoint Nystrom discretisation on ``m_quad`` cells, RK4 in time.

    Solves ``x_t(s) = int W(s, s*) psi(x(s*) - x(s)) ds*`` with initial
    datum ``g`` (a profile, its name, a constant, or ``m_quad`` values).
    """
    if m_quad < min_cells:
        raise OutOfRangeError(f"m_quad must be >= {min_cells}, got {m_quad}")
    if kernel.singular:
        raise UnsupportedKernelError(f"{kernel!r} is singular; no Nystrom solve")
    if not (T > 0 and dt > 0):
        raise OutOfRangeError("T and dt must be positive")
    W = kernel.nystrom_matrix(m_quad)
    x0 = _initial_values(g, m_quad)
    M, h = _steps(T, dt, _nystrom_limit(W, m_quad, psi), 10**7)
    times, xs = _rk4(_nystrom_rhs(W, m_quad, psi, backend), x0, M, h)
    return DistributionField(times, xs)


def _common_dt(dt, limits):
    lims = [v for v in limits if v is not None]
    return min([dt] + lims)


def graph_limit_convergence(family, n_list, T: float = 1.0, dt: float = 0.01,
                            g="sin", m_ref: int | None = None, **params):
    """Rows ``(n, sup_t ||x^n(., t) - x_ref(., t)||_{L^2})``.

    ``x^n`` is the ``n``-agent network ODE embedded as a step function;
    ``x_ref`` solves the limit equation on ``m_ref`` cells (by default the
    smallest common multiple of ``n_list`` that is at least ``4 max(n_list)``).
    Every run shares one time grid.
    """
    fam = _parse_family(family)
    n_list = [int(n) for n in n_list]
    lcm = math.lcm(*n_list)
    if m_ref is None:
        m_ref = lcm * math.ceil(4 * max(n_list) / lcm)
    if m_ref < 4 * max(n_list) or m_ref % lcm:
        raise OutOfRangeError(f"m_ref={m_ref} must be a multiple of every n and >= 4 max(n)")
    models = [build_model(fam, n, **params) for n in n_list]
    kernel = limit_kernel(fam, "dynamics", **params)
    W = kernel.nystrom_matrix(m_ref)
    limits = [STABILITY_FACTOR / lambda_max(md) for md in models]
    limits.append(_nystrom_limit(W, m_ref, Identity()))
    M = math.ceil(T / _common_dt(dt, limits) - 1e-9)
    h = T / M
    prof = get_profile(g)
    if isinstance(kernel, ZeroKernel):
        ref = np.tile(prof.cell_averages(m_ref), (M + 1, 1))
    else:
        ref = solve_nonlocal_diffusion(kernel, prof, m_ref, T, h, min_cells=1).values
    rows = []
    for n, model in zip(n_list, models):
        traj = simulate_linear(model, prof.cell_averages(n), T, h)
        field_n = to_distribution(traj).refined(m_ref)
        dist = np.sqrt(np.mean((field_n - ref) ** 2, axis=1))
        rows.append((n, float(dist.max())))
    return rows


# -- empirical measures -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Atoms (sorted, distinct for scalar opinions) with weights summing to one."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        loc = np.array(self.locations, dtype=float)
        w = np.array(self.weights, dtype=float)
        if loc.shape[0] != w.size:
            raise ShapeError("one weight per atom is required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise OutOfRangeError("weights must be nonnegative and sum to one")
        loc.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return 1 if self.locations.ndim == 1 else self.locations.shape[1]

    def cdf(self, x):
        if self.dim != 1:
            raise UnsupportedDimensionError("CDF is defined for scalar opinions")
        c = np.concatenate(([0.0], np.cumsum(self.weights)))
        return c[np.searchsorted(self.locations, x, side="right")]

    def same_as(self, other, tol=0.0):
        return (self.locations.shape == other.locations.shape
                and np.all(np.abs(self.locations - other.locations) <= tol)
                and np.all(np.abs(self.weights - other.weights) <= tol))


def to_empirical(state) -> EmpiricalMeasure:
    """``(1/N) sum_i delta_{x_i}`` with coincident agents merged."""
    x = np.asarray(state, dtype=float)
    n = x.shape[0]
    if x.ndim == 1:
        loc, counts = np.unique(x, return_counts=True)
    else:
        loc, counts = np.unique(x, axis=0, return_counts=True)
    return EmpiricalMeasure(loc, counts / n)


def wasserstein1(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """``int |F_mu - F_nu| dx``, exact for atomic measures on the line."""
    if mu.dim != 1 or nu.dim != 1:
        raise UnsupportedDimensionError("Wasserstein-1 via CDFs needs scalar opinions")
    pts = np.union1d(mu.locations, nu.locations)
    if pts.size < 2:
        return 0.0
    diff = np.abs(mu.cdf(pts[:-1]) - nu.cdf(pts[:-1]))
    return float(np.sum(diff * np.diff(pts)))


def meanfield_convergence(a: InfluenceFunction, g, n_list, T: float = 1.0,
                          dt: float = 0.01, n_ref: int | None = None,
                          backend: str | None = None):
    """Rows ``(n, sup_t W1(mu^n(t), mu^ref(t)))`` for the alignment model.

    Agents start at the cell averages of ``g``; the reference is the same
    model with ``n_ref >= 8 max(n_list)`` agents on the same time grid.
    """
    n_list = [int(n) for n in n_list]
    if n_ref is None:
        n_ref = 8 * max(n_list)
    if n_ref < 8 * max(n_list):
        raise OutOfRangeError(f"n_ref={n_ref} must be >= 8 max(n_list)")
    prof = get_profile(g)
    lim = STABILITY_FACTOR / (2.0 * a.sup) if a.sup > 0 else None
    M = math.ceil(T / _common_dt(dt, [lim]) - 1e-9)
    h = T / M
    ref = simulate_alignment(n_ref, a, prof.cell_averages(n_ref), T, h, backend=backend)
    ref_mu = [to_empirical(x) for x in ref.states]
    rows = []
    for n in n_list:
        tr = simulate_alignment(n, a, prof.cell_averages(n), T, h, backend=backend)
        d = max(wasserstein1(to_empirical(x), mu) for x, mu in zip(tr.states, ref_mu))
        rows.append((n, d))
    return rows


# -- weak-form residuals ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class ResidualTable:
    """Residuals at interior times, one column per test function."""

    times: np.ndarray
    labels: list
    values: np.ndarray

    def max(self):
        return dict(zip(self.labels, self.values.max(axis=0)))

    def to_csv(self, path):
        header = ["t"] + [f"residual_{lab}" for lab in self.labels]
        return write_csv(path, header, np.column_stack((self.times, self.values)))


def _fd_offset(times, dt_fd):
    dt = float(times[1] - times[0])
    k = int(round(dt_fd / dt))
    if k < 1 or abs(k * dt - dt_fd) > 1e-9 * dt_fd:
        raise OutOfRangeError(f"dt_fd={dt_fd} is not a multiple of the field step {dt}")
    if times.size <= 2 * k:
        raise OutOfRangeError("too few time levels for a centred difference")
    return k


def _velocity_field(x, a, backend=None):
    """``V[mu](x_i) = (1/m) sum_j a(|x_j - x_i|) (x_i - x_j)``."""
    kern, _ = _load_backend(backend)
    return -kern.alignment_rhs(np.ascontiguousarray(x), a.code, a.param) / x.size


def subordination_residual(x_field: DistributionField, a: InfluenceFunction,
                           test_polys=(1, 2, 3), dt_fd: float | None = None,
                           backend: str | None = None) -> ResidualTable:
    """``|d/dt int phi(x) ds + int V[mu](x) phi'(x) ds|`` for ``phi = x^p``.

    The time derivative is a centred difference with step ``dt_fd`` (a
    multiple of the field step); only interior times are reported.
    """
    polys = [int(p) for p in test_polys]
    if any(p <= 0 for p in polys):
        raise VacuousTestError("phi = x^0 makes both sides vanish identically")
    X = x_field.values
    dt_fd = x_field.dt if dt_fd is None else dt_fd
    k = _fd_offset(x_field.times, dt_fd)
    idx = np.arange(k, X.shape[0] - k)
    out = np.empty((idx.size, len(polys)))
    for r, m in enumerate(idx):
        x = X[m]
        V = _velocity_field(x, a, backend)
        for c, p in enumerate(polys):
            ddt = (np.mean(X[m + k] ** p) - np.mean(X[m - k] ** p)) / (2 * dt_fd)
            out[r, c] = abs(ddt + np.mean(V * p * x ** (p - 1)))
    return ResidualTable(x_field.times[idx], [str(p) for p in polys], out)


def _mono(x, p):
    return x**p if p > 0 else np.ones_like(x)


def second_order_weak_residual(data, a: InfluenceFunction, pairs=((0, 1), (1, 1)),
                               dt_fd: float | None = None,
                               backend: str | None = None) -> ResidualTable:
    """Kinetic weak-form residual for ``phi(x, v) = x^p v^q``.

    ``|d/dt int phi ds - int (v phi_x - F phi_v) ds|`` with
    ``F(x, v) = v + (1/m) sum_j a(|x_j - x|) (x - x_j)``.
    """
    vel = getattr(data, "velocities", None)
    if vel is None:
        raise ShapeError("second-order residuals need velocities")
    if isinstance(data, Trajectory):
        if data.dim != 1:
            raise UnsupportedDimensionError("scalar opinions only")
        X, times = data.states, data.times
    else:
        X, times = data.values, data.times
    pairs = [(int(p), int(q)) for p, q in pairs]
    for p, q in pairs:
        if p < 0 or q < 0 or p + q > 3:
            raise OutOfRangeError(f"test degrees ({p}, {q}) outside p, q >= 0, p + q <= 3")
        if p + q == 0:
            raise VacuousTestError("phi = 1 makes both sides vanish identically")
    dt_fd = float(times[1] - times[0]) if dt_fd is None else dt_fd
    k = _fd_offset(times, dt_fd)
    idx = np.arange(k, X.shape[0] - k)
    out = np.empty((idx.size, len(pairs)))
    for r, m in enumerate(idx):
        x, v = X[m], vel[m]
        F = v + _velocity_field(x, a, backend)
        for c, (p, q) in enumerate(pairs):
            phi = lambda j: np.mean(_mono(X[j], p) * _mono(vel[j], q))  # noqa: E731
            ddt = (phi(m + k) - phi(m - k)) / (2 * dt_fd)
            rhs = 0.0
            if p:
                rhs += np.mean(p * _mono(x, p - 1) * _mono(v, q) * v)
            if q:
                rhs -= np.mean(q * _mono(x, p) * _mono(v, q - 1) * F)
            out[r, c] = abs(ddt - rhs)
    labels = [f"x{p}v{q}" for p, q in pairs]
    return ResidualTable(times[idx], labels, out)


def write_distance_table(rows, path):
    return write_csv(path, ["n", "distance"], rows)
