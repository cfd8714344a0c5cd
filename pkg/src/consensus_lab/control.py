"""Controllability tests, Gramians and minimal-energy steering to consensus.

The cost observable is built from the Gramian in reversed time,

    R_T = int_0^T e^{L s} B B^T e^{L s} ds = e^{L T} W_T e^{L T},

restricted to the complement of the consensus direction.  The minimal
energy needed to bring ``x0`` to its mean in time ``T`` is
``(x0 - mean)^T R_T^{-1} (x0 - mean)``, so ``1 / lambda_min(R_T)`` is the
worst case over unit initial disagreement.  Its entries grow like
``exp(2 lambda_max T)`` while the smallest eigenvalue may be tiny, hence the
evaluation in extended precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import mpmath
import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import qr

from .dynamics import ControlSignal, simulate_linear
from .errors import (
    EigensolverError,
    OutOfRangeError,
    QuadratureError,
    ShapeError,
    UnreachableTargetError,
)
from .io import write_csv
from .network import (
    Family,
    GridSide,
    NetworkModel,
    SingleNode,
    _parse_family,
    build_control,
    build_model,
)
from .spectral import compute_spectrum

__all__ = [
    "Gramian",
    "ControlResult",
    "InitialMean",
    "Zero",
    "Given",
    "FixedT",
    "ScaledT",
    "kalman_rank",
    "gramian",
    "gramian_exact",
    "cost_proxy",
    "propagate",
    "steer_to_consensus",
    "cost_scaling_study",
    "write_cost_table",
    "sign_profile",
    "COND_LIMIT",
]

COND_LIMIT = 1e12
TERMINAL_RTOL = 1e-6
PINV_RTOL = 1e-12


# -- small types ------------------------------------------------------------

@dataclass(frozen=True)
class InitialMean:
    pass


@dataclass(frozen=True)
class Zero:
    pass


@dataclass(frozen=True)
class Given:
    value: float


@dataclass(frozen=True)
class FixedT:
    T: float

    def horizon(self, n, family=None, params=None):
        return float(self.T)


@dataclass(frozen=True)
class ScaledT:
    """``T = c * n**p``; ``p`` defaults to 2, or ``2 alpha`` for the fractional family."""

    c: float
    power: Optional[float] = None

    def horizon(self, n, family=None, params=None):
        p = self.power
        if p is None:
            p = 2.0 * params["alpha"] if family is Family.FRACTIONAL else 2.0
        return float(self.c * n**p)


@dataclass(frozen=True, eq=False)
class Gramian:
    T: float
    matrix: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    rank_tol: float
    steps: int = 0

    @property
    def condition(self):
        lo = self.eigenvalues[0]
        return math.inf if lo <= 0 else float(self.eigenvalues[-1] / lo)

    @property
    def rank(self):
        return int(np.sum(self.eigenvalues > self.rank_tol))


@dataclass(frozen=True, eq=False)
class ControlResult:
    control_signal: Optional[ControlSignal] = field(repr=False)
    energy: float
    terminal_error: float
    cost_proxy: float
    ill_conditioned: bool
    min_energy: float = math.nan  # d^T W^-1 d, exact counterpart of ``energy``
    target: Optional[np.ndarray] = field(default=None, repr=False)
    trajectory: object = field(default=None, repr=False)
    control: object = field(default=None, repr=False)  # callable u(t)


# -- helpers ----------------------------------------------------------------

def _laplacian(model):
    if isinstance(model, NetworkModel):
        return np.asarray(model.laplacian)
    L = np.atleast_2d(np.asarray(model, dtype=float))
    if L.shape[0] != L.shape[1]:
        raise ShapeError(f"Laplacian must be square, got {L.shape}")
    return L


def _input_matrix(B, n):
    B = np.asarray(getattr(B, "matrix", B), dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != n:
        raise ShapeError(f"input matrix has {B.shape[0]} rows for {n} states")
    return B


def _eigen(model):
    if isinstance(model, NetworkModel):
        s = compute_spectrum(model)
        return s.eigenvalues, s.eigenvectors
    lam, V = np.linalg.eigh(_laplacian(model))
    return lam, V


def propagate(model, x, t):
    """``exp(-L t) x`` through the eigen-decomposition of the symmetric ``L``."""
    lam, V = _eigen(model)
    x = np.asarray(x, dtype=float)
    decay = np.exp(-lam * t)
    if x.ndim > 1:
        decay = decay[:, None]
    return V @ (decay * (V.T @ x))


# -- rank -------------------------------------------------------------------

def kalman_rank(model, B) -> int:
    """Numerical rank of ``[B, L B, ..., L^(n-1) B]``.

    Column-pivoted QR; a diagonal entry of ``R`` counts when it exceeds
    ``n * eps * ||K||_2``.
    """
    L = _laplacian(model)
    n = L.shape[0]
    B = _input_matrix(B, n)
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(L @ blocks[-1])
    K = np.hstack(blocks)
    R = qr(K, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    tol = n * np.finfo(float).eps * np.linalg.norm(K, 2)
    return int(np.sum(diag > tol))


# -- Gramian ----------------------------------------------------------------

def _lyapunov_rk4(L, BB, T, steps):
    h = T / steps
    W = np.zeros_like(BB)

    def f(W):
        LW = L @ W
        return BB - LW - LW.T

    for _ in range(steps):
        k1 = f(W)
        k2 = f(W + 0.5 * h * k1)
        k3 = f(W + 0.5 * h * k2)
        k4 = f(W + h * k3)
        W = W + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return 0.5 * (W + W.T)


def _make_gramian(T, W, steps):
    ev = np.linalg.eigvalsh(W)
    tol = W.shape[0] * np.finfo(float).eps * max(float(ev[-1]), 0.0)
    return Gramian(float(T), W, ev, tol, steps)


def gramian(model, B, T: float, steps: int = 64, rtol: float = 1e-8,
            max_steps: int = 2**20) -> Gramian:
    """``W_T = int_0^T e^{-Ls} B B^T e^{-L^T s} ds`` from the Lyapunov ODE.

    ``W' = -L W - W L^T + B B^T`` is integrated by RK4 with ``steps`` steps
    (raised to respect the stability bound), and the step count is doubled
    until two successive results agree to ``rtol`` relative.
    """
    if not T > 0:
        raise OutOfRangeError(f"T must be positive, got {T}")
    if steps < 64:
        raise OutOfRangeError(f"at least 64 steps are required, got {steps}")
    L = _laplacian(model)
    n = L.shape[0]
    B = _input_matrix(B, n)
    BB = B @ B.T
    lmax = float(np.max(np.abs(np.linalg.eigvalsh(L)))) if n > 1 else abs(float(L[0, 0]))
    # the Lyapunov operator has eigenvalues -(lambda_k + lambda_l)
    steps = max(steps, math.ceil(T * 2.0 * lmax / 1.8))
    W = _lyapunov_rk4(L, BB, T, steps)
    while True:
        if 2 * steps > max_steps:
            raise QuadratureError(f"Gramian did not settle to rtol={rtol} within {max_steps} steps")
        W2 = _lyapunov_rk4(L, BB, T, 2 * steps)
        change = np.max(np.abs(W2 - W)) / max(np.max(np.abs(W2)), np.finfo(float).tiny)
        steps *= 2
        W = W2
        if change <= rtol:
            return _make_gramian(T, W, steps)


def gramian_exact(model, B, T: float) -> Gramian:
    """Same Gramian from the eigen-decomposition of ``L`` (closed-form integrals)."""
    lam, V = _eigen(model)
    B = _input_matrix(B, lam.size)
    b = V.T @ B
    G = (b @ b.T) * _phi(lam[:, None] + lam[None, :], T)
    W = V @ G @ V.T
    return _make_gramian(T, 0.5 * (W + W.T), 0)


def _phi(s, T):
    # (1 - exp(-s T)) / s with the s -> 0 limit T
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    small = np.abs(s * T) < 1e-8
    out[small] = T * (1.0 - 0.5 * s[small] * T)
    out[~small] = -np.expm1(-s[~small] * T) / s[~small]
    return out


# -- cost proxy -------------------------------------------------------------

def _reverse_gramian_min_eig(L, B, T, dps):
    with mpmath.workdps(dps):
        n = L.shape[0]
        E, Q = mpmath.eigsy(mpmath.matrix(L.tolist()))
        order = sorted(range(n), key=lambda i: E[i])[1:]  # drop the consensus mode
        b = Q.T * mpmath.matrix(B.tolist())
        m = B.shape[1]
        R = mpmath.matrix(n - 1, n - 1)
        for p, k in enumerate(order):
            for q in range(p, n - 1):
                l = order[q]
                s = E[k] + E[l]
                f = mpmath.expm1(s * T) / s
                R[p, q] = R[q, p] = mpmath.fsum(b[k, j] * b[l, j] for j in range(m)) * f
        ev = mpmath.eigsy(R, eigvals_only=True)
        return min(ev)


def cost_proxy(model, B, T: float, rtol: float = 1e-8, max_dps: int = 2000) -> float:
    """``1 / lambda_min`` of the reversed-time Gramian off the consensus direction.

    Evaluated with mpmath at two working precisions that must agree to
    ``rtol``; the precision is raised until they do.  Returns ``inf`` when
    the restricted Gramian is singular (uncontrollable modes).
    """
    if not T > 0:
        raise OutOfRangeError(f"T must be positive, got {T}")
    L = _laplacian(model)
    n = L.shape[0]
    B = _input_matrix(B, n)
    if n < 2:
        return 0.0
    lmax = float(np.max(np.abs(np.linalg.eigvalsh(L))))
    # digits needed to hold exp(2 lambda_max T) next to O(1) quantities, plus margin
    dps = 40 + int(2.0 * lmax * T / math.log(10.0))
    prev = None
    while dps <= max_dps:
        lo = _reverse_gramian_min_eig(L, B, T, dps)
        if prev is not None:
            if lo <= 0 and prev <= 0:
                return math.inf
            if lo > 0 and abs(lo - prev) <= rtol * abs(lo):
                return float(1 / lo)
        prev = lo
        dps += 30
    raise EigensolverError(f"cost proxy did not stabilise below {max_dps} digits")


# -- steering ---------------------------------------------------------------

def _target_value(policy, x0):
    if policy is None or isinstance(policy, InitialMean) or policy == "initial_mean":
        return float(np.mean(x0))
    if isinstance(policy, Zero) or policy == "zero":
        return 0.0
    if isinstance(policy, Given):
        return float(policy.value)
    if isinstance(policy, (int, float)):
        return float(policy)
    raise OutOfRangeError(f"unknown target policy {policy!r}")


class _ModalControl:
    """``u(t) = b^T (exp(-lam (T - t)) * c)`` evaluated exactly."""

    def __init__(self, lam, b, c, T):
        self.lam, self.b, self.c, self.horizon = lam, b, c, float(T)

    def __call__(self, t):
        return self.b.T @ (np.exp(-self.lam * (self.horizon - t)) * self.c)


def steer_to_consensus(model: NetworkModel, B, x0, T: float, steps: int = 400,
                       target_policy=None, with_cost: bool = True,
                       max_steps: int = 2**16) -> ControlResult:
    """Minimal-energy open-loop control to a consensus state in time ``T``.

    ``u(t) = B^T exp(-L^T (T - t)) W_T^{-1} d`` with
    ``d = target - exp(-L T) x0``; the control is applied through
    :func:`simulate_linear` with ``steps`` RK4 steps, doubled (up to
    ``max_steps``) while a well-conditioned run misses the target by more
    than ``1e-6 (1 + ||x0||)``.  When
    ``cond(W_T) > 1e12`` the result is flagged and the energy is still
    computed if ``W_T`` is numerically positive definite.
    """
    if not T > 0:
        raise OutOfRangeError(f"T must be positive, got {T}")
    n = model.n_agents
    Bm = _input_matrix(B, n)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        raise ShapeError(f"x0 must have shape ({n},)")
    c = _target_value(target_policy, x0)
    target = np.full(n, c)
    lam, V = _eigen(model)
    b = V.T @ Bm
    G = (b @ b.T) * _phi(lam[:, None] + lam[None, :], T)
    G = 0.5 * (G + G.T)
    d_modal = V.T @ target - np.exp(-lam * T) * (V.T @ x0)

    g, Q = np.linalg.eigh(G)
    gmax = float(g[-1])
    cond = math.inf if g[0] <= 0 else gmax / float(g[0])
    ill = not cond <= COND_LIMIT

    if kalman_rank(model, Bm) < n:
        # reachable only if the defect lies in the numerical range of W_T
        keep = g > PINV_RTOL * gmax
        coeff = Q.T @ d_modal
        resid = np.linalg.norm(coeff[~keep])
        if resid > 1e-8 * (1.0 + np.linalg.norm(d_modal)):
            raise UnreachableTargetError(
                f"target defect has a component {resid:.3e} outside the Gramian range")
        eta = Q[:, keep] @ (coeff[keep] / g[keep])
    elif g[0] > 0:
        eta = Q @ ((Q.T @ d_modal) / g)
    else:
        eta = None

    proxy = cost_proxy(model, Bm, T) if with_cost else math.nan
    if eta is None:
        return ControlResult(None, math.nan, math.nan, proxy, True, target=target)

    u = _ModalControl(lam, b, eta, T)
    tol = TERMINAL_RTOL * (1.0 + float(np.linalg.norm(x0)))
    while True:
        traj = simulate_linear(model, x0, T, T / steps, control=(Bm, u))
        err = float(np.linalg.norm(traj.final - target))
        # a well-conditioned target must be met; refine the time grid until it is
        if ill or err <= tol or 2 * steps > max_steps:
            break
        steps *= 2
    samples = np.array([u(t) for t in traj.times])
    energy = float(trapezoid(np.sum(samples**2, axis=1), traj.times))
    return ControlResult(
        control_signal=ControlSignal(traj.times, samples),
        energy=energy,
        terminal_error=err,
        cost_proxy=proxy,
        ill_conditioned=ill,
        min_energy=float(eta @ d_modal),
        target=target,
        trajectory=traj,
        control=u,
    )


def _default_input(model):
    if model.family is Family.GRID:
        return build_control(model, GridSide())
    return build_control(model, SingleNode(1))


def sign_profile(n):
    """``x_i = sign(i - n/2)``, the initial data used by the cost sweeps."""
    i = np.arange(1, n + 1)
    return np.sign(i - n / 2.0)


def cost_scaling_study(family, n_list, T_policy, scaled: bool = False,
                       steps: int = 400, **params):
    """Rows ``(n, T, log10 cost_proxy, energy or NaN, terminal_error, ill_conditioned)``.

    The input acts on the first agent (a full side for the grid) and the
    energy is measured on ``sign_profile(n)`` steered to its mean.
    """
    fam = _parse_family(family)
    rows = []
    for n in n_list:
        if n > 64:
            raise OutOfRangeError(f"cost sweeps are limited to n <= 64, got {n}")
        model = build_model(fam, n, scaled=scaled, **params)
        T = T_policy.horizon(n, fam, params)
        B = _default_input(model)
        proxy = cost_proxy(model, B, T)
        try:
            res = steer_to_consensus(model, B, sign_profile(model.n_agents), T, steps=steps,
                                     with_cost=False)
        except UnreachableTargetError:
            # numerically rank deficient: only the proxy is meaningful
            rows.append((n, T, math.log10(proxy), math.nan, math.nan, True))
            continue
        energy = math.nan if res.ill_conditioned else res.energy
        rows.append((n, T, math.log10(proxy), energy, res.terminal_error, res.ill_conditioned))
    return rows


COST_HEADER = ["n", "T", "log10_cost_proxy", "energy", "terminal_error", "ill_conditioned"]


def write_cost_table(rows, path):
    return write_csv(path, COST_HEADER, rows)
