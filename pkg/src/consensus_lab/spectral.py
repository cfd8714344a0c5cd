"""Spectra of network Laplacians and the two parabolic controllability tests.

The tests are a uniform lower bound on consecutive eigenvalue gaps and a
bound on the sum of inverse nonzero eigenvalues.  Both are evaluated on
numerically computed spectra and can be compared with the closed forms
available for the path and dense periodic families.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import (
    EigensolverError,
    FamilyMismatchError,
    InsufficientDataError,
    ScalingMismatchError,
)
from .io import write_csv
from .network import Family, NetworkModel, build_model, check_dense_periodic

__all__ = [
    "Spectrum",
    "GapReport",
    "compute_spectrum",
    "closed_form_path",
    "closed_form_dense_periodic",
    "gap_report",
    "fractional_exponent_fit",
    "gap_scaling_study",
    "write_spectrum_tables",
]

# eigenvalues within this fraction of max|lambda| are one cluster / count as zero
CLUSTER_RTOL = 1e-10
ZERO_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues with orthonormal eigenvectors (column k <-> eigenvalue k)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.eigenvalues.size

    @cached_property
    def scale_ref(self):
        return float(np.max(np.abs(self.eigenvalues))) if self.n else 0.0

    @cached_property
    def gaps(self):
        return np.diff(self.eigenvalues)

    @property
    def min_gap(self):
        return float(self.gaps.min()) if self.n > 1 else math.inf

    @cached_property
    def nonzero(self):
        """Mask of eigenvalues above the zero cutoff."""
        return self.eigenvalues > ZERO_RTOL * self.scale_ref

    @property
    def inverse_sum(self):
        lam = self.eigenvalues[self.nonzero]
        return float(np.sum(1.0 / lam))

    @cached_property
    def clusters(self):
        """Representative value of each eigenvalue cluster and its multiplicity."""
        tol = CLUSTER_RTOL * self.scale_ref
        reps, counts = [], []
        for lam in self.eigenvalues:
            if reps and lam - reps[-1] <= tol:
                counts[-1] += 1
            else:
                reps.append(float(lam))
                counts.append(1)
        return np.array(reps), np.array(counts)

    @property
    def cluster_gaps(self):
        return np.diff(self.clusters[0])

    @property
    def max_multiplicity(self):
        return int(self.clusters[1].max())


@dataclass(frozen=True)
class GapReport:
    n_agents: int
    min_gap: float
    cluster_min_gap: float
    inverse_sum: float
    gap_location: int  # k such that the minimum is lambda_{k+1} - lambda_k (1-based)
    uniform_gap_flag: bool
    summability_flag: bool

    def row(self):
        return (self.n_agents, self.min_gap, self.cluster_min_gap, self.inverse_sum,
                self.gap_location, self.uniform_gap_flag, self.summability_flag)

    header = ("n", "min_gap", "cluster_min_gap", "inverse_sum", "gap_location",
              "uniform_gap", "summable")


# -- eigen-decomposition ----------------------------------------------------

_cache_lock = threading.Lock()
_base_cache: "OrderedDict[tuple, tuple]" = OrderedDict()
_CACHE_SIZE = 8


def _base_key(model):
    return (model.family.value, model.n_agents, tuple(sorted(model.params.items())))


def _path_decomposition(n):
    # L = B^T B with B the (n-1) x n difference matrix; B B^T is the Dirichlet
    # matrix tridiag(-1, 2, -1), so the nonzero modes come from it and the
    # kernel vector is exact.
    m = n - 1
    if m == 1:
        mu, U = np.array([2.0]), np.ones((1, 1))
    else:
        mu, U = eigh_tridiagonal(np.full(m, 2.0), np.full(m - 1, -1.0))
    V = np.zeros((n, n))
    V[:, 0] = 1.0 / math.sqrt(n)
    V[1:, 1:] += U
    V[:-1, 1:] -= U
    V[:, 1:] /= np.sqrt(mu)
    return np.concatenate(([0.0], mu)), V


def _deflated_decomposition(L):
    # Householder reflector H with H e_1 = 1/sqrt(n); H L H has a zero first
    # row and column because L 1 = 0, so the kernel is split off exactly.
    n = L.shape[0]
    w = np.full(n, 1.0 / math.sqrt(n))
    w[0] -= 1.0
    H = np.eye(n) - 2.0 * np.outer(w, w) / (w @ w)
    M = H @ L @ H
    inner = M[1:, 1:]
    inner = 0.5 * (inner + inner.T)
    mu, Y = np.linalg.eigh(inner)
    V = np.empty((n, n))
    V[:, 0] = H[:, 0]
    V[:, 1:] = H[:, 1:] @ Y
    return np.concatenate(([0.0], mu)), V


def _base_decomposition(model):
    key = _base_key(model)
    with _cache_lock:
        hit = _base_cache.get(key)
        if hit is not None:
            _base_cache.move_to_end(key)
            return hit
    try:
        if model.family is Family.PATH:
            lam, V = _path_decomposition(model.n_agents)
        else:
            lam, V = _deflated_decomposition(np.asarray(model.base_laplacian))
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigensolver failed for {model.tag}: {exc}") from exc
    lam.setflags(write=False)
    V.setflags(write=False)
    with _cache_lock:
        _base_cache[key] = (lam, V)
        while len(_base_cache) > _CACHE_SIZE:
            _base_cache.popitem(last=False)
    return lam, V


def _apply(model, V):
    if model.family is Family.PATH:
        # tridiagonal product without forming the dense matrix
        out = 2.0 * V
        out[0] -= V[0]
        out[-1] -= V[-1]
        out[1:] -= V[:-1]
        out[:-1] -= V[1:]
        return out * model.scale
    return model.laplacian @ V


def compute_spectrum(model: NetworkModel, check: bool = True) -> Spectrum:
    """Full symmetric eigen-decomposition of ``model.laplacian``.

    The constant vector is split off exactly, so the first eigenvalue is 0.
    With ``check`` the residual ``max |L V - V diag(lam)|`` is verified
    against ``1e-8 max |L|``; a failure raises :class:`EigensolverError`.
    """
    lam_base, V = _base_decomposition(model)
    lam = lam_base * model.scale
    if check:
        resid = float(np.max(np.abs(_apply(model, V) - V * lam))) if model.n_agents else 0.0
        bound = 1e-8 * float(np.max(np.abs(model.laplacian)))
        if not resid <= bound:
            raise EigensolverError(
                f"eigen-decomposition residual {resid:.3e} exceeds {bound:.3e} for {model.tag}")
    return Spectrum(lam, V)


# -- closed forms -----------------------------------------------------------

def closed_form_path(n: int, k: int, scaled: bool = False) -> float:
    """``4 sin^2(pi (k - 1) / (2 n))``, times ``n**2`` when scaled."""
    if not 1 <= k <= n:
        raise IndexError(f"k={k} outside 1..{n}")
    lam = 4.0 * math.sin(math.pi * (k - 1) / (2.0 * n)) ** 2
    return lam * n * n if scaled else lam


def closed_form_dense_periodic(n: int, r: float, k: int) -> float:
    """``2 - (2/l) sum_{j=1..l} cos(2 pi k j / n)`` with ``l = [r n]`` (unsorted in k)."""
    ell = check_dense_periodic(n, r)
    if not 1 <= k <= n:
        raise IndexError(f"k={k} outside 1..{n}")
    j = np.arange(1, ell + 1)
    return float(2.0 - (2.0 / ell) * np.sum(np.cos(2.0 * math.pi * k * j / n)))


# -- diagnostics ------------------------------------------------------------

def gap_report(spectrum: Spectrum, gap_threshold: float = 0.0,
               sum_threshold: float = math.inf) -> GapReport:
    gaps = spectrum.gaps
    if gaps.size:
        loc = int(np.argmin(gaps))
        min_gap = float(gaps[loc])
    else:
        loc, min_gap = -1, math.inf
    cg = spectrum.cluster_gaps
    cluster_min = float(cg.min()) if cg.size else math.inf
    inv = spectrum.inverse_sum
    return GapReport(
        n_agents=spectrum.n,
        min_gap=min_gap,
        cluster_min_gap=cluster_min,
        inverse_sum=inv,
        gap_location=loc + 1,
        uniform_gap_flag=bool(min_gap >= gap_threshold),
        summability_flag=bool(inv <= sum_threshold),
    )


def fractional_exponent_fit(model: NetworkModel, band=(1 / 32, 1 / 8)) -> float:
    """Slope of ``log lambda`` against ``log(mode index)`` over a low band.

    The ``k``-th eigenvalue belongs to the mode with ``k - 1`` sign changes
    (the constant mode is ``k = 1``), so the fit uses ``m = k - 1`` with
    ``band[0] * n <= m <= band[1] * n``.  That is the range where the
    discrete operator still resolves the continuum power law ``m**(2 alpha)``.
    """
    if model.family is not Family.FRACTIONAL:
        raise FamilyMismatchError("exponent fit is defined for the fractional family")
    if not model.scaled:
        raise ScalingMismatchError("exponent fit expects the PDE-scaled fractional model")
    n = model.n_agents
    if n < 64:
        raise InsufficientDataError(f"exponent fit needs n >= 64, got {n}")
    lo, hi = math.ceil(band[0] * n), math.floor(band[1] * n)
    if hi - lo + 1 < 4:
        raise InsufficientDataError(f"band {band} holds fewer than 4 modes for n={n}")
    lam = compute_spectrum(model).eigenvalues
    m = np.arange(lo, hi + 1)
    slope, _ = np.polyfit(np.log(m), np.log(lam[m]), 1)
    return float(slope)


def gap_scaling_study(family, n_list, scaled=False, gap_threshold=0.0,
                      sum_threshold=math.inf, **params):
    """One :class:`GapReport` per size in ``n_list``."""
    rows = []
    for n in n_list:
        model = build_model(family, n, scaled=scaled, **params)
        rows.append(gap_report(compute_spectrum(model), gap_threshold, sum_threshold))
    return rows


def write_spectrum_tables(model: NetworkModel, spectrum: Spectrum, out_dir):
    """Write ``{tag}_eigenvalues.csv`` (k, lambda_k) and ``{tag}_gaps.csv`` (k, gap_k)."""
    import os

    k = np.arange(1, spectrum.n + 1)
    ev = os.path.join(out_dir, f"{model.tag}_eigenvalues.csv")
    gp = os.path.join(out_dir, f"{model.tag}_gaps.csv")
    write_csv(ev, ["k", "lambda"], zip(k, spectrum.eigenvalues))
    write_csv(gp, ["k", "gap"], zip(k[:-1], spectrum.gaps))
    return [ev, gp]
