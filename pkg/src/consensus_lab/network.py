"""Laplacian matrices and actuator patterns for the consensus networks.

Four families are provided:

* ``Path1D``: agents on a line talking to their two neighbours (the
  Neumann finite-difference Laplacian in disguise),
* ``Grid2D``: the five-point stencil on a ``side x side`` grid,
* ``DensePeriodic``: a ring where every agent talks to the ``l = [r N]``
  nearest agents on each side with weight ``1/l``,
* ``Fractional``: all-to-all weights ``c / |i - j|^(1 + 2 alpha)``.

Agents are numbered from 1 in the public API (``SingleNode(1)`` is the
first agent) and from 0 in the stored matrices.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import gamma

from .errors import (
    DegenerateRadiusError,
    EmptyControlError,
    FamilyMismatchError,
    InvalidSizeError,
    OutOfRangeError,
)
from .io import write_csv

__all__ = [
    "Family",
    "NetworkModel",
    "SingleNode",
    "InteriorStrip",
    "GridSide",
    "ControlPattern",
    "build_path",
    "build_grid2d",
    "build_dense_periodic",
    "build_fractional",
    "build_model",
    "build_control",
    "edge_density",
    "fractional_constant",
    "neighbour_count",
    "check_dense_periodic",
]


class Family(str, enum.Enum):
    PATH = "Path1D"
    GRID = "Grid2D"
    DENSE_PERIODIC = "DensePeriodic"
    FRACTIONAL = "Fractional"


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """A symmetric graph Laplacian together with the parameters that built it.

    ``scale`` is the factor applied to the consensus Laplacian: 1 for the
    consensus scaling, ``N**2`` or ``N**(2 alpha)`` for the PDE scaling.
    """

    family: Family
    n_agents: int
    params: dict
    laplacian: np.ndarray = field(repr=False)
    scaled: bool = False
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "laplacian", _frozen(self.laplacian))
        object.__setattr__(self, "params", dict(self.params))

    @property
    def key(self):
        """Hashable identity of the model (family, size, parameters, scaling)."""
        return (self.family.value, self.n_agents, tuple(sorted(self.params.items())),
                self.scaled)

    @property
    def side(self):
        return self.params.get("side")

    @property
    def base_laplacian(self):
        """The consensus-scaled Laplacian (``laplacian / scale``)."""
        if self.scale == 1.0:
            return self.laplacian
        return self.laplacian / self.scale

    def descriptor(self):
        """JSON-ready description used by experiment manifests."""
        return {
            "family": self.family.value,
            "n_agents": self.n_agents,
            "params": {k: self.params[k] for k in sorted(self.params)},
            "scaled": self.scaled,
        }

    def descriptor_json(self):
        return json.dumps(self.descriptor(), sort_keys=True)

    def to_csv(self, path):
        """Write the full dense Laplacian, one matrix row per line."""
        header = [f"c{j + 1}" for j in range(self.n_agents)]
        write_csv(path, header, self.laplacian)

    @property
    def tag(self):
        """Short name used in output file names, e.g. ``DensePeriodic_45_r0.25``."""
        parts = [self.family.value, str(self.n_agents)]
        for k in sorted(self.params):
            if k in ("ell", "side"):
                continue
            parts.append(f"{k}{self.params[k]:g}")
        if self.scaled:
            parts.append("scaled")
        return "_".join(parts)


def _path_laplacian(n):
    L = np.zeros((n, n))
    idx = np.arange(n - 1)
    L[idx, idx + 1] = -1.0
    L[idx + 1, idx] = -1.0
    L[np.diag_indices(n)] = -L.sum(axis=1)
    return L


def build_path(n: int, scaled: bool = False) -> NetworkModel:
    """Line graph: diagonal ``(1, 2, ..., 2, 1)``, off-diagonals -1.

    With ``scaled=True`` the matrix is multiplied by ``n**2`` (finite
    difference Neumann Laplacian on [0, 1]).
    """
    if int(n) != n or n < 2:
        raise InvalidSizeError(f"path network needs n >= 2, got {n}")
    n = int(n)
    scale = float(n * n) if scaled else 1.0
    return NetworkModel(Family.PATH, n, {}, _path_laplacian(n) * scale, bool(scaled), scale)


def build_grid2d(side: int, scaled: bool = False) -> NetworkModel:
    """Five-point Laplacian on a ``side x side`` grid with Neumann ends.

    Node ``(i, j)`` (1-based) lives at index ``(i - 1) * side + (j - 1)``;
    the diagonal blocks are ``P1`` (first and last block rows) and ``P2``.
    """
    if int(side) != side or side < 2:
        raise InvalidSizeError(f"grid network needs side >= 2, got {side}")
    side = int(side)
    P = _path_laplacian(side)
    eye = np.eye(side)
    L = np.kron(P, eye) + np.kron(eye, P)
    scale = float(side * side) if scaled else 1.0
    return NetworkModel(Family.GRID, side * side, {"side": side}, L * scale, bool(scaled), scale)


def neighbour_count(n: int, r: float) -> int:
    """``[r n]``, the closest integer to ``r n``; exact halves round away from zero."""
    # rounding guard so that e.g. 0.1 * 45 counts as the tie 4.5
    return int(math.floor(round(r * n, 9) + 0.5))


def check_dense_periodic(n, r) -> int:
    """Validate ``(n, r)`` for the dense periodic family and return ``l = [r n]``."""
    if int(n) != n or n < 3:
        raise InvalidSizeError(f"dense periodic network needs n >= 3, got {n}")
    if not (0.0 <= r <= 0.5):
        raise OutOfRangeError(f"r must lie in [0, 1/2], got {r}")
    ell = neighbour_count(int(n), r)
    if ell < 1:
        raise DegenerateRadiusError(f"[r n] = 0 for r={r}, n={n}: no interactions")
    return ell


def build_dense_periodic(n: int, r: float, scaled: bool = False) -> NetworkModel:
    """Ring where each agent talks to ``l = [r n]`` neighbours per side.

    Row ``i`` receives ``-1/l`` for every offset ``+-1, ..., +-l`` taken
    modulo ``n``; offsets that land on the same agent add up. This keeps row
    sums at zero when ``2 l >= n`` (e.g. the antipodal agent for ``r = 1/2``)
    and makes the eigenvalues exactly ``2 - (2/l) sum_j cos(2 pi k j / n)``.
    """
    if scaled:
        raise OutOfRangeError("the dense periodic network has no PDE scaling")
    ell = check_dense_periodic(n, r)
    n = int(n)
    row = np.zeros(n)
    row[0] = 2.0
    for j in range(1, ell + 1):
        row[j % n] -= 1.0 / ell
        row[-j % n] -= 1.0 / ell
    cols = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    L = row[cols]
    return NetworkModel(Family.DENSE_PERIODIC, n, {"r": float(r), "ell": ell}, L, False, 1.0)


def fractional_constant(alpha: float) -> float:
    """Standard normalisation of the 1-D fractional Laplacian kernel."""
    return 4.0**alpha * gamma(0.5 + alpha) / (math.sqrt(math.pi) * abs(gamma(-alpha)))


def build_fractional(n: int, alpha: float, c_alpha: float = 1.0,
                     scaled: bool = False) -> NetworkModel:
    """All-to-all network with weights ``c_alpha / |i - j|^(1 + 2 alpha)``.

    The diagonal carries the row sum of the weights so that the result is a
    genuine graph Laplacian. ``scaled=True`` multiplies by ``n**(2 alpha)``.
    """
    if int(n) != n or n < 2:
        raise InvalidSizeError(f"fractional network needs n >= 2, got {n}")
    if not (0.0 < alpha < 1.0):
        raise OutOfRangeError(f"alpha must lie in (0, 1), got {alpha}")
    if not c_alpha > 0:
        raise OutOfRangeError(f"c_alpha must be positive, got {c_alpha}")
    n = int(n)
    dist = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :]).astype(float)
    off = dist > 0
    W = np.zeros((n, n))
    W[off] = c_alpha / dist[off] ** (1.0 + 2.0 * alpha)
    L = -W
    L[np.diag_indices(n)] = W.sum(axis=1)
    scale = float(n) ** (2.0 * alpha) if scaled else 1.0
    params = {"alpha": float(alpha), "c_alpha": float(c_alpha)}
    return NetworkModel(Family.FRACTIONAL, n, params, L * scale, bool(scaled), scale)


def build_model(family, n, scaled=False, **params) -> NetworkModel:
    """Dispatch on a family name (``"path"``, ``"grid"``, ``"dense_periodic"``,
    ``"fractional"`` or the :class:`Family` values)."""
    fam = _parse_family(family)
    if fam is Family.PATH:
        return build_path(n, scaled)
    if fam is Family.GRID:
        return build_grid2d(n, scaled)
    if fam is Family.DENSE_PERIODIC:
        return build_dense_periodic(n, params["r"], scaled)
    return build_fractional(n, params["alpha"], params.get("c_alpha", 1.0), scaled)


_ALIASES = {
    "path": Family.PATH, "path1d": Family.PATH,
    "grid": Family.GRID, "grid2d": Family.GRID,
    "dense_periodic": Family.DENSE_PERIODIC, "dense-periodic": Family.DENSE_PERIODIC,
    "denseperiodic": Family.DENSE_PERIODIC,
    "fractional": Family.FRACTIONAL,
}


def _parse_family(family):
    if isinstance(family, Family):
        return family
    try:
        return _ALIASES[str(family).lower()]
    except KeyError:
        raise FamilyMismatchError(f"unknown network family {family!r}") from None


# -- control patterns -------------------------------------------------------

@dataclass(frozen=True)
class SingleNode:
    index: int  # 1-based


@dataclass(frozen=True)
class InteriorStrip:
    a: float
    b: float


@dataclass(frozen=True)
class GridSide:
    pass


Shape = Union[SingleNode, InteriorStrip, GridSide]


@dataclass(frozen=True, eq=False)
class ControlPattern:
    """Input matrix ``B`` with one unit entry per column."""

    shape: Shape
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))

    @property
    def actuated(self):
        """0-based indices of the actuated agents, in column order."""
        return np.argmax(self.matrix, axis=0)

    @property
    def n_inputs(self):
        return self.matrix.shape[1]


def build_control(model: NetworkModel, shape: Shape) -> ControlPattern:
    n = model.n_agents
    if isinstance(shape, SingleNode):
        if not 1 <= shape.index <= n:
            raise EmptyControlError(f"agent index {shape.index} outside 1..{n}")
        nodes = [shape.index - 1]
    elif isinstance(shape, InteriorStrip):
        if model.family is Family.GRID:
            raise FamilyMismatchError("interior strips are defined on one-dimensional networks")
        if not 0.0 <= shape.a < shape.b <= 1.0:
            raise EmptyControlError(f"strip ({shape.a}, {shape.b}] is not a sub-interval of [0, 1]")
        nodes = [j - 1 for j in range(1, n + 1) if shape.a < j / n <= shape.b]
    elif isinstance(shape, GridSide):
        if model.family is not Family.GRID:
            raise FamilyMismatchError("GridSide actuation needs a Grid2D network")
        nodes = list(range(model.side))
    else:
        raise TypeError(f"unknown control shape {shape!r}")
    if not nodes:
        raise EmptyControlError(f"{shape} actuates no agent for n={n}")
    B = np.zeros((n, len(nodes)))
    B[nodes, np.arange(len(nodes))] = 1.0
    return ControlPattern(shape, B)


def edge_density(model: NetworkModel) -> float:
    """Fraction of nonzero off-diagonal couplings, ``nnz / N**2``."""
    L = model.laplacian
    n = model.n_agents
    nnz = np.count_nonzero(L) - np.count_nonzero(np.diag(L))
    return nnz / float(n * n)
