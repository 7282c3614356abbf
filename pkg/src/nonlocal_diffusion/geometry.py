"""Domain, interaction layer, constraint partition and the uniform mesh."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ConstraintKind",
    "ConstraintPiece",
    "DomainSpec",
    "Diagnostic",
    "Mesh",
    "MeshError",
    "NodeKind",
    "build_layers",
    "validate_partition",
    "build_mesh",
]

_REL_TOL = 1e-12


class MeshError(ValueError):
    """Mesh size incompatible with the domain or the constraint pieces."""


class ConstraintKind(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    NEUMANN_HAT = "neumann_hat"
    ROBIN = "robin"


class NodeKind(enum.IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2
    NEUMANN_HAT = 3
    ROBIN = 4


_NODE_KIND = {
    ConstraintKind.DIRICHLET: NodeKind.DIRICHLET,
    ConstraintKind.NEUMANN: NodeKind.NEUMANN,
    ConstraintKind.NEUMANN_HAT: NodeKind.NEUMANN_HAT,
    ConstraintKind.ROBIN: NodeKind.ROBIN,
}


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ConstraintPiece:
    """A subinterval ``[lo, hi)`` of the interaction layer with its data."""

    interval: tuple[float, float]
    kind: ConstraintKind
    data: Callable = _zero

    def __post_init__(self):
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        lo, hi = map(float, self.interval)
        object.__setattr__(self, "interval", (lo, hi))

    @property
    def length(self) -> float:
        return self.interval[1] - self.interval[0]


@dataclass(frozen=True)
class DomainSpec:
    omega: tuple[float, float]
    delta: float
    pieces: tuple[ConstraintPiece, ...] = field(default_factory=tuple)

    def __post_init__(self):
        a, b = map(float, self.omega)
        if not b > a:
            raise ValueError(f"empty domain ({a}, {b})")
        if not self.delta > 0:
            raise ValueError(f"horizon must be positive, got {self.delta}")
        object.__setattr__(self, "omega", (a, b))
        object.__setattr__(self, "pieces", tuple(self.pieces))

    @property
    def layers(self):
        return build_layers(self.omega, self.delta)

    @property
    def omega_hat(self) -> tuple[float, float]:
        a, b = self.omega
        return a - self.delta, b + self.delta

    def pieces_of(self, *kinds) -> list[ConstraintPiece]:
        kinds = {ConstraintKind(k) for k in kinds}
        return [p for p in self.pieces if p.kind in kinds]


def build_layers(omega, delta):
    """Left and right components of the interaction layer of width ``delta``."""
    if not delta > 0:
        raise ValueError(f"horizon must be positive, got {delta}")
    a, b = omega
    return (a - delta, a), (b, b + delta)


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # "gap", "overlap", "outside" or "degenerate"
    interval: tuple[float, float]
    pieces: tuple[int, ...] = ()

    def __str__(self):
        lo, hi = self.interval
        who = f" pieces {list(self.pieces)}" if self.pieces else ""
        return f"{self.kind} ({lo:g}, {hi:g}){who}"


def validate_partition(spec: DomainSpec, tol: float = 1e-12) -> list[Diagnostic]:
    """Check that the pieces tile the interaction layer.

    Returns an empty list when the pieces are pairwise disjoint, lie in the
    layer, have positive length, and cover it up to measure zero.
    """
    scale = max(1.0, abs(spec.omega[0]), abs(spec.omega[1]), spec.delta)
    eps = tol * scale
    layers = spec.layers
    out: list[Diagnostic] = []
    for i, p in enumerate(spec.pieces):
        lo, hi = p.interval
        if hi - lo <= eps:
            out.append(Diagnostic("degenerate", (lo, hi), (i,)))
            continue
        if not any(lo >= L - eps and hi <= R + eps for L, R in layers):
            out.append(Diagnostic("outside", (lo, hi), (i,)))
    order = sorted(range(len(spec.pieces)), key=lambda i: spec.pieces[i].interval)
    for pos, i in enumerate(order):
        lo_i, hi_i = spec.pieces[i].interval
        for j in order[pos + 1:]:
            lo_j, hi_j = spec.pieces[j].interval
            if lo_j >= hi_i - eps:
                break
            out.append(Diagnostic("overlap", (lo_j, min(hi_i, hi_j)), tuple(sorted((i, j)))))
    for L, R in layers:
        covered = sorted(
            (max(lo, L), min(hi, R))
            for lo, hi in (p.interval for p in spec.pieces)
            if min(hi, R) - max(lo, L) > eps
        )
        cursor = L
        for lo, hi in covered:
            if lo > cursor + eps:
                out.append(Diagnostic("gap", (cursor, lo)))
            cursor = max(cursor, hi)
        if cursor < R - eps:
            out.append(Diagnostic("gap", (cursor, R)))
    return out


def _as_integer(value: float, what: str) -> int:
    n = int(round(value))
    if n < 1 or abs(value - n) > _REL_TOL * max(1.0, abs(value)):
        raise MeshError(f"{what} = {value:.3g} not integer")
    return n


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform grid on the closure of Omega-hat.

    Node ``j`` (0-based) sits at ``a + (j - r) h``; nodes ``r`` and ``r + M``
    are the endpoints of Omega.  Element ``e`` spans nodes ``e`` and ``e+1``.
    """

    spec: DomainSpec
    h: float
    M: int
    r: int
    x: np.ndarray
    node_kind: np.ndarray
    node_piece: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.M + 2 * self.r + 1

    @property
    def n_elements(self) -> int:
        return self.M + 2 * self.r

    @property
    def omega_nodes(self) -> slice:
        return slice(self.r, self.r + self.M + 1)

    @property
    def element_in_omega(self) -> np.ndarray:
        e = np.arange(self.n_elements)
        return (e >= self.r) & (e < self.r + self.M)

    @property
    def element_left(self) -> np.ndarray:
        return self.x[:-1]

    def node_index(self, x: float) -> int:
        """Index of the node at ``x``; raises if ``x`` is not a node."""
        t = (x - self.spec.omega[0]) / self.h + self.r
        j = int(round(t))
        if abs(t - j) > 1e-9 * max(1.0, abs(t)) or not 0 <= j < self.n_nodes:
            raise MeshError(f"point {x:.12g} is not aligned with the mesh (h = {self.h:g})")
        return j

    def nodes_of(self, kind: NodeKind) -> np.ndarray:
        return np.flatnonzero(self.node_kind == kind)

    def interpolate(self, func) -> np.ndarray:
        return np.asarray(func(self.x), dtype=float) * np.ones(self.n_nodes)

    def evaluate(self, values: np.ndarray, points) -> np.ndarray:
        """Evaluate the piecewise-linear function with nodal ``values``."""
        return np.interp(points, self.x, values)


def build_mesh(spec: DomainSpec, h: float) -> Mesh:
    """Uniform mesh of width ``h`` with integer bandwidth ratio r = delta/h.

    Layer nodes are assigned to the piece whose half-open interval
    ``[lo, hi)`` contains them; the outermost node ``b + delta`` goes to the
    piece ending there.  The endpoints of Omega carry Omega unknowns.
    """
    a, b = spec.omega
    r = _as_integer(spec.delta / h, "r")
    M = _as_integer((b - a) / h, "|Omega|/h")
    h = (b - a) / M
    n = M + 2 * r + 1
    idx = np.arange(-r, M + r + 1)
    x = a + idx * h
    x[0], x[r], x[r + M], x[-1] = a - spec.delta, a, b, b + spec.delta

    kind = np.full(n, NodeKind.INTERIOR, dtype=np.int8)
    piece = np.full(n, -1, dtype=np.int64)
    stub = Mesh(spec, h, M, r, x, kind, piece)
    layer = np.ones(n, dtype=bool)
    layer[r:r + M + 1] = False
    # without pieces the whole layer is a homogeneous Neumann region
    kind[layer] = NodeKind.NEUMANN
    for i, p in enumerate(spec.pieces):
        lo, hi = (stub.node_index(v) for v in p.interval)
        members = np.zeros(n, dtype=bool)
        members[lo:hi] = True
        if hi == n - 1:
            members[hi] = True
        members &= layer
        clash = members & (piece >= 0)
        if np.any(clash):
            raise MeshError(f"piece {i} overlaps piece {piece[clash][0]} at node x = {x[clash][0]:g}")
        kind[members] = _NODE_KIND[p.kind]
        piece[members] = i
    unassigned = layer & (piece < 0)
    if spec.pieces and np.any(unassigned):
        raise MeshError(f"layer node x = {x[unassigned][0]:g} is not covered by any piece")
    return Mesh(spec, h, M, r, x, kind, piece)
