"""Piecewise-linear Galerkin assembly of the nonlocal bilinear forms.

On a uniform mesh the element-pair integrals

    I_k[a, b] = int_{e} int_{e+k} (phi_a(y) - phi_a(x)) (phi_b(y) - phi_b(x))
                gamma(|x - y|) dy dx

depend only on the element offset ``k``.  With ``x = x_e + h xi`` and
``y = x_e + h (k + eta)`` the substitution ``z = eta - xi`` turns each of
them into a one-dimensional integral

    I_k = C h^(1-2s) int_{-1}^{1} P(z) |k + z|^(-1-2s) dz,

where ``P`` is a polynomial obtained by integrating out ``xi`` exactly (in
rational arithmetic).  For ``k <= 1`` the singular integrals are done with
closed-form power antiderivatives; for ``k >= 2`` the integrand is smooth
and a Gauss-Legendre rule is used.  Because ``r = delta/h`` is an integer,
the horizon cut ``|x - y| = delta`` coincides with ``z = 0`` for ``k = r``,
so no polygon splitting is ever needed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

from .geometry import ConstraintKind, Mesh, NodeKind
from .kernels import Kernel, power_integral
from .quadrature import gauss_legendre01, panel_rule

__all__ = [
    "BandedSymMatrix",
    "FormKind",
    "LinearSystem",
    "element_pair_integral",
    "local_pair_matrices",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_robin",
    "assemble_load",
    "apply_dirichlet",
    "compatibility_residual",
    "gauss_points",
]


class FormKind(str, enum.Enum):
    FULL_CONSTRAINED = "full_constrained"
    REGIONAL_HAT = "regional_hat"
    REGIONAL_OMEGA = "regional_omega"


# ---------------------------------------------------------------------------
# banded storage


@dataclass
class BandedSymMatrix:
    """Symmetric matrix in LAPACK lower band storage.

    ``band[d, j] = A[j + d, j]`` for ``0 <= d <= bandwidth``; entries past
    the end of a diagonal are kept at zero.
    """

    band: np.ndarray

    @classmethod
    def zeros(cls, n: int, bandwidth: int) -> "BandedSymMatrix":
        bandwidth = max(0, min(bandwidth, n - 1))
        return cls(np.zeros((bandwidth + 1, n)))

    @classmethod
    def from_dense(cls, A, bandwidth: int | None = None) -> "BandedSymMatrix":
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        if bandwidth is None:
            nz = np.nonzero(np.tril(A))
            bandwidth = int(np.max(nz[0] - nz[1], initial=0))
        out = cls.zeros(n, bandwidth)
        for d in range(out.bandwidth + 1):
            out.band[d, : n - d] = np.diagonal(A, -d)
        return out

    @property
    def n(self) -> int:
        return self.band.shape[1]

    @property
    def bandwidth(self) -> int:
        return self.band.shape[0] - 1

    def diagonal(self) -> np.ndarray:
        return self.band[0].copy()

    def to_dense(self) -> np.ndarray:
        n = self.n
        A = np.zeros((n, n))
        j = np.arange(n)
        for d in range(self.bandwidth + 1):
            A[j[: n - d] + d, j[: n - d]] = self.band[d, : n - d]
            A[j[: n - d], j[: n - d] + d] = self.band[d, : n - d]
        return A

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = self.n
        y = self.band[0] * x
        for d in range(1, self.bandwidth + 1):
            b = self.band[d, : n - d]
            y[d:] += b * x[: n - d]
            y[: n - d] += b * x[d:]
        return y

    def norm_inf(self) -> float:
        return float(np.max(self.matvec_abs(np.ones(self.n)), initial=0.0))

    def matvec_abs(self, x) -> np.ndarray:
        return BandedSymMatrix(np.abs(self.band)).matvec(x)

    def padded(self, bandwidth: int) -> "BandedSymMatrix":
        bandwidth = min(bandwidth, self.n - 1)
        if bandwidth <= self.bandwidth:
            return BandedSymMatrix(self.band.copy())
        out = BandedSymMatrix.zeros(self.n, bandwidth)
        out.band[: self.bandwidth + 1] = self.band
        return out

    def __add__(self, other: "BandedSymMatrix") -> "BandedSymMatrix":
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        out = self.padded(max(self.bandwidth, other.bandwidth))
        out.band[: other.bandwidth + 1] += other.band
        return out

    def __mul__(self, c: float) -> "BandedSymMatrix":
        return BandedSymMatrix(self.band * float(c))

    __rmul__ = __mul__

    def submatrix(self, idx) -> "BandedSymMatrix":
        """Principal submatrix on the sorted index set ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        m = idx.size
        out = BandedSymMatrix.zeros(m, self.bandwidth)
        for dd in range(out.bandwidth + 1):
            rows, cols = idx[dd:], idx[: m - dd]
            d = rows - cols
            ok = d <= self.bandwidth
            out.band[dd, : m - dd][ok] = self.band[d[ok], cols[ok]]
        return out

    def rows_times(self, rows, x) -> np.ndarray:
        """``(A @ x)[rows]``."""
        return self.matvec(x)[rows]


# ---------------------------------------------------------------------------
# exact polynomial reduction of the element-pair integrals

# local difference vectors c_a = phi_a(y) - phi_a(x) as linear forms
# (const, coef of xi, coef of z) with eta = xi + z
# node offsets 0,1 (k = 0), 0,1,2 (k = 1), 0,1,k,k+1 (k >= 2)
_FORMS = {
    0: ((0, 0, -1), (0, 0, 1)),
    1: ((-1, 1, 0), (1, -2, -1), (0, 1, 1)),
    2: ((-1, 1, 0), (0, -1, 0), (1, -1, -1), (0, 1, 1)),
}


def _pmul(p, q):
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                out[i + j] += a * b
    return out


def _padd(p, q):
    n = max(len(p), len(q))
    return [(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)]


def _ppow(p, n):
    out = [Fraction(1)]
    for _ in range(n):
        out = _pmul(out, p)
    return out


def _side_polynomial(f, g, side):
    """P(z) = integral over xi of f*g for one sign of z (exact)."""
    # f*g as a bivariate polynomial {(i, j): coeff} in xi^i z^j
    prod = {}
    terms_f = {(0, 0): Fraction(f[0]), (1, 0): Fraction(f[1]), (0, 1): Fraction(f[2])}
    terms_g = {(0, 0): Fraction(g[0]), (1, 0): Fraction(g[1]), (0, 1): Fraction(g[2])}
    for (i1, j1), a in terms_f.items():
        for (i2, j2), b in terms_g.items():
            if a and b:
                key = (i1 + i2, j1 + j2)
                prod[key] = prod.get(key, Fraction(0)) + a * b
    # xi range: z >= 0 -> [0, 1 - z]; z <= 0 -> [-z, 1]
    if side > 0:
        lo, hi = [Fraction(0)], [Fraction(1), Fraction(-1)]
    else:
        lo, hi = [Fraction(0), Fraction(-1)], [Fraction(1)]
    out = [Fraction(0)]
    for (i, j), c in prod.items():
        anti = _padd(_ppow(hi, i + 1), [-t for t in _ppow(lo, i + 1)])
        term = _pmul([c / (i + 1)], _pmul(anti, [Fraction(0)] * j + [Fraction(1)]))
        out = _padd(out, term)
    return out


@lru_cache(maxsize=None)
def _side_polynomials(case: int):
    """Exact P_plus, P_minus for each local pair (p, q); case 0, 1 or 2 (k >= 2)."""
    forms = _FORMS[case]
    m = len(forms)
    plus = [[_side_polynomial(forms[p], forms[q], +1) for q in range(m)] for p in range(m)]
    minus = [[_side_polynomial(forms[p], forms[q], -1) for q in range(m)] for p in range(m)]
    return plus, minus


def _shift(poly, c):
    """Coefficients of poly(t + c)."""
    out = [Fraction(0)]
    base = [Fraction(c), Fraction(1)]
    for n, a in enumerate(poly):
        if a:
            out = _padd(out, _pmul([a], _ppow(base, n)))
    return out


def _power_sum(poly, p, a, b, sign=1):
    # int_a^b sum_n poly_n (sign*t)^n t^p dt, exact zeros skipped
    total = 0.0
    for n, c in enumerate(poly):
        if c:
            total += float(c) * (sign**n) * power_integral(n + p, a, b)
    return total


@lru_cache(maxsize=64)
def local_pair_matrices(s: float, r: int, n_gauss: int = 12):
    """Unscaled local matrices for element offsets ``k = 0 .. r``.

    Returns ``(B0, B1, Bk)`` with shapes (2, 2), (3, 3) and (r+1, 4, 4);
    ``Bk[k]`` is meaningful for ``k >= 2``.  Multiply by ``C h^(1-2s)`` to
    obtain the element-pair integrals.
    """
    p = -1.0 - 2.0 * s
    plus0, minus0 = _side_polynomials(0)
    B0 = np.array([[_power_sum(plus0[a][b], p, 0.0, 1.0) + _power_sum(minus0[a][b], p, 0.0, 1.0, -1)
                    for b in range(2)] for a in range(2)])
    plus1, minus1 = _side_polynomials(1)
    B1 = np.zeros((3, 3))
    for a in range(3):
        for b in range(3):
            # tau = 1 + z: minus side tau in [0, 1], plus side tau in [1, 2]
            B1[a, b] = _power_sum(_shift(minus1[a][b], -1), p, 0.0, 1.0)
            if r >= 2:
                B1[a, b] += _power_sum(_shift(plus1[a][b], -1), p, 1.0, 2.0)
    Bk = np.zeros((r + 1, 4, 4))
    if r >= 2:
        plus, minus = _side_polynomials(2)
        t, w = gauss_legendre01(n_gauss)
        k = np.arange(2, r + 1, dtype=float)[:, None]
        Pp = np.array([[np.polynomial.polynomial.polyval(t, [float(c) for c in plus[a][b]])
                        for b in range(4)] for a in range(4)])
        Pm = np.array([[np.polynomial.polynomial.polyval(-t, [float(c) for c in minus[a][b]])
                        for b in range(4)] for a in range(4)])
        wp = w * (k + t) ** p
        wp[k[:, 0] >= r] = 0.0  # plus side lies beyond the horizon when k = r
        wm = w * (k - t) ** p
        Bk[2:] = np.einsum("kg,abg->kab", wp, Pp) + np.einsum("kg,abg->kab", wm, Pm)
    return B0, B1, Bk


def _pair_scale(kernel: Kernel, h: float) -> float:
    return kernel.constant * h ** (1.0 - 2.0 * kernel.s)


def _local(kernel: Kernel, mesh: Mesh, k: int):
    """(offsets, matrix) for element offset k >= 0; matrix is None if zero."""
    if k > mesh.r:
        return None, None
    B0, B1, Bk = local_pair_matrices(float(kernel.s), int(mesh.r))
    scale = _pair_scale(kernel, mesh.h)
    if k == 0:
        return (0, 1), scale * B0
    if k == 1:
        return (0, 1, 2), scale * B1
    return (0, 1, k, k + 1), scale * Bk[k]


def element_pair_integral(kernel: Kernel, elem_i: int, elem_j: int, basis_a: int, basis_b: int,
                          mesh: Mesh) -> float:
    """Integral over ``x`` in element i and ``y`` in element j of
    ``(phi_a(y) - phi_a(x)) (phi_b(y) - phi_b(x)) gamma(|x - y|)``.
    """
    _check_kernel(kernel, mesh)
    e, f = sorted((int(elem_i), int(elem_j)))
    offsets, B = _local(kernel, mesh, f - e)
    if B is None:
        return 0.0
    nodes = [e + o for o in offsets]
    if basis_a not in nodes or basis_b not in nodes:
        return 0.0
    return float(B[nodes.index(basis_a), nodes.index(basis_b)])


def _check_kernel(kernel: Kernel, mesh: Mesh):
    if kernel.d != 1:
        raise ValueError("assembly is implemented for d = 1")
    if abs(kernel.delta - mesh.spec.delta) > 1e-12 * max(1.0, mesh.spec.delta):
        raise ValueError(f"kernel horizon {kernel.delta} differs from the mesh layer width {mesh.spec.delta}")


def _zones(mesh: Mesh) -> np.ndarray:
    e = np.arange(mesh.n_elements)
    return np.where(e < mesh.r, 0, np.where(e < mesh.r + mesh.M, 1, 2))


def _pair_mask(form: FormKind, zones: np.ndarray, k: int) -> np.ndarray:
    za, zb = zones[: zones.size - k], zones[k:]
    if form is FormKind.REGIONAL_HAT:
        return np.ones(za.size)
    if form is FormKind.REGIONAL_OMEGA:
        return ((za == 1) & (zb == 1)).astype(float)
    # the energy region excludes layer x layer pairs
    return ((za == 1) | (zb == 1)).astype(float)


def assemble_stiffness(kernel: Kernel, mesh: Mesh, form: FormKind | str = FormKind.FULL_CONSTRAINED
                       ) -> BandedSymMatrix:
    """Stiffness matrix of the nonlocal energy form on the chosen region."""
    _check_kernel(kernel, mesh)
    form = FormKind(form)
    n, r = mesh.n_nodes, mesh.r
    A = BandedSymMatrix.zeros(n, r + 1)
    zones = _zones(mesh)
    n_el = mesh.n_elements
    for k in range(0, min(r, n_el - 1) + 1):
        offsets, B = _local(kernel, mesh, k)
        w = _pair_mask(form, zones, k) * (0.5 if k == 0 else 1.0)
        if not np.any(w):
            continue
        m = n_el - k
        for a, oa in enumerate(offsets):
            for b, ob in enumerate(offsets):
                if oa < ob or B[a, b] == 0.0:
                    continue
                A.band[oa - ob, ob:ob + m] += w * B[a, b]
    return A


# ---------------------------------------------------------------------------
# mass, Robin and load


def assemble_mass(mesh: Mesh, region: str = "omega") -> BandedSymMatrix:
    """P1 mass matrix restricted to Omega (``"omega"``) or Omega-hat (``"omega_hat"``)."""
    region = str(region).lower().replace("-", "_")
    if region in ("omega",):
        on = mesh.element_in_omega.astype(float)
    elif region in ("omega_hat", "omegahat"):
        on = np.ones(mesh.n_elements)
    else:
        raise ValueError(f"unknown mass region {region!r}")
    M = BandedSymMatrix.zeros(mesh.n_nodes, 1)
    c = mesh.h / 6.0 * on
    M.band[0, :-1] += 2.0 * c
    M.band[0, 1:] += 2.0 * c
    M.band[1, :-1] += c
    return M


def gauss_points(mesh: Mesh, elements, order: int = 5):
    """Gauss nodes ``(n_el, order)``, weights and local coordinates on elements."""
    t, w = gauss_legendre01(order)
    elements = np.asarray(elements, dtype=np.int64)
    x0 = mesh.x[elements]
    return x0[:, None] + mesh.h * t[None, :], mesh.h * w, t


def _robin_regions(mesh: Mesh):
    # element ranges carrying the Robin coupling: the Robin pieces if the
    # partition has any, otherwise the two layer components
    robin = mesh.spec.pieces_of(ConstraintKind.ROBIN)
    if robin:
        return [_piece_elements(mesh, p) for p in robin]
    r, M = mesh.r, mesh.M
    return [np.arange(0, r), np.arange(r + M, r + M + r)]


def _element_moments(mesh: Mesh, elements):
    # m_a = integral of phi_a over the given elements
    m = np.zeros(mesh.n_nodes)
    np.add.at(m, elements, 0.5 * mesh.h)
    np.add.at(m, elements + 1, 0.5 * mesh.h)
    return m


def assemble_robin(mesh: Mesh, sigma: Callable | None = None, order: int = 5) -> BandedSymMatrix:
    """Matrix of ``int int phi_a(x) sigma(x, y) phi_b(y) dy dx`` over each Robin region squared.

    The Robin regions are the Robin pieces of the partition, or the two
    layer components when there are none.  ``sigma=None`` selects the
    constant ``delta**-2``; a callable ``sigma(x, y)`` is integrated with a
    tensor Gauss rule.  Coupling between different regions is not
    represented.
    """
    n, r = mesh.n_nodes, mesh.r
    R = BandedSymMatrix.zeros(n, r)
    for elems in _robin_regions(mesh):
        if elems.size == 0:
            continue
        lo, hi = int(elems[0]), int(elems[-1]) + 1
        size = hi - lo + 1
        if sigma is None:
            mv = _element_moments(mesh, elems)[lo:hi + 1]
            dense = np.outer(mv, mv) / mesh.spec.delta**2
        else:
            xg, wg, t = gauss_points(mesh, elems, order)
            X = xg.ravel()
            W = np.tile(wg, elems.size)
            S = np.asarray(sigma(X[:, None], X[None, :]), dtype=float) * np.ones((X.size, X.size))
            if not np.allclose(S, S.T, rtol=1e-12, atol=0.0):
                raise ValueError("sigma must be symmetric")
            cols = np.arange(X.size)
            e_loc = np.repeat(elems - lo, t.size)
            tt = np.tile(t, elems.size)
            Phi = np.zeros((size, X.size))
            Phi[e_loc, cols] += 1.0 - tt
            Phi[e_loc + 1, cols] += tt
            PW = Phi * W
            dense = PW @ S @ PW.T
        for d in range(min(r, size - 1) + 1):
            R.band[d, lo:lo + size - d] += np.diagonal(dense, -d)
    return R


def _element_load(mesh: Mesh, func, elements, order, graded=()):
    """Contributions of ``int func phi_a`` over the given elements.

    Elements listed in ``graded`` (pairs ``(element, endpoint)``) use a rule
    graded toward that endpoint, for data singular at the boundary of Omega.
    """
    b = np.zeros(mesh.n_nodes)
    elements = np.asarray(elements, dtype=np.int64)
    graded = dict(graded)
    plain = np.array([e for e in elements if e not in graded], dtype=np.int64)
    if plain.size:
        xg, wg, t = gauss_points(mesh, plain, order)
        fv = np.asarray(func(xg), dtype=float) * np.ones_like(xg)
        np.add.at(b, plain, (fv * (1.0 - t)) @ wg)
        np.add.at(b, plain + 1, (fv * t) @ wg)
    for e, end in graded.items():
        # stop the grading where x_end +- z is still resolvable
        z, w = panel_rule(0.0, mesh.h, 0.0, n_geo=30, n_gl=order)
        z, w = z[0], w[0]
        left = mesh.x[e]
        if end == "right":
            xs = mesh.x[e + 1] - z
            t = 1.0 - z / mesh.h
        else:
            xs = left + z
            t = z / mesh.h
        fv = np.asarray(func(xs), dtype=float) * np.ones_like(xs)
        b[e] += float(np.sum(w * fv * (1.0 - t)))
        b[e + 1] += float(np.sum(w * fv * t))
    return b


def _piece_elements(mesh: Mesh, piece):
    lo, hi = (mesh.node_index(v) for v in piece.interval)
    return np.arange(lo, hi)


def _boundary_grading(mesh: Mesh, elements):
    # layer elements touching the boundary of Omega get a graded rule
    out = []
    for e in elements:
        if e == mesh.r - 1:
            out.append((e, "right"))
        elif e == mesh.r + mesh.M:
            out.append((e, "left"))
    return out


_FLUX_KINDS = (ConstraintKind.NEUMANN, ConstraintKind.NEUMANN_HAT, ConstraintKind.ROBIN)


def assemble_load(mesh: Mesh, f: Callable | None, pieces=None, order: int = 5) -> np.ndarray:
    """Load vector ``int_Omega f phi_a + sum over flux-type pieces of int g phi_a``."""
    pieces = mesh.spec.pieces if pieces is None else pieces
    b = np.zeros(mesh.n_nodes)
    if f is not None:
        b += _element_load(mesh, f, np.flatnonzero(mesh.element_in_omega), order)
    for piece in pieces:
        if piece.kind in _FLUX_KINDS:
            elems = _piece_elements(mesh, piece)
            b += _element_load(mesh, piece.data, elems, order, _boundary_grading(mesh, elems))
    return b


def compatibility_residual(mesh: Mesh, f: Callable | None, pieces=None, order: int = 5) -> float:
    """``int_Omega f + int g`` over the Neumann-type pieces, by element quadrature."""
    pieces = mesh.spec.pieces if pieces is None else pieces
    total = 0.0
    if f is not None:
        xg, wg, _ = gauss_points(mesh, np.flatnonzero(mesh.element_in_omega), order)
        total += float(np.sum((np.asarray(f(xg), dtype=float) * np.ones_like(xg)) @ wg))
    for piece in pieces:
        if piece.kind in (ConstraintKind.NEUMANN, ConstraintKind.NEUMANN_HAT):
            elems = _piece_elements(mesh, piece)
            xg, wg, _ = gauss_points(mesh, elems, order)
            total += float(np.sum((np.asarray(piece.data(xg), dtype=float) * np.ones_like(xg)) @ wg))
    return total


# ---------------------------------------------------------------------------
# constrained systems


@dataclass
class LinearSystem:
    """Full-size matrix and load with Dirichlet values and an optional mean constraint.

    ``dirichlet`` maps node index to prescribed value.  ``reduced()`` gives
    the system on the free nodes with Dirichlet values eliminated.
    """

    matrix: BandedSymMatrix
    load: np.ndarray
    dirichlet: dict = field(default_factory=dict)
    mean_constraint: tuple | None = None
    mesh: Mesh | None = None

    @property
    def n(self) -> int:
        return self.matrix.n

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        if self.dirichlet:
            mask[np.fromiter(self.dirichlet.keys(), dtype=np.int64)] = False
        return np.flatnonzero(mask)

    def dirichlet_vector(self) -> np.ndarray:
        g = np.zeros(self.n)
        for j, val in self.dirichlet.items():
            g[j] = val
        return g

    def reduced(self):
        """``(A_ff, b_f)`` after eliminating Dirichlet values."""
        free = self.free
        g = self.dirichlet_vector()
        b = self.load[free] - self.matrix.matvec(g)[free] if self.dirichlet else self.load[free].copy()
        return self.matrix.submatrix(free), b


def apply_dirichlet(system: LinearSystem, mesh: Mesh, pieces=None) -> LinearSystem:
    """Attach nodal Dirichlet values from the Dirichlet pieces of the partition."""
    pieces = mesh.spec.pieces if pieces is None else pieces
    values = dict(system.dirichlet)
    for i, piece in enumerate(pieces):
        if piece.kind is not ConstraintKind.DIRICHLET:
            continue
        nodes = np.flatnonzero((mesh.node_kind == NodeKind.DIRICHLET) & (mesh.node_piece == i))
        vals = np.asarray(piece.data(mesh.x[nodes]), dtype=float) * np.ones(nodes.size)
        values.update(zip(nodes.tolist(), vals.tolist()))
    return LinearSystem(system.matrix, system.load, values, system.mean_constraint, mesh)
