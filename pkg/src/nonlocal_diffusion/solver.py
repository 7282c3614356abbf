"""Direct solvers for the assembled systems."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .assembly import BandedSymMatrix, LinearSystem, gauss_points
from .geometry import Mesh

__all__ = [
    "Solution",
    "IndefiniteMatrixError",
    "NewtonError",
    "factorize",
    "solve_linear",
    "solve_pure_neumann",
    "solve_nonlinear",
    "mean_weights",
    "discrete_energy",
    "nonlinear_residual",
]


class IndefiniteMatrixError(ArithmeticError):
    """Cholesky met a non-positive pivot."""


class NewtonError(ArithmeticError):
    """Newton iteration or its line search failed."""


@dataclass
class Solution:
    values: np.ndarray
    residual_norm: float
    lambda_: float | None = None
    newton_iters: int | None = None
    energies: list = field(default_factory=list)


class _Factor:
    """Cholesky factor of a symmetric positive definite banded matrix."""

    def __init__(self, A: BandedSymMatrix):
        self.n = A.n
        # dense path once the band covers half the matrix
        self.dense = A.bandwidth >= A.n / 2
        try:
            if self.dense:
                self.cho = sla.cho_factor(A.to_dense(), lower=True, check_finite=False)
            else:
                self.cho = sla.cholesky_banded(A.band, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise IndefiniteMatrixError(
                "matrix is not positive definite on the unknowns "
                "(a pure Neumann system needs solve_pure_neumann)"
            ) from exc

    def solve(self, b):
        if self.n == 0:
            return np.zeros(0)
        if self.dense:
            return sla.cho_solve(self.cho, b, check_finite=False)
        return sla.cho_solve_banded((self.cho, True), b, check_finite=False)


def factorize(A: BandedSymMatrix) -> _Factor:
    return _Factor(A)


def solve_linear(system: LinearSystem) -> Solution:
    """Cholesky solve on the free nodes; Dirichlet nodes carry their data."""
    A, b = system.reduced()
    free = system.free
    uf = factorize(A).solve(b)
    u = system.dirichlet_vector()
    u[free] = uf
    res = float(np.max(np.abs(A.matvec(uf) - b), initial=0.0))
    return Solution(u, res)


def mean_weights(mesh: Mesh, region=None) -> np.ndarray:
    """``m_a`` = integral of ``phi_a`` over the region (default Omega-hat)."""
    if region is None:
        region = "omega_hat"
    if isinstance(region, str):
        try:
            lo, hi = {"omega": mesh.spec.omega, "omega_hat": mesh.spec.omega_hat}[region]
        except KeyError:
            raise ValueError(f"unknown mean-constraint region {region!r}") from None
    else:
        lo, hi = region
    e_lo, e_hi = mesh.node_index(lo), mesh.node_index(hi)
    m = np.zeros(mesh.n_nodes)
    m[e_lo:e_hi] += 0.5 * mesh.h
    m[e_lo + 1:e_hi + 1] += 0.5 * mesh.h
    return m


def solve_pure_neumann(system: LinearSystem, K=None) -> Solution:
    """Mean-constrained solve of a singular system with constants in its kernel.

    Solves ``A u + lambda m = b`` with ``m . u = 0``, ``m_a`` the integral of
    ``phi_a`` over ``K``.  Because ``A 1 = 0`` the multiplier is
    ``lambda = sum(b) / |K|``; ``u`` is obtained on the complement of one
    grounded node and projected onto the constraint.
    """
    if system.dirichlet:
        raise ValueError("pure Neumann solve requested for a system with Dirichlet nodes")
    if K is None and system.mean_constraint is not None:
        K = system.mean_constraint
    if system.mesh is None:
        raise ValueError("the mean constraint needs the mesh")
    m = mean_weights(system.mesh, K)
    measure = m.sum()
    if not measure > 0:
        raise ValueError("mean-constraint region has zero measure")
    A, b = system.matrix, system.load
    lam = float(b.sum() / measure)
    rhs = b - lam * m
    keep = np.arange(1, A.n)
    ut = np.zeros(A.n)
    ut[keep] = factorize(A.submatrix(keep)).solve(rhs[keep])
    u = ut - (m @ ut) / measure
    res = float(np.max(np.abs(A.matvec(u) + lam * m - b)))
    return Solution(u, res, lambda_=lam)


# ---------------------------------------------------------------------------
# nonlinear reaction term alpha |u|^(m-2) u on Omega


def _omega_gauss(mesh: Mesh, order: int = 5):
    elems = np.flatnonzero(mesh.element_in_omega)
    xg, wg, t = gauss_points(mesh, elems, order)
    return elems, wg, t


def _uh_at_gauss(u, elems, t):
    return u[elems, None] * (1.0 - t) + u[elems + 1, None] * t


def discrete_energy(system: LinearSystem, u, alpha: float, m: float, order: int = 5) -> float:
    """``u.A.u/2 - b.u + (alpha/m) int_Omega |u_h|^m``."""
    val = 0.5 * u @ system.matrix.matvec(u) - system.load @ u
    if alpha:
        elems, wg, t = _omega_gauss(system.mesh, order)
        uh = _uh_at_gauss(u, elems, t)
        val += alpha / m * float(np.sum(np.abs(uh) ** m @ wg))
    return float(val)


def nonlinear_residual(system: LinearSystem, u, alpha: float, m: float, order: int = 5) -> np.ndarray:
    """Gradient of :func:`discrete_energy` on all nodes."""
    r = system.matrix.matvec(u) - system.load
    if alpha:
        elems, wg, t = _omega_gauss(system.mesh, order)
        uh = _uh_at_gauss(u, elems, t)
        q = alpha * np.abs(uh) ** (m - 2.0) * uh
        np.add.at(r, elems, (q * (1.0 - t)) @ wg)
        np.add.at(r, elems + 1, (q * t) @ wg)
    return r


def _reaction_jacobian(system: LinearSystem, u, alpha, m, order=5) -> BandedSymMatrix:
    J = BandedSymMatrix.zeros(system.n, 1)
    if not alpha:
        return J
    elems, wg, t = _omega_gauss(system.mesh, order)
    uh = _uh_at_gauss(u, elems, t)
    wq = alpha * (m - 1.0) * np.abs(uh) ** (m - 2.0)
    np.add.at(J.band[0], elems, (wq * (1.0 - t) ** 2) @ wg)
    np.add.at(J.band[0], elems + 1, (wq * t**2) @ wg)
    np.add.at(J.band[1], elems, (wq * t * (1.0 - t)) @ wg)
    return J


def solve_nonlinear(system: LinearSystem, alpha: float, m: float, tol: float = 1e-10,
                    max_iters: int = 50, order: int = 5, u0=None) -> Solution:
    """Damped Newton for ``A u + alpha |u|^(m-2) u = b`` on the free nodes.

    Steps are backtracked until the discrete energy satisfies an Armijo
    decrease condition.  With a mean constraint on the system the Newton
    systems are solved in bordered form.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if not 2.0 < m <= 4.0:
        raise ValueError(f"exponent m must lie in (2, 4], got {m}")
    if system.mesh is None:
        raise ValueError("the nonlinear term needs the mesh")
    free = system.free
    u = system.dirichlet_vector() if u0 is None else np.array(u0, dtype=float)
    if u0 is not None:
        for j, val in system.dirichlet.items():
            u[j] = val
    mw = None
    if system.mean_constraint is not None:
        mw = mean_weights(system.mesh, system.mean_constraint)[free]
    lam = 0.0
    energies = [discrete_energy(system, u, alpha, m, order)]

    def full_residual(u, lam):
        r = nonlinear_residual(system, u, alpha, m, order)[free]
        if mw is not None:
            r = r + lam * mw
        return r

    for it in range(max_iters + 1):
        r = full_residual(u, lam)
        cres = abs(mw @ u[free]) if mw is not None else 0.0
        if max(np.max(np.abs(r), initial=0.0), cres) <= tol:
            return Solution(u, float(np.max(np.abs(r), initial=0.0)),
                            lambda_=lam if mw is not None else None, newton_iters=it, energies=energies)
        if it == max_iters:
            break
        J = (system.matrix + _reaction_jacobian(system, u, alpha, m, order)).submatrix(free)
        if mw is None:
            du = -factorize(J).solve(r)
            dlam = 0.0
        else:
            n = free.size
            K = np.zeros((n + 1, n + 1))
            K[:n, :n] = J.to_dense()
            K[:n, n] = K[n, :n] = mw
            sol = np.linalg.solve(K, -np.concatenate([r, [mw @ u[free]]]))
            du, dlam = sol[:n], sol[n]
        E0 = energies[-1]
        slope = float((r - (lam * mw if mw is not None else 0.0)) @ du)
        step = 1.0
        for _ in range(60):
            trial = u.copy()
            trial[free] += step * du
            E1 = discrete_energy(system, trial, alpha, m, order)
            if mw is not None or E1 <= E0 + 1e-4 * step * slope or abs(E1 - E0) <= 1e-15 * abs(E0):
                break
            step *= 0.5
        else:
            raise NewtonError("line search failed to decrease the energy")
        u = trial
        lam += step * dlam
        energies.append(E1)
    raise NewtonError(f"Newton did not converge in {max_iters} iterations "
                      f"(residual {np.max(np.abs(full_residual(u, lam))):.3g})")
