"""Fast invariant battery behind ``nonlocal verify``.

Each check returns a :class:`CheckResult`; :func:`run_checks` runs them all.
The assembly check uses :func:`dense_stiffness_oracle`, an independent
entry-by-entry 2D adaptive quadrature of the element-pair integrals.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from functools import lru_cache
from unittest import mock

import numpy as np
from scipy import integrate

from . import kernels
from .assembly import (
    FormKind,
    LinearSystem,
    apply_dirichlet,
    assemble_load,
    assemble_stiffness,
)
from .geometry import ConstraintPiece, DomainSpec, Mesh, build_mesh
from .kernels import Kernel, delta_crossover, fractional_constant
from .operators import flux, gaussian, green_identity_residuals, polynomial
from .solver import discrete_energy, nonlinear_residual, solve_linear, solve_nonlinear

__all__ = ["CheckResult", "dense_stiffness_oracle", "run_checks", "CHECKS"]


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tol)


# ---------------------------------------------------------------------------
# dense assembly oracle


@lru_cache(maxsize=None)
def _oracle_local(s: float, k: int, r: int):
    """Reference-element pair matrix for element offset k (unit h and C)."""
    p = -1.0 - 2.0 * s
    nodes = sorted({0, 1, k, k + 1})

    def c(a, xi, eta):
        fx = (1.0 - xi) * (a == 0) + xi * (a == 1)
        fy = (1.0 - eta) * (a == k) + eta * (a == k + 1)
        return fy - fx

    opts = dict(epsabs=1e-15, epsrel=1e-13, limit=200)
    B = np.zeros((len(nodes), len(nodes)))
    for i, a in enumerate(nodes):
        for j, b in enumerate(nodes[i:], start=i):
            def inner(xi, a=a, b=b):
                g = lambda eta: c(a, xi, eta) * c(b, xi, eta) * abs(k + eta - xi) ** p  # noqa: E731
                if k == 0:
                    return integrate.quad(g, 0, xi, **opts)[0] + integrate.quad(g, xi, 1, **opts)[0]
                # at k == r only pairs closer than the horizon interact
                return integrate.quad(g, 0, xi if k == r else 1.0, **opts)[0]

            B[i, j] = B[j, i] = integrate.quad(inner, 0, 1, **opts)[0]
    return nodes, B


def dense_stiffness_oracle(kernel: Kernel, mesh: Mesh, form="full_constrained") -> np.ndarray:
    """Dense stiffness matrix by element-pair scatter of 2D adaptive quadratures."""
    form = FormKind(form)
    n, r, M = mesh.n_nodes, mesh.r, mesh.M
    A = np.zeros((n, n))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        local = {k: _oracle_local(float(kernel.s), k, r) for k in range(r + 1)}
    scale = kernel.constant * mesh.h ** (1.0 - 2.0 * kernel.s)

    def zone(e):
        return 0 if e < r else (1 if e < r + M else 2)

    for e in range(mesh.n_elements):
        for f in range(mesh.n_elements):
            k = abs(e - f)
            if k > r:
                continue
            ze, zf = zone(e), zone(f)
            if form is FormKind.FULL_CONSTRAINED and ze != 1 and zf != 1:
                continue
            if form is FormKind.REGIONAL_OMEGA and not (ze == 1 and zf == 1):
                continue
            nodes, B = local[k]
            lo = min(e, f)
            for i, a in enumerate(nodes):
                for j, b in enumerate(nodes):
                    A[lo + a, lo + b] += 0.5 * scale * B[i, j]
    return A


# ---------------------------------------------------------------------------
# checks


def check_normalization():
    worst = 0.0
    for s in (-1.0, 0.25, 0.5, 0.75):
        for delta in (0.1, 1.0):
            k = Kernel(s, delta)
            m2, _ = integrate.quad(lambda z: z**2 * k(z), 0.0, delta, epsabs=1e-14, epsrel=1e-13)
            worst = max(worst, abs(2.0 * m2 - 2.0) / 2.0)
    return worst


def check_crossover_pi():
    return abs(delta_crossover(0.5) - math.pi)


def check_crossover_continuity():
    worst = 0.0
    for s in (0.1, 0.25, 0.5, 0.75, 0.9):
        ds = delta_crossover(s)
        below = Kernel(s, ds * (1.0 - 1e-15)).constant
        frac = fractional_constant(1, s)
        worst = max(worst, abs(below - frac) / frac)
    return worst


def check_green():
    spec = DomainSpec((0.0, 1.0), 0.1)
    worst = 0.0
    for s in (0.25, 0.75, -1.0):
        k = Kernel(s, 0.1)
        worst = max(worst, *green_identity_residuals(k, polynomial([0, 0, 1]), polynomial([0, 1]), spec))
        worst = max(worst, *green_identity_residuals(k, gaussian(0.5), polynomial([1, 0, 0, 1]), spec,
                                                     regional=True))
    return worst


def check_flux():
    k = Kernel(0.25, 0.1)
    u = gaussian(0.3)
    A, B, C = (-0.1, 0.0), (0.0, 0.4), (0.4, 0.9)
    anti = abs(flux(k, u, A, B) + flux(k, u, B, A))
    add = abs(flux(k, u, [A, C], B) - flux(k, u, A, B) - flux(k, u, C, B))
    return max(anti, add)


def check_assembly():
    worst = 0.0
    for s, r, form in ((0.75, 2, "full_constrained"), (-1.0, 3, "regional_hat"), (0.25, 2, "regional_omega")):
        h = 0.1
        mesh = build_mesh(DomainSpec((0.0, 1.0), r * h), h)
        k = Kernel(s, r * h)
        Ab = assemble_stiffness(k, mesh, form).to_dense()
        Ao = dense_stiffness_oracle(k, mesh, form)
        worst = max(worst, np.abs(Ab - Ao).max() / np.abs(Ao).max())
    return worst


def check_constants_kernel():
    worst = 0.0
    for s in (-1.0, 0.25, 0.75):
        mesh = build_mesh(DomainSpec((0.0, 1.0), 0.1), 0.025)
        for form in FormKind:
            A = assemble_stiffness(Kernel(s, 0.1), mesh, form)
            worst = max(worst, np.abs(A.matvec(np.ones(A.n))).max() / A.norm_inf())
    return worst


def _toy_system():
    spec = DomainSpec((0.0, 1.0), 0.1, (ConstraintPiece((-0.1, 0.0), "dirichlet", lambda x: 0.0 * x + 0.5),
                                        ConstraintPiece((1.0, 1.1), "dirichlet", lambda x: 0.0 * x - 0.2)))
    mesh = build_mesh(spec, 0.05)
    A = assemble_stiffness(Kernel(0.5, 0.1), mesh)
    b = assemble_load(mesh, lambda x: 1.0 + np.sin(3.0 * x))
    return mesh, apply_dirichlet(LinearSystem(A, b, mesh=mesh), mesh)


def check_newton_gradient():
    mesh, system = _toy_system()
    rng = np.random.default_rng(7)
    u = rng.standard_normal(system.n)
    d = rng.standard_normal(system.n)
    worst = 0.0
    for alpha, m in ((1.0, 3.0), (2.0, 4.0), (0.5, 2.5)):
        g = nonlinear_residual(system, u, alpha, m) @ d
        eps = 1e-6
        fd = (discrete_energy(system, u + eps * d, alpha, m) - discrete_energy(system, u - eps * d, alpha, m)) / (2 * eps)
        worst = max(worst, abs(g - fd) / max(1.0, abs(g)))
    return worst


def check_alpha_zero():
    _, system = _toy_system()
    lin = solve_linear(system).values
    non = solve_nonlinear(system, 0.0, 3.0, tol=1e-13).values
    return float(np.abs(lin - non).max())


CHECKS = [
    ("kernel moment normalization", check_normalization, 1e-10),
    ("delta_s(0.5) = pi", check_crossover_pi, 1e-12),
    ("crossover continuity", check_crossover_continuity, 1e-12),
    ("Green identities", check_green, 1e-7),
    ("flux antisymmetry/additivity", check_flux, 1e-9),
    ("dense oracle vs banded assembly", check_assembly, 1e-8),
    ("A 1 = 0 (pure Neumann stiffness)", check_constants_kernel, 1e-12),
    ("Newton gradient vs finite differences", check_newton_gradient, 1e-5),
    ("alpha = 0 nonlinear = linear", check_alpha_zero, 1e-12),
]


def run_checks(corrupt_scaling: float | None = None) -> list[CheckResult]:
    """Run the battery; ``corrupt_scaling`` multiplies every kernel constant (test hook)."""
    results = []
    patch = None
    if corrupt_scaling is not None:
        original = kernels.scaling_constant
        patch = mock.patch.object(kernels, "scaling_constant", lambda k: corrupt_scaling * original(k))
        patch.start()
    try:
        for name, fn, tol in CHECKS:
            t0 = time.perf_counter()
            try:
                value = float(fn())
            except Exception:  # noqa: BLE001 - a crashing check is a failing check
                value = math.inf
            results.append(CheckResult(name, value, tol, time.perf_counter() - t0))
    finally:
        if patch is not None:
            patch.stop()
    return results
