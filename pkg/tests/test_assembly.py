import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from nonlocal_diffusion.assembly import (
    BandedSymMatrix,
    FormKind,
    LinearSystem,
    apply_dirichlet,
    assemble_load,
    assemble_mass,
    assemble_robin,
    assemble_stiffness,
    compatibility_residual,
    element_pair_integral,
    local_pair_matrices,
)
from nonlocal_diffusion.checks import dense_stiffness_oracle
from nonlocal_diffusion.geometry import ConstraintPiece, DomainSpec, NodeKind, build_mesh
from nonlocal_diffusion.kernels import Kernel
from nonlocal_diffusion.solver import solve_linear

S_GRID = [-1.0, 0.25, 0.5, 0.75]



def mesh_kernel(s, r, h=0.1, pieces=()):
    mesh = build_mesh(DomainSpec((0.0, 1.0), r * h, tuple(pieces)), h)
    return mesh, Kernel(s, r * h)


@pytest.mark.parametrize("s", S_GRID)
@pytest.mark.parametrize("r", [1, 2, 3])
@pytest.mark.parametrize("form", list(FormKind))
def test_banded_matches_dense_oracle(s, r, form):
    mesh, k = mesh_kernel(s, r)
    assert mesh.n_nodes <= 40
    A = assemble_stiffness(k, mesh, form)
    Ad = A.to_dense()
    Ao = dense_stiffness_oracle(k, mesh, form)
    assert np.abs(Ad - Ao).max() <= 1e-8 * np.abs(Ao).max()
    # energy of a piecewise-linear function agrees as well
    u = np.sin(3.0 * mesh.x) + mesh.x**2
    assert u @ A.matvec(u) == pytest.approx(u @ Ao @ u, rel=1e-8, abs=1e-12)


def test_coincident_pair_closed_form():
    # s = -1, h = 0.1, r = 2: diagonal entry for basis 0 on element pair (0, 0)
    mesh, k = mesh_kernel(-1.0, 2)
    h, C = mesh.h, k.constant

    def integrand(y, x):
        phi = lambda t: 1.0 - t / h  # noqa: E731
        return (phi(y) - phi(x)) ** 2 * C * abs(x - y)

    oracle, _ = integrate.dblquad(integrand, 0.0, h, 0.0, h, epsabs=1e-14, epsrel=1e-12)
    # closed form: C/h^2 * int int |x-y|^3 = C h^3 / 10
    assert oracle == pytest.approx(C * h**3 / 10, rel=1e-10)
    assert element_pair_integral(k, 0, 0, 0, 0, mesh) == pytest.approx(C * h**3 / 10, rel=1e-12)


def test_element_pair_support():
    mesh, k = mesh_kernel(0.5, 2)
    assert element_pair_integral(k, 0, 4, 0, 4, mesh) == 0.0
    assert element_pair_integral(k, 0, 7, 0, 7, mesh) == 0.0
    # basis not touching the pair
    assert element_pair_integral(k, 0, 1, 5, 0, mesh) == 0.0
    assert element_pair_integral(k, 3, 1, 1, 2, mesh) == element_pair_integral(k, 1, 3, 1, 2, mesh)


def test_local_matrices_annihilate_constants():
    for s in S_GRID:
        B0, B1, Bk = local_pair_matrices(s, 4)
        assert np.abs(B0.sum(axis=1)).max() <= 1e-14 * np.abs(B0).max()
        assert np.abs(B1.sum(axis=1)).max() <= 1e-14 * np.abs(B1).max()
        assert np.abs(Bk[2:].sum(axis=2)).max() <= 1e-13 * np.abs(Bk[2:]).max()


@pytest.mark.parametrize("s", S_GRID)
@pytest.mark.parametrize("form", list(FormKind))
def test_constants_in_kernel(s, form):
    mesh, k = mesh_kernel(s, 8, h=1 / 80)
    A = assemble_stiffness(k, mesh, form)
    assert np.abs(A.matvec(np.ones(A.n))).max() <= 1e-12 * A.norm_inf()
    assert np.all(A.diagonal() >= 0)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(S_GRID), st.sampled_from(list(FormKind)), st.integers(0, 2**31 - 1))
def test_positive_semidefinite(s, form, seed):
    mesh, k = mesh_kernel(s, 5, h=1 / 40)
    A = assemble_stiffness(k, mesh, form)
    w = np.random.default_rng(seed).standard_normal(A.n)
    assert w @ A.matvec(w) >= -1e-12 * A.norm_inf() * (w @ w)


@pytest.mark.parametrize("s", S_GRID)
def test_full_and_regional_hat_agree_inside(s):
    mesh, k = mesh_kernel(s, 4, h=1 / 40)
    F = assemble_stiffness(k, mesh, "full_constrained").to_dense()
    H = assemble_stiffness(k, mesh, "regional_hat").to_dense()
    inner = np.arange(mesh.r + 1, mesh.r + mesh.M)
    assert np.abs(F[np.ix_(inner, inner)] - H[np.ix_(inner, inner)]).max() <= 1e-12 * np.abs(F).max()
    # hats at the endpoints of Omega reach into the layer, where the forms differ
    assert abs(F[mesh.r, mesh.r] - H[mesh.r, mesh.r]) > 1e-6 * abs(F[mesh.r, mesh.r])


def test_kernel_horizon_must_match_mesh():
    mesh, _ = mesh_kernel(0.5, 2)
    with pytest.raises(ValueError):
        assemble_stiffness(Kernel(0.5, 0.3), mesh)


def test_banded_storage_roundtrip():
    rng = np.random.default_rng(1)
    D = rng.standard_normal((9, 9))
    D = D + D.T
    D[np.abs(np.subtract.outer(range(9), range(9))) > 3] = 0.0
    B = BandedSymMatrix.from_dense(D, 3)
    assert np.array_equal(B.to_dense(), D)
    x = rng.standard_normal(9)
    assert np.allclose(B.matvec(x), D @ x, atol=1e-14)
    idx = np.array([0, 2, 3, 5, 8])
    assert np.allclose(B.submatrix(idx).to_dense(), D[np.ix_(idx, idx)])
    assert np.allclose((B + 2.0 * B).to_dense(), 3 * D)
    assert B.norm_inf() == pytest.approx(np.abs(D).sum(axis=1).max())


def test_mass_matrix():
    mesh = build_mesh(DomainSpec((0.0, 1.0), 0.2), 0.1)
    Mo = assemble_mass(mesh, "omega").to_dense()
    j = mesh.r + 4
    assert Mo[j].sum() == pytest.approx(0.1, rel=1e-14)
    assert Mo[j, j - 1: j + 2] == pytest.approx([0.1 / 6, 0.4 / 6, 0.1 / 6])
    assert np.all(Mo[: mesh.r] == 0) and np.all(Mo[mesh.r + mesh.M + 1:] == 0)
    Mh = assemble_mass(mesh, "omega_hat").to_dense()
    assert Mh.sum() == pytest.approx(1.4, rel=1e-14)
    one = build_mesh(DomainSpec((0.0, 0.5), 0.5), 0.5)
    M1 = assemble_mass(one, "omega").to_dense()
    assert M1[1:3, 1:3] == pytest.approx(0.5 / 6 * np.array([[2, 1], [1, 2]]))


def test_robin_matrix():
    mesh = build_mesh(DomainSpec((0.0, 1.0), 0.1), 0.02)
    Z = assemble_robin(mesh, sigma=lambda x, y: 0.0 * x * y)
    assert not np.any(Z.band)
    R = assemble_robin(mesh)
    one = np.ones(mesh.n_nodes)
    assert one @ R.matvec(one) == pytest.approx(2.0, rel=1e-13)
    D = R.to_dense()
    assert np.array_equal(D, D.T)
    # explicit sigma equal to the default constant reproduces it
    Rs = assemble_robin(mesh, sigma=lambda x, y: 0.0 * x * y + 0.1**-2)
    assert np.allclose(Rs.to_dense(), D, rtol=1e-12, atol=1e-12)
    with pytest.raises(ValueError):
        assemble_robin(mesh, sigma=lambda x, y: x + 2 * y)


def test_robin_pieces_select_regions():
    pieces = [ConstraintPiece((-0.1, 0.0), "robin"), ConstraintPiece((1.0, 1.1), "dirichlet")]
    mesh = build_mesh(DomainSpec((0.0, 1.0), 0.1, pieces), 0.02)
    R = assemble_robin(mesh)
    one = np.ones(mesh.n_nodes)
    assert one @ R.matvec(one) == pytest.approx(1.0, rel=1e-13)
    assert not np.any(R.to_dense()[mesh.r + mesh.M + 1:])


def ex1_pieces(delta, kind="neumann"):
    return [ConstraintPiece((-delta, 0.0), kind, lambda x: 0 * x - 1 / (6 * delta)),
            ConstraintPiece((1.0, 1.0 + delta), kind, lambda x: 0 * x)]


def test_load_vector():
    mesh = build_mesh(DomainSpec((0.0, 1.0), 0.1), 0.01)
    assert not np.any(assemble_load(mesh, lambda x: 0 * x))
    assert assemble_load(mesh, lambda x: 0 * x + 1).sum() == pytest.approx(1.0, rel=1e-14)
    for kind in ("neumann", "neumann_hat"):
        m = build_mesh(DomainSpec((0.0, 1.0), 0.04, ex1_pieces(0.04, kind)), 1 / 500)
        b = assemble_load(m, lambda x: x * (1 - x))
        assert abs(b.sum()) <= 1e-12


def test_compatibility_residual():
    mesh = build_mesh(DomainSpec((0.0, 1.0), 0.04, ex1_pieces(0.04)), 1 / 500)
    assert abs(compatibility_residual(mesh, lambda x: x * (1 - x))) <= 1e-12
    plain = build_mesh(DomainSpec((0.0, 1.0), 0.1), 0.01)
    assert compatibility_residual(plain, lambda x: 0 * x + 1) == pytest.approx(1.0, rel=1e-14)
    d = 0.1
    pieces = [ConstraintPiece((-d, 0.0), "neumann", lambda x: 0 * x - 1 / (2 * d)),
              ConstraintPiece((1.0, 1 + d), "neumann", lambda x: 0 * x - 1 / (2 * d))]
    m = build_mesh(DomainSpec((0.0, 1.0), d, pieces), 0.01)
    assert abs(compatibility_residual(m, lambda x: 0 * x + 1)) <= 1e-14


def ex2a_pieces(delta, c=1.0):
    return [ConstraintPiece((-delta, -delta / 2), "neumann", lambda x: 0 * x - 1 / (3 * delta)),
            ConstraintPiece((-delta / 2, 0.0), "dirichlet", lambda x: 0 * x + c),
            ConstraintPiece((1.0, 1 + delta), "dirichlet", lambda x: 0 * x + c)]


def test_apply_dirichlet_bookkeeping():
    delta, h = 0.04, 1 / 500
    mesh = build_mesh(DomainSpec((0.0, 1.0), delta, ex2a_pieces(delta)), h)
    A = assemble_stiffness(Kernel(0.25, delta), mesh)
    b = assemble_load(mesh, None)
    sys = apply_dirichlet(LinearSystem(A, b, mesh=mesh), mesh)
    n_dir = int(np.sum(mesh.node_kind == NodeKind.DIRICHLET))
    assert sys.free.size == mesh.n_nodes - n_dir
    assert all(v == 1.0 for v in sys.dirichlet.values())


def test_homogeneous_dirichlet_keeps_load():
    pieces = [ConstraintPiece((-0.1, 0.0), "dirichlet"), ConstraintPiece((1.0, 1.1), "dirichlet")]
    mesh = build_mesh(DomainSpec((0.0, 1.0), 0.1, pieces), 0.02)
    A = assemble_stiffness(Kernel(0.5, 0.1), mesh)
    b = assemble_load(mesh, lambda x: np.cos(x))
    sys = apply_dirichlet(LinearSystem(A, b, mesh=mesh), mesh)
    _, bf = sys.reduced()
    assert np.array_equal(bf, b[sys.free])


@pytest.mark.parametrize("s", S_GRID)
def test_constant_reproduction(s):
    c = -2.5
    pieces = [ConstraintPiece((-0.1, 0.0), "dirichlet", lambda x: 0 * x + c),
              ConstraintPiece((1.0, 1.1), "dirichlet", lambda x: 0 * x + c)]
    mesh = build_mesh(DomainSpec((0.0, 1.0), 0.1, pieces), 0.01)
    A = assemble_stiffness(Kernel(s, 0.1), mesh)
    sys = apply_dirichlet(LinearSystem(A, assemble_load(mesh, None), mesh=mesh), mesh)
    u = solve_linear(sys).values
    assert np.abs(u - c).max() <= 1e-10
