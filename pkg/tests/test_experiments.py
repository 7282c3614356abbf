import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nonlocal_diffusion import experiments as ex
from nonlocal_diffusion.experiments import (
    CellError,
    ConfigError,
    ExperimentConfig,
    build_problem,
    default_config,
    fit_rate,
    l2_error,
    local_reference,
    manufactured_fractional,
    run_example,
    solve_cell,
)
from nonlocal_diffusion.geometry import DomainSpec, build_mesh
from nonlocal_diffusion.operators import fractional_laplacian_many, gaussian


def test_local_reference_constants():
    x = np.linspace(0, 1, 2001)
    u = local_reference("Ex1_Ndelta")(x)
    # zero mean on (0, 1), u'' = -x(1-x) shifted, u'(0) = 1/6, u'(1) = 0
    assert np.trapezoid(u, x) == pytest.approx(0.0, abs=1e-7)
    assert local_reference("Ex1_Ndelta", None)(0.0) == 0.0
    assert local_reference("Ex1_NdeltaHat")(0.0) == pytest.approx(-7 / 120)
    assert np.all(local_reference("Ex2b")(x) == 1.0)
    with pytest.raises(ValueError):
        local_reference("Ex3_Ndelta")


def test_l2_error_of_interpolant_decays_quadratically():
    errs = []
    for h in (0.02, 0.01, 0.005):
        mesh = build_mesh(DomainSpec((0.0, 1.0), 2 * h), h)
        errs.append(l2_error(np.sin(3 * mesh.x), lambda x: np.sin(3 * x), mesh))
    rate, r2 = fit_rate(list(zip((0.02, 0.01, 0.005), errs)))
    assert rate == pytest.approx(2.0, abs=0.02) and r2 > 0.9999
    # closed form for a linear reference: zero
    mesh = build_mesh(DomainSpec((0.0, 1.0), 0.1), 0.05)
    assert l2_error(2 * mesh.x - 1, lambda x: 2 * x - 1, mesh) <= 1e-15


def test_l2_error_constant_offset_and_alignment():
    mesh = build_mesh(DomainSpec((0.0, 1.0), 0.1), 0.05)
    ref = lambda x: x**2  # noqa: E731
    vals = mesh.x**2 + 0.3
    raw = l2_error(vals, ref, mesh)
    aligned = l2_error(vals, ref, mesh, align="mean_zero_on_omega")
    assert raw == pytest.approx(0.3, rel=2e-3)
    assert aligned < 1e-3
    assert l2_error(vals, ref, mesh, region=(-0.1, 1.1)) == pytest.approx(0.3 * math.sqrt(1.2), rel=2e-3)
    with pytest.raises(ValueError):
        l2_error(vals, ref, mesh, align="median")


def test_fit_rate_on_reference_rows():
    # reference error sequences with known fitted rates
    hat = [(0.08, 2.65e-3), (0.04, 1.32e-3), (0.02, 6.60e-4), (0.01, 3.26e-4), (0.005, 1.60e-4)]
    assert round(fit_rate(hat)[0], 2) == 1.01
    frac = [(10, 1.07e-2), (20, 3.93e-3), (40, 1.41e-3), (80, 5.03e-4), (160, 1.78e-4)]
    assert round(fit_rate(frac, inverse=True)[0], 2) == 1.48
    b = [(0.16, 5.87e-2), (0.08, 4.15e-2), (0.04, 2.63e-2), (0.02, 1.54e-2), (0.01, 8.56e-3)]
    assert round(fit_rate(b)[0], 2) == 0.70


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-5, 5), st.integers(2, 6))
def test_fit_rate_recovers_power_laws(p, logc, n):
    d = 0.5 ** np.arange(n)
    slope, r2 = fit_rate(list(zip(d, math.exp(logc) * d**p)))
    assert slope == pytest.approx(p, abs=1e-9)
    assert r2 == pytest.approx(1.0, abs=1e-9) or p == pytest.approx(0.0, abs=1e-9)
    assert fit_rate(list(zip(d, d**p)), inverse=True)[0] == pytest.approx(-p, abs=1e-9)


def test_fit_rate_rejects_bad_input():
    for pts in ([(0.1, 1.0)], [(0.1, 0.0), (0.2, 1.0)], [(0.1, 1.0), (0.1, 2.0)], [(0.1, math.nan), (0.2, 1)]):
        with pytest.raises(ValueError):
            fit_rate(pts)


@pytest.mark.parametrize("kwargs,msg", [
    (dict(example="Ex9", s=0.5, delta=0.1, h=0.01), "unknown example"),
    (dict(example="Ex1_Ndelta", s=0.5, delta=0.03, h=0.004), "not integer"),
    (dict(example="Ex2a", s=0.5, delta=0.03, h=0.01), "even"),
    (dict(example="Ex1_Ndelta", s=1.0, delta=0.1, h=0.01), "s must be"),
    (dict(example="Ex3_Ndelta", s=-1.0, delta=5.0, h=0.01), "0 < s < 1"),
    (dict(example="Ex1_Ndelta", s=0.5, delta=-0.1, h=0.01), "positive"),
    (dict(example="Ex1_Ndelta", s=0.5, delta=0.1, h=0.01, threads=0), "threads"),
    (dict(example="Custom", s=0.5, delta=0.1, h=0.03, custom={"omega": [0, 1], "pieces": []}), "not integer"),
])
def test_config_validation(kwargs, msg):
    with pytest.raises(ConfigError, match=msg):
        ExperimentConfig(**kwargs)


def test_default_configs():
    for name in ex.EXAMPLES:
        cfg = default_config(name)
        assert cfg.example == name
    assert default_config("Ex1_Ndelta").h == 1 / 2000
    assert default_config("Ex3_NdeltaHat", s=[0.5]).s == [0.5]
    with pytest.raises(ConfigError):
        default_config("nope")


def test_fractional_data_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("NONLOCAL_CACHE_DIR", str(tmp_path))
    monkeypatch.setattr(ex, "_ORACLES", {})
    x = np.array([0.2, 0.5, 0.8])
    f, g, u = manufactured_fractional(0.5, "omega_integral")
    first = f(x)
    assert (f.misses, f.hits) == (3, 0)
    assert np.array_equal(f(x), first) and f.hits == 3
    # symmetric about the Gaussian center
    assert first[0] == pytest.approx(first[2], rel=1e-12)
    assert first == pytest.approx(fractional_laplacian_many(0.5, gaussian(0.5), x) + u(x), rel=1e-10)
    # a fresh process view reloads from disk without recomputation
    monkeypatch.setattr(ex, "_ORACLES", {})
    f2, _, _ = manufactured_fractional(0.5, "omega-integral")
    assert np.array_equal(f2(x), first) and f2.misses == 0
    assert list(tmp_path.glob("*.npz"))
    with pytest.raises(ValueError):
        manufactured_fractional(1.0)
    with pytest.raises(ValueError):
        manufactured_fractional(0.5, "half_line")


def test_cached_oracle_is_much_faster(tmp_path, monkeypatch):
    monkeypatch.setenv("NONLOCAL_CACHE_DIR", str(tmp_path))
    monkeypatch.setattr(ex, "_ORACLES", {})
    x = np.linspace(0.0, 1.0, 201)
    f, _, _ = manufactured_fractional(0.75, "omega_integral")
    t0 = time.perf_counter()
    cold = f(x)
    t_cold = time.perf_counter() - t0
    monkeypatch.setattr(ex, "_ORACLES", {})
    f, _, _ = manufactured_fractional(0.75, "omega_integral")
    t0 = time.perf_counter()
    warm = f(x)
    t_warm = time.perf_counter() - t0
    assert np.array_equal(cold, warm) and f.misses == 0
    assert t_cold >= 5 * t_warm


def test_neumann_data_symmetry():
    _, g, _ = manufactured_fractional(0.25, "full_line", use_disk=False)
    xs = np.array([-0.3, 1.3, -0.01, 1.01])
    v = g(xs)
    assert v[0] == pytest.approx(v[1], rel=1e-10)
    assert v[2] == pytest.approx(v[3], rel=1e-10)


def test_ex1_cell_matches_reference_value():
    cell = solve_cell("Ex1_NdeltaHat", 0.25, 0.04, 1 / 2000)
    # reference value 1.32e-3
    assert cell.l2_error == pytest.approx(1.32e-3, rel=0.02)
    assert abs(cell.compatibility) <= 1e-12
    assert abs(cell.solution.lambda_) <= 1e-12
    assert cell.extra["l2_error_mean_zero_on_omega"] < cell.l2_error


def test_ex2_cells_reproduce_constants():
    mesh, system, f = build_problem("Ex2a", 0.5, 0.04, 1 / 100)
    assert f is None
    assert set(system.dirichlet.values()) == {1.0}
    cell = solve_cell("Ex2b", 0.5, 0.04, 1 / 100)
    assert cell.compatibility is None and cell.l2_error > 0


def test_thread_count_does_not_change_results():
    base = dict(example="Ex1_Ndelta", s=[-1.0, 0.25], delta=[0.08, 0.04], h=1 / 400)
    one = run_example(ExperimentConfig(**base, threads=1))
    two = run_example(ExperimentConfig(**base, threads=2))
    assert [r["l2_error"] for r in one.rows] == [r["l2_error"] for r in two.rows]
    assert one.rates == two.rates
    assert len(one.rows) == 4 and len(one.rates) == 2
    assert one.errors(0.25)[0][0] == 0.08


def test_custom_study_and_failures():
    custom = {"pieces": [{"side": "left", "interval": [-1, 0], "kind": "dirichlet", "value": 2.0},
                         {"side": "right", "interval": [0, 1], "kind": "dirichlet", "value": 2.0}],
              "reference": 2.0}
    rep = run_example(ExperimentConfig("Custom", [0.5], [0.1], 0.01, custom=custom))
    assert rep.rows[0]["l2_error"] <= 1e-10
    assert math.isnan(rep.rates[0]["rate"])
    bad = {"form": "regional_omega",
           "pieces": [{"side": "left", "interval": [-1, 0], "kind": "neumann", "value": 1.0},
                      {"side": "right", "interval": [0, 1], "kind": "neumann", "value": 0.0}]}
    with pytest.raises(CellError) as info:
        run_example(ExperimentConfig("Custom", [0.5], [0.1], 0.01, custom=bad))
    assert info.value.s == 0.5 and info.value.delta == 0.1


def test_custom_robin_newton():
    custom = {"f": 1.0, "alpha": 1.0, "m": 3.0,
              "pieces": [{"side": "left", "interval": [-1, 0], "kind": "robin"},
                         {"side": "right", "interval": [0, 1], "kind": "dirichlet", "value": 0.0}]}
    cell = solve_cell("Custom", 0.5, 0.1, 0.02, custom)
    assert cell.solution.newton_iters >= 1
    assert math.isnan(cell.l2_error)
    assert np.all(cell.solution.values[cell.mesh.x > 1.0] == 0.0)
