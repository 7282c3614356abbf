import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from nonlocal_diffusion.kernels import (
    Kernel,
    KernelError,
    Scaling,
    delta_crossover,
    fractional_constant,
    kernel_eval,
    kernel_mass,
    power_integral,
    scaling_constant,
    second_moment,
)

# mpmath at 30 digits
DELTA_S_025 = 3.83831658535502601324964065249
DELTA_S_075 = 2.79252680319092732307790522958
C_1_025 = 0.199471140200716338969973029967
C_1_075 = 0.299206710301074508454959544951
C_2_05 = 0.159154943091895335768883763373


def test_fractional_constant_values():
    assert fractional_constant(1, 0.5) == pytest.approx(1 / math.pi, rel=1e-14)
    assert fractional_constant(1, 0.25) == pytest.approx(C_1_025, rel=1e-14)
    assert fractional_constant(1, 0.75) == pytest.approx(C_1_075, rel=1e-14)
    assert fractional_constant(2, 0.5) == pytest.approx(C_2_05, rel=1e-14)
    assert fractional_constant(2, 0.5) == pytest.approx(math.gamma(1.5) / (math.pi * math.gamma(0.5)), rel=1e-14)


def test_fractional_constant_vanishes_near_one():
    # 1/Gamma(1-s) ~ (1-s), so the constant decays like 2 (1 - s)
    for eps in (1e-3, 1e-6, 1e-9):
        assert fractional_constant(1, 1 - eps) / eps == pytest.approx(2.0, rel=2e-3)


@pytest.mark.parametrize("s", [0.0, 1.0, -0.5, 1.5])
def test_fractional_constant_rejects(s):
    with pytest.raises(KernelError):
        fractional_constant(1, s)


def test_delta_crossover_values():
    assert abs(delta_crossover(0.5) - math.pi) <= 1e-12
    assert delta_crossover(-1.0) == pytest.approx(8 ** 0.25, rel=1e-14)
    assert delta_crossover(0.25) == pytest.approx(DELTA_S_025, rel=1e-13)
    assert delta_crossover(0.75) == pytest.approx(DELTA_S_075, rel=1e-13)


@pytest.mark.parametrize("s", [0.0, 1.0, 2.0])
def test_delta_crossover_rejects(s):
    with pytest.raises(KernelError):
        delta_crossover(s)


def test_delta_crossover_nonpositive_ratio():
    # for -1/2 < s < 0 the root argument is negative
    with pytest.raises(KernelError):
        delta_crossover(-0.25)


def test_scaling_constant_branches():
    assert Kernel(0.5, 1.0).constant == pytest.approx(1.0, rel=1e-15)
    assert Kernel(0.5, 10.0).constant == pytest.approx(1 / math.pi, rel=1e-15)
    assert Kernel(-1.0, 0.1).constant == pytest.approx(4e4, rel=1e-14)
    assert Kernel(0.25, 0.08, scaling="local_moment").constant == pytest.approx(1.5 * 0.08 ** -1.5, rel=1e-14)
    assert Kernel(0.75, 0.01, scaling=Scaling.FRACTIONAL_TRUNCATION).constant == pytest.approx(C_1_075, rel=1e-14)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_crossover_continuity(s):
    ds = delta_crossover(s)
    below = Kernel(s, ds, scaling="local_moment").constant
    above = Kernel(s, ds, scaling="fractional_truncation").constant
    assert abs(below - above) <= 1e-12
    assert Kernel(s, ds).constant == pytest.approx(above, abs=1e-12)


def test_crossover_rejects_fractional_branch_for_nonpositive_s():
    with pytest.raises(KernelError):
        Kernel(-1.0, 5.0).constant


def test_kernel_eval_examples():
    assert kernel_eval(Kernel(-1.0, 0.1), 0.2) == 0.0
    assert kernel_eval(Kernel(-1.0, 0.1), 0.05) == pytest.approx(2000.0, rel=1e-13)
    assert kernel_eval(Kernel(0.5, math.pi), 1.0) == pytest.approx(1 / math.pi, rel=1e-14)
    assert Kernel(-1.0, 0.1)(-0.05) == pytest.approx(2000.0, rel=1e-13)


def test_kernel_eval_singular_origin():
    with pytest.raises(KernelError):
        kernel_eval(Kernel(0.25, 1.0), 0.0)
    assert kernel_eval(Kernel(-1.0, 1.0), 0.0) == 0.0


def test_second_moment_examples():
    assert second_moment(Kernel(0.25, 0.04, scaling="local_moment")) == pytest.approx(2.0, rel=1e-14)
    k = Kernel(0.75, 10.0, scaling="fractional_truncation")
    assert second_moment(k) == pytest.approx(C_1_075 * 2 * 10 ** 0.5 / 0.5, rel=1e-14)
    assert second_moment(Kernel(-1.0, 0.1)) == pytest.approx(2.0, rel=1e-14)


def test_kernel_mass_examples():
    assert kernel_mass(Kernel(-1.0, 0.1)) == pytest.approx(400.0, rel=1e-13)
    assert math.isinf(kernel_mass(Kernel(0.25, 0.04)))
    assert math.isinf(kernel_mass(Kernel(0.75, 1.0)))


def test_power_integral_log_branch():
    assert power_integral(-1.0, 1.0, math.e) == pytest.approx(1.0, rel=1e-15)
    assert power_integral(2.0, 0.0, 3.0) == pytest.approx(9.0, rel=1e-15)


@pytest.mark.parametrize("bad", [dict(s=1.0, delta=1.0), dict(s=0.5, delta=0.0), dict(s=0.5, delta=1.0, d=0),
                                 dict(s=0.5, delta=math.inf), dict(s=-1.0, delta=1.0, scaling="fractional_truncation")])
def test_kernel_rejects(bad):
    with pytest.raises(KernelError):
        Kernel(**bad)


kernels = st.builds(
    Kernel,
    s=st.sampled_from([-1.0, 0.25, 0.5, 0.75]),
    delta=st.floats(0.005, 1.6),
)


@given(kernels, st.lists(st.floats(-5.0, 5.0), min_size=1, max_size=50))
def test_support_property(k, zs):
    z = np.array(zs)
    z = z[np.abs(z) >= k.delta]
    assert np.all(kernel_eval(k, z) == 0.0)


@given(kernels)
def test_monotone_nonnegative(k):
    z = np.linspace(k.delta * 1e-3, k.delta * (1 - 1e-9), 200)
    v = kernel_eval(k, z)
    assert np.all(v >= 0)
    # C |z|^(-1-2s) is nonincreasing only when -1-2s <= 0
    if k.s >= -0.5:
        assert np.all(np.diff(v) <= 0)
    else:
        assert np.all(np.diff(v) >= 0)


@settings(max_examples=40)
@given(st.sampled_from([-1.0, 0.25, 0.5, 0.75]), st.floats(0.005, 2.0))
def test_moment_normalization(s, delta):
    k = Kernel(s, delta, scaling="local_moment")
    assert abs(second_moment(k) - 2.0) <= 1e-10 * 2.0
    # independent quadrature of the same moment
    m2, _ = integrate.quad(lambda z: z**2 * k(z), 0.0, delta, epsabs=0, epsrel=1e-13)
    assert 2.0 * m2 == pytest.approx(2.0, rel=1e-10)


def test_scaling_constant_matches_kernel_property():
    k = Kernel(0.25, 0.5)
    assert scaling_constant(k) == k.constant
