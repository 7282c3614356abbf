"""Truncated fractional-type kernels and their normalization constants.

All kernels here are radial power laws restricted to the ball of radius
``delta``::

    gamma_delta(z) = C * |z|**(-d - 2*s)   for |z| < delta, 0 otherwise

and differ only in how the constant ``C`` is chosen.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gamma as gamma_fn

__all__ = [
    "Scaling",
    "Kernel",
    "KernelError",
    "fractional_constant",
    "delta_crossover",
    "scaling_constant",
    "kernel_eval",
    "second_moment",
    "kernel_mass",
    "power_integral",
    "sphere_area",
]


class KernelError(ValueError):
    """Invalid kernel parameters or evaluation at a singular point."""


class Scaling(str, enum.Enum):
    CROSSOVER = "crossover"
    LOCAL_MOMENT = "local_moment"
    FRACTIONAL_TRUNCATION = "fractional_truncation"


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def power_integral(p: float, a: float, b: float) -> float:
    """Exact value of the integral of t**p over [a, b], 0 <= a <= b.

    Uses the logarithm branch when ``p == -1``.  Returns ``inf`` for a
    divergent integral at ``a == 0``.
    """
    if b <= a:
        return 0.0
    if p == -1.0:
        return math.inf if a == 0.0 else math.log(b / a)
    q = p + 1.0
    if a == 0.0:
        return b**q / q if q > 0 else math.inf
    if math.isinf(b):
        return -(a**q) / q if q < 0 else math.inf
    return (b**q - a**q) / q


def fractional_constant(d: int, s: float) -> float:
    """Normalization C_{d,s} of the integral fractional Laplacian.

    >>> round(fractional_constant(1, 0.5) * math.pi, 12)
    1.0
    """
    if not 0.0 < s < 1.0:
        raise KernelError(f"fractional constant needs 0 < s < 1, got s={s}")
    if d < 1:
        raise KernelError(f"dimension must be positive, got d={d}")
    return 4.0**s * s * math.gamma(s + d / 2) / (math.pi ** (d / 2) * math.gamma(1.0 - s))


def _moment_constant(s: float, delta: float, d: int = 1) -> float:
    # C such that C * |S^{d-1}| * delta**(2-2s) / (2-2s) == 2d
    return 2.0 * d * (2.0 - 2.0 * s) / (sphere_area(d) * delta ** (2.0 - 2.0 * s))


def _crossover_ratio(s: float, d: int = 1) -> float:
    # for d = 1 this is (2-2s) sqrt(pi) Gamma(1-s) / (2^{2s} s Gamma(s+1/2))
    num = 2.0 * d * (2.0 - 2.0 * s) * math.pi ** (d / 2) * gamma_fn(1.0 - s)
    den = sphere_area(d) * 4.0**s * s * gamma_fn(s + d / 2)
    return num / den


def delta_crossover(s: float, d: int = 1) -> float:
    """Horizon at which the moment and fractional normalizations coincide.

    Only defined when the ratio under the root is positive; for example
    ``delta_crossover(0.5) == pi`` and ``delta_crossover(-1) == 8**0.25``.
    """
    if s >= 1.0:
        raise KernelError(f"crossover horizon undefined for s={s} >= 1")
    if s == 0.0:
        raise KernelError("crossover horizon undefined for s = 0")
    ratio = _crossover_ratio(s, d)
    if not np.isfinite(ratio) or ratio <= 0.0:
        raise KernelError(f"crossover horizon undefined for s={s}: root argument {ratio} <= 0")
    return ratio ** (1.0 / (2.0 - 2.0 * s))


def scaling_constant(kernel: "Kernel") -> float:
    """The constant C multiplying |z|^{-d-2s} inside the horizon."""
    s, delta, d = kernel.s, kernel.delta, kernel.d
    if kernel.scaling is Scaling.FRACTIONAL_TRUNCATION:
        return fractional_constant(d, s)
    if kernel.scaling is Scaling.LOCAL_MOMENT:
        return _moment_constant(s, delta, d)
    # crossover: moment branch below delta_s, fractional branch above
    if s <= 0.0:
        try:
            ds = delta_crossover(s, d)
        except KernelError:
            ds = math.inf
        if delta > ds:
            raise KernelError(
                f"s={s} <= 0 with delta={delta} beyond the crossover horizon {ds}; "
                "the fractional branch is undefined for s <= 0"
            )
        return _moment_constant(s, delta, d)
    if delta <= delta_crossover(s, d):
        return _moment_constant(s, delta, d)
    return fractional_constant(d, s)


@dataclass(frozen=True)
class Kernel:
    """Radial truncated power kernel.

    Parameters
    ----------
    s : float
        Exponent, ``s < 1``.  Negative values give integrable kernels.
    delta : float
        Horizon.  ``math.inf`` is accepted for the untruncated fractional
        kernel (``FRACTIONAL_TRUNCATION`` scaling only).
    d : int
        Spatial dimension.
    scaling : Scaling
        Rule used to pick the constant.
    """

    s: float
    delta: float
    d: int = 1
    scaling: Scaling = Scaling.CROSSOVER

    def __post_init__(self):
        if not self.s < 1.0:
            raise KernelError(f"kernel exponent must satisfy s < 1, got {self.s}")
        if not self.delta > 0.0:
            raise KernelError(f"horizon must be positive, got {self.delta}")
        if self.d < 1:
            raise KernelError(f"dimension must be positive, got {self.d}")
        object.__setattr__(self, "scaling", Scaling(self.scaling))
        if math.isinf(self.delta) and self.scaling is not Scaling.FRACTIONAL_TRUNCATION:
            raise KernelError("infinite horizon requires fractional-truncation scaling")
        if self.scaling is Scaling.FRACTIONAL_TRUNCATION and not 0.0 < self.s < 1.0:
            raise KernelError(f"fractional truncation needs 0 < s < 1, got {self.s}")

    @property
    def exponent(self) -> float:
        """Power p in C * |z|**p."""
        return -self.d - 2.0 * self.s

    @cached_property
    def constant(self) -> float:
        return scaling_constant(self)

    def __call__(self, z):
        return kernel_eval(self, z)


def kernel_eval(kernel: Kernel, z):
    """Evaluate the kernel at offset(s) ``z`` (scalar or array)."""
    az = np.abs(np.asarray(z, dtype=float))
    if kernel.s >= 0.0 and np.any(az == 0.0):
        raise KernelError("kernel is singular at z = 0 for s >= 0")
    with np.errstate(divide="ignore"):
        val = np.where(az < kernel.delta, kernel.constant * az**kernel.exponent, 0.0)
    return float(val) if np.ndim(val) == 0 else val


def second_moment(kernel: Kernel) -> float:
    """Integral of |z|^2 gamma_delta(|z|) over the horizon ball (closed form)."""
    radial = power_integral(2.0 + kernel.exponent + kernel.d - 1.0, 0.0, kernel.delta)
    return kernel.constant * sphere_area(kernel.d) * radial


def kernel_mass(kernel: Kernel) -> float:
    """Integral of gamma_delta over the horizon ball; ``inf`` when s >= 0."""
    if kernel.s >= 0.0:
        return math.inf
    radial = power_integral(kernel.exponent + kernel.d - 1.0, 0.0, kernel.delta)
    return kernel.constant * sphere_area(kernel.d) * radial
