"""Quadrature primitives shared by the operator oracles and the assembly.

Two independent schemes are provided:

* :func:`adaptive` -- global adaptive bisection with a 7/15-point
  Gauss-Kronrod pair per panel, started from a caller-supplied partition
  (typically graded toward a singular point).
* :func:`panel_rule` -- a fixed composite Gauss-Legendre rule, geometrically
  graded toward one end of each interval, vectorized over many intervals.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "QuadratureSpec",
    "QuadratureError",
    "gauss_legendre01",
    "adaptive",
    "graded_breaks",
    "panel_rule",
    "graded_interval_rule",
]


class QuadratureError(RuntimeError):
    """Adaptive quadrature ran out of budget before meeting its tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be at least 1")

    def halved(self) -> "QuadratureSpec":
        return QuadratureSpec(self.abs_tol / 2, self.rel_tol / 2, 2 * self.max_subdivisions)


@lru_cache(maxsize=None)
def gauss_legendre01(n: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_X15 = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_W15 = np.concatenate([_WGK[:-1], _WGK[::-1]])
_W7 = np.zeros(15)
_W7[[1, 3, 5]] = _WG[:3]
_W7[[13, 11, 9]] = _WG[:3]
_W7[7] = _WG[3]


def _gk15(f, a, b):
    c, hw = 0.5 * (a + b), 0.5 * (b - a)
    fx = np.asarray(f(c + hw * _X15), dtype=float)
    k = hw * np.dot(_W15, fx)
    g = hw * np.dot(_W7, fx)
    return k, abs(k - g)


def adaptive(f, breaks, quad: QuadratureSpec | None = None):
    """Integrate a vectorized ``f`` over ``[breaks[0], breaks[-1]]``.

    Returns ``(value, error_estimate)``.  Raises :class:`QuadratureError` if
    the error target ``max(abs_tol, rel_tol*|value|)`` is not reached within
    ``quad.max_subdivisions`` bisections.
    """
    quad = quad or QuadratureSpec()
    breaks = np.asarray(breaks, dtype=float)
    heap = []
    total = err = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        k, e = _gk15(f, a, b)
        total += k
        err += e
        heapq.heappush(heap, (-e, a, b, k))
    for _ in range(quad.max_subdivisions):
        if err <= max(quad.abs_tol, quad.rel_tol * abs(total)) or not heap:
            return total, err
        e, a, b, k = heapq.heappop(heap)
        m = 0.5 * (a + b)
        if not a < m < b:  # interval exhausted in floating point
            heapq.heappush(heap, (e, a, b, k))
            break
        k1, e1 = _gk15(f, a, m)
        k2, e2 = _gk15(f, m, b)
        total += k1 + k2 - k
        err += e1 + e2 + e
        heapq.heappush(heap, (-e1, a, m, k1))
        heapq.heappush(heap, (-e2, m, b, k2))
    if err <= max(quad.abs_tol, quad.rel_tol * abs(total)):
        return total, err
    raise QuadratureError(
        f"adaptive quadrature did not converge on [{breaks[0]:g}, {breaks[-1]:g}]: "
        f"estimate {total:.6g}, error {err:.3g} after {quad.max_subdivisions} subdivisions"
    )


def graded_breaks(A: float, B: float, dist: float, levels: int = 40, scale: float = 1.0):
    """Breakpoints on [A, B] graded geometrically toward ``A``.

    The singular point is assumed to sit at ``A - dist``; ``dist = 0`` means
    an endpoint singularity.  Beyond ``A + scale`` panels are uniform with
    width at most ``scale / 4``.
    """
    if B <= A:
        return np.array([A, B])
    G = min(B, A + scale)
    ell = G - A
    if dist > ell * 2.0**-levels:
        n = max(1, math.ceil(math.log((ell + dist) / dist) / math.log(2.0)))
        q = ((ell + dist) / dist) ** (1.0 / n)
        geo = A - dist + dist * q ** np.arange(n + 1)
    else:
        inner = np.maximum(ell * 2.0 ** np.arange(-levels, 1), 256.0 * np.spacing(abs(A)))
        geo = np.unique(np.concatenate([[A], A + inner]))
    geo[-1] = G
    if G < B:
        nu = math.ceil((B - G) / (scale / 4))
        return np.concatenate([geo, np.linspace(G, B, nu + 1)[1:]])
    return geo


def panel_rule(A, B, dist, *, n_geo: int = 40, n_gl: int = 8, scale: float = 1.0,
               width: float = 0.25, n_uniform: int | None = None, floor=None):
    """Vectorized composite Gauss rule on intervals ``[A_i, B_i]``.

    Each interval gets at least ``n_geo`` geometric panels toward ``A_i``
    (singular point at ``A_i - dist_i``; more levels, up to ``4 n_geo``,
    when that point is very close) over its first ``scale`` units, followed by
    uniform panels of width at most ``width``.  Returns ``(nodes, weights)``
    of shape ``(len(A), n_panels * n_gl)``; empty intervals get zero weights.
    ``floor`` bounds the innermost panel width from below (default: a few
    hundred ulps of ``A``).
    """
    A, B, dist = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in (A, B, dist)))
    L = np.maximum(B - A, 0.0)
    G = A + np.minimum(L, scale)
    ell = G - A
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        smooth = dist > 0.0
        # enough levels for a panel ratio of about 2 toward the nearest singularity
        need = np.log2(np.where(smooth & (ell > 0), (ell + dist) / np.where(smooth, dist, 1.0), 1.0))
    n_geo = int(min(max(n_geo, math.ceil(np.max(need, initial=0.0))), 4 * n_geo))
    j = np.arange(n_geo + 1)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.where(smooth, (ell + dist) / np.where(smooth, dist, 1.0), 1.0)
        geo_s = (A - dist)[:, None] + dist[:, None] * ratio[:, None] ** (j / n_geo)
        geo_e = A[:, None] + ell[:, None] * np.concatenate([[0.0], 2.0 ** np.arange(-n_geo + 1, 1)])
    # keep the innermost panels resolvable in floating point around A
    floor = 256.0 * np.spacing(np.abs(A)) if floor is None else np.broadcast_to(floor, A.shape)
    geo_e[:, 1:] = np.minimum(np.maximum(geo_e[:, 1:], (A + floor)[:, None]), G[:, None])
    geo = np.where(smooth[:, None], geo_s, geo_e)
    geo[:, 0] = A
    geo[:, -1] = G
    if n_uniform is None:
        n_uniform = int(math.ceil(np.max(B - G) / width)) if np.any(B > G) else 0
    if n_uniform > 0:
        uni = G[:, None] + (B - G)[:, None] * np.linspace(0.0, 1.0, n_uniform + 1)[1:]
        edges = np.concatenate([geo, uni], axis=1)
    else:
        edges = geo
    lo, hi = edges[:, :-1], edges[:, 1:]
    t, w = gauss_legendre01(n_gl)
    span = (hi - lo)[:, :, None]
    nodes = lo[:, :, None] + span * t
    weights = span * w
    n = A.shape[0]
    return nodes.reshape(n, -1), weights.reshape(n, -1)


def graded_interval_rule(a: float, b: float, grade=(), *, n_geo: int = 80, n_gl: int = 8,
                         breakpoints=(), split: bool = False):
    """1D composite rule on [a, b] graded toward the points in ``grade``.

    The interval is split at every breakpoint and grading point inside it;
    each sub-interval is halved and each half graded toward its outer end
    if that end is a grading point.  Returns flat ``(nodes, weights)``, or
    ``(base, offset, weights)`` with ``nodes = base + offset`` when
    ``split`` is set; the offsets are exact distances from the grading
    points and stay resolvable even where ``base + offset`` rounds.
    """
    cuts = sorted({a, b, *(p for p in (*grade, *breakpoints) if a < p < b)})
    grade = set(grade)
    bs, os, ws = [], [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (lo + hi)
        for start, end in ((lo, mid), (hi, mid)):
            near = any(abs(start - g) <= 1e-14 * max(1.0, abs(g)) for g in grade)
            length = abs(end - start)
            if near:
                floor = 256.0 * np.spacing(0.0 if split else abs(start))
                x, w = panel_rule(0.0, length, 0.0, n_geo=n_geo, n_gl=n_gl, scale=length,
                                  floor=floor)
            else:
                x, w = panel_rule(0.0, length, length, n_geo=2, n_gl=n_gl, scale=length)
            sign = 1.0 if end > start else -1.0
            bs.append(np.full(x.shape[1], start))
            os.append(sign * x[0])
            ws.append(w[0])
    base, offset, weights = np.concatenate(bs), np.concatenate(os), np.concatenate(ws)
    if split:
        return base, offset, weights
    return base + offset, weights
