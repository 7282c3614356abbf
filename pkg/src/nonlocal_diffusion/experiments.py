"""Reference solutions, manufactured data, error norms and the study drivers."""
from __future__ import annotations

import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import (
    FormKind,
    LinearSystem,
    apply_dirichlet,
    assemble_load,
    assemble_mass,
    assemble_robin,
    assemble_stiffness,
    compatibility_residual,
    gauss_points,
)
from .geometry import ConstraintKind, ConstraintPiece, DomainSpec, Mesh, build_mesh
from .kernels import Kernel
from .operators import ScalarField, fractional_laplacian_many, fractional_neumann_many, gaussian
from .solver import Solution, solve_linear, solve_nonlinear, solve_pure_neumann

__all__ = [
    "EXAMPLES",
    "ExperimentConfig",
    "ExperimentReport",
    "CellResult",
    "CellError",
    "ConfigError",
    "local_reference",
    "manufactured_fractional",
    "l2_error",
    "fit_rate",
    "boundary_jump",
    "build_problem",
    "solve_cell",
    "run_example",
    "default_config",
    "cache_dir",
]

EXAMPLES = ("Ex1_Ndelta", "Ex1_NdeltaHat", "Ex2a", "Ex2b", "Ex3_Ndelta", "Ex3_NdeltaHat", "Custom")

_DEFAULTS = {
    "Ex1_Ndelta": dict(s=[-1.0, 0.25, 0.75], delta=[0.08, 0.04, 0.02], h=1 / 2000),
    "Ex1_NdeltaHat": dict(s=[-1.0, 0.25, 0.75], delta=[0.08, 0.04, 0.02], h=1 / 2000),
    "Ex2a": dict(s=[-1.0, 0.25, 0.75], delta=[0.16, 0.08, 0.04], h=1 / 1000),
    "Ex2b": dict(s=[-1.0, 0.25, 0.75], delta=[0.16, 0.08, 0.04], h=1 / 1000),
    "Ex3_Ndelta": dict(s=[0.25, 0.5, 0.75], delta=[5.0, 10.0, 20.0], h=1 / 100),
    "Ex3_NdeltaHat": dict(s=[0.25, 0.5, 0.75], delta=[5.0, 10.0, 20.0], h=1 / 100),
    "Custom": dict(s=[0.5], delta=[0.1], h=1 / 100),
}


class ConfigError(ValueError):
    """Invalid study configuration."""


class CellError(RuntimeError):
    """Numerical failure in one (s, delta) cell."""

    def __init__(self, example, s, delta, cause):
        self.example, self.s, self.delta, self.cause = example, s, delta, cause
        super().__init__(f"{example} cell (s={s:g}, delta={delta:g}) failed: {cause}")


@dataclass
class ExperimentConfig:
    """One study: an example id and a grid of (s, delta) cells at fixed h."""

    example: str
    s: list
    delta: list
    h: float
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    solver_tol: float = 1e-10
    out: str = "out"
    emit_curves: bool = False
    threads: int = 1
    custom: dict = field(default_factory=dict)

    @property
    def oracle_tol(self) -> float:
        """Tail tolerance of the manufactured-data oracle.

        Mixed absolute/relative target; the manufactured solution has unit
        sup norm, so the relative part is ``rel_tol`` itself.
        """
        return max(self.abs_tol, self.rel_tol)

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise ConfigError(f"unknown example {self.example!r}; expected one of {', '.join(EXAMPLES)}")
        self.s = [float(v) for v in np.atleast_1d(self.s)]
        self.delta = [float(v) for v in np.atleast_1d(self.delta)]
        self.h = float(self.h)
        if not self.s or not self.delta:
            raise ConfigError("s and delta lists must be nonempty")
        if not self.h > 0:
            raise ConfigError(f"h must be positive, got {self.h}")
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.solver_tol > 0):
            raise ConfigError("quadrature and solver tolerances must be positive")
        if int(self.threads) < 1:
            raise ConfigError("threads must be at least 1")
        self.threads = int(self.threads)
        for d in self.delta:
            if not d > 0:
                raise ConfigError(f"delta must be positive, got {d}")
            ratio = d / self.h
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
                raise ConfigError(f"r = delta/h = {ratio:.6g} not integer for delta={d:g}, h={self.h:g}")
            if self.example in ("Ex2a", "Ex2b") and round(ratio) % 2:
                raise ConfigError(f"r = {round(ratio)} must be even so that -delta/2 is a mesh node")
        for s in self.s:
            if not s < 1:
                raise ConfigError(f"s must be < 1, got {s}")
            if self.example.startswith("Ex3") and not 0 < s < 1:
                raise ConfigError(f"Example 3 needs 0 < s < 1, got {s}")
        a, b = map(float, self.custom.get("omega", (0.0, 1.0)))
        if abs((b - a) / self.h - round((b - a) / self.h)) > 1e-9 * (b - a) / self.h:
            raise ConfigError(f"|Omega|/h = {(b - a) / self.h:.6g} not integer")


def default_config(example: str, **overrides) -> ExperimentConfig:
    """Desk-scale default grid for an example."""
    if example not in _DEFAULTS:
        raise ConfigError(f"unknown example {example!r}")
    args = dict(_DEFAULTS[example])
    args.update(overrides)
    return ExperimentConfig(example=example, **args)


@dataclass
class CellResult:
    example: str
    s: float
    delta: float
    h: float
    l2_error: float
    runtime_s: float
    mesh: Mesh
    solution: Solution
    alignment: str | None = None
    compatibility: float | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    rows: list
    rates: list
    cells: dict

    def errors(self, s: float):
        return [(r["delta"], r["l2_error"]) for r in self.rows if r["s"] == s]


# ---------------------------------------------------------------------------
# references and data


def local_reference(example: str, align: str | None = "mean_zero_on_omega") -> ScalarField:
    """Local limit solution of Examples 1 and 2.

    Example 1: ``x^4/12 - x^3/6 + x/6 + C`` with ``C`` fixed by the
    alignment rule (zero mean on (0, 1) gives ``C = -7/120``; ``align=None``
    gives ``C = 0``).  Example 2: the constant 1.
    """
    if example.startswith("Ex1"):
        C = -7.0 / 120.0 if align == "mean_zero_on_omega" else 0.0
        return ScalarField(lambda x: x**4 / 12.0 - x**3 / 6.0 + x / 6.0 + C)
    if example.startswith("Ex2"):
        return ScalarField(lambda x: np.ones_like(x))
    raise ValueError(f"no local reference for example {example!r}")


def cache_dir() -> Path:
    env = os.environ.get("NONLOCAL_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "nonlocal_diffusion"


class _PointCache:
    """Values of one oracle at points, memoized in memory and on disk."""

    _lock = threading.Lock()

    def __init__(self, name: str, compute, directory: Path | None):
        self.name = name
        self.compute = compute
        self.path = None if directory is None else Path(directory) / f"{name}.npz"
        self.table: dict = {}
        self.hits = self.misses = 0
        if self.path is not None and self.path.exists():
            with np.load(self.path) as data:
                self.table = dict(zip(data["x"].tolist(), data["v"].tolist()))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty(flat.size)
        missing = []
        for i, xi in enumerate(flat.tolist()):
            v = self.table.get(xi)
            if v is None:
                missing.append(i)
            else:
                out[i] = v
        self.hits += flat.size - len(missing)
        if missing:
            idx = np.asarray(missing)
            pts = np.unique(flat[idx])
            vals = np.asarray(self.compute(pts), dtype=float)
            self.table.update(zip(pts.tolist(), vals.tolist()))
            for i in missing:
                out[i] = self.table[flat[i]]
            self.misses += pts.size
            self.save()
        return out.reshape(x.shape)

    def save(self):
        if self.path is None:
            return
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            xs = np.fromiter(self.table.keys(), dtype=float, count=len(self.table))
            vs = np.fromiter(self.table.values(), dtype=float, count=len(self.table))
            tmp = self.path.with_name(self.path.stem + f".{os.getpid()}.{threading.get_ident()}.tmp.npz")
            np.savez(tmp, x=xs, v=vs)
            os.replace(tmp, self.path)


_ORACLES: dict = {}
_ORACLE_LOCK = threading.Lock()


def manufactured_fractional(s: float, variant: str = "omega_integral", *, tol: float = 1e-13,
                            use_disk: bool = True, omega=(0.0, 1.0)):
    """Data for the Gaussian manufactured solution of the fractional problem.

    Returns ``(f, g, u_inf)``: ``f = (-Delta)^s u_inf + u_inf`` on Omega and
    the fractional Neumann data ``g`` (variant ``omega_integral`` or
    ``full_line``) on the complement.  ``tol`` bounds the truncated tail
    of the principal-value integral.  Values are memoized per point and,
    with ``use_disk``, cached under :func:`cache_dir`.
    """
    if not 0 < s < 1:
        raise ValueError(f"fractional data needs 0 < s < 1, got {s}")
    variant = {"omegaintegral": "omega_integral", "fullline": "full_line"}.get(
        variant.lower().replace("-", "_").replace("_", ""), variant)
    if variant not in ("omega_integral", "full_line"):
        raise ValueError(f"unknown variant {variant!r}")
    u = gaussian(0.5)
    directory = cache_dir() if use_disk else None
    key = (float(s), variant, float(tol), tuple(omega), directory)
    with _ORACLE_LOCK:
        if key not in _ORACLES:
            tag = f"s{s:.6g}_{variant}_tol{tol:.0e}_omega{omega[0]:g},{omega[1]:g}"
            f = _PointCache(f"f_{tag}", lambda x: fractional_laplacian_many(s, u, x, tol=tol) + u(x), directory)
            g = _PointCache(f"g_{tag}", lambda x: fractional_neumann_many(s, u, x, variant, omega=omega, tol=tol),
                            directory)
            _ORACLES[key] = (f, g)
    f, g = _ORACLES[key]
    return f, g, u


def l2_error(values, u_ref, mesh: Mesh, region=None, align: str | None = None, order: int = 5) -> float:
    """L2 norm of ``u_h - u_ref`` over a mesh-aligned region (default Omega).

    With ``align="mean_zero_on_omega"`` both functions are first shifted to
    zero mean over Omega.
    """
    lo, hi = mesh.spec.omega if region is None else region
    e_lo, e_hi = mesh.node_index(lo), mesh.node_index(hi)
    elems = np.arange(e_lo, e_hi)
    xg, wg, t = gauss_points(mesh, elems, order)
    uh = values[elems, None] * (1.0 - t) + values[elems + 1, None] * t
    ur = np.asarray(u_ref(xg), dtype=float) * np.ones_like(xg)
    diff = uh - ur
    if align == "mean_zero_on_omega":
        eo = np.flatnonzero(mesh.element_in_omega)
        xo, wo, _ = gauss_points(mesh, eo, order)
        uo = values[eo, None] * (1.0 - t) + values[eo + 1, None] * t
        ro = np.asarray(u_ref(xo), dtype=float) * np.ones_like(xo)
        area = mesh.spec.omega[1] - mesh.spec.omega[0]
        diff = diff - float(np.sum((uo - ro) @ wo)) / area
    elif align is not None:
        raise ValueError(f"unknown alignment {align!r}")
    return float(math.sqrt(max(0.0, np.sum(diff**2 @ wg))))


def boundary_jump(mesh: Mesh, values, x: float | None = None) -> float:
    """``|u_h(x) - u_h(x - h)|``, the change across the element ending at ``x``.

    A continuous P1 function cannot jump, so a discontinuity of the
    continuum solution shows up as a one-element change that persists
    under refinement.  ``x`` defaults to the left end of Omega.
    """
    j = mesh.node_index(mesh.spec.omega[0] if x is None else x)
    if j < 1:
        raise ValueError("no element to the left of x")
    return float(abs(values[j] - values[j - 1]))


def fit_rate(points, inverse: bool = False):
    """Least-squares slope of log(error) against log(delta) (or log(1/delta)).

    Returns ``(rate, r2)``.
    """
    pts = [(float(d), float(e)) for d, e in points]
    if len(pts) < 2:
        raise ValueError("need at least two points to fit a rate")
    d = np.array([p[0] for p in pts])
    e = np.array([p[1] for p in pts])
    if np.any(d <= 0) or np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("rate fit needs positive finite values")
    X = np.log(1.0 / d) if inverse else np.log(d)
    if np.ptp(X) == 0:
        raise ValueError("degenerate abscissae in rate fit")
    Y = np.log(e)
    slope, icpt = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + icpt)
    ss = np.sum((Y - Y.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid**2) / ss) if ss > 0 else 1.0
    return float(slope), r2


# ---------------------------------------------------------------------------
# problem construction


def _const(c):
    return lambda x: np.full(np.shape(x), float(c))


def _example_pieces(example: str, delta: float, s: float, tol: float = 1e-13):
    a, b = 0.0, 1.0
    L, R = (a - delta, a), (b, b + delta)
    if example.startswith("Ex1"):
        kind = ConstraintKind.NEUMANN if example == "Ex1_Ndelta" else ConstraintKind.NEUMANN_HAT
        return [ConstraintPiece(L, kind, _const(-1.0 / (6.0 * delta))), ConstraintPiece(R, kind, _const(0.0))]
    if example == "Ex2a":
        return [ConstraintPiece((a - delta, a - delta / 2), "neumann", _const(-1.0 / (3.0 * delta))),
                ConstraintPiece((a - delta / 2, a), "dirichlet", _const(1.0)),
                ConstraintPiece(R, "dirichlet", _const(1.0))]
    if example == "Ex2b":
        return [ConstraintPiece((a - delta, a - delta / 2), "dirichlet", _const(1.0)),
                ConstraintPiece((a - delta / 2, a), "neumann", _const(-1.0 / (3.0 * delta))),
                ConstraintPiece(R, "dirichlet", _const(1.0))]
    if example.startswith("Ex3"):
        variant = "omega_integral" if example == "Ex3_Ndelta" else "full_line"
        kind = ConstraintKind.NEUMANN if example == "Ex3_Ndelta" else ConstraintKind.NEUMANN_HAT
        _, g, _ = manufactured_fractional(s, variant, tol=tol)
        return [ConstraintPiece(L, kind, g), ConstraintPiece(R, kind, g)]
    raise ConfigError(f"no built-in partition for {example!r}")


def _custom_pieces(custom: dict, delta: float):
    a, b = map(float, custom.get("omega", (0.0, 1.0)))
    out = []
    for spec in custom.get("pieces", []):
        side = spec.get("side", "left")
        lo, hi = map(float, spec.get("interval", (-1.0, 0.0) if side == "left" else (0.0, 1.0)))
        anchor = a if side == "left" else b
        value = float(spec.get("value", 0.0))
        if spec.get("per_delta", False):
            value /= delta
        out.append(ConstraintPiece((anchor + lo * delta, anchor + hi * delta), spec["kind"], _const(value)))
    return (a, b), out


_FORMS = {
    "Ex1_Ndelta": FormKind.FULL_CONSTRAINED,
    "Ex1_NdeltaHat": FormKind.REGIONAL_HAT,
    "Ex2a": FormKind.FULL_CONSTRAINED,
    "Ex2b": FormKind.FULL_CONSTRAINED,
    "Ex3_Ndelta": FormKind.FULL_CONSTRAINED,
    "Ex3_NdeltaHat": FormKind.REGIONAL_HAT,
}


def build_problem(example: str, s: float, delta: float, h: float, custom: dict | None = None,
                  quad_tol: float = 1e-13):
    """Mesh, linear system and data of one cell (before solving)."""
    custom = custom or {}
    if example == "Custom":
        omega, pieces = _custom_pieces(custom, delta)
        form = FormKind(custom.get("form", "full_constrained"))
        f = _const(custom.get("f", 0.0))
        mass = custom.get("mass")
    else:
        omega, pieces = (0.0, 1.0), _example_pieces(example, delta, s, quad_tol)
        form = _FORMS[example]
        if example.startswith("Ex1"):
            f = lambda x: x * (1.0 - x)  # noqa: E731
        elif example.startswith("Ex3"):
            f = manufactured_fractional(s, "omega_integral", tol=quad_tol)[0]
        else:
            f = None
        mass = "omega" if example.startswith("Ex3") else None
    spec = DomainSpec(omega, delta, tuple(pieces))
    mesh = build_mesh(spec, h)
    kernel = Kernel(s, delta)
    A = assemble_stiffness(kernel, mesh, form)
    if mass:
        A = A + assemble_mass(mesh, mass)
    if any(p.kind is ConstraintKind.ROBIN for p in pieces):
        A = A + assemble_robin(mesh)
    b = assemble_load(mesh, f, pieces)
    system = LinearSystem(A, b, mesh=mesh)
    system = apply_dirichlet(system, mesh, pieces)
    return mesh, system, f


def solve_cell(example: str, s: float, delta: float, h: float, custom: dict | None = None,
               solver_tol: float = 1e-10, quad_tol: float = 1e-13) -> CellResult:
    """Build, solve and measure one (s, delta) cell."""
    t0 = time.perf_counter()
    custom = custom or {}
    mesh, system, f = build_problem(example, s, delta, h, custom, quad_tol)
    compat = None
    pure_neumann = not system.dirichlet and not example.startswith("Ex3") and not custom.get("mass") \
        and not any(p.kind is ConstraintKind.ROBIN for p in mesh.spec.pieces)
    alpha = float(custom.get("alpha", 0.0)) if example == "Custom" else 0.0
    if alpha > 0:
        if pure_neumann:
            system.mean_constraint = custom.get("mean_constraint", "omega_hat")
        sol = solve_nonlinear(system, alpha, float(custom.get("m", 3.0)), tol=solver_tol)
    elif pure_neumann:
        compat = compatibility_residual(mesh, f)
        sol = solve_pure_neumann(system, custom.get("mean_constraint", "omega_hat"))
    else:
        sol = solve_linear(system)
    align, extra = None, {}
    if example.startswith("Ex1"):
        # u_h has zero mean on Omega-hat, u_0 zero mean on Omega, no further shift
        ref = local_reference(example, "mean_zero_on_omega")
        extra["l2_error_mean_zero_on_omega"] = l2_error(sol.values, ref, mesh, align="mean_zero_on_omega")
        extra["jump_at_a"] = boundary_jump(mesh, sol.values)
    elif example.startswith("Ex2"):
        ref = local_reference(example)
    elif example.startswith("Ex3"):
        ref = gaussian(0.5)
    else:
        ref = _const(custom["reference"]) if custom.get("reference") is not None else None
    err = l2_error(sol.values, ref, mesh, align=align) if ref is not None else float("nan")
    return CellResult(example, s, delta, h, err, time.perf_counter() - t0, mesh, sol, align, compat, extra)


def run_example(config: ExperimentConfig) -> ExperimentReport:
    """Run every (s, delta) cell of a study and fit one rate per s.

    Cells run on ``config.threads`` worker threads; results are keyed by
    cell, so the report does not depend on completion order.
    """
    cells = [(s, d) for s in config.s for d in config.delta]

    def work(cell):
        s, d = cell
        try:
            return cell, solve_cell(config.example, s, d, config.h, config.custom, config.solver_tol,
                                    config.oracle_tol)
        except (ConfigError, CellError):
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with cell context
            raise CellError(config.example, s, d, exc) from exc

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = dict(pool.map(work, cells))
    else:
        results = dict(work(c) for c in cells)
    rows = [dict(example=config.example, s=s, delta=d, h=config.h, l2_error=results[(s, d)].l2_error,
                 runtime_s=results[(s, d)].runtime_s) for s, d in cells]
    inverse = config.example.startswith("Ex3")
    rates = []
    for s in config.s:
        pts = [(d, results[(s, d)].l2_error) for d in config.delta]
        if len(pts) >= 2 and all(np.isfinite(e) and e > 0 for _, e in pts):
            rate, r2 = fit_rate(pts, inverse=inverse)
        else:
            rate, r2 = float("nan"), float("nan")
        rates.append(dict(example=config.example, s=s, rate=rate, r2=r2))
    return ExperimentReport(rows, rates, results)
