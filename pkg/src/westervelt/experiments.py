"""Experiment drivers: initial data, compatibility, rate fits, reflection, MMS."""

from __future__ import annotations

import difflib
import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sy

from . import grid as gridmod
from .errors import (
    ConfigError,
    DegeneracyError,
    EnforcementFailure,
    FitUnreliable,
    ProbeAmbiguous,
    SolverError,
)
from .model import PhysicalParams, State, coefficient, threshold
from .report import ExperimentReport
from .stepper import StepperConfig, WesterveltSystem

COMP_TOL = 1e-10
FIT_TOL = 0.1

# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

INITIAL_RECIPES = {
    "equilibrium": {"r": 0.0},
    "gaussian": {"amplitude": 0.01, "center": 0.5, "center_y": 0.5, "width": 0.1, "r": 0.0, "velocity": 0.0},
    "cosine": {"amplitude": 0.01, "mode": 1.0, "r": 0.0, "velocity": 0.0},
    "pulse": {"amplitude": 0.01, "center": 0.5, "width": 0.1},
    "bump-velocity": {"r": 0.0, "velocity": 0.01},
    "linear-velocity": {"r": 0.0, "slope": 1.0},
}


@dataclass(frozen=True)
class InitialData:
    u0: np.ndarray
    u1: np.ndarray
    provenance: dict = field(default_factory=dict, compare=False)
    params: PhysicalParams | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name in ("u0", "u1"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.u0.shape != self.u1.shape:
            raise ConfigError("u0 and u1 must have the same length")
        if not (np.all(np.isfinite(self.u0)) and np.all(np.isfinite(self.u1))):
            raise ConfigError("initial data contain non-finite values")
        if self.params is not None:
            umax = float(np.max(np.abs(self.u0)))
            if not umax < threshold(self.params):
                raise DegeneracyError(
                    f"max|u0| = {umax} is not below the threshold {threshold(self.params)}"
                )

    def state(self, t: float = 0.0) -> State:
        return State(self.u0, self.u1, t)


def check_recipe_params(recipe: str, given: dict) -> list[str]:
    """Complaints about an initial-data recipe id and its parameter names."""
    if recipe not in INITIAL_RECIPES:
        near = difflib.get_close_matches(recipe, INITIAL_RECIPES, n=1)
        hint = f" (did you mean {near[0]!r}?)" if near else ""
        return [f"unknown initial recipe {recipe!r}{hint}"]
    problems = []
    known = INITIAL_RECIPES[recipe]
    for key in given:
        if key not in known:
            near = difflib.get_close_matches(key, known, n=1)
            hint = f" (did you mean {near[0]!r}?)" if near else ""
            problems.append(f"unknown parameter {key!r} for recipe {recipe!r}{hint}")
    return problems


def _smooth_bump(s):
    """C-infinity bump on the middle half of [0, 1], peak 1 at s = 1/2, zero elsewhere."""
    rho = np.abs(np.asarray(s) - 0.5) / 0.25
    out = np.zeros_like(rho)
    inside = rho < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - rho[inside] ** 2))
    return out


def make_initial_data(recipe: str, grid: gridmod.Grid, params: PhysicalParams, **kwargs) -> InitialData:
    problems = check_recipe_params(recipe, kwargs)
    if problems:
        raise ConfigError("; ".join(problems), problems)
    p = {**INITIAL_RECIPES[recipe], **kwargs}
    X = grid.coords
    (ax, bx) = grid.extents[0]
    s = [(X[k] - a) / (b - a) for k, (a, b) in enumerate(grid.extents)]
    ones = np.ones(grid.size)

    if recipe == "equilibrium":
        u0, u1 = p["r"] * ones, 0.0 * ones
    elif recipe == "gaussian":
        d2 = (X[0] - p["center"]) ** 2
        if grid.dim == 2:
            d2 = d2 + (X[1] - p["center_y"]) ** 2
        bump = np.exp(-d2 / p["width"] ** 2)
        u0, u1 = p["r"] + p["amplitude"] * bump, p["velocity"] * bump
    elif recipe == "cosine":
        phi = np.prod([np.cos(p["mode"] * np.pi * sk) for sk in s], axis=0)
        u0, u1 = p["r"] + p["amplitude"] * phi, p["velocity"] * phi
    elif recipe == "pulse":
        if grid.dim != 1:
            raise ConfigError("the 'pulse' recipe is one-dimensional")
        u0 = p["amplitude"] * np.exp(-(((X[0] - p["center"]) / p["width"]) ** 2))
        # rightward d'Alembert pairing u_t = -c u_x
        u1 = -params.c * np.gradient(u0, grid.h[0], edge_order=2)
    elif recipe == "bump-velocity":
        u0, u1 = p["r"] * ones, p["velocity"] * np.prod([_smooth_bump(sk) for sk in s], axis=0)
    else:  # linear-velocity
        u0, u1 = p["r"] * ones, p["slope"] * (X[0] - ax)
    return InitialData(u0, u1, {"recipe": recipe, **p}, params)


# ---------------------------------------------------------------------------
# compatibility of initial data with the boundary condition
# ---------------------------------------------------------------------------


def compatibility_residual(data: InitialData, params: PhysicalParams, grid: gridmod.Grid) -> np.ndarray:
    """D_nu(u0 + beta u1) + u1 sqrt(c^-2 - 2 gamma u0) on the boundary nodes."""
    ib = grid.boundary_index
    D = gridmod.normal_derivative_factored(grid)
    k = coefficient(data.u0[ib], params)
    return (D @ (data.u0 + params.beta * data.u1))[ib] + data.u1[ib] * np.sqrt(k)


def collar_index(grid: gridmod.Grid, width: int = 2) -> np.ndarray:
    """Nodes within ``width - 1`` index steps of the boundary."""
    idx = [np.arange(m) for m in grid.n]
    near = [np.minimum(i, m - 1 - i) < width for i, m in zip(idx, grid.n)]
    if grid.dim == 1:
        return np.flatnonzero(near[0])
    return np.flatnonzero((near[0][None, :] | near[1][:, None]).ravel())


def enforce_compatibility(
    data: InitialData,
    params: PhysicalParams,
    grid: gridmod.Grid,
    width: int = 2,
    tol: float = COMP_TOL,
    max_condition: float = 1e12,
) -> InitialData:
    """Smallest l2 change of u1 on the boundary collar that zeroes the residual.

    The residual is affine in u1, so the correction is the minimum-norm
    solution of an underdetermined linear system. u0 is left untouched. The
    returned provenance records ``compat_correction_norm`` and
    ``compat_condition``.
    """
    ib = grid.boundary_index
    col = collar_index(grid, width)
    res = compatibility_residual(data, params, grid)
    sqrt_k = np.sqrt(coefficient(data.u0[ib], params))
    C = params.beta * gridmod.normal_derivative(grid)[ib, :].toarray()
    C[np.arange(ib.size), ib] += sqrt_k
    Cc = C[:, col]
    sv = np.linalg.svd(Cc, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if not cond < max_condition:
        raise EnforcementFailure(f"collar correction system is singular (condition {cond:.3e})")
    delta = np.linalg.lstsq(Cc, -res, rcond=None)[0]
    u1 = np.array(data.u1)
    u1[col] += delta
    out = InitialData(
        data.u0,
        u1,
        {**data.provenance, "compat_correction_norm": float(np.linalg.norm(delta)),
         "compat_condition": cond},
        data.params,
    )
    left = float(np.max(np.abs(compatibility_residual(out, params, grid))))
    if not left < tol:
        raise EnforcementFailure(f"residual {left:.3e} after correction exceeds {tol:.1e}")
    return out


# ---------------------------------------------------------------------------
# convergence to equilibrium
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    r_inf: float
    omega: float
    fit_residual: float
    window: tuple[float, float]


def fit_equilibrium_convergence(
    report: ExperimentReport,
    grid: gridmod.Grid,
    params: PhysicalParams,
    fit_tol: float = FIT_TOL,
    min_decay: float = 1e3,
) -> FitResult:
    """Fit d(t) = sup|u - r_inf| + sup|v| ~ exp(-omega t) over the final decade.

    r_inf is the trapezoidal mean of the final u. Needs a report recorded with
    ``keep_states=True``.
    """
    if not report.states:
        raise FitUnreliable("report has no stored states (run with keep_states=True)")
    sup_v = report.column("sup_v")
    peak = float(np.max(sup_v))
    if not (peak > 0 and sup_v[-1] <= peak / min_decay):
        raise FitUnreliable(
            f"sup|v| fell from {peak:.3e} to {sup_v[-1]:.3e}; need a drop of {min_decay:g}"
        )
    r_inf = grid.mean(report.states[-1].u)
    if not abs(r_inf) < threshold(params):
        raise FitUnreliable(f"r_inf = {r_inf} is outside the admissible range")
    t = report.column("t")
    d = np.array([np.max(np.abs(s.u - r_inf)) + np.max(np.abs(s.v)) for s in report.states])
    above = np.flatnonzero(d >= 10.0 * d[-1])
    start = int(above[-1]) if above.size else 0
    tw, dw = t[start:], d[start:]
    if tw.size < 3 or not np.all(dw > 0):
        raise FitUnreliable("decay window too short")
    slope, icept = np.polyfit(tw, np.log(dw), 1)
    rms = float(np.sqrt(np.mean((np.log(dw) - (slope * tw + icept)) ** 2)))
    if not rms < fit_tol:
        raise FitUnreliable(f"log-linear fit residual {rms:.3g} exceeds {fit_tol}")
    result = FitResult(float(r_inf), float(-slope), rms, (float(tw[0]), float(tw[-1])))
    report.fitted.update(r_inf=result.r_inf, omega=result.omega, fit_residual=rms)
    return result


def bisect_stable_amplitude(run_ok, lo: float, hi: float, iters: int = 12) -> float:
    """Largest amplitude in [lo, hi] for which ``run_ok(amplitude)`` holds.

    ``run_ok(lo)`` must hold. Used once to pick small-data fixtures.
    """
    if not run_ok(lo):
        raise ValueError("lower bracket does not survive")
    if run_ok(hi):
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if run_ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# boundary reflection
# ---------------------------------------------------------------------------


@dataclass
class ReflectionResult:
    incident_amp: float
    reflected_amp: float
    ratio: float
    probe_x: float
    t_split: float
    probe_signal: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)


def reflection_experiment(
    params: PhysicalParams,
    bc_variant: str = "abc",
    amplitude: float = 0.01,
    length: float = 2.0,
    n: int = 201,
    center: float = 0.6,
    width: float = 0.08,
    probe: float = 1.2,
    dt: float = 0.01,
    scheme: str = "tr-bdf2",
    overlap_tol: float = 0.05,
) -> ReflectionResult:
    """Send a rightward Gaussian pulse at the right wall and compare echoes at a probe.

    The probe record is split at the time the pulse centre reaches the wall;
    the incident amplitude is the max |u| before, the reflected one the max
    after. Runs until the echo has passed the probe.
    """
    grid = gridmod.build_grid(1, (0.0, length), n)
    data = make_initial_data("pulse", grid, params, amplitude=amplitude, center=center, width=width)
    x = grid.coords[0]
    ip = int(np.argmin(np.abs(x - probe)))
    t_split = (length - center) / params.c
    t_end = (2.0 * length - x[ip] - center) / params.c + 4.0 * width / params.c
    times, signal = [], []

    def record(state):
        times.append(state.t)
        signal.append(state.u[ip])

    system = WesterveltSystem(grid, params, boundary=bc_variant)
    system.simulate(data.state(), t_end, StepperConfig(dt=dt, scheme=scheme), observers=[record])
    times, signal = np.array(times), np.abs(np.array(signal))
    before, after = times < t_split, times >= t_split
    incident = float(signal[before].max()) if before.any() else 0.0
    reflected = float(signal[after].max()) if after.any() else 0.0
    if not incident > 0:
        raise ProbeAmbiguous("no incident pulse reached the probe")
    at_split = float(signal[np.argmin(np.abs(times - t_split))])
    if at_split > overlap_tol * incident:
        raise ProbeAmbiguous(
            f"probe signal at the split time is {at_split / incident:.2%} of the incident peak"
        )
    return ReflectionResult(incident, reflected, reflected / incident, float(x[ip]), t_split, signal, times)


# ---------------------------------------------------------------------------
# manufactured solutions
# ---------------------------------------------------------------------------

MMS_RECIPES = {
    # u* = eps cos(k pi s) exp(-rate t), s the normalized coordinate(s)
    "cos-exp": {"eps": 0.01, "mode": 1.0, "rate": 1.0},
    "sin-exp": {"eps": 0.01, "mode": 1.0, "rate": 0.5},
}


class ManufacturedSolution:
    """Analytic u*(t, x[, y]) with the forcing that makes it an exact solution.

    Interior forcing f = k(u*) u*_tt - Lap u* - beta Lap u*_t - 2 gamma (u*_t)^2
    and boundary forcing g = d_nu(u* + beta u*_t) + u*_t sqrt(k(u*)) are
    derived symbolically.
    """

    def __init__(self, recipe: str, params: PhysicalParams, dim: int = 1, extents=((0.0, 1.0),), **kw):
        if recipe not in MMS_RECIPES:
            raise ConfigError(f"unknown MMS recipe {recipe!r}")
        bad = set(kw) - set(MMS_RECIPES[recipe])
        if bad:
            raise ConfigError(f"unknown MMS parameters {sorted(bad)}")
        self.recipe = recipe
        self.values = {**MMS_RECIPES[recipe], **kw}
        self.params = params
        self.dim = dim
        t = sy.Symbol("t")
        xs = sy.symbols("x y")[:dim]
        ext = list(extents) * dim if len(extents) == 1 else list(extents)
        shape_fn = sy.cos if recipe == "cos-exp" else sy.sin
        k = sy.nsimplify(self.values["mode"])
        shape = sy.Integer(1)
        for xi, (a, b) in zip(xs, ext):
            s = (xi - sy.nsimplify(a)) / (sy.nsimplify(b) - sy.nsimplify(a))
            shape *= shape_fn(k * sy.pi * s)
        eps = sy.nsimplify(self.values["eps"])
        u = eps * shape * sy.exp(-sy.nsimplify(self.values["rate"]) * t)
        ut = sy.diff(u, t)
        beta, gamma = sy.nsimplify(params.beta), sy.nsimplify(params.gamma)
        kcoef = sy.nsimplify(params.inv_c2) - 2 * gamma * u
        lap = lambda e: sum(sy.diff(e, xi, 2) for xi in xs)
        f = kcoef * sy.diff(u, t, 2) - lap(u) - beta * lap(ut) - 2 * gamma * ut**2
        q = u + beta * ut
        args = (t, *xs)
        self._u = sy.lambdify(args, u, "numpy")
        self._ut = sy.lambdify(args, ut, "numpy")
        self._f = sy.lambdify(args, f, "numpy")
        self._grad_q = [sy.lambdify(args, sy.diff(q, xi), "numpy") for xi in xs]
        self._k = sy.lambdify(args, kcoef, "numpy")

    def _eval(self, fn, t, X):
        return np.broadcast_to(np.asarray(fn(t, *X), dtype=float), X[0].shape).copy()

    def u(self, t, grid):
        return self._eval(self._u, t, grid.coords)

    def ut(self, t, grid):
        return self._eval(self._ut, t, grid.coords)

    def source(self, grid: gridmod.Grid):
        X = grid.coords
        ib = grid.boundary_index
        Xb = tuple(xk[ib] for xk in X)
        nu = grid.normals

        def forcing(t):
            f = self._eval(self._f, t, X)
            dq = sum(nu[:, k] * self._eval(self._grad_q[k], t, Xb) for k in range(grid.dim))
            g = dq + self._eval(self._ut, t, Xb) * np.sqrt(self._eval(self._k, t, Xb))
            return f, g

        return forcing

    def initial_state(self, grid) -> State:
        return State(self.u(0.0, grid), self.ut(0.0, grid), 0.0)


@dataclass
class MMSResult:
    kind: str
    resolutions: list
    errors: list
    orders: list
    triplet_orders: list


def _orders(errors, steps):
    e = np.asarray(errors, dtype=float)
    s = np.asarray(steps, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return list(np.log(e[:-1] / e[1:]) / np.log(s[:-1] / s[1:]))


def mms_convergence_study(
    recipe: str | ManufacturedSolution,
    resolutions,
    cfg: StepperConfig,
    params: PhysicalParams | None = None,
    kind: str = "space",
    t_end: float = 0.5,
    n: int = 65,
    dim: int = 1,
    extents=((0.0, 1.0),),
    **recipe_params,
) -> MMSResult:
    """Sup-norm error of the forced simulation against u* at ``t_end``.

    ``kind="space"``: ``resolutions`` are node counts per axis, ``cfg.dt`` fixed.
    ``kind="time"``: ``resolutions`` are time steps on an ``n``-node grid.
    ``orders`` come from consecutive analytic errors; ``triplet_orders`` from
    differences of consecutive discrete solutions (nested grids or steps),
    which cancel the error component that does not change with the resolution.
    """
    if kind not in ("space", "time"):
        raise ConfigError(f"kind must be 'space' or 'time' (got {kind!r})")
    if isinstance(recipe, ManufacturedSolution):
        sol = recipe
        params = sol.params
    else:
        params = params or PhysicalParams()
        sol = ManufacturedSolution(recipe, params, dim, extents, **recipe_params)
    ext = list(extents) * dim if len(extents) == 1 else list(extents)

    finals, grids, errors, steps = [], [], [], []
    for res in resolutions:
        if kind == "space":
            grid = gridmod.build_grid(dim, ext, int(res))
            run_cfg = cfg
            steps.append(grid.h[0])
        else:
            grid = gridmod.build_grid(dim, ext, n)
            run_cfg = StepperConfig(float(res), cfg.scheme, cfg.newton_tol, cfg.newton_max_iter, cfg.eps_deg)
            steps.append(float(res))
        system = WesterveltSystem(grid, params, source=sol.source(grid))
        report = system.simulate(sol.initial_state(grid), t_end, run_cfg, keep_states=True)
        u_end = report.states[-1].u
        finals.append(u_end)
        grids.append(grid)
        errors.append(float(np.max(np.abs(u_end - sol.u(t_end, grid)))))

    triplet = []
    if len(finals) >= 3:
        diffs = []
        for k in range(len(finals) - 1):
            a, b = finals[k], finals[k + 1]
            if kind == "space":
                b = _restrict_to_coarse(grids[k + 1], grids[k], b)
                if b is None:
                    diffs = []
                    break
            diffs.append(float(np.max(np.abs(a - b))))
        if diffs:
            triplet = _orders(diffs, steps[:-1])
    return MMSResult(kind, list(resolutions), errors, _orders(errors, steps), triplet)


def _restrict_to_coarse(fine: gridmod.Grid, coarse: gridmod.Grid, field):
    ratios = [(mf - 1) / (mc - 1) for mf, mc in zip(fine.n, coarse.n)]
    if any(r != int(r) for r in ratios):
        return None
    f = np.asarray(field).reshape(fine.n[::-1])
    if fine.dim == 1:
        return f[:: int(ratios[0])]
    return f[:: int(ratios[1]), :: int(ratios[0])].ravel()


def run_safely(system: WesterveltSystem, state: State, t_end: float, cfg: StepperConfig):
    """simulate() returning (report, error) instead of raising solver errors."""
    try:
        return system.simulate(state, t_end, cfg, keep_states=True), None
    except SolverError as exc:
        return exc.report, exc
