"""Implicit time stepping of the first-order system w = (u, v), v = u_t.

Every implicit stage solves, for the stacked unknown w = [u; v],

    u-rows, all nodes:      (u - b_u) / (a dt) - v                            = 0
    v-rows, interior:       k(u) (v - b_v) / (a dt) - L u - beta L v - 2 gamma v^2 - f = 0
    v-rows, boundary (ABC): D (u + beta v) + v sqrt(k(u)) - g                 = 0

with k(u) = c^-2 - 2 gamma u, L the Laplacian, D the outward normal
derivative, and (b, a) the stage base vector and weight. Backward Euler is a
single stage with b = w_old, a = 1. TR-BDF2 runs a trapezoidal stage to
t + g dt followed by a BDF2 stage to t + dt, g = 2 - sqrt(2).

Newton uses the exact Jacobian and a sparse LU solve per iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import grid as gridmod
from .errors import ConfigError, DegeneracyError, NewtonDivergence, SolverError
from .model import PhysicalParams, State, coefficient
from .report import ExperimentReport

SCHEMES = ("backward-euler", "tr-bdf2")
BOUNDARY_VARIANTS = ("abc", "neumann", "dirichlet-v")

TRBDF2_GAMMA = 2.0 - math.sqrt(2.0)

#: (f, g) forcing at time t: f is a nodal field (read on interior nodes),
#: g a boundary-length or nodal field (read on boundary nodes)
Source = Callable[[float], tuple]


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    scheme: str = "tr-bdf2"
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    eps_deg: float | None = None

    def __post_init__(self):
        problems = []
        if not (self.dt > 0 and math.isfinite(self.dt)):
            problems.append(f"dt must be > 0 (got {self.dt!r})")
        if self.scheme not in SCHEMES:
            problems.append(f"scheme must be one of {SCHEMES} (got {self.scheme!r})")
        if not self.newton_tol > 0:
            problems.append(f"newton_tol must be > 0 (got {self.newton_tol!r})")
        if int(self.newton_max_iter) != self.newton_max_iter or self.newton_max_iter < 1:
            problems.append(f"newton_max_iter must be an integer >= 1 (got {self.newton_max_iter!r})")
        if self.eps_deg is not None and not self.eps_deg > 0:
            problems.append(f"eps_deg must be > 0 (got {self.eps_deg!r})")
        if problems:
            raise ConfigError("; ".join(problems), problems)


class WesterveltSystem:
    """Discrete Westervelt IBVP on a fixed grid.

    Operators are assembled once; the object holds no time-dependent state and
    can be shared between simulations.
    """

    def __init__(
        self,
        grid: gridmod.Grid,
        params: PhysicalParams,
        source: Source | None = None,
        boundary: str = "abc",
    ):
        if boundary not in BOUNDARY_VARIANTS:
            raise ConfigError(f"boundary must be one of {BOUNDARY_VARIANTS} (got {boundary!r})")
        self.grid = grid
        self.params = params
        self.source = source
        self.boundary = boundary
        self.N = grid.size
        self._Lf = gridmod.laplacian_factored(grid)
        self._Df = gridmod.normal_derivative_factored(grid)
        self.L = self._Lf.matrix
        self.D = self._Df.matrix
        self.interior = np.zeros(self.N, dtype=bool)
        self.interior[grid.interior_index] = True
        self.bnd = ~self.interior
        self._I = sp.identity(self.N, format="csr")

    # -- pieces ---------------------------------------------------------------

    def _eps(self, cfg: StepperConfig | None) -> float:
        if cfg is not None and cfg.eps_deg is not None:
            return cfg.eps_deg
        return self.params.default_eps_deg

    def _forcing(self, t: float):
        f = np.zeros(self.N)
        g = np.zeros(self.N)
        if self.source is not None:
            f_t, g_t = self.source(t)
            f = np.asarray(f_t, dtype=float) * self.interior
            g_t = np.asarray(g_t, dtype=float)
            if g_t.size == self.N:
                g = g_t * self.bnd
            else:
                g[self.grid.boundary_index] = g_t
        return f, g

    def _boundary_rows(self, u, v, k):
        if self.boundary == "abc":
            return self._Df @ (u + self.params.beta * v) + v * np.sqrt(k)
        if self.boundary == "neumann":
            return self._Df @ (u + self.params.beta * v)
        return v.copy()

    def boundary_residual(self, state: State, cfg: StepperConfig | None = None) -> np.ndarray:
        """Boundary-row residual B(w) - g on the boundary nodes."""
        k = coefficient(state.u, self.params, self._eps(cfg))
        _, g = self._forcing(state.t)
        return (self._boundary_rows(state.u, state.v, k) - g)[self.grid.boundary_index]

    def rate(self, w: np.ndarray, t: float, cfg: StepperConfig | None = None) -> np.ndarray:
        """Explicit right-hand side dw/dt; boundary v-entries are zero (algebraic rows)."""
        u, v = w[: self.N], w[self.N :]
        k = coefficient(u, self.params, self._eps(cfg))
        f, _ = self._forcing(t)
        beta, gamma = self.params.beta, self.params.gamma
        vdot = (self._Lf @ (u + beta * v) + 2.0 * gamma * v * v + f) / k
        return np.concatenate([v, vdot * self.interior])

    def stage_residual(self, w, base, adt, t, cfg=None) -> np.ndarray:
        u, v = w[: self.N], w[self.N :]
        bu, bv = base[: self.N], base[self.N :]
        k = coefficient(u, self.params, self._eps(cfg))
        f, g = self._forcing(t)
        beta, gamma = self.params.beta, self.params.gamma
        r_u = (u - bu) / adt - v
        r_int = k * (v - bv) / adt - self._Lf @ (u + beta * v) - 2.0 * gamma * v * v - f
        r_bnd = self._boundary_rows(u, v, k) - g
        r_v = np.where(self.interior, r_int, r_bnd)
        return np.concatenate([r_u, r_v])

    def stage_jacobian(self, w, base, adt, t, cfg=None) -> sp.csr_matrix:
        u, v = w[: self.N], w[self.N :]
        bv = base[self.N :]
        k = coefficient(u, self.params, self._eps(cfg))
        beta, gamma = self.params.beta, self.params.gamma
        inner = self.interior.astype(float)
        if self.boundary == "abc":
            s = np.sqrt(k)
            d_vu_bnd, d_vv_bnd = -gamma * v / s, s
            Du, Dv = self.D, beta * self.D
        elif self.boundary == "neumann":
            d_vu_bnd, d_vv_bnd = np.zeros(self.N), np.zeros(self.N)
            Du, Dv = self.D, beta * self.D
        else:
            d_vu_bnd, d_vv_bnd = np.zeros(self.N), np.ones(self.N)
            Du, Dv = None, None
        outer = 1.0 - inner
        J_uu = self._I / adt
        J_uv = -self._I
        J_vu = sp.diags(inner * (-2.0 * gamma * (v - bv) / adt) + outer * d_vu_bnd) - self.L
        J_vv = sp.diags(inner * (k / adt - 4.0 * gamma * v) + outer * d_vv_bnd) - beta * self.L
        if Du is not None:
            J_vu = J_vu + Du
            J_vv = J_vv + Dv
        return sp.bmat([[J_uu, J_uv], [J_vu, J_vv]], format="csr")

    # -- the public one-step residual (backward Euler form) --------------------

    def residual(self, w_new: State, w_old: State, cfg: StepperConfig) -> np.ndarray:
        """Backward-Euler residual of the step w_old -> w_new (length 2N)."""
        return self.stage_residual(
            w_new.stacked(), w_old.stacked(), cfg.dt, w_old.t + cfg.dt, cfg
        )

    def jacobian(self, w_new: State, w_old: State, cfg: StepperConfig) -> sp.csr_matrix:
        """Exact derivative of :meth:`residual` with respect to stacked w_new."""
        return self.stage_jacobian(
            w_new.stacked(), w_old.stacked(), cfg.dt, w_old.t + cfg.dt, cfg
        )

    # -- Newton ----------------------------------------------------------------

    def solve_stage(self, guess, base, adt, t, cfg: StepperConfig):
        """Newton iteration for one stage; returns (w, residual sup-norm history)."""
        w = np.array(guess, dtype=float)
        r = self.stage_residual(w, base, adt, t, cfg)
        history = [float(np.max(np.abs(r)))]
        increases = 0
        for _ in range(int(cfg.newton_max_iter)):
            J = self.stage_jacobian(w, base, adt, t, cfg)
            dw = spla.spsolve(J.tocsc(), -r)
            if not np.all(np.isfinite(dw)):
                raise NewtonDivergence(f"singular Newton system at t={t:.6g}", t=t)
            w = w + dw
            r = self.stage_residual(w, base, adt, t, cfg)
            rnorm = float(np.max(np.abs(r)))
            history.append(rnorm)
            if not math.isfinite(rnorm):
                raise NewtonDivergence(f"non-finite residual at t={t:.6g}", t=t)
            if rnorm <= cfg.newton_tol:
                return w, history
            increases = increases + 1 if rnorm > history[-2] else 0
            if increases >= 2:
                raise NewtonDivergence(
                    f"Newton residual grew twice in a row at t={t:.6g}: {history}", t=t
                )
        raise NewtonDivergence(
            f"Newton did not reach {cfg.newton_tol:g} in {cfg.newton_max_iter} iterations "
            f"at t={t:.6g} (last residual {history[-1]:.3e})",
            t=t,
        )

    def newton_step_solve(
        self, w_old: State, cfg: StepperConfig, dt: float | None = None, history=None
    ) -> State:
        """Advance one step of size ``dt`` (default ``cfg.dt``).

        If ``history`` is a list, each stage's residual history is appended.
        """
        dt = cfg.dt if dt is None else dt
        t0 = w_old.t
        w0 = w_old.stacked()
        try:
            if cfg.scheme == "backward-euler":
                w1, hist = self.solve_stage(w0, w0, dt, t0 + dt, cfg)
                stages = [hist]
            else:
                g = TRBDF2_GAMMA
                tg = t0 + g * dt
                base1 = w0 + 0.5 * g * dt * self.rate(w0, t0, cfg)
                wg, hist1 = self.solve_stage(w0, base1, 0.5 * g * dt, tg, cfg)
                base2 = (wg - (1.0 - g) ** 2 * w0) / (g * (2.0 - g))
                w1, hist2 = self.solve_stage(wg, base2, (1.0 - g) / (2.0 - g) * dt, t0 + dt, cfg)
                stages = [hist1, hist2]
        except SolverError as exc:
            if exc.t is None:
                exc.t = t0 + dt
            raise
        if history is not None:
            history.extend(stages)
        new = State.from_stacked(w1, t0 + dt)
        coefficient(new.u, self.params, self._eps(cfg))
        return new

    # -- diagnostics and driver -----------------------------------------------

    def diagnostics(self, state: State, cfg: StepperConfig | None = None) -> dict:
        u, v = state.u, state.v
        mean = self.grid.mean(u)
        w = gridmod.trapezoid_weights(self.grid)
        return {
            "t": state.t,
            "sup_u_dev": float(np.max(np.abs(u - mean))),
            "sup_v": float(np.max(np.abs(v))),
            "bc_residual": float(np.max(np.abs(self.boundary_residual(state, cfg)))),
            "energy": float(w @ (v * v)) + gridmod.gradient_norm_squared(self.grid, u),
            "mean_u": mean,
            "max_abs_u": float(np.max(np.abs(u))),
        }

    def simulate(
        self,
        initial: State,
        t_end: float,
        cfg: StepperConfig,
        observers: Sequence[Callable[[State], None]] = (),
        keep_states: bool = False,
    ) -> ExperimentReport:
        """Step from ``initial`` to ``t_end``, recording diagnostics after each step.

        Solver errors are re-raised with ``exc.report`` holding the partial
        report and ``exc.t`` the failing time.
        """
        if initial.size != self.N:
            raise ConfigError(f"initial state has {initial.size} nodes, grid has {self.N}")
        report = ExperimentReport()
        state = initial
        try:
            coefficient(state.u, self.params, self._eps(cfg))
            self._record(report, state, cfg, observers, keep_states)
            t0 = initial.t
            nsteps = max(0, math.ceil((t_end - t0) / cfg.dt - 1e-9))
            for k in range(1, nsteps + 1):
                t_next = t_end if k == nsteps else t0 + k * cfg.dt
                state = self.newton_step_solve(state, cfg, dt=t_next - state.t)
                state = State(state.u, state.v, t_next)
                self._record(report, state, cfg, observers, keep_states)
        except SolverError as exc:
            if exc.t is None:
                exc.t = state.t
            report.status = f"error: {type(exc).__name__} at t={exc.t:.17g}: {exc}"
            exc.report = report
            raise
        report.status = "ok"
        return report

    def _record(self, report, state, cfg, observers, keep_states):
        report.append(self.diagnostics(state, cfg))
        if keep_states:
            report.states.append(state)
        for obs in observers:
            obs(state)
