"""Physical parameters, state vectors and the pointwise nonlinear terms.

The Westervelt equation is handled in its quasilinear form

    (c^-2 - 2 gamma u) u_tt - Lap u - beta Lap u_t = 2 gamma u_t^2

together with the order-zero absorbing boundary condition

    d_nu (u + beta u_t) + u_t sqrt(c^-2 - 2 gamma u) = 0.

Everything here works pointwise and accepts scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegeneracyError

#: default degeneracy floor, in units of c^-2
EPS_DEG_REL = 1e-6


@dataclass(frozen=True)
class PhysicalParams:
    """Sound speed ``c``, diffusivity ``beta`` and nonlinearity ``gamma``.

    ``gamma = 0`` is accepted as the linear limit used by the oracle tests;
    the threshold is then infinite.
    """

    c: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        problems = []
        for name in ("c", "beta"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                problems.append(f"{name} must be > 0 (got {val!r})")
        if not np.isfinite(self.gamma) or self.gamma < 0:
            problems.append(f"gamma must be >= 0 (got {self.gamma!r})")
        if problems:
            raise ConfigError("; ".join(problems), problems)

    @property
    def inv_c2(self) -> float:
        return 1.0 / (self.c * self.c)

    def threshold(self) -> float:
        """Pressure level 1/(2 gamma c^2) at which the equation degenerates."""
        return threshold(self)

    @property
    def default_eps_deg(self) -> float:
        return EPS_DEG_REL * self.inv_c2


def threshold(params: PhysicalParams) -> float:
    if params.gamma == 0:
        return np.inf
    return 1.0 / (2.0 * params.gamma * params.c * params.c)


def coefficient(u, params: PhysicalParams, eps_deg: float | None = None):
    """Return c^-2 - 2 gamma u, raising once it falls to the floor ``eps_deg``."""
    if eps_deg is None:
        eps_deg = params.default_eps_deg
    a = params.inv_c2 - 2.0 * params.gamma * np.asarray(u, dtype=float)
    # the negated comparison also catches NaN
    if not np.all(a > eps_deg):
        amin = float(np.nanmin(a)) if np.any(np.isfinite(a)) else float("nan")
        raise DegeneracyError(
            f"coefficient c^-2 - 2 gamma u = {amin:.3e} is below the floor {eps_deg:.3e}"
        )
    return a if a.ndim else float(a)


def cr(r: float, params: PhysicalParams) -> float:
    """Boundary impedance sqrt(c^-2 - 2 gamma r) at the equilibrium level r."""
    if abs(r) >= threshold(params):
        raise DegeneracyError(f"|r| = {abs(r)} is not below the threshold {threshold(params)}")
    return float(np.sqrt(params.inv_c2 - 2.0 * params.gamma * r))


def rhs_nonlinearity(v, u, params: PhysicalParams, eps_deg: float | None = None):
    """Quadratic forcing 2 gamma v^2 / (c^-2 - 2 gamma u)."""
    a = coefficient(u, params, eps_deg)
    return 2.0 * params.gamma * np.square(v) / a


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float).ravel()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class State:
    """Nodal pressure ``u``, its rate ``v = u_t`` and the time ``t``.

    If ``params`` is given the state is checked for sup-norm admissibility
    ``max|u| < threshold - margin`` at construction.
    """

    u: np.ndarray
    v: np.ndarray
    t: float = 0.0
    params: PhysicalParams | None = field(default=None, repr=False, compare=False)
    margin: float = field(default=0.0, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen(self.u))
        object.__setattr__(self, "v", _frozen(self.v))
        object.__setattr__(self, "t", float(self.t))
        if self.u.shape != self.v.shape:
            raise ConfigError(f"u has {self.u.size} nodes but v has {self.v.size}")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ConfigError("state contains non-finite values")
        if self.params is not None:
            limit = threshold(self.params) - self.margin
            umax = float(np.max(np.abs(self.u))) if self.u.size else 0.0
            if not umax < limit:
                raise DegeneracyError(
                    f"max|u| = {umax} is not below threshold - margin = {limit}"
                )

    @property
    def size(self) -> int:
        return self.u.size

    def stacked(self) -> np.ndarray:
        """All-u-then-all-v vector."""
        return np.concatenate([self.u, self.v])

    @classmethod
    def from_stacked(cls, w, t=0.0, **kwargs) -> "State":
        w = np.asarray(w, dtype=float)
        n = w.size // 2
        return cls(w[:n], w[n:], t, **kwargs)

    @classmethod
    def constant(cls, r: float, n: int, t: float = 0.0) -> "State":
        return cls(np.full(n, float(r)), np.zeros(n), t)


@dataclass(frozen=True)
class Equilibrium:
    """Constant state (r, 0)."""

    r: float
    params: PhysicalParams

    def __post_init__(self):
        if not abs(self.r) < threshold(self.params):
            raise DegeneracyError(
                f"equilibrium level |r| = {abs(self.r)} must be below {threshold(self.params)}"
            )

    @property
    def cr(self) -> float:
        return cr(self.r, self.params)

    def state(self, n: int, t: float = 0.0) -> State:
        return State.constant(self.r, n, t)
