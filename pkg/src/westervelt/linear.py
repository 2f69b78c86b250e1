"""Linearization at an equilibrium (r, 0): spectrum, kernel and range.

The linearized operator acts on w = (u, v) as

    A0 (u, v) = (v, (L u + beta L v) / c_r^2)      on interior nodes,

with c_r^2 = c^-2 - 2 gamma r, and its domain is cut out by the boundary
constraint D u + beta D v + c_r v = 0. The boundary values of v carry no time
derivative, so the eigenproblem is posed on the reduced unknown
z = (u, v_interior) after solving the constraint for v on the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import grid as gridmod
from .errors import EigensolverFailure, RankToleranceAmbiguous
from .model import PhysicalParams, cr

ZERO_CLUSTER_REL = 1e-10
RANK_REL = 1e-10
RANK_BAND = 10.0
TOL_RANGE = 1e-8


@dataclass(frozen=True, eq=False)
class LinearizedOperator:
    r: float
    grid: gridmod.Grid
    params: PhysicalParams
    cr: float
    #: 2N x 2N over stacked (u, v); boundary v-rows hold the constraint
    matrix: sp.csr_matrix
    #: dense (N + Ni) x (N + Ni) operator on z = (u, v_interior)
    reduced: np.ndarray
    #: N x (N + Ni) map z -> full nodal v
    v_lift: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.reduced, 2))

    def lift(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Reduced vector -> nodal (u, v) satisfying the boundary constraint."""
        z = np.asarray(z)
        return z[: self.grid.size], self.v_lift @ z

    def apply(self, u, v) -> tuple[np.ndarray, np.ndarray]:
        """A0 (u, v) on nodal fields; boundary v-entries hold the constraint residual.

        Uses the factored stencils, so constants give an exact zero.
        """
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        L = gridmod.laplacian_factored(self.grid)
        D = gridmod.normal_derivative_factored(self.grid)
        cr2 = self.params.inv_c2 - 2.0 * self.params.gamma * self.r
        q = u + self.params.beta * v
        second = (L @ q) / cr2
        ib = self.grid.boundary_index
        second[ib] = (D @ q)[ib] + self.cr * v[ib]
        return v.copy(), second

    def restrict(self, u, v) -> np.ndarray:
        return np.concatenate([np.asarray(u), np.asarray(v)[self.grid.interior_index]])


def assemble_A0(r: float, grid: gridmod.Grid, params: PhysicalParams) -> LinearizedOperator:
    c_r = cr(r, params)
    cr2 = params.inv_c2 - 2.0 * params.gamma * r
    beta = params.beta
    N = grid.size
    ib, ii = grid.boundary_index, grid.interior_index
    L = gridmod.laplacian(grid)
    D = gridmod.normal_derivative(grid)
    bmask = np.zeros(N)
    bmask[ib] = 1.0

    I = sp.identity(N, format="csr")
    full = sp.bmat(
        [
            [None, I],
            [L / cr2 + D, beta * L / cr2 + beta * D + c_r * sp.diags(bmask)],
        ],
        format="csr",
    )

    Dd = D.toarray()
    block = beta * Dd[np.ix_(ib, ib)] + c_r * np.eye(ib.size)
    rhs = np.hstack([-Dd[ib, :], -beta * Dd[np.ix_(ib, ii)]])
    elim = np.linalg.solve(block, rhs)  # v_b = elim @ z
    v_lift = np.zeros((N, N + ii.size))
    v_lift[ib, :] = elim
    v_lift[ii, N + np.arange(ii.size)] = 1.0
    Li = L[ii, :].toarray()
    u_pick = np.hstack([np.eye(N), np.zeros((N, ii.size))])
    reduced = np.vstack([v_lift, (Li @ u_pick + beta * Li @ v_lift) / cr2])
    return LinearizedOperator(float(r), grid, params, c_r, full, reduced, v_lift)


def spectrum(op: LinearizedOperator) -> np.ndarray:
    try:
        lam = sla.eigvals(op.reduced)
    except (sla.LinAlgError, ValueError) as exc:
        raise EigensolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(lam)):
        raise EigensolverFailure("eigensolver returned non-finite eigenvalues")
    return lam


def zero_cluster(op: LinearizedOperator, eigenvalues=None) -> np.ndarray:
    """Boolean mask of eigenvalues with |lambda| < 1e-10 ||A0||."""
    lam = spectrum(op) if eigenvalues is None else np.asarray(eigenvalues)
    return np.abs(lam) < ZERO_CLUSTER_REL * op.norm


def spectral_gap(op: LinearizedOperator, eigenvalues=None) -> float:
    """-max Re over the eigenvalues outside the zero cluster."""
    lam = spectrum(op) if eigenvalues is None else np.asarray(eigenvalues)
    return float(-np.max(lam[~zero_cluster(op, lam)].real))


@dataclass
class KernelReport:
    kernel_dim: int
    zero_algebraic_multiplicity: int
    semisimple: bool
    jordan_residual: float
    kernel_vector: tuple[np.ndarray, np.ndarray]
    singular_values: np.ndarray


def _lstsq_residual(K: np.ndarray, f: np.ndarray):
    z, *_ = sla.lstsq(K, f)
    fn = np.linalg.norm(f)
    res = np.linalg.norm(K @ z - f)
    return z, (res / fn if fn > 0 else res)


def kernel_and_semisimplicity(op: LinearizedOperator, eigenvalues=None) -> KernelReport:
    """Rank, zero-cluster multiplicity and the Jordan-chain probe A0 w = (1, 0).

    The probe asks whether the kernel vector (1, 0) is itself in the range;
    a relative least-squares residual bounded away from zero rules out a
    Jordan block at 0.
    """
    K = op.reduced
    _, s, vt = np.linalg.svd(K)
    tol = RANK_REL * s[0]
    if np.any((s > tol / RANK_BAND) & (s < tol * RANK_BAND)):
        raise RankToleranceAmbiguous(
            f"singular values within a factor {RANK_BAND} of the rank tolerance {tol:.3e}"
        )
    kernel_dim = int(np.sum(s < tol))
    lam = spectrum(op) if eigenvalues is None else eigenvalues
    mult = int(np.sum(zero_cluster(op, lam)))

    N = op.grid.size
    f = np.concatenate([np.ones(N), np.zeros(K.shape[0] - N)])
    _, jordan = _lstsq_residual(K, f)

    z0 = vt[-1]
    u0, v0 = op.lift(z0)
    scale = np.linalg.norm(np.concatenate([u0, v0]))
    sign = np.sign(u0.sum()) or 1.0
    u0, v0 = sign * u0 / scale, sign * v0 / scale
    return KernelReport(kernel_dim, mult, kernel_dim == mult, float(jordan), (u0, v0), s)


class RangeSplit(NamedTuple):
    k: float
    projected: tuple  # P(g, h) = (k, 0)
    complement: tuple  # (I - P)(g, h) = (g - k, h)


def range_functional(g, h, op: LinearizedOperator) -> tuple[float, float]:
    """Return (c_r int h + int_dOmega g, |dOmega|) with the summation-by-parts weights.

    The weights are the ones for which the discrete Green identity holds
    exactly, so the functional vanishes precisely on the range of the
    discrete A0. h is read on interior nodes only.
    """
    vol, surf = gridmod.green_weights(op.grid)
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    value = op.cr * float(vol @ h) + float(surf @ op.grid.boundary_values(g))
    return value, float(surf.sum())


def range_projection(g, h, op: LinearizedOperator) -> RangeSplit:
    value, measure = range_functional(g, h, op)
    k = value / measure
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    N = op.grid.size
    return RangeSplit(k, (np.full(N, k), np.zeros(N)), (g - k, h.copy()))


def range_solvability_test(g, h, op: LinearizedOperator, tol: float = TOL_RANGE) -> dict:
    """Least-squares solve of A0 w = (g, h) with w in the constrained domain."""
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    f = op.restrict(g, h)
    z, res = _lstsq_residual(op.reduced, f)
    value, _ = range_functional(g, h, op)
    scale = op.cr * float(np.abs(gridmod.green_weights(op.grid)[0]) @ np.abs(h)) + float(
        gridmod.green_weights(op.grid)[1] @ np.abs(op.grid.boundary_values(g))
    )
    solvable = bool(res < tol)
    predicted = bool(abs(value) <= tol * scale) if scale > 0 else True
    u, v = op.lift(z)
    return {
        "solvable": solvable,
        "residual": float(res),
        "functional": value,
        "functional_scale": scale,
        "predicted_solvable": predicted,
        "consistent": solvable == predicted,
        "w": (u, v),
    }
