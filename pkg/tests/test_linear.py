import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from westervelt.errors import DegeneracyError, RankToleranceAmbiguous
from westervelt.grid import build_grid, green_weights, interior_integral, boundary_integral
from westervelt.linear import (
    assemble_A0,
    kernel_and_semisimplicity,
    range_functional,
    range_projection,
    range_solvability_test,
    spectral_gap,
    spectrum,
    zero_cluster,
)
from westervelt.model import PhysicalParams


@pytest.fixture
def op32(canonical):
    return assemble_A0(0.0, build_grid(1, (0.0, 1.0), 32), canonical)


@pytest.mark.parametrize("r", [0.0, 0.37, -0.8])
@pytest.mark.parametrize("shape", [(1, 33), (1, 20), (2, 7)])
def test_constants_in_kernel_exactly(canonical, r, shape):
    dim, n = shape
    grid = build_grid(dim, [(0.0, 1.0)] * dim, n)
    op = assemble_A0(r, grid, canonical)
    a, b = op.apply(np.full(grid.size, 1.0), np.zeros(grid.size))
    assert np.all(a == 0.0) and np.all(b == 0.0)
    a, b = op.apply(np.full(grid.size, -0.3), np.zeros(grid.size))
    assert np.all(b == 0.0)
    # the merged sparse matrix agrees to round-off
    w = op.matrix @ np.concatenate([np.ones(grid.size), np.zeros(grid.size)])
    assert np.max(np.abs(w)) < 1e-10


def test_apply_matches_matrix(canonical, rng):
    grid = build_grid(2, [(0.0, 1.0), (0.0, 2.0)], (6, 8))
    op = assemble_A0(0.2, grid, canonical)
    u, v = rng.standard_normal((2, grid.size))
    a, b = op.apply(u, v)
    w = op.matrix @ np.concatenate([u, v])
    assert np.allclose(np.concatenate([a, b]), w, rtol=1e-12, atol=1e-9)


def test_boundary_constraint_coefficient(canonical, op32):
    ib = op32.grid.boundary_index
    N = op32.grid.size
    M = op32.matrix.toarray()
    D = op32.matrix[N + ib][:, :N].toarray()
    # v-coefficient on the diagonal: beta * D self term + c_r, with c_r = 1 at r = 0
    assert op32.cr == 1.0
    assert np.allclose(np.diag(M[N + ib][:, N + ib]) - canonical.beta * np.diag(D[:, ib]), 1.0)


def test_linear_A0_independent_of_r(linear_params):
    grid = build_grid(1, (0.0, 1.0), 17)
    a = assemble_A0(0.0, grid, linear_params)
    b = assemble_A0(5.0, grid, linear_params)
    assert np.array_equal(a.reduced, b.reduced)


def test_gamma_does_not_matter_at_zero(canonical, linear_params):
    grid = build_grid(1, (0.0, 1.0), 17)
    assert np.array_equal(assemble_A0(0.0, grid, canonical).reduced, assemble_A0(0.0, grid, linear_params).reduced)
    la = np.sort_complex(spectrum(assemble_A0(0.0, grid, canonical)))
    lb = np.sort_complex(spectrum(assemble_A0(0.0, grid, linear_params)))
    assert np.array_equal(la, lb)


def test_assemble_rejects_degenerate(canonical):
    with pytest.raises(DegeneracyError):
        assemble_A0(1.0, build_grid(1, (0.0, 1.0), 9), canonical)


@pytest.mark.parametrize("n", [16, 32, 64])
def test_spectrum_single_zero(canonical, n):
    op = assemble_A0(0.0, build_grid(1, (0.0, 1.0), n), canonical)
    lam = spectrum(op)
    mask = zero_cluster(op, lam)
    assert mask.sum() == 1
    assert np.abs(lam[mask][0]) < 1e-10 * op.norm
    assert np.max(lam[~mask].real) < -1e-8
    assert spectral_gap(op, lam) > 0.5


def test_kernel_report(canonical, op32):
    kr = kernel_and_semisimplicity(op32)
    assert kr.kernel_dim == 1 and kr.zero_algebraic_multiplicity == 1 and kr.semisimple
    assert kr.jordan_residual >= 0.1
    u, v = kr.kernel_vector
    want = np.ones(op32.grid.size) / np.sqrt(op32.grid.size)
    assert np.max(np.abs(u - want)) < 1e-8 and np.max(np.abs(v)) < 1e-8


def test_rank_ambiguity_detected(canonical, op32, monkeypatch):
    # an operator with a singular value planted inside the ambiguity band
    K = op32.reduced
    U, s, Vt = np.linalg.svd(K)
    s[-2] = 1e-10 * s[0] * 2
    planted = type(op32)(op32.r, op32.grid, op32.params, op32.cr, op32.matrix, (U * s) @ Vt, op32.v_lift)
    with pytest.raises(RankToleranceAmbiguous):
        kernel_and_semisimplicity(planted)


def test_projection_examples(canonical, op32):
    N = op32.grid.size
    split = range_projection(np.full(N, 0.7), np.zeros(N), op32)
    assert split.k == pytest.approx(0.7, abs=1e-15)
    again = range_projection(*split.projected, op32)
    assert again.k == pytest.approx(split.k, abs=1e-15)
    split = range_projection(np.zeros(N), np.ones(N), op32)
    assert split.k == pytest.approx(0.5, abs=1e-14)


def test_projection_annihilates_constructed_range(canonical, rng):
    grid = build_grid(1, (0.0, 1.0), 33)
    op = assemble_A0(0.2, grid, canonical)
    N = grid.size
    g = rng.standard_normal(N)
    h = rng.standard_normal(N)
    # shift g so the functional vanishes
    value, measure = range_functional(g, h, op)
    g = g - value / measure
    assert abs(range_projection(g, h, op).k) < 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), r=st.floats(-0.5, 0.5), dim=st.sampled_from([1, 2]))
def test_projection_idempotent_and_range(seed, r, dim):
    p = PhysicalParams()
    grid = build_grid(1, (0.0, 1.0), 21) if dim == 1 else build_grid(2, [(0.0, 1.0), (0.0, 1.0)], 7)
    op = assemble_A0(r, grid, p)
    rng = np.random.default_rng(seed)
    g, h = rng.standard_normal((2, grid.size))
    split = range_projection(g, h, op)
    twice = range_projection(*split.projected, op)
    assert np.max(np.abs(np.asarray(twice.projected) - np.asarray(split.projected))) <= 1e-12 * (1 + abs(split.k))
    # the image of A0 on the constrained domain is annihilated by P
    z = rng.standard_normal(op.reduced.shape[0])
    a, b = op.apply(*op.lift(z))
    assert abs(range_projection(a, b, op).k) <= 1e-10 * (np.max(np.abs(b)) + 1)
    # the complement is solvable
    res = range_solvability_test(*split.complement, op)
    assert res["solvable"] and res["residual"] < 1e-8


def test_trapezoid_projection_is_only_approximate(canonical, rng):
    # with trapezoid quadrature the functional of a true range element is O(h)
    grid = build_grid(1, (0.0, 1.0), 33)
    op = assemble_A0(0.0, grid, canonical)
    x = grid.coords[0]
    a, b = op.apply(*op.lift(op.restrict(np.cos(2 * x), 0.1 * x)))
    trap = op.cr * interior_integral(grid, b * (np.arange(grid.size) % 32 != 0)) + boundary_integral(grid, a)
    sbp, _ = range_functional(a, b, op)
    assert abs(sbp) < 1e-12
    assert abs(trap) > 1e-6


def test_solvability_examples(canonical, op32):
    N = op32.grid.size
    res = range_solvability_test(np.ones(N), np.zeros(N), op32)
    assert not res["solvable"] and not res["predicted_solvable"] and res["consistent"]
    assert res["functional"] == pytest.approx(2.0)
    res = range_solvability_test(np.zeros(N), np.zeros(N), op32)
    assert res["solvable"] and res["consistent"]
    u, v = res["w"]
    assert np.max(np.abs(v)) < 1e-12
