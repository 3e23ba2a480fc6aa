import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parhoward import (
    CflViolation,
    MissingFixedValue,
    PointOutsideDomain,
    ProblemSpec,
    assemble_row_sl,
    assemble_row_upwind,
    assemble_system,
    build_grid,
    builtin_problem,
    interp_weights,
)
from parhoward.grid import Grid
from parhoward.scheme import _interp_batch


def line_spec(controls, dx=0.1, lam=1.0, scheme="upwind", g=0.0, cost=1.0):
    grid = build_grid([-1.0], [1.0], [dx])
    return ProblemSpec(
        grid,
        lambda x, a: np.broadcast_to(a, x.shape),
        lambda x, a: cost,
        lam,
        lambda x: g,
        np.asarray(controls, dtype=float),
        scheme,
    )


def test_upwind_row_forward_control():
    spec = line_spec([1.0])
    row = assemble_row_upwind(spec, 5, [1.0])
    assert row.as_dict() == pytest.approx({5: 11.0, 6: -10.0})
    assert row.rhs == pytest.approx(1.0)


def test_upwind_row_zero_control_decouples():
    spec = line_spec([0.0])
    row = assemble_row_upwind(spec, 5, [0.0])
    assert row.as_dict() == {5: 1.0}
    assert row.rhs == 1.0


def test_upwind_row_folds_boundary_value():
    spec = line_spec([1.0], g=0.0)
    row = assemble_row_upwind(spec, 19, [1.0])
    assert row.as_dict() == pytest.approx({19: 11.0})
    assert row.rhs == pytest.approx(1.0)
    # a nonzero boundary value enters with coefficient f / (h lambda)
    row = assemble_row_upwind(spec, 19, [1.0], boundary_values={20: 0.5})
    assert row.rhs == pytest.approx(1.0 + 10.0 * 0.5)
    row = assemble_row_upwind(spec, 1, [-1.0], boundary_values={0: 2.0})
    assert row.rhs == pytest.approx(1.0 + 10.0 * 2.0)


def test_interp_weights_on_node_and_midpoint():
    g = build_grid([0.0], [1.0], [0.25])
    assert interp_weights(g, [0.5]) == [(2, 1.0)]
    w = interp_weights(g, [0.625])
    assert [j for j, _ in w] == [2, 3]
    assert [v for _, v in w] == pytest.approx([0.5, 0.5])


def test_interp_weights_2d_fractions():
    g = build_grid([0.0, 0.0], [1.0, 1.0], [0.5, 0.5])
    w = dict(interp_weights(g, [0.125, 0.375]))
    # corners (0,0), (0,1), (1,0), (1,1) in row-major order
    assert w[g.ravel([0, 0])] == pytest.approx(0.75 * 0.25)
    assert w[g.ravel([0, 1])] == pytest.approx(0.75 * 0.75)
    assert w[g.ravel([1, 0])] == pytest.approx(0.25 * 0.25)
    assert w[g.ravel([1, 1])] == pytest.approx(0.25 * 0.75)
    assert sorted(w.values()) == pytest.approx(sorted([0.1875, 0.0625, 0.5625, 0.1875]))


def test_interp_weights_outside():
    g = build_grid([0.0], [1.0], [0.25])
    with pytest.raises(PointOutsideDomain):
        interp_weights(g, [1.1])


def test_interp_partition_of_unity():
    rng = np.random.default_rng(0)
    for dim in (1, 2, 3):
        g = Grid.from_counts([-1] * dim, [1] * dim, [7] * dim)
        pts = rng.uniform(-1, 1, size=(10_000, dim))
        cols, w = _interp_batch(g, pts)
        assert np.all(w >= 0)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-14, rtol=0)
        # multilinear interpolation reproduces affine functions
        coef = np.arange(1, dim + 1)
        vals = g.coords @ coef
        np.testing.assert_allclose((w * vals[cols]).sum(axis=1), pts @ coef, atol=1e-12)


def test_sl_row_stationary_control():
    spec = line_spec([0.0], scheme="semilagrangian", lam=1.0)
    tau = spec.time_step
    assert tau == pytest.approx(0.1)
    row = assemble_row_sl(spec, 7, [0.0])
    assert row.as_dict() == pytest.approx({7: spec.discount * tau})
    assert row.rhs == pytest.approx(tau * 1.0)
    assert row.rhs / row.as_dict()[7] == pytest.approx(1.0 / spec.discount)


def test_sl_row_foot_on_neighbour():
    spec = line_spec([1.0], scheme="semilagrangian", lam=0.5)
    beta = 1 - 0.5 * 0.1
    row = assemble_row_sl(spec, 7, [1.0])
    assert row.as_dict() == pytest.approx({7: 1.0, 8: -beta})
    assert row.rhs == pytest.approx(0.1)


def test_sl_row_next_to_boundary_folds_g():
    spec = line_spec([1.0], scheme="semilagrangian", lam=0.5, g=3.0)
    beta = 1 - 0.5 * 0.1
    row = assemble_row_sl(spec, 19, [1.0])
    assert row.as_dict() == pytest.approx({19: 1.0})
    assert row.rhs == pytest.approx(0.1 + beta * 3.0)


def test_sl_time_step_keeps_feet_within_one_cell():
    spec = line_spec([2.0, -2.0], scheme="semilagrangian")
    assert spec.time_step == pytest.approx(0.05)
    row = assemble_row_sl(spec, 5, [2.0])
    assert set(row.as_dict()) == {5, 6}


def test_sl_cfl_violation():
    spec = line_spec([0.0], scheme="semilagrangian", lam=20.0)
    with pytest.raises(CflViolation):
        assemble_row_sl(spec, 5, [0.0])
    with pytest.raises(CflViolation):
        spec.table


def test_row_functions_match_table():
    for scheme in ("upwind", "semilagrangian"):
        spec = builtin_problem("eikonal2d", 0.25, control_count=8, scheme=scheme)
        table = spec.table
        rng = np.random.default_rng(1)
        for node in rng.choice(spec.grid.interior, 10, replace=False):
            k = int(rng.integers(8))
            fn = assemble_row_upwind if scheme == "upwind" else assemble_row_sl
            row = fn(spec, int(node), spec.controls[k])
            sys = assemble_system(spec, [node], [k], spec.initial_values(0.0))
            assert sys.matrix[0, 0] == pytest.approx(row.as_dict()[node])
            assert sys.rhs[0] == pytest.approx(row.rhs)
            assert len(row.as_dict()) == 1 or table.vals[k, node].min() < 0


def test_upwind_rows_diagonally_dominant():
    spec = builtin_problem("zermelo", 0.1)
    t = spec.table
    U = spec.grid.interior
    off = np.abs(t.vals[:, U]).sum(axis=2)
    assert np.all(t.vals[:, U] <= 0)
    np.testing.assert_allclose(t.diag[:, U], 1 + off, rtol=1e-15, atol=0)


def _small_specs():
    yield line_spec([-1.0, 1.0], dx=0.2)
    yield line_spec([-1.0, 0.0, 1.0], dx=0.2, scheme="semilagrangian")
    for scheme in ("upwind", "semilagrangian"):
        yield builtin_problem("eikonal2d", 0.5, control_count=8, scheme=scheme)
        yield builtin_problem("zermelo", 0.5, scheme=scheme)


@pytest.mark.parametrize("spec", list(_small_specs()), ids=lambda s: f"{s.name or 'line'}-{s.scheme}")
def test_monotone_inverse_random_policies(spec):
    rng = np.random.default_rng(2)
    U = spec.grid.interior
    assert len(U) <= 20
    for _ in range(20):
        policy = rng.integers(spec.n_controls, size=len(U))
        B = assemble_system(spec, U, policy).matrix.toarray()
        assert np.linalg.inv(B).min() >= -1e-12


def test_monotone_rhs_in_fixed_values():
    spec = builtin_problem("eikonal2d", 0.25, control_count=8)
    U = spec.grid.interior[:10]
    base = spec.initial_values(0.0)
    policy = np.arange(10) % 8
    c0 = assemble_system(spec, U, policy, base).rhs
    rng = np.random.default_rng(3)
    for _ in range(20):
        bumped = base.copy()
        outside = np.setdiff1d(np.arange(spec.grid.n_nodes), U)
        bumped[outside] += rng.uniform(0, 1, len(outside))
        c1 = assemble_system(spec, U, policy, bumped).rhs
        assert np.all(c1 >= c0 - 1e-15)


def test_assemble_system_global_and_missing_value():
    spec = line_spec([-1.0, 1.0])
    U = spec.grid.interior
    sys = assemble_system(spec, U, np.zeros(len(U), dtype=int))
    assert sys.matrix.shape == (19, 19)
    # block with an interface node that has no value
    left = U[:9]
    with pytest.raises(MissingFixedValue) as exc:
        assemble_system(spec, left, np.ones(9, dtype=int))
    assert exc.value.node == 10
    fixed = spec.boundary_values()
    fixed[10] = 0.7
    sys = assemble_system(spec, left, np.ones(9, dtype=int), fixed)
    assert sys.rhs[-1] == pytest.approx(1.0 + 10 * 0.7)
    rows = sys.rows()
    assert rows[0].node == 1 and rows[-1].node == 9


def test_assemble_interface_system():
    spec = line_spec([-1.0, 1.0])
    V = spec.initial_values(0.25)
    sys = assemble_system(spec, [10], [1], V)
    assert sys.matrix.toarray() == pytest.approx(np.array([[11.0]]))
    assert sys.rhs[0] == pytest.approx(1.0 + 10 * 0.25)


def test_upwind_consistency_rate():
    """max_a (B(a) phi - c(a)) approaches (lambda phi + |phi'| - 1) / lambda at rate h."""
    errs = []
    for dx in (0.1, 0.05, 0.025, 0.0125):
        spec = line_spec([-1.0, 1.0], dx=dx)
        x = spec.grid.coords[:, 0]
        phi = np.sin(np.pi * x)
        U = spec.grid.interior
        R = spec.table.residuals(phi, U).max(axis=0)
        exact = phi[U] + np.abs(np.pi * np.cos(np.pi * x[U])) - 1.0
        errs.append(np.abs(R - exact).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 1.6) & (ratios < 2.4)), ratios


def test_problem_spec_validation():
    grid = build_grid([0.0], [1.0], [0.5])
    f = lambda x, a: a
    with pytest.raises(ValueError):
        ProblemSpec(grid, f, lambda x, a: 1.0, 0.0, lambda x: 0.0, [[1.0]])
    with pytest.raises(ValueError):
        ProblemSpec(grid, f, lambda x, a: 1.0, 1.0, lambda x: 0.0, np.zeros((0, 1)))
    with pytest.raises(ValueError):
        ProblemSpec(grid, f, lambda x, a: 1.0, 1.0, lambda x: 0.0, [[1.0]], scheme="weno")


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 5.0), st.sampled_from(["upwind", "semilagrangian"]))
def test_row_sums_reflect_discount(lam, scheme):
    spec = line_spec([-1.0, 0.5, 1.0], dx=0.1, lam=lam if scheme == "upwind" else min(lam, 5.0), scheme=scheme)
    t = spec.table
    U = spec.grid.interior
    s = t.diag[:, U] + t.vals[:, U].sum(axis=2)
    if scheme == "upwind":
        np.testing.assert_allclose(s, 1.0, atol=1e-12)
    else:
        np.testing.assert_allclose(s, spec.discount * spec.time_step, atol=1e-12)
