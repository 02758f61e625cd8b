import json

import numpy as np
import pytest

from rotorbound.invariant import (
    DegenerateSystemError,
    Ellipsoid,
    EllipsoidError,
    NonHurwitzVertexError,
    NoRpiFoundError,
    PolytopicErrorSystem,
    SdpResult,
    assemble_lmi_block,
    axis_bound,
    default_tau2_grid,
    lmi_residual,
    project_ellipsoid,
    solve_rpi,
    worst_case_vdot,
    worst_case_vdot_batch,
)

SCALAR_GRID = np.logspace(-3, 1, 12)


def _scalar_system(dbar: float, gamma: float = 0.0) -> PolytopicErrorSystem:
    return PolytopicErrorSystem(
        vertices=[np.array([[-1.0]])],
        E=np.array([[1.0]]),
        C=np.array([[1.0 if gamma > 0 else 0.0]]),
        gamma=gamma,
        dbar=dbar,
    )


# -- Ellipsoid ---------------------------------------------------------------


def test_ellipsoid_validation():
    with pytest.raises(EllipsoidError):
        Ellipsoid(np.array([[1.0, 0.5], [0.0, 1.0]]))  # asymmetric
    with pytest.raises(EllipsoidError):
        Ellipsoid(np.diag([1.0, -1.0]))  # indefinite


def test_membership_and_boundary_points():
    e = Ellipsoid(np.diag([4.0, 1.0]))
    assert e.contains([0.5, 0.0])
    assert not e.contains([0.6, 0.0])
    rng = np.random.default_rng(0)
    X = e.boundary_points(500, rng)
    assert np.allclose(e.membership_values(X), 1.0, atol=1e-12)


def test_ellipsoid_json_roundtrip():
    e = Ellipsoid(np.array([[2.0, 0.3], [0.3, 1.0]]), c=np.array([0.1, -0.2]),
                  labels=("a", "b"))
    e2 = Ellipsoid.from_json_dict(json.loads(json.dumps(e.to_json_dict())))
    assert np.array_equal(e.P, e2.P)
    assert np.array_equal(e.c, e2.c)
    assert e.labels == e2.labels


# -- projections and axis bounds ----------------------------------------------


def test_project_identity_ball():
    e = Ellipsoid(np.eye(3))
    p = project_ellipsoid(e, [0, 1])
    assert np.allclose(p.P, np.eye(2), atol=1e-14)


def test_project_diagonal_interval():
    e = Ellipsoid(np.diag([4.0, 9.0]))
    p = project_ellipsoid(e, [0])
    assert p.P[0, 0] == pytest.approx(4.0)
    assert axis_bound(e, 0) == pytest.approx(0.5)
    assert axis_bound(e, 1) == pytest.approx(1.0 / 3.0)


def test_axis_bound_unit_ball():
    e = Ellipsoid(np.eye(4))
    for i in range(4):
        assert axis_bound(e, i) == pytest.approx(1.0)


def test_projection_support_monte_carlo():
    rng = np.random.default_rng(7)
    M = rng.standard_normal((4, 4))
    P = M @ M.T + 0.5 * np.eye(4)
    e = Ellipsoid(P)
    proj = project_ellipsoid(e, [0, 1])
    X = e.boundary_points(100_000, rng)[:, :2]
    for ang in rng.uniform(0.0, 2 * np.pi, 8):
        u = np.array([np.cos(ang), np.sin(ang)])
        support_proj = float(np.sqrt(u @ np.linalg.inv(proj.P) @ u))
        support_mc = float(np.max(X @ u))
        assert support_mc == pytest.approx(support_proj, rel=0.01)


def test_projection_membership_consistency():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((5, 5))
    e = Ellipsoid(M @ M.T + np.eye(5))
    proj = project_ellipsoid(e, [1, 3])
    X = e.boundary_points(2000, rng)
    assert np.all(proj.membership_values(X[:, [1, 3]]) <= 1.0 + 1e-9)


def test_axis_bound_matches_projection_halfwidth():
    rng = np.random.default_rng(9)
    M = rng.standard_normal((4, 4))
    e = Ellipsoid(M @ M.T + np.eye(4))
    for i in range(4):
        p = project_ellipsoid(e, [i])
        assert axis_bound(e, i) == pytest.approx(p.P[0, 0] ** -0.5, rel=1e-12)


# -- LMI assembly --------------------------------------------------------------


def test_lmi_block_scalar_example():
    blk = assemble_lmi_block(
        A=np.array([[-1.0]]), P=np.array([[1.0]]), tau1=1.0, tau2=1.0,
        E=np.array([[1.0]]), C=np.array([[0.0]]), gamma=0.0, dbar=1.0,
    )
    assert np.array_equal(blk, np.array([[-1.0, 1, 1], [1, -1, 0], [1, 0, -1]]))


def test_lmi_block_zero_p():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((3, 3))
    E = rng.standard_normal((3, 2))
    C = rng.standard_normal((2, 3))
    gamma, tau1, tau2, dbar = 0.7, 1.3, 0.4, 2.0
    blk = assemble_lmi_block(A, np.zeros((3, 3)), tau1, tau2, E, C, gamma, dbar)
    expected = np.zeros((7, 7))
    expected[:3, :3] = tau1 * gamma**2 * (C.T @ C)
    expected[3:5, 3:5] = -tau1 * np.eye(2)
    expected[5:, 5:] = -tau2 * np.eye(2)
    assert np.array_equal(blk, expected)


def test_lmi_block_dimension_for_cg_sized_system():
    n, p = 15, 3
    blk = assemble_lmi_block(
        -np.eye(n), np.eye(n), 1.0, 1.0, np.ones((n, p)), np.ones((p, n)), 0.4, 2.5
    )
    assert blk.shape == (n + 2 * p, n + 2 * p)


def test_lmi_block_dimension_mismatch():
    with pytest.raises(ValueError):
        assemble_lmi_block(
            -np.eye(2), np.eye(3), 1.0, 1.0, np.ones((2, 1)), np.ones((1, 2)), 0.0, 1.0
        )


# -- system validation ----------------------------------------------------------


def test_non_hurwitz_vertex_rejected():
    with pytest.raises(NonHurwitzVertexError) as exc:
        PolytopicErrorSystem(
            vertices=[np.array([[-1.0, 0.0], [0.0, 0.2]])],
            E=np.ones((2, 1)),
            C=np.ones((1, 2)),
            gamma=0.0,
            dbar=1.0,
        )
    assert "0.2" in str(exc.value)


def test_symmetry_validation():
    T_bad = np.array([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValueError):
        PolytopicErrorSystem(
            vertices=[np.diag([-1.0, -2.0])],
            E=np.eye(2),
            C=np.eye(2),
            gamma=0.0,
            dbar=1.0,
            symmetries=[T_bad],  # swap does not permute the vertex set
        )


# -- solver ----------------------------------------------------------------------


@pytest.mark.parametrize("dbar", [0.5, 1.0, 2.0])
def test_scalar_rpi_oracle(dbar):
    """Schur complement gives P* = 1/dbar^2 at tau2 = 1/dbar^2."""
    res = solve_rpi(_scalar_system(dbar), tau2_grid=SCALAR_GRID / dbar**2)
    P = res.ellipsoid.P[0, 0]
    assert P == pytest.approx(1.0 / dbar**2, rel=0.02)
    assert res.tau2 == pytest.approx(1.0 / dbar**2, rel=0.1)
    assert res.feasible
    assert res.residual <= 1e-7 * (1.0 + abs(P))


def test_scalar_certified_boundary_tangency():
    dbar = 2.0
    res = solve_rpi(_scalar_system(dbar), tau2_grid=SCALAR_GRID / dbar**2)
    sys1 = _scalar_system(dbar)
    x = np.array([1.0 / np.sqrt(res.ellipsoid.P[0, 0])])
    vdot = worst_case_vdot(sys1, res.ellipsoid, x, 0)
    assert vdot <= 1e-6
    assert vdot == pytest.approx(0.0, abs=0.05)  # minimal set is tangent


def test_worst_case_vdot_hand_value():
    e = Ellipsoid(np.array([[0.25]]))
    sys1 = _scalar_system(2.0)
    assert worst_case_vdot(sys1, e, np.array([2.0]), 0) == pytest.approx(0.0, abs=1e-12)


def test_worst_case_vdot_requires_boundary():
    e = Ellipsoid(np.array([[0.25]]))
    with pytest.raises(ValueError):
        worst_case_vdot(_scalar_system(2.0), e, np.array([1.0]), 0)


def test_vdot_strictly_negative_without_disturbance():
    rng = np.random.default_rng(4)
    A = np.array([[-1.0, 0.3], [0.0, -2.0]])
    sys2 = PolytopicErrorSystem(
        vertices=[A], E=np.zeros((2, 1)), C=np.zeros((1, 2)), gamma=0.0, dbar=0.0
    )
    e = Ellipsoid(np.eye(2))
    X = e.boundary_points(200, rng)
    assert np.all(worst_case_vdot_batch(sys2, e, X, 0) < 0.0)


def test_degenerate_configuration_rejected():
    with pytest.raises(DegenerateSystemError):
        solve_rpi(_scalar_system(0.0))


def test_infeasible_reports_residuals():
    # tau2 too large for the available contraction: every point infeasible.
    sys1 = _scalar_system(2.0)
    with pytest.raises(NoRpiFoundError) as exc:
        solve_rpi(sys1, tau2_grid=np.array([10.0, 20.0]), refine=False)
    assert set(exc.value.residuals) == {10.0, 20.0}
    assert all(r >= 0.0 for r in exc.value.residuals.values())


def test_monotonicity_in_dbar():
    objs = []
    for dbar in (0.5, 1.0, 2.0, 4.0):
        res = solve_rpi(_scalar_system(dbar), tau2_grid=SCALAR_GRID / dbar**2)
        objs.append(res.objective)
    assert all(a < b for a, b in zip(objs, objs[1:]))


def test_gamma_channel_shrinks_certificate():
    # Nonzero state-dependent disturbance cannot give a larger set.
    base = solve_rpi(_scalar_system(1.0), tau2_grid=SCALAR_GRID)
    withg = solve_rpi(
        PolytopicErrorSystem(
            vertices=[np.array([[-1.0]])], E=np.array([[1.0]]),
            C=np.array([[1.0]]), gamma=0.3, dbar=1.0,
        ),
        tau2_grid=SCALAR_GRID,
    )
    assert withg.objective >= base.objective - 1e-9
    assert withg.tau1 > 0.0


def test_symmetrization_equalizes_axes():
    # Two decoupled identical scalar systems plus a declared swap symmetry.
    A = np.diag([-1.0, -1.0])
    T = np.array([[0.0, 1.0], [1.0, 0.0]])
    sys2 = PolytopicErrorSystem(
        vertices=[A], E=np.eye(2), C=np.zeros((2, 2)), gamma=0.0, dbar=1.0,
        symmetries=[T],
    )
    res = solve_rpi(sys2, tau2_grid=SCALAR_GRID)
    P = res.ellipsoid.P
    assert P[0, 0] == pytest.approx(P[1, 1], rel=1e-9)
    assert abs(P[0, 1]) < 1e-9 * P[0, 0]
    assert res.residual <= 1e-7 * (1 + np.linalg.norm(P))


def test_certified_residual_reverified_from_json():
    dbar = 1.0
    sys1 = _scalar_system(dbar)
    res = solve_rpi(sys1, tau2_grid=SCALAR_GRID)
    res2 = SdpResult.from_json(res.to_json())
    r = lmi_residual(sys1, res2.ellipsoid.P, res2.tau1, res2.tau2)
    assert r == pytest.approx(res.residual, abs=1e-12)


def test_default_grid_spans_scalar_optimum():
    grid = default_tau2_grid(2.0)
    assert grid.size == 40
    assert grid.min() < 0.25 / 100.0 * 4.0
    assert grid.max() > 0.25
