import numpy as np
import pytest

from rotorbound.attitude import rot_z
from rotorbound.flatness import (
    DEFAULT_DRAG,
    E_Z,
    GRAVITY,
    DragModel,
    FlatnessSingularityError,
    feedforward_signals,
    flatness_batch,
    flatness_output,
    reference_attitude,
    reference_rates,
)
from rotorbound.trajectory import HoverTrajectory, ReferenceSample

V_W = np.array([5.0, -3.0, 1.0])


def _random_sample(rng) -> ReferenceSample:
    return ReferenceSample(
        t=0.0,
        p=rng.uniform(-50, 50, 3),
        v=rng.uniform(-10, 10, 3),
        a=rng.uniform(-4, 4, 3),
        j=rng.uniform(-2, 2, 3),
        s=rng.uniform(-1, 1, 3),
        psi=rng.uniform(-np.pi, np.pi),
        psid=rng.uniform(-0.5, 0.5),
        psidd=rng.uniform(-0.5, 0.5),
    )


def test_drag_model_validation():
    with pytest.raises(ValueError):
        DragModel(np.array([0.1, -0.1, -0.1]))
    d = DEFAULT_DRAG
    assert d.d_max == -0.05
    assert d.d_min == -0.45


def test_hover_attitude_is_pure_yaw():
    hov = HoverTrajectory([1.0, 2.0, -30.0], 10.0, yaw=0.7)
    out = flatness_output(hov.sample(3.0), np.zeros(3), DEFAULT_DRAG)
    assert np.allclose(out.R_r, rot_z(0.7), atol=1e-12)
    assert out.f_r == pytest.approx(GRAVITY)
    assert np.allclose(out.omega_r, 0.0)
    assert np.allclose(out.omegad_r, 0.0)


def test_dragfree_loiter_bank_angle(loiter):
    s = loiter.sample(30.0)
    R, f = reference_attitude(s, np.zeros(3), DragModel(np.zeros(3)))
    bank = np.arccos(np.clip(R[:, 2] @ E_Z, -1, 1))
    assert bank == pytest.approx(np.arctan(7.5 / GRAVITY), abs=1e-12)
    assert f == pytest.approx(np.hypot(7.5, GRAVITY), abs=1e-9)


def test_force_balance_roundtrip_random():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        s = _random_sample(rng)
        out = flatness_output(s, V_W, DEFAULT_DRAG)
        Dbar = out.R_r @ DEFAULT_DRAG.matrix @ out.R_r.T
        resid = -out.R_r[:, 2] * out.f_r + GRAVITY * E_Z + Dbar @ (s.v - V_W) - s.a
        worst = max(worst, float(np.max(np.abs(resid))))
    assert worst < 1e-9


def test_rotation_matrix_properties(loiter):
    rng = np.random.default_rng(1)
    for t in rng.uniform(0.0, 60.0, 20):
        out = flatness_output(loiter.sample(t), V_W, DEFAULT_DRAG)
        R = out.R_r
        assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-10
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-10)


def test_orthogonality_residuals(loiter):
    # x_B . alpha = 0 and y_B . beta = 0 per construction.
    rng = np.random.default_rng(5)
    for t in rng.uniform(0.0, 60.0, 20):
        s = loiter.sample(t)
        out = flatness_output(s, V_W, DEFAULT_DRAG)
        v_ar = s.v - V_W
        alpha = GRAVITY * E_Z - s.a + DEFAULT_DRAG.coeffs[0] * v_ar
        beta = GRAVITY * E_Z - s.a + DEFAULT_DRAG.coeffs[1] * v_ar
        assert abs(out.R_r[:, 0] @ alpha) < 1e-9
        assert abs(out.R_r[:, 1] @ beta) < 1e-9


def test_reference_rates_finite_difference(loiter):
    h = 1e-5
    for t in (3.0, 12.0, 40.0):
        om, omd = reference_rates(loiter.sample(t), V_W, DEFAULT_DRAG)
        Rm, _ = reference_attitude(loiter.sample(t - h), V_W, DEFAULT_DRAG)
        Rp, _ = reference_attitude(loiter.sample(t + h), V_W, DEFAULT_DRAG)
        Rc, _ = reference_attitude(loiter.sample(t), V_W, DEFAULT_DRAG)
        S = Rc.T @ (Rp - Rm) / (2 * h)
        om_fd = np.array([S[2, 1], S[0, 2], S[1, 0]])
        assert np.allclose(om, om_fd, atol=1e-4)
        omp = reference_rates(loiter.sample(t + h), V_W, DEFAULT_DRAG)[0]
        omm = reference_rates(loiter.sample(t - h), V_W, DEFAULT_DRAG)[0]
        assert np.allclose(omd, (omp - omm) / (2 * h), atol=1e-4)


def test_steady_loiter_rates_constant_and_consistent(loiter):
    # In the steady segment the body rates are constant; the r-component
    # matches the Euler-rate transform at the banked attitude.
    om1, _ = reference_rates(loiter.sample(20.0), np.zeros(3), DragModel(np.zeros(3)))
    om2, _ = reference_rates(loiter.sample(40.0), np.zeros(3), DragModel(np.zeros(3)))
    assert np.allclose(om1, om2, atol=1e-12)
    bank = np.arctan(7.5 / GRAVITY)
    r_expected = np.cos(bank) * 0.5  # -sin(phi)*thetad + cos(phi)cos(theta)*psid
    assert om1[2] == pytest.approx(r_expected, abs=1e-12)


def test_feedforward_reduces_without_drag(loiter):
    s = loiter.sample(17.0)
    a_t, j_t, s_t = feedforward_signals(s, V_W, DragModel(np.zeros(3)))
    assert np.allclose(a_t, s.a)
    assert np.allclose(j_t, s.j)
    assert np.allclose(s_t, s.s)


def test_feedforward_hover_with_wind():
    hov = HoverTrajectory([0, 0, -20], 10.0, yaw=0.0)
    s = hov.sample(1.0)
    out = flatness_output(s, V_W, DEFAULT_DRAG)
    Dbar = out.R_r @ DEFAULT_DRAG.matrix @ out.R_r.T
    assert np.allclose(out.a_t, Dbar @ V_W, atol=1e-12)


def test_feedforward_derivative_chain(loiter):
    h = 1e-4
    for t in (2.5, 9.0, 33.0):
        om = flatness_output(loiter.sample(t - h), V_W, DEFAULT_DRAG)
        op = flatness_output(loiter.sample(t + h), V_W, DEFAULT_DRAG)
        oc = flatness_output(loiter.sample(t), V_W, DEFAULT_DRAG)
        j_fd = (op.a_t - om.a_t) / (2 * h)
        s_fd = (op.j_t - om.j_t) / (2 * h)
        assert np.linalg.norm(j_fd - oc.j_t) < 1e-4 * max(1.0, np.linalg.norm(oc.j_t))
        assert np.linalg.norm(s_fd - oc.s_t) < 1e-4 * max(1.0, np.linalg.norm(oc.s_t))


def test_dbar_derivative_formula(loiter):
    # Finite differences of Dbar(t) against R (S D + D S^T) R^T.
    h = 1e-5
    for t in (4.0, 25.0):
        b = flatness_batch(loiter.sample_batch(np.array([t - h, t, t + h])), V_W, DEFAULT_DRAG)
        D_fd = (b["Dbar"][2] - b["Dbar"][0]) / (2 * h)
        R = b["R_r"][1]
        om = b["omega_r"][1]
        S = np.array([[0, -om[2], om[1]], [om[2], 0, -om[0]], [-om[1], om[0], 0]])
        D = DEFAULT_DRAG.matrix
        analytic = R @ (S @ D + D @ S.T) @ R.T
        assert np.linalg.norm(D_fd - analytic) < 1e-5


def test_flatness_exactness_open_loop(loiter):
    """Thrust f_r and attitude R_r reproduce the reference translation.

    Integrates the disturbance-free simplified translational dynamics
    under the flatness outputs with RK4 and compares against the
    reference position.
    """
    dt = 0.002
    n = int(60.0 / dt)
    ts = np.arange(2 * n + 1) * (dt / 2)
    batch = loiter.sample_batch(ts)
    flat = flatness_batch(batch, V_W, DEFAULT_DRAG)
    thrust = flat["f_r"]
    R = flat["R_r"]
    D = DEFAULT_DRAG.matrix

    def accel(k, v):
        Rk = R[k]
        return -Rk[:, 2] * thrust[k] + GRAVITY * E_Z + Rk @ D @ Rk.T @ (v - V_W)

    p = batch["p"][0].copy()
    v = batch["v"][0].copy()
    worst = 0.0
    for i in range(n):
        k = 2 * i
        k1v = accel(k, v)
        k1p = v
        k2v = accel(k + 1, v + 0.5 * dt * k1v)
        k2p = v + 0.5 * dt * k1v
        k3v = accel(k + 1, v + 0.5 * dt * k2v)
        k3p = v + 0.5 * dt * k2v
        k4v = accel(k + 2, v + dt * k3v)
        k4p = v + dt * k3v
        p = p + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        worst = max(worst, float(np.linalg.norm(p - batch["p"][k + 2])))
    assert worst < 1e-6


def test_free_fall_singularity():
    s = ReferenceSample(
        t=0.0, p=np.zeros(3), v=np.zeros(3),
        a=GRAVITY * E_Z,  # free fall: force balance degenerates
        j=np.zeros(3), s=np.zeros(3), psi=0.0, psid=0.0, psidd=0.0,
    )
    with pytest.raises(FlatnessSingularityError):
        flatness_output(s, np.zeros(3), DragModel(np.zeros(3)))
