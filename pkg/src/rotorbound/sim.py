"""Closed-loop simulation: trajectory -> flatness -> controller -> plant.

Plant and all controller-internal states (attitude reference, yaw
reference, acceleration reference model, observer) advance together in
a single fixed-step RK4 vector field, so the architecture cancellation
identities hold to integration accuracy and runs are bit-deterministic
under a seed.

Reference and feedforward signals depend only on time; they are
precomputed on the half-step grid hit by the RK4 stages.

``run_lpv_cosim`` integrates, alongside the full stack, the assembled
polytopic error system driven by the realized residuals, which checks
that the error system is an exact restatement of the closed loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attitude import (
    AttitudeRefModel,
    euler_zyx,
    heading_accel_jets,
    rho_command_from_heading,
    yaw_channel_inversion,
)
from .control import (
    GainSet,
    accel_model_derivs,
    control_cg,
    control_cgh,
    control_ch,
    feedforward_nu,
    observer_zdot,
    wrap_angle,
    yaw_control,
)
from .errorsys import ErrorSystemSpec, build_error_system, closed_loop_a_matrix
from .flatness import E_Z, GRAVITY, DragModel, flatness_batch, skew
from .invariant import Ellipsoid
from .plant import (
    INERTIA,
    InjectionConfig,
    WindModel,
    euler_rates_to_body,
    geometric_torque,
    orthonormalize,
    tilt_angle,
)

# Fidelity-A state layout; fidelity B appends R (9) and omega (3).
_P = slice(0, 3)
_V = slice(3, 6)
_PSI = 6
_RHO = slice(7, 10)
_RHOD = slice(10, 13)
_RR = 13
_AD = slice(14, 17)
_ADD = slice(17, 20)
_Z = slice(20, 23)
_PSID_ = 23
_PSIDD_ = 24
N_STATE_A = 25
_RMAT = slice(25, 34)
_OMEGA = slice(34, 37)
N_STATE_B = 37


@dataclass(frozen=True)
class SimSetup:
    """Everything one closed-loop run needs."""

    trajectory: object
    wind: WindModel
    drag: DragModel
    gains: GainSet
    architecture: str
    att_model: AttitudeRefModel = field(default_factory=AttitudeRefModel)
    fidelity: str = "a"
    dt: float = 0.002
    duration: float = 60.0
    injection: InjectionConfig = field(default_factory=InjectionConfig)
    p_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ch_coriolis_compensation: bool = False


class ReferenceTable:
    """Reference/flatness/gust samples on the RK4 half-step grid."""

    def __init__(self, setup: SimSetup, n_steps: int):
        ts = np.arange(2 * n_steps + 1) * (setup.dt / 2.0)
        batch = setup.trajectory.sample_batch(ts)
        flat = flatness_batch(batch, setup.wind.v_w, setup.drag)
        self.t = ts
        self.p = batch["p"]
        self.v = batch["v"]
        self.a = batch["a"]
        self.psi = batch["psi"]
        self.psid = batch["psid"]
        self.psidd = batch["psidd"]
        self.a_t = flat["a_t"]
        self.j_t = flat["j_t"]
        self.s_t = flat["s_t"]
        self.dbar_v_ar = flat["Dbar_v_ar"]
        self.f_r = flat["f_r"]
        self.gust = setup.wind.gust(ts)
        if setup.injection.amplitude > 0.0:
            self.inj = np.stack([setup.injection.rotation(t) for t in ts])
        else:
            self.inj = None


def _skew_z(rate: float) -> np.ndarray:
    return np.array([[0.0, -rate, 0.0], [rate, 0.0, 0.0], [0.0, 0.0, 0.0]])


class ClosedLoopSim:
    """One vehicle, one architecture, one plant fidelity."""

    def __init__(self, setup: SimSetup):
        if setup.architecture not in ("cg", "cgh", "ch"):
            raise ValueError(f"unknown architecture {setup.architecture!r}")
        if setup.fidelity not in ("a", "b"):
            raise ValueError("fidelity must be 'a' or 'b'")
        self.setup = setup
        self.n_steps = int(round(setup.duration / setup.dt))
        self.table = ReferenceTable(setup, self.n_steps)
        self._ez = E_Z
        self._D = setup.drag.matrix
        self._d_max = setup.drag.d_max

    # -- initial state --------------------------------------------------------

    def initial_state(self) -> np.ndarray:
        st = self.setup
        tb = self.table
        n = N_STATE_B if st.fidelity == "b" else N_STATE_A
        y = np.zeros(n)
        y[_P] = tb.p[0] + st.p_offset
        y[_V] = tb.v[0] + st.v_offset
        y[_PSI] = tb.psi[0]
        a_jet = heading_accel_jets(
            tb.a_t[0], tb.j_t[0], tb.s_t[0], tb.psi[0], tb.psid[0], tb.psidd[0]
        )
        from .attitude import phi_jets

        f, th, ph = phi_jets(a_jet)
        y[_RHO] = [ph.x, th.x, f.x]
        y[_RHOD] = [ph.d, th.d, f.d]
        y[_RR] = -np.sin(ph.x) * th.d + np.cos(ph.x) * np.cos(th.x) * tb.psid[0]
        if st.architecture == "ch":
            y[_AD] = a_jet.x
            y[_ADD] = a_jet.d
            # z = d_hat - L e_vH with d_hat(0) = 0.
            e_v0 = y[_V] - tb.v[0]
            e_vh0 = rot_z_T(tb.psi[0]) @ e_v0
            y[_Z] = -st.gains.l_obs * e_vh0
        else:
            y[_AD] = tb.a_t[0]
            y[_ADD] = tb.j_t[0]
            y[_Z] = -st.gains.l_obs * y[_V]
        y[_PSID_] = tb.psi[0]
        y[_PSIDD_] = tb.psid[0]
        if st.fidelity == "b":
            y[_RMAT] = euler_zyx(tb.psi[0], float(th.x), float(ph.x)).ravel()
            y[_OMEGA] = euler_rates_to_body(
                float(ph.x), float(th.x), float(ph.d), float(th.d), tb.psid[0]
            )
        return y

    # -- vector field ----------------------------------------------------------

    def field(self, y: np.ndarray, k: int, extras: dict | None = None) -> np.ndarray:
        st = self.setup
        tb = self.table
        g = st.gains
        dy = np.zeros_like(y)

        p = y[_P]
        v = y[_V]
        rho = y[_RHO]
        rhod = y[_RHOD]
        r_r = y[_RR]
        a_d = y[_AD]
        ad_dot = y[_ADD]
        z = y[_Z]
        psid_d = y[_PSIDD_]

        p_r, v_r = tb.p[k], tb.v[k]
        psi_r, psid_r, psidd_r = tb.psi[k], tb.psid[k], tb.psidd[k]
        a_t, j_t, s_t = tb.a_t[k], tb.j_t[k], tb.s_t[k]
        e_p = p - p_r
        e_v = v - v_r

        if st.fidelity == "b":
            R = y[_RMAT].reshape(3, 3)
            psi_plant = float(np.arctan2(R[1, 0], R[0, 0]))
        else:
            psi_plant = float(y[_PSI])

        # Yaw loop.
        e_psi = wrap_angle(psi_plant - psi_r)
        _, psidd_d_dot = yaw_control(e_psi, psid_r, psidd_r, psid_d, g)

        # Outer loop, per architecture.
        Rpsi = rot_z_mat(psi_r)
        if st.architecture == "ch":
            S = _skew_z(psid_r)
            a_tH = Rpsi.T @ a_t
            j_tH_raw = Rpsi.T @ j_t
            j_tH = j_tH_raw - S @ a_tH
            s_tH = Rpsi.T @ s_t - 2.0 * S @ j_tH_raw + (S @ S - _skew_z(psidd_r)) @ a_tH
            e_ph = Rpsi.T @ e_p
            e_vh = Rpsi.T @ e_v
            e_a = a_d - a_tH
            d_hat = z + g.l_obs * e_vh
            if st.ch_coriolis_compensation:
                # Published form: gains act on ep_dot^H with explicit
                # Coriolis compensation routed through the filter.
                ep_dot_h = e_vh - S @ e_ph
                nu_fb = control_ch(
                    e_ph, ep_dot_h, e_a, d_hat, psid_r, psidd_r, g
                )
            else:
                # Certifiable form: the gain law applied to the plain
                # heading-frame errors; frame rotation is left to the
                # invariant-set analysis as a transport term.
                nu_fb = control_cg(e_ph, e_vh, e_a, d_hat, g)
            nu = feedforward_nu(a_tH, j_tH, s_tH, g) + nu_fb
            addot = accel_model_derivs(a_d, ad_dot, nu, g)
            h_obs = e_a + self._d_max * e_vh - S @ e_vh
            dy[_Z] = observer_zdot(z, e_vh, h_obs, g.l_obs)
            a_jet_h = (a_d, ad_dot, addot)
            a_d_geo = Rpsi @ a_d
        else:
            e_a = a_d - a_t
            d_hat = z + g.l_obs * v
            if st.architecture == "cg":
                nu_fb = control_cg(e_p, e_v, e_a, d_hat, g)
            else:
                nu_fb = control_cgh(e_p, e_v, e_a, d_hat, psi_r, g)
            nu = feedforward_nu(a_t, j_t, s_t, g) + nu_fb
            addot = accel_model_derivs(a_d, ad_dot, nu, g)
            h_obs = a_d + tb.dbar_v_ar[k] + self._d_max * e_v
            dy[_Z] = observer_zdot(z, v, h_obs, g.l_obs)
            jet = heading_accel_jets(a_d, ad_dot, addot, psi_r, psid_r, psidd_r)
            a_jet_h = (jet.x, jet.d, jet.dd)
            a_d_geo = a_d

        from .jets import VJet

        rho_c = rho_command_from_heading(VJet(*a_jet_h), st.att_model)
        om_att, xi_att = st.att_model.omega, st.att_model.xi
        rhodd = -(om_att**2) * (rho - rho_c) - 2.0 * om_att * xi_att * rhod
        r_c = yaw_channel_inversion(
            r_r, rho[0], rho[1], rhod[0], rhod[1], rhodd[1],
            psid_d, psidd_d_dot, st.att_model.omega_r,
        )

        dy[_AD] = ad_dot
        dy[_ADD] = addot
        dy[_RHO] = rhod
        dy[_RHOD] = rhodd
        dy[_RR] = -st.att_model.omega_r * (r_r - r_c)
        dy[_PSID_] = psid_d
        dy[_PSIDD_] = psidd_d_dot
        dy[_P] = v

        phi, theta, f_thrust = rho
        cpct = np.cos(phi) * np.cos(theta)
        psid_plant = (r_r + np.sin(phi) * rhod[1]) / cpct
        if st.fidelity == "b":
            psid_ref = psid_plant  # reference yaw kinematics for the inner loop
            R_ref = euler_zyx(float(y[_PSI]), theta, phi)
            omega_ref = euler_rates_to_body(phi, theta, rhod[0], rhod[1], psid_ref)
            R = y[_RMAT].reshape(3, 3)
            omega = y[_OMEGA]
            tau = geometric_torque(R, omega, R_ref, omega_ref)
            dy[_OMEGA] = np.linalg.solve(INERTIA, tau - np.cross(omega, INERTIA @ omega))
            dy[_RMAT] = (R @ skew(omega)).ravel()
            dy[_PSI] = psid_ref
            R_plant = R
        else:
            dy[_PSI] = psid_plant
            R_plant = euler_zyx(float(y[_PSI]), theta, phi)
            if tb.inj is not None:
                R_plant = R_plant @ tb.inj[k]

        w_gust = tb.gust[k]
        Dbar = R_plant @ self._D @ R_plant.T
        vdot = (
            -R_plant[:, 2] * f_thrust
            + GRAVITY * self._ez
            + Dbar @ (v - st.wind.v_w)
            + w_gust
        )
        dy[_V] = vdot

        if extras is not None:
            extras["vdot"] = vdot
            extras["a_d_geo"] = a_d_geo
            extras["e_v"] = e_v
            extras["delta_geo"] = Dbar - self._d_max * np.eye(3)
            extras["R_plant"] = R_plant
            extras["rho"] = rho.copy()
            extras["f"] = float(f_thrust)
            extras["psidd_d_dot"] = float(psidd_d_dot)
        return dy

    def rk4_step(self, y: np.ndarray, k2: int) -> np.ndarray:
        dt = self.setup.dt
        k1 = self.field(y, k2)
        k2_ = self.field(y + 0.5 * dt * k1, k2 + 1)
        k3 = self.field(y + 0.5 * dt * k2_, k2 + 1)
        k4 = self.field(y + dt * k3, k2 + 2)
        y_new = y + dt / 6.0 * (k1 + 2.0 * k2_ + 2.0 * k3 + k4)
        if self.setup.fidelity == "b":
            y_new[_RMAT] = orthonormalize(y_new[_RMAT].reshape(3, 3)).ravel()
        return y_new

    # -- error-state extraction -----------------------------------------------

    def error_state(self, y: np.ndarray, k: int) -> np.ndarray:
        """Stacked error vector in the architecture's certification frame."""
        st = self.setup
        tb = self.table
        e_p = y[_P] - tb.p[k]
        e_v = y[_V] - tb.v[k]
        if st.architecture == "ch":
            Rt = rot_z_T(tb.psi[k])
            S = _skew_z(tb.psid[k])
            a_tH = Rt @ tb.a_t[k]
            j_tH = Rt @ tb.j_t[k] - S @ a_tH
            e_ph = Rt @ e_p
            e_vh = Rt @ e_v
            e_a = y[_AD] - a_tH
            e_ad = y[_ADD] - j_tH
            d_hat = y[_Z] + st.gains.l_obs * e_vh
            return np.concatenate([e_ph, e_vh, e_a, e_ad, d_hat])
        e_a = y[_AD] - tb.a_t[k]
        e_ad = y[_ADD] - tb.j_t[k]
        d_hat = y[_Z] + st.gains.l_obs * y[_V]
        return np.concatenate([e_p, e_v, e_a, e_ad, d_hat])


def rot_z_mat(psi: float) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_z_T(psi: float) -> np.ndarray:
    return rot_z_mat(psi).T


@dataclass
class SimTrace:
    """Time-stamped record of one run; CSV round-trips at 17 digits."""

    columns: list[str]
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def has_column(self, name: str) -> bool:
        return name in self.columns

    def to_csv(self, path: str) -> None:
        with open(path, "w") as f:
            f.write(",".join(self.columns) + "\n")
            for row in self.data:
                f.write(",".join(f"{x:.17g}" for x in row) + "\n")

    @staticmethod
    def from_csv(path: str) -> "SimTrace":
        with open(path) as f:
            header = f.readline().strip().split(",")
            data = np.loadtxt(f, delimiter=",", ndmin=2)
        return SimTrace(columns=header, data=data)


TRACE_BASE_COLUMNS = (
    ["t"]
    + [f"p_{c}" for c in "xyz"]
    + [f"v_{c}" for c in "xyz"]
    + ["phi", "theta", "psi", "f", "tilt_deg"]
    + ["psi_d", "psid_d", "psidd_d", "psid_sched", "psidd_sched"]
    + [f"w_{c}" for c in "xyz"]
    + [f"p_r_{c}" for c in "xyz"]
    + [f"v_r_{c}" for c in "xyz"]
    + [f"a_r_{c}" for c in "xyz"]
    + ["psi_r"]
)


def run_simulation(setup: SimSetup, ellipsoid: Ellipsoid | None = None) -> SimTrace:
    """Integrate the closed loop and record one trace row per step."""
    sim = ClosedLoopSim(setup)
    tb = sim.table
    labels = _error_labels(setup.architecture)
    columns = TRACE_BASE_COLUMNS + labels + (["eTPe"] if ellipsoid is not None else [])
    rows = np.zeros((sim.n_steps + 1, len(columns)))
    y = sim.initial_state()
    for step in range(sim.n_steps + 1):
        k = 2 * step
        extras: dict = {}
        sim.field(y, k, extras=extras)
        err = sim.error_state(y, k)
        R_cmd = euler_zyx(tb.psi[k], extras["rho"][1], extras["rho"][0])
        tilt = tilt_angle(extras["R_plant"], R_cmd)
        if setup.fidelity == "b":
            R = y[_RMAT].reshape(3, 3)
            phi_p = np.arctan2(R[2, 1], R[2, 2])
            theta_p = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
            psi_p = np.arctan2(R[1, 0], R[0, 0])
        else:
            phi_p, theta_p, psi_p = extras["rho"][0], extras["rho"][1], y[_PSI]
        base = (
            [tb.t[k]]
            + list(y[_P])
            + list(y[_V])
            + [phi_p, theta_p, psi_p, extras["f"], np.degrees(tilt)]
            + [y[_PSID_], y[_PSIDD_], extras["psidd_d_dot"], tb.psid[k], tb.psidd[k]]
            + list(tb.gust[k])
            + list(tb.p[k])
            + list(tb.v[k])
            + list(tb.a[k])
            + [tb.psi[k]]
        )
        row = base + list(err)
        if ellipsoid is not None:
            row.append(float(err @ ellipsoid.P @ err))
        rows[step] = row
        if step < sim.n_steps:
            y = sim.rk4_step(y, k)
    meta = {
        "architecture": setup.architecture,
        "fidelity": setup.fidelity,
        "dt": setup.dt,
        "duration": sim.n_steps * setup.dt,
        "seed": setup.wind.seed,
        "error_labels": labels,
    }
    return SimTrace(columns=columns, data=rows, meta=meta)


def _error_labels(architecture: str) -> list[str]:
    from .errorsys import _state_labels

    return _state_labels(architecture, planar=False)


def run_lpv_cosim(setup: SimSetup, espec: ErrorSystemSpec, duration: float | None = None):
    """Full stack and the polytopic error system side by side.

    The error system is driven by the residuals realized in the full
    stack (same RK4 stages), so any mismatch measures restatement error
    rather than disturbance modeling. Returns the maximum infinity-norm
    gap over the run.
    """
    if espec.architecture != setup.architecture or espec.planar:
        raise ValueError("cosim requires a full-state spec of the same architecture")
    if (
        espec.architecture == "ch"
        and espec.coriolis_compensation != setup.ch_coriolis_compensation
    ):
        raise ValueError("compensation flags of simulation and error system differ")
    sim = ClosedLoopSim(setup)
    system = build_error_system(espec)
    E = system.E
    n_steps = sim.n_steps if duration is None else int(round(duration / setup.dt))
    dt = setup.dt

    def lpv_field(x, y_full, k):
        extras: dict = {}
        dy = sim.field(y_full, k, extras=extras)
        tb = sim.table
        u_geo = (
            extras["vdot"]
            - extras["a_d_geo"]
            - tb.dbar_v_ar[k]
            - sim._d_max * extras["e_v"]
        )
        if setup.architecture == "ch":
            Rt = rot_z_T(tb.psi[k])
            u = Rt @ u_geo
            sched = {"psid": tb.psid[k], "psidd": tb.psidd[k]}
        elif setup.architecture == "cgh":
            u = u_geo
            sched = {"psi": tb.psi[k]}
        else:
            u = u_geo
            sched = None
        A = closed_loop_a_matrix(espec, sched)
        return A @ x + E @ u, dy

    y = sim.initial_state()
    x = sim.error_state(y, 0)
    max_gap = 0.0
    for step in range(n_steps):
        k = 2 * step
        dx1, dy1 = lpv_field(x, y, k)
        dx2, dy2 = lpv_field(x + 0.5 * dt * dx1, y + 0.5 * dt * dy1, k + 1)
        dx3, dy3 = lpv_field(x + 0.5 * dt * dx2, y + 0.5 * dt * dy2, k + 1)
        dx4, dy4 = lpv_field(x + dt * dx3, y + dt * dy3, k + 2)
        x = x + dt / 6.0 * (dx1 + 2.0 * dx2 + 2.0 * dx3 + dx4)
        y = y + dt / 6.0 * (dy1 + 2.0 * dy2 + 2.0 * dy3 + dy4)
        gap = float(np.max(np.abs(x - sim.error_state(y, k + 2))))
        max_gap = max(max_gap, gap)
    return max_gap
