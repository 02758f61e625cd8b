"""Nonlinear closed-loop simulation plants and disturbance generation.

Two fidelity levels share the translational model

    vdot = -R e_z f + g e_z + R D R^T (v - v_W) + w(t):

* Fidelity A: the attitude IS the reference-dynamics output (roll and
  pitch from the rho states, yaw driven by the reference body yaw
  rate), optionally perturbed by a configurable attitude-error
  injection that exercises the thrust-misalignment disturbance bound.
* Fidelity B: full rigid-body rotational dynamics with a geometric
  attitude tracking torque law tuned to follow the same reference
  dynamics (bandwidth-matched inner loop).

Wind is a constant mean velocity plus a seeded sum-of-sinusoids gust
acceleration with a hard norm bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attitude import (
    AttitudeRefModel,
    AttitudeRefState,
    euler_zyx,
    psid_from_bodyrate,
    reference_derivs,
    rot_z,
)
from .flatness import E_Z, GRAVITY, DragModel, skew


@dataclass(frozen=True)
class InjectionConfig:
    """Attitude-error injection: tilt of fixed angle about a precessing axis."""

    amplitude: float = 0.0  # rad
    frequency_hz: float = 0.3
    mode: str = "cone"  # "cone" or "fixed"
    axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float))
        if self.mode not in ("cone", "fixed"):
            raise ValueError("injection mode must be 'cone' or 'fixed'")

    def rotation(self, t: float) -> np.ndarray:
        """Body-frame perturbation rotation at time t (identity if off)."""
        if self.amplitude == 0.0:
            return np.eye(3)
        if self.mode == "cone":
            ang = 2.0 * np.pi * self.frequency_hz * t
            axis = np.array([np.cos(ang), np.sin(ang), 0.0])
        else:
            axis = self.axis / np.linalg.norm(self.axis)
        K = skew(axis)
        s, c = np.sin(self.amplitude), np.cos(self.amplitude)
        return np.eye(3) + s * K + (1.0 - c) * (K @ K)


@dataclass(frozen=True)
class WindModel:
    """Mean wind velocity plus a bounded gust acceleration generator.

    The gust is a per-axis sum of seeded sinusoids whose amplitude
    budgets guarantee ||w(t)|| <= w_max; any residual excess would be
    clipped (and counted), but the budget makes clipping a no-op.
    """

    v_w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w_max: float = 0.0
    n_components: int = 8
    seed: int = 0
    freq_range_hz: tuple[float, float] = (0.02, 2.0)
    fill: float = 0.99
    bias: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "v_w", np.asarray(self.v_w, dtype=float))
        if self.w_max < 0.0:
            raise ValueError("w_max must be nonnegative")
        bias = np.zeros(3) if self.bias is None else np.asarray(self.bias, float)
        object.__setattr__(self, "bias", bias)
        rng = np.random.default_rng(self.seed)
        k = self.n_components
        budget = max(self.fill * self.w_max - np.linalg.norm(bias), 0.0) / np.sqrt(3.0)
        raw = rng.uniform(0.2, 1.0, size=(3, k))
        amps = raw / raw.sum(axis=1, keepdims=True) * budget
        freqs = np.exp(
            rng.uniform(
                np.log(self.freq_range_hz[0]), np.log(self.freq_range_hz[1]), size=(3, k)
            )
        )
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(3, k))
        object.__setattr__(self, "_amps", amps)
        object.__setattr__(self, "_omegas", 2.0 * np.pi * freqs)
        object.__setattr__(self, "_phases", phases)

    def gust(self, t) -> np.ndarray:
        """Gust acceleration w(t); vectorized over an array of times."""
        t = np.asarray(t, dtype=float)
        if self.w_max == 0.0:
            return np.zeros(t.shape + (3,)) if t.ndim else np.zeros(3)
        arg = self._omegas[None] * t.reshape(-1, 1, 1) + self._phases[None]
        w = np.sum(self._amps[None] * np.sin(arg), axis=2) + self.bias[None, :]
        norms = np.linalg.norm(w, axis=1)
        over = norms > self.w_max
        if np.any(over):
            w[over] *= (self.w_max / norms[over])[:, None]
        return w[0] if t.ndim == 0 else w

    def clipping_rate(self, ts) -> float:
        """Fraction of samples whose raw gust sum exceeded w_max."""
        t = np.asarray(ts, dtype=float)
        if self.w_max == 0.0:
            return 0.0
        arg = self._omegas[None] * t.reshape(-1, 1, 1) + self._phases[None]
        w = np.sum(self._amps[None] * np.sin(arg), axis=2) + self.bias[None, :]
        return float(np.mean(np.linalg.norm(w, axis=1) > self.w_max))


@dataclass(frozen=True)
class WindSample:
    v_w: np.ndarray
    gust: np.ndarray


def sample_wind(model: WindModel, t: float) -> WindSample:
    """Mean wind velocity and gust acceleration at time t (seed-deterministic)."""
    return WindSample(v_w=model.v_w, gust=model.gust(float(t)))


def translational_accel(R, f, v, wind: WindSample, drag: DragModel) -> np.ndarray:
    """vdot = -R e_z f + g e_z + R D R^T (v - v_W) + w."""
    Dbar = R @ drag.matrix @ R.T
    return -R[:, 2] * f + GRAVITY * E_Z + Dbar @ (v - wind.v_w) + wind.gust


@dataclass
class PlantState:
    """Plant state; fidelity B adds the rigid-body attitude and rates."""

    p: np.ndarray
    v: np.ndarray
    psi: float
    att: AttitudeRefState
    R: np.ndarray | None = None
    omega: np.ndarray | None = None

    def copy(self) -> "PlantState":
        return PlantState(
            self.p.copy(),
            self.v.copy(),
            self.psi,
            self.att.copy(),
            None if self.R is None else self.R.copy(),
            None if self.omega is None else self.omega.copy(),
        )


def attitude_a_rotation(state: PlantState) -> np.ndarray:
    """Fidelity-A flight attitude from the reference states and yaw."""
    phi, theta = state.att.rho[0], state.att.rho[1]
    return euler_zyx(state.psi, theta, phi)


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Project onto SO(3) via the polar decomposition."""
    U, _, Vt = np.linalg.svd(R)
    out = U @ Vt
    if np.linalg.det(out) < 0.0:
        out = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return out


def _plant_a_derivs(
    state: PlantState,
    rho_c: np.ndarray,
    r_c: float,
    t: float,
    injection: InjectionConfig,
    wind: WindModel,
    drag: DragModel,
    model: AttitudeRefModel,
):
    rhod, rhodd, r_rd = reference_derivs(state.att, rho_c, r_c, model)
    phi, theta = state.att.rho[0], state.att.rho[1]
    psid = psid_from_bodyrate(state.att.r_r, phi, theta, rhod[1])
    R = attitude_a_rotation(state) @ injection.rotation(t)
    vdot = translational_accel(
        R, state.att.rho[2], state.v, sample_wind(wind, t), drag
    )
    return state.v, vdot, psid, rhod, rhodd, r_rd


def step_plant_A(
    state: PlantState,
    rho_c,
    r_c: float,
    t: float,
    dt: float,
    injection: InjectionConfig,
    wind: WindModel,
    drag: DragModel,
    model: AttitudeRefModel,
) -> PlantState:
    """RK4 step of the fidelity-A plant under held commands."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    rho_c = np.asarray(rho_c, dtype=float)

    def pack(s: PlantState) -> np.ndarray:
        return np.concatenate(
            [s.p, s.v, [s.psi], s.att.rho, s.att.rhod, [s.att.r_r]]
        )

    def unpack(y: np.ndarray) -> PlantState:
        return PlantState(
            y[0:3], y[3:6], float(y[6]),
            AttitudeRefState(y[7:10], y[10:13], float(y[13])),
        )

    def f(y, tt):
        s = unpack(y)
        pd, vd, psid, rhod, rhodd, r_rd = _plant_a_derivs(
            s, rho_c, r_c, tt, injection, wind, drag, model
        )
        return np.concatenate([pd, vd, [psid], rhod, rhodd, [r_rd]])

    y = pack(state)
    k1 = f(y, t)
    k2 = f(y + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = f(y + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = f(y + dt * k3, t + dt)
    return unpack(y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


# -- fidelity B: rigid-body inner loop ---------------------------------------

INERTIA = np.diag([0.4, 1.2, 1.0])  # kg m^2, small-helicopter scale

#: Geometric attitude loop gains (double pole at 40 rad/s per axis).
K_ROT = 1600.0
K_OMEGA = 80.0


def euler_rates_to_body(phi, theta, phid, thetad, psid) -> np.ndarray:
    """Body rates from ZYX Euler angle rates."""
    return np.array(
        [
            phid - np.sin(theta) * psid,
            np.cos(phi) * thetad + np.sin(phi) * np.cos(theta) * psid,
            -np.sin(phi) * thetad + np.cos(phi) * np.cos(theta) * psid,
        ]
    )


def _vee(M: np.ndarray) -> np.ndarray:
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def geometric_torque(R, omega, R_ref, omega_ref) -> np.ndarray:
    """SO(3) tracking torque with gyroscopic cancellation."""
    e_R = 0.5 * _vee(R_ref.T @ R - R.T @ R_ref)
    e_w = omega - R.T @ R_ref @ omega_ref
    return INERTIA @ (-K_ROT * e_R - K_OMEGA * e_w) + np.cross(
        omega, INERTIA @ omega
    )


def _plant_b_derivs(
    state: PlantState,
    rho_c: np.ndarray,
    r_c: float,
    t: float,
    wind: WindModel,
    drag: DragModel,
    model: AttitudeRefModel,
):
    rhod, rhodd, r_rd = reference_derivs(state.att, rho_c, r_c, model)
    phi, theta = state.att.rho[0], state.att.rho[1]
    psid_ref = psid_from_bodyrate(state.att.r_r, phi, theta, rhod[1])
    R_ref = euler_zyx(state.psi, theta, phi)
    omega_ref = euler_rates_to_body(phi, theta, rhod[0], rhod[1], psid_ref)
    tau = geometric_torque(state.R, state.omega, R_ref, omega_ref)
    omegad = np.linalg.solve(
        INERTIA, tau - np.cross(state.omega, INERTIA @ state.omega)
    )
    Rd = state.R @ skew(state.omega)
    vdot = translational_accel(
        state.R, state.att.rho[2], state.v, sample_wind(wind, t), drag
    )
    return state.v, vdot, psid_ref, rhod, rhodd, r_rd, Rd, omegad


def step_plant_B(
    state: PlantState,
    rho_c,
    r_c: float,
    t: float,
    dt: float,
    wind: WindModel,
    drag: DragModel,
    model: AttitudeRefModel,
) -> PlantState:
    """RK4 step of the rigid-body plant; re-orthonormalizes R afterwards."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    rho_c = np.asarray(rho_c, dtype=float)

    def pack(s: PlantState) -> np.ndarray:
        return np.concatenate(
            [s.p, s.v, [s.psi], s.att.rho, s.att.rhod, [s.att.r_r],
             s.R.ravel(), s.omega]
        )

    def unpack(y: np.ndarray) -> PlantState:
        return PlantState(
            y[0:3], y[3:6], float(y[6]),
            AttitudeRefState(y[7:10], y[10:13], float(y[13])),
            R=y[14:23].reshape(3, 3), omega=y[23:26],
        )

    def f(y, tt):
        s = unpack(y)
        pd, vd, psid, rhod, rhodd, r_rd, Rd, omegad = _plant_b_derivs(
            s, rho_c, r_c, tt, wind, drag, model
        )
        return np.concatenate([pd, vd, [psid], rhod, rhodd, [r_rd], Rd.ravel(), omegad])

    y = pack(state)
    k1 = f(y, t)
    k2 = f(y + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = f(y + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = f(y + dt * k3, t + dt)
    out = unpack(y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    out.R = orthonormalize(out.R)
    return out


def tilt_angle(R: np.ndarray, R_cmd: np.ndarray) -> float:
    """Angle between the thrust axes of two attitudes (rad).

    atan2 of cross/dot keeps full precision near zero, where arccos
    loses half the significant digits.
    """
    z1, z2 = R[:, 2], R_cmd[:, 2]
    return float(np.arctan2(np.linalg.norm(np.cross(z1, z2)), z1 @ z2))


def hover_state(
    p0, psi0: float = 0.0, f0: float = GRAVITY, fidelity: str = "a"
) -> PlantState:
    """Stationary matched state at a hover point."""
    att = AttitudeRefState(np.array([0.0, 0.0, f0]), np.zeros(3), 0.0)
    st = PlantState(np.asarray(p0, float).copy(), np.zeros(3), psi0, att)
    if fidelity == "b":
        st.R = rot_z(psi0)
        st.omega = np.zeros(3)
    return st
