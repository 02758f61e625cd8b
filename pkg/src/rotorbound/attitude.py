"""Attitude-subsystem interface.

The inner loop is abstracted as second-order reference dynamics on
rho = [phi_r, theta_r, f] plus a first-order body yaw-rate channel.
This module provides:

* the acceleration <-> attitude transform Phi and its inverse,
* analytic first and second time derivatives of Phi (via 2-jets),
* the reference-model inversion producing rho_c so the closed inner
  loop reproduces a desired twice-differentiable acceleration,
* the yaw-rate channel inversion producing r_c,
* RK4 stepping of the reference dynamics.

Note the stiffness sign: the reference dynamics are integrated as
rhodd = -Omega^2 (rho - rho_c) - 2 Omega Xi rhod, the stable form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flatness import GRAVITY
from .jets import SJet, VJet

F_MIN = 1.0  # m/s^2, lower bound on commanded mass-normalized thrust
G2_MARGIN = 0.1  # invertibility floor on cos(phi) cos(theta)


class PhiDomainError(ValueError):
    """Commanded acceleration outside the invertible thrust domain."""


class YawInversionError(ValueError):
    """Yaw-rate channel not invertible at the current attitude."""


@dataclass(frozen=True)
class AttitudeRefModel:
    """Bandwidths/dampings of the attitude interface (Eq. form above)."""

    omega: np.ndarray = field(default_factory=lambda: np.array([8.0, 8.0, 12.0]))
    xi: np.ndarray = field(default_factory=lambda: np.ones(3))
    omega_r: float = 6.0

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if np.any(om <= 0.0) or np.any(xi <= 0.0) or self.omega_r <= 0.0:
            raise ValueError("bandwidths and dampings must be positive")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "xi", xi)


@dataclass
class AttitudeRefState:
    """State of the attitude reference dynamics."""

    rho: np.ndarray
    rhod: np.ndarray
    r_r: float

    def copy(self) -> "AttitudeRefState":
        return AttitudeRefState(self.rho.copy(), self.rhod.copy(), self.r_r)


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyx(psi: float, theta: float, phi: float) -> np.ndarray:
    """Body-to-geodetic rotation from ZYX Euler angles."""
    return rot_z(psi) @ rot_y(theta) @ rot_x(phi)


def accel_to_attitude(a_ch: np.ndarray, g: float = GRAVITY):
    """Inverse transform Phi: heading-frame acceleration -> (f, theta, phi).

    f = sqrt(ax^2 + ay^2 + (az - g)^2), theta = arctan(ax / (az - g)),
    phi = arcsin(ay / f). Domain: az < g (thrust points upward) and
    f > F_MIN.
    """
    a_ch = np.asarray(a_ch, dtype=float)
    ax, ay, az = a_ch
    w = az - g
    if w >= 0.0:
        raise PhiDomainError(f"a_z = {az:.3f} >= g: inverted-thrust demand")
    f = float(np.sqrt(ax * ax + ay * ay + w * w))
    if f <= F_MIN:
        raise PhiDomainError(f"commanded thrust {f:.3f} below floor {F_MIN}")
    if abs(ay) > f:
        raise PhiDomainError("lateral acceleration exceeds thrust magnitude")
    theta = float(np.arctan(ax / w))
    phi = float(np.arcsin(ay / f))
    return f, theta, phi


def attitude_to_accel(f: float, theta: float, phi: float, g: float = GRAVITY):
    """Forward map: heading-frame acceleration produced by (f, theta, phi)."""
    tilt = rot_y(theta) @ rot_x(phi)
    return -tilt[:, 2] * f + g * np.array([0.0, 0.0, 1.0])


def phi_jets(a_ch: VJet, g: float = GRAVITY) -> tuple[SJet, SJet, SJet]:
    """2-jets of (f, theta, phi) along a heading-frame acceleration jet."""
    ax = a_ch.component(0)
    ay = a_ch.component(1)
    w = a_ch.component(2) - SJet.constant(np.broadcast_to(g, np.shape(a_ch.x)[:-1]).copy())
    f = (ax * ax + ay * ay + w * w).sqrt()
    theta = (ax / w).arctan()
    phi = (ay / f).arcsin()
    return f, theta, phi


def heading_accel_jets(
    a_d: np.ndarray,
    j_d: np.ndarray,
    s_d: np.ndarray,
    psi: float,
    psid: float,
    psidd: float,
) -> VJet:
    """Rotate a geodetic acceleration jet into the heading-fixed frame.

    Implements the chain rule for a^H = R_psi^T a with
    d/dt(R_psi^T) = -S(psid) R_psi^T.
    """
    Rt = rot_z(psi).T
    S = np.array([[0.0, -psid, 0.0], [psid, 0.0, 0.0], [0.0, 0.0, 0.0]])
    Sdd = np.array([[0.0, -psidd, 0.0], [psidd, 0.0, 0.0], [0.0, 0.0, 0.0]])
    a_h = Rt @ a_d
    j_h = Rt @ j_d - S @ a_h
    s_h = Rt @ s_d - 2.0 * S @ (Rt @ j_d) + (S @ S - Sdd) @ a_h
    return VJet(a_h, j_h, s_h)


def invert_reference_model(
    a_d, j_d, s_d, psi: float, psid: float, psidd: float, model: AttitudeRefModel
) -> np.ndarray:
    """Command rho_c that makes the reference dynamics track Phi(a_d^H).

    rho_c = Phi + 2 Xi Omega^-1 Phid + Omega^-2 Phidd with the
    derivatives taken analytically along the desired acceleration.
    """
    a_jet = heading_accel_jets(
        np.asarray(a_d, float), np.asarray(j_d, float), np.asarray(s_d, float),
        psi, psid, psidd,
    )
    return rho_command_from_heading(a_jet, model)


def rho_command_from_heading(a_h_jet: VJet, model: AttitudeRefModel) -> np.ndarray:
    """rho_c from a heading-frame acceleration 2-jet."""
    f, theta, phi = phi_jets(a_h_jet)
    if not (f.x > F_MIN):
        raise PhiDomainError(f"commanded thrust {float(f.x):.3f} below floor {F_MIN}")
    if not (a_h_jet.x[..., 2] < GRAVITY):
        raise PhiDomainError("inverted-thrust demand")
    om, xi = model.omega, model.xi
    chans = (phi, theta, f)
    return np.array(
        [
            float(c.x + 2.0 * xi[i] / om[i] * c.d + c.dd / om[i] ** 2)
            for i, c in enumerate(chans)
        ]
    )


def reference_derivs(
    state: AttitudeRefState, rho_c: np.ndarray, r_c: float, model: AttitudeRefModel
):
    """Right-hand side of the attitude reference dynamics."""
    om, xi = model.omega, model.xi
    rhodd = -(om**2) * (state.rho - rho_c) - 2.0 * om * xi * state.rhod
    r_rd = -model.omega_r * (state.r_r - r_c)
    return state.rhod, rhodd, r_rd


def step_attitude_reference(
    state: AttitudeRefState, rho_c, r_c: float, dt: float, model: AttitudeRefModel
) -> AttitudeRefState:
    """One RK4 step of the reference dynamics under held commands."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    rho_c = np.asarray(rho_c, dtype=float)

    def f(y):
        st = AttitudeRefState(y[0:3], y[3:6], y[6])
        rd, rdd, r_rd = reference_derivs(st, rho_c, r_c, model)
        return np.concatenate([rd, rdd, [r_rd]])

    y0 = np.concatenate([state.rho, state.rhod, [state.r_r]])
    k1 = f(y0)
    k2 = f(y0 + 0.5 * dt * k1)
    k3 = f(y0 + 0.5 * dt * k2)
    k4 = f(y0 + dt * k3)
    y = y0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return AttitudeRefState(y[0:3], y[3:6], float(y[6]))


def yawrate_transform(phi: float, theta: float, thetad: float, psid: float) -> float:
    """Body yaw rate from Euler angles/rates: r = -sin(phi) thetad + cos(phi) cos(theta) psid."""
    return -np.sin(phi) * thetad + np.cos(phi) * np.cos(theta) * psid


def psid_from_bodyrate(r: float, phi: float, theta: float, thetad: float) -> float:
    """Invert :func:`yawrate_transform` for the Euler yaw rate."""
    g2 = np.cos(phi) * np.cos(theta)
    if g2 <= G2_MARGIN:
        raise YawInversionError(f"cos(phi)cos(theta) = {g2:.3f} <= {G2_MARGIN}")
    return (r + np.sin(phi) * thetad) / g2


def yaw_channel_inversion(
    r_r: float,
    phi: float,
    theta: float,
    phid: float,
    thetad: float,
    thetadd: float,
    psid_d: float,
    psidd_d: float,
    omega_r: float,
) -> float:
    """Feedforward body yaw-rate command r_c tracking a desired psi trajectory.

    r_c = r_r + omega_r^-1 (g1 psid_d + g2 psidd_d + g3) with the
    coefficients from differentiating the Euler-rate transform.
    """
    g2 = np.cos(phi) * np.cos(theta)
    if g2 <= G2_MARGIN:
        raise YawInversionError(f"cos(phi)cos(theta) = {g2:.3f} <= {G2_MARGIN}")
    g1 = -np.sin(phi) * np.cos(theta) * phid - np.cos(phi) * np.sin(theta) * thetad
    g3 = -np.cos(phi) * phid * thetad - np.sin(phi) * thetadd
    return r_r + (g1 * psid_d + g2 * psidd_d + g3) / omega_r
