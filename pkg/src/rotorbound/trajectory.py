"""Smooth reference trajectories: C4 position, C2 yaw.

The loiter maneuver starts in straight flight at cruise speed and bends
into a circle of the requested radius by ramping the track curvature
with a single C4 phase polynomial. All derivatives up to snap and the
yaw references are returned in closed form; position on the blend
segment is evaluated with fixed-order Gauss-Legendre quadrature of the
(analytic) velocity, which is exact to rounding for these integrands.

Geodetic frame is NED (z down). Yaw follows the horizontal velocity
vector whenever it is slaved (nose into the wind of travel).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

V_MIN_YAW = 0.1  # m/s, minimum horizontal speed for velocity-slaved yaw

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


class TrajectoryDomainError(ValueError):
    """Requested time lies outside the trajectory domain."""


class YawSlavingError(ValueError):
    """Horizontal speed too low to slave yaw to the velocity vector."""


@dataclass(frozen=True)
class ReferenceSample:
    """Flat-output sample: position through snap plus yaw through ψ̈."""

    t: float
    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    j: np.ndarray
    s: np.ndarray
    psi: float
    psid: float
    psidd: float


@dataclass(frozen=True)
class LoiterSpec:
    """Hover-to-loiter maneuver parameters."""

    radius: float
    speed: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    entry_duration: float = 6.0
    total_duration: float = 60.0
    altitude: float | None = None

    def __post_init__(self):
        if self.radius <= 0.0 or self.speed <= 0.0 or self.entry_duration <= 0.0:
            raise ValueError("radius, speed and entry_duration must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


def smooth_blend(u: np.ndarray) -> tuple[np.ndarray, ...]:
    """Minimal-degree C4 step on [0, 1].

    Returns (s, s', s'', s''', s'''') of the 9th-order polynomial with
    s(0)=0, s(1)=1 and vanishing derivatives up to order four at both
    ends. Outside [0, 1] the polynomial is clamped to its end values.
    """
    u = np.asarray(u, dtype=float)
    uc = np.clip(u, 0.0, 1.0)
    s = uc**5 * (126.0 + uc * (-420.0 + uc * (540.0 + uc * (-315.0 + 70.0 * uc))))
    s1 = 630.0 * uc**4 * (1.0 - uc) ** 4
    s2 = 2520.0 * uc**3 * (1.0 - uc) ** 3 * (1.0 - 2.0 * uc)
    s3 = 2520.0 * uc**2 * (1.0 - uc) ** 2 * (3.0 - 14.0 * uc + 14.0 * uc**2)
    s4 = 15120.0 * uc * (1.0 - uc) * (1.0 - 2.0 * uc) * (1.0 - 7.0 * uc + 7.0 * uc**2)
    return s, s1, s2, s3, s4


def smooth_blend_integral(u: np.ndarray) -> np.ndarray:
    """Antiderivative of :func:`smooth_blend` with value 0 at u = 0."""
    u = np.asarray(u, dtype=float)
    uc = np.clip(u, 0.0, 1.0)
    val = uc**6 * (21.0 + uc * (-60.0 + uc * (67.5 + uc * (-35.0 + 7.0 * uc))))
    # Past the blend the integrand is identically 1.
    return val + np.where(u > 1.0, u - 1.0, 0.0)


def yaw_from_velocity(v, a, j, v_min: float = V_MIN_YAW):
    """Yaw reference slaved to the horizontal velocity direction.

    psi = atan2(vy, vx); psid and psidd are the exact time derivatives
    computed from (v, a, j). Raises :class:`YawSlavingError` below the
    horizontal-speed floor. psi is wrapped to (-pi, pi]; use
    :class:`YawUnwrapper` for a continuous signal along a trajectory.
    """
    v = np.asarray(v, float)
    a = np.asarray(a, float)
    j = np.asarray(j, float)
    vx, vy = v[..., 0], v[..., 1]
    h2 = vx * vx + vy * vy
    if np.any(h2 <= v_min * v_min):
        raise YawSlavingError(
            f"horizontal speed {np.sqrt(np.min(h2)):.4f} m/s below v_min={v_min}"
        )
    ax, ay = a[..., 0], a[..., 1]
    jx, jy = j[..., 0], j[..., 1]
    psi = np.arctan2(vy, vx)
    num = vx * ay - vy * ax
    psid = num / h2
    numd = vx * jy - vy * jx
    h2d = 2.0 * (vx * ax + vy * ay)
    psidd = numd / h2 - num * h2d / (h2 * h2)
    return psi, psid, psidd


class YawUnwrapper:
    """Accumulates a continuous yaw signal from wrapped samples."""

    def __init__(self):
        self._offset = 0.0
        self._last = None

    def feed(self, psi_wrapped: float) -> float:
        if self._last is not None:
            step = psi_wrapped + self._offset - self._last
            if step > np.pi:
                self._offset -= 2.0 * np.pi
            elif step < -np.pi:
                self._offset += 2.0 * np.pi
        out = psi_wrapped + self._offset
        self._last = out
        return out


class LoiterTrajectory:
    """Tangent-entry loiter: straight cruise bending into a steady circle.

    The track angle chi satisfies chi' = (v/R) * s(t/T_e) during the
    entry and chi' = v/R afterwards, with s the C4 blend. The steady
    segment is an exact circle about ``spec.center``; the entry segment
    is positioned so the two join with C4 continuity.
    """

    def __init__(self, spec: LoiterSpec, heading0: float = 0.0):
        self.spec = spec
        self.heading0 = float(heading0)
        self.omega = spec.speed / spec.radius
        te = spec.entry_duration
        self._chi_entry = self.omega * te * 0.5  # integral of blend = T_e/2
        z = -spec.altitude if spec.altitude is not None else spec.center[2]
        self._z = float(z)
        # Displacement accumulated over the blend, by quadrature.
        disp = self._velocity_integral(np.array([te]))[0]
        chi_e = self.heading0 + self._chi_entry
        p_entry = np.array(
            [
                spec.center[0] + spec.radius * np.sin(chi_e),
                spec.center[1] - spec.radius * np.cos(chi_e),
            ]
        )
        self._p0 = p_entry - disp

    @property
    def duration(self) -> float:
        return self.spec.total_duration

    def _chi(self, t: np.ndarray):
        """Track angle and its first three derivatives."""
        te = self.spec.entry_duration
        u = t / te
        s, s1, s2, _, _ = smooth_blend(u)
        chi = self.heading0 + self.omega * te * smooth_blend_integral(u)
        chid = self.omega * s
        chidd = self.omega * s1 / te
        chiddd = self.omega * s2 / te**2
        return chi, chid, chidd, chiddd

    def _velocity_integral(self, t: np.ndarray) -> np.ndarray:
        """Integral of the horizontal velocity over [0, t], t <= entry."""
        half = 0.5 * t
        nodes = half[:, None] * (_GL_NODES[None, :] + 1.0)
        chi, _, _, _ = self._chi(nodes)
        ix = half * (np.cos(chi) @ _GL_WEIGHTS)
        iy = half * (np.sin(chi) @ _GL_WEIGHTS)
        return self.spec.speed * np.stack([ix, iy], axis=-1)

    def sample_batch(self, t: np.ndarray) -> dict[str, np.ndarray]:
        t = np.asarray(t, dtype=float)
        sp = self.spec
        if np.any(t < 0.0) or np.any(t > sp.total_duration + 1e-12):
            raise TrajectoryDomainError("time outside [0, total_duration]")
        n = t.shape[0]
        chi, chid, chidd, chiddd = self._chi(t)
        c, s = np.cos(chi), np.sin(chi)
        tang = np.stack([c, s], axis=-1)
        norm = np.stack([-s, c], axis=-1)
        v0 = sp.speed

        p = np.zeros((n, 3))
        p[:, 2] = self._z
        te = sp.entry_duration
        blend = t < te
        if np.any(blend):
            p[blend, :2] = self._p0 + self._velocity_integral(t[blend])
        if np.any(~blend):
            chi_s = chi[~blend]
            p[~blend, 0] = sp.center[0] + sp.radius * np.sin(chi_s)
            p[~blend, 1] = sp.center[1] - sp.radius * np.cos(chi_s)

        v = np.zeros((n, 3))
        v[:, :2] = v0 * tang
        a = np.zeros((n, 3))
        a[:, :2] = v0 * chid[:, None] * norm
        j = np.zeros((n, 3))
        j[:, :2] = v0 * (chidd[:, None] * norm - (chid**2)[:, None] * tang)
        snap = np.zeros((n, 3))
        snap[:, :2] = v0 * (
            (chiddd - chid**3)[:, None] * norm - (3.0 * chid * chidd)[:, None] * tang
        )
        return {
            "t": t,
            "p": p,
            "v": v,
            "a": a,
            "j": j,
            "s": snap,
            "psi": chi,
            "psid": chid,
            "psidd": chidd,
        }

    def sample(self, t: float) -> ReferenceSample:
        b = self.sample_batch(np.array([float(t)]))
        return ReferenceSample(
            t=float(t),
            p=b["p"][0],
            v=b["v"][0],
            a=b["a"][0],
            j=b["j"][0],
            s=b["s"][0],
            psi=float(b["psi"][0]),
            psid=float(b["psid"][0]),
            psidd=float(b["psidd"][0]),
        )


def eval_loiter(spec: LoiterSpec, t: float, heading0: float = 0.0) -> ReferenceSample:
    """Single-sample convenience wrapper around :class:`LoiterTrajectory`."""
    return LoiterTrajectory(spec, heading0).sample(t)


class StraightLineTrajectory:
    """Rest-to-rest line segment with the C4 blend; explicit yaw profile."""

    def __init__(self, p0, p1, duration: float, yaw: float = 0.0):
        self.p0 = np.asarray(p0, dtype=float)
        self.p1 = np.asarray(p1, dtype=float)
        if duration <= 0.0:
            raise ValueError("duration must be positive")
        self.T = float(duration)
        self.yaw = float(yaw)

    @property
    def duration(self) -> float:
        return self.T

    def sample_batch(self, t: np.ndarray) -> dict[str, np.ndarray]:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self.T + 1e-12):
            raise TrajectoryDomainError("time outside [0, duration]")
        u = t / self.T
        s, s1, s2, s3, s4 = smooth_blend(u)
        d = self.p1 - self.p0
        n = t.shape[0]
        zeros = np.zeros(n)
        return {
            "t": t,
            "p": self.p0 + s[:, None] * d,
            "v": (s1 / self.T)[:, None] * d,
            "a": (s2 / self.T**2)[:, None] * d,
            "j": (s3 / self.T**3)[:, None] * d,
            "s": (s4 / self.T**4)[:, None] * d,
            "psi": np.full(n, self.yaw),
            "psid": zeros,
            "psidd": zeros,
        }

    def sample(self, t: float) -> ReferenceSample:
        b = self.sample_batch(np.array([float(t)]))
        return ReferenceSample(
            float(t), b["p"][0], b["v"][0], b["a"][0], b["j"][0], b["s"][0],
            float(b["psi"][0]), 0.0, 0.0,
        )


class HoverTrajectory(StraightLineTrajectory):
    """Fixed point with explicit constant yaw."""

    def __init__(self, p0, duration: float, yaw: float = 0.0):
        super().__init__(p0, p0, duration, yaw)


TRAJECTORY_CSV_COLUMNS = (
    ["t"]
    + [f"p_{c}" for c in "xyz"]
    + [f"v_{c}" for c in "xyz"]
    + [f"a_{c}" for c in "xyz"]
    + [f"j_{c}" for c in "xyz"]
    + [f"s_{c}" for c in "xyz"]
    + ["psi", "psid", "psidd"]
)


def export_trajectory_csv(traj, ts: np.ndarray, path: str) -> None:
    """Write sampled flat outputs as CSV (17 significant digits)."""
    b = traj.sample_batch(np.asarray(ts, dtype=float))
    cols = np.column_stack(
        [b["t"], b["p"], b["v"], b["a"], b["j"], b["s"], b["psi"], b["psid"], b["psidd"]]
    )
    with open(path, "w") as f:
        f.write(",".join(TRAJECTORY_CSV_COLUMNS) + "\n")
        for row in cols:
            f.write(",".join(f"{x:.17g}" for x in row) + "\n")
