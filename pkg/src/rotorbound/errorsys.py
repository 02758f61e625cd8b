"""Closed-loop translational error dynamics as polytopic disturbance systems.

State stacking (per axis blocks of 3, or 2 in planar mode):

    x = [e_p, e_v, e_a, e_a_dot, d_hat]

with e_a = a_d - a_t. The lumped residual u = Delta_Dbar e_v + d drives
both the velocity channel and the observer through a single input map
E = [0; I; 0; 0; L]; C selects e_v. The worst-case damping d_max e_v is
absorbed into the nominal dynamics; the spread of the drag spectrum
bounds ||Delta_Dbar|| <= gamma independently of attitude.

Architectures:
  * cg  -- LTI, one vertex.
  * cgh -- heading-rotated gains; the rotated horizontal blocks are
           parameterized by (u, v) = (cos^2 psi, cos psi sin psi), which
           traces the circle (u - 1/2)^2 + v^2 = 1/4 exactly. The default
           cover is the circumscribed hexagon (6 vertices, keeps u within
           [0, 1] and respects both reflection symmetries); the axis
           box [0,1] x [-1/2,1/2] is available via ``cgh_hull="box"``.
           The published two-vertex hull (gain matrices at psi = 0 and
           psi = pi/2) is available via ``cgh_hull="paper"`` but does not
           cover the off-diagonal terms.
  * ch  -- heading-fixed frame. The velocity state is e_v^H = R_psi^T e_v
           so that C stays constant and gamma is unchanged; the frame
           rotation then enters only as transport skews S(psid) in the
           kinematic rows, scheduled on psid alone (2 vertices).

The published C-H law optionally adds Coriolis compensation terms that
are routed through the acceleration filter. Certifying that loop
requires the full (psid, psid^2, psidd) box (8 vertices) and turns out
to admit no common Lyapunov certificate at the headline disturbance
bounds: the filter amplifies the compensation by Omega_a^2, so even
single scheduling corners fail the LMI. The compensated variant is kept
behind ``coriolis_compensation=True`` for analysis; the default loop
leaves the (energy-neutral) transport terms to the invariant-set
computation, which is the only reading under which the published
certificates are reproducible.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .control import ARCHITECTURES, GainSet
from .flatness import DragModel
from .invariant import PolytopicErrorSystem


class SchedulingRangeError(ValueError):
    """Scheduling or disturbance input outside its declared bounds."""


@dataclass(frozen=True)
class ErrorSystemSpec:
    """Everything needed to assemble one architecture's error system."""

    architecture: str
    gains: GainSet
    drag: DragModel
    delta_max: float = np.deg2rad(7.0)
    f_max: float = 16.0
    w_max: float = 0.5
    psid_max: float = 0.5
    psidd_max: float = 0.5
    planar: bool = False
    dbar_override: float | None = None
    cgh_hull: str = "hex"
    coriolis_compensation: bool = False

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if not 0.0 < self.delta_max < np.pi:
            raise ValueError("delta_max must lie in (0, pi)")
        if self.f_max <= 0.0:
            raise ValueError("f_max must be positive")
        if min(self.w_max, self.psid_max, self.psidd_max) < 0.0:
            raise ValueError("bounds must be nonnegative")
        if self.cgh_hull not in ("hex", "box", "paper"):
            raise ValueError("cgh_hull must be 'hex', 'box' or 'paper'")


def attitude_disturbance_bound(delta_max: float, f_max: float, w_max: float) -> float:
    """Uniform bound on the thrust-misalignment plus unmodeled disturbance.

    dbar = sqrt(2 (1 - cos delta_max)) * |f_max| + w_max. The first term
    is the chord length between the true and commanded thrust directions
    on the unit sphere, scaled by the thrust bound.
    """
    return float(np.sqrt(2.0 * (1.0 - np.cos(delta_max))) * abs(f_max) + w_max)


def drag_split(drag: DragModel) -> tuple[float, float]:
    """Worst-case damping and residual spread of the rotated drag matrix.

    Returns (d_max, gamma) with gamma = d_max - d_min. Similarity
    invariance of R D R^T makes gamma attitude-independent.
    """
    return drag.d_max, drag.d_max - drag.d_min


def _axes(planar: bool) -> int:
    return 2 if planar else 3


def _state_labels(architecture: str, planar: bool) -> list[str]:
    axes = "xy" if planar else "xyz"
    frame = "H_" if architecture == "ch" else "_"
    blocks = ("e_p", "e_v", "e_a", "e_ad", "dhat")
    return [f"{b}{frame}{c}" for b in blocks for c in axes]


def _diag(vals, planar: bool) -> np.ndarray:
    v = np.asarray(vals, dtype=float)
    return np.diag(v[: _axes(planar)])


def _skew_z(rate: float, planar: bool) -> np.ndarray:
    if planar:
        return np.array([[0.0, -rate], [rate, 0.0]])
    return np.array([[0.0, -rate, 0.0], [rate, 0.0, 0.0], [0.0, 0.0, 0.0]])


def _j_horiz(planar: bool) -> np.ndarray:
    return np.eye(2) if planar else np.diag([1.0, 1.0, 0.0])


def _rotated_gain_from_box(k, u: float, v: float, planar: bool) -> np.ndarray:
    """R_psi diag(k) R_psi^T with (cos^2 psi, cos psi sin psi) -> (u, v)."""
    kx, ky = k[0], k[1]
    d = kx - ky
    if planar:
        return np.array([[ky + d * u, d * v], [d * v, ky + d * (1.0 - u)]])
    out = np.diag([0.0, 0.0, k[2]])
    out[:2, :2] = [[ky + d * u, d * v], [d * v, ky + d * (1.0 - u)]]
    return out


def _assemble_A(spec: ErrorSystemSpec, params: tuple[float, ...]) -> np.ndarray:
    g = spec.gains
    planar = spec.planar
    b = _axes(planar)
    d_max, _ = drag_split(spec.drag)
    I = np.eye(b)
    Om = _diag(g.omega_a, planar)
    Xi = _diag(g.xi_a, planar)
    L = _diag(g.l_obs, planar)
    Om2 = Om @ Om

    if spec.architecture == "cg":
        Kp = _diag(g.kp, planar)
        Kv = _diag(g.kv, planar)
        Ka = _diag(g.ka, planar)
        coriolis = np.zeros((b, b))
    elif spec.architecture == "cgh":
        u, v = params
        Kp = _rotated_gain_from_box(g.kp, u, v, planar)
        Kv = _rotated_gain_from_box(g.kv, u, v, planar)
        Ka = _rotated_gain_from_box(g.ka, u, v, planar)
        coriolis = np.zeros((b, b))
    else:  # ch
        r, q, w = params
        S = _skew_z(r, planar)
        Kp = _diag(g.kp, planar)
        Kv = _diag(g.kv, planar)
        if spec.coriolis_compensation:
            # Published law: nu_fb carries +2 S ep_dot + (S^2 + S(psidd)) e_p,
            # expressed in the (e_p, e_v) state via ep_dot = e_v - S e_p.
            Kp = Kp - _diag(g.kv, planar) @ S - q * _j_horiz(planar) - _skew_z(w, planar)
            Kv = Kv - 2.0 * S
        Ka = _diag(g.ka, planar)
        coriolis = S

    n = 5 * b
    A = np.zeros((n, n))
    sl = [slice(i * b, (i + 1) * b) for i in range(5)]
    A[sl[0], sl[0]] = -coriolis
    A[sl[0], sl[1]] = I
    A[sl[1], sl[1]] = d_max * I - coriolis
    A[sl[1], sl[2]] = I
    A[sl[2], sl[3]] = I
    A[sl[3], sl[0]] = -Om2 @ Kp
    A[sl[3], sl[1]] = -Om2 @ Kv
    A[sl[3], sl[2]] = -Om2 @ (I + Ka)
    A[sl[3], sl[3]] = -2.0 * Xi @ Om
    A[sl[3], sl[4]] = -Om2 @ (I + Ka)
    A[sl[4], sl[4]] = -L
    return A


def _vertex_params(spec: ErrorSystemSpec) -> list[tuple[float, ...]]:
    if spec.architecture == "cg":
        return [()]
    if spec.architecture == "cgh":
        if spec.cgh_hull == "paper":
            return [(1.0, 0.0), (0.0, 0.0)]
        if spec.cgh_hull == "box":
            return list(itertools.product((0.0, 1.0), (-0.5, 0.5)))
        # Circumscribed hexagon about the scheduling circle, edges tangent
        # at u = 0 and u = 1 so the cover stays within the natural u-range.
        radius = 0.5 / np.cos(np.pi / 6.0)
        angles = np.pi / 6.0 + np.pi / 3.0 * np.arange(6)
        return [
            (0.5 + radius * np.cos(a), radius * np.sin(a)) for a in angles
        ]
    rd, wd = spec.psid_max, spec.psidd_max
    if not spec.coriolis_compensation:
        wd = 0.0  # psidd and psid^2 do not enter the transport-only loop
    combos = itertools.product(
        (-rd, rd) if rd > 0.0 else (0.0,),
        (0.0, rd * rd) if (rd > 0.0 and spec.coriolis_compensation) else (0.0,),
        (-wd, wd) if wd > 0.0 else (0.0,),
    )
    return list(dict.fromkeys(combos))


def _swap_xy_permutation(n_blocks: int, planar: bool) -> np.ndarray:
    b = _axes(planar)
    n = n_blocks * b
    T = np.zeros((n, n))
    for blk in range(n_blocks):
        o = blk * b
        T[o, o + 1] = 1.0
        T[o + 1, o] = 1.0
        for k in range(2, b):
            T[o + k, o + k] = 1.0
    return T


def _flip_y_sign(n_blocks: int, planar: bool) -> np.ndarray:
    b = _axes(planar)
    d = np.ones(n_blocks * b)
    d[1::b] = -1.0
    return np.diag(d)


def _declared_symmetries(spec: ErrorSystemSpec) -> list[np.ndarray]:
    g = spec.gains
    # The y sign flip commutes with every diagonal gain and negates the
    # z-axis skews; it maps the scheduling boxes onto themselves for all
    # three architectures ((u,v) -> (u,-v), (r,q,w) -> (-r,q,-w)).
    syms: list[np.ndarray] = [_flip_y_sign(5, spec.planar)]
    horiz_iso = all(v[0] == v[1] for v in (g.omega_a, g.xi_a, g.l_obs))
    gains_iso = all(v[0] == v[1] for v in (g.kp, g.kv, g.ka))
    if spec.architecture == "cg" and horiz_iso and gains_iso:
        syms.append(_swap_xy_permutation(5, spec.planar))
    elif spec.architecture == "cgh" and horiz_iso:
        # Vertex set is closed under the x/y swap: (u, v) -> (1-u, v).
        syms.append(_swap_xy_permutation(5, spec.planar))
    return syms


def build_error_system(spec: ErrorSystemSpec) -> PolytopicErrorSystem:
    """Assemble the vertex matrices, disturbance maps and bounds."""
    b = _axes(spec.planar)
    n = 5 * b
    vertices = [_assemble_A(spec, p) for p in _vertex_params(spec)]
    # Deduplicate identical vertices (degenerate scheduling boxes).
    unique: list[np.ndarray] = []
    for A in vertices:
        if not any(np.array_equal(A, B) for B in unique):
            unique.append(A)
    E = np.zeros((n, b))
    E[b : 2 * b, :] = np.eye(b)
    E[4 * b : 5 * b, :] = _diag(spec.gains.l_obs, spec.planar)
    C = np.zeros((b, n))
    C[:, b : 2 * b] = np.eye(b)
    _, gamma = drag_split(spec.drag)
    dbar = (
        spec.dbar_override
        if spec.dbar_override is not None
        else attitude_disturbance_bound(spec.delta_max, spec.f_max, spec.w_max)
    )
    return PolytopicErrorSystem(
        vertices=unique,
        E=E,
        C=C,
        gamma=gamma,
        dbar=dbar,
        labels=_state_labels(spec.architecture, spec.planar),
        symmetries=_declared_symmetries(spec),
    )


def scheduling_to_params(spec: ErrorSystemSpec, scheduling) -> tuple[float, ...]:
    """Map measured scheduling signals to the affine hull parameters."""
    if spec.architecture == "cg":
        return ()
    if spec.architecture == "cgh":
        psi = float(scheduling["psi"])
        c, s = np.cos(psi), np.sin(psi)
        return (c * c, c * s)
    psid = float(scheduling["psid"])
    psidd = float(scheduling["psidd"])
    tol = 1e-9
    if abs(psid) > spec.psid_max * (1.0 + tol) + tol:
        raise SchedulingRangeError(f"|psid| = {abs(psid):.4g} exceeds {spec.psid_max}")
    if abs(psidd) > spec.psidd_max * (1.0 + tol) + tol:
        raise SchedulingRangeError(f"|psidd| = {abs(psidd):.4g} exceeds {spec.psidd_max}")
    return (psid, psid * psid, psidd)


def closed_loop_a_matrix(spec: ErrorSystemSpec, scheduling=None) -> np.ndarray:
    """System matrix at a scheduling point, by direct substitution."""
    return _assemble_A(spec, scheduling_to_params(spec, scheduling or {}))


def closed_loop_vector_field(
    spec: ErrorSystemSpec,
    x: np.ndarray,
    d: np.ndarray,
    delta: np.ndarray,
    scheduling=None,
    check: bool = True,
) -> np.ndarray:
    """Reference right-hand side A(scheduling) x + E (Delta C x + d).

    Evaluates the architecture equations directly (not via the vertex
    hull); used to cross-validate the assembled polytopic system.
    """
    system = build_error_system(spec)
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if check:
        tol = 1e-9
        _, gamma = drag_split(spec.drag)
        dbar = (
            spec.dbar_override
            if spec.dbar_override is not None
            else attitude_disturbance_bound(spec.delta_max, spec.f_max, spec.w_max)
        )
        if np.linalg.norm(d) > dbar * (1.0 + tol) + tol:
            raise SchedulingRangeError("additive disturbance exceeds dbar")
        if np.linalg.norm(delta, 2) > gamma * (1.0 + tol) + tol:
            raise SchedulingRangeError("state-dependent disturbance exceeds gamma")
    A = closed_loop_a_matrix(spec, scheduling)
    return A @ x + system.E @ (delta @ (system.C @ x) + d)


def hull_contains(vertices: list[np.ndarray], A: np.ndarray, tol: float = 1e-8) -> bool:
    """LP membership test: does A lie in the convex hull of the vertices?

    Minimizes the max-norm reconstruction error over convex weights and
    accepts if it does not exceed ``tol``. Coordinates on which all
    vertices agree are checked directly (any convex combination
    reproduces them), which keeps the LP small.
    """
    V = np.stack([v.ravel() for v in vertices], axis=1)
    a = A.ravel()
    spread = V.max(axis=1) - V.min(axis=1)
    varying = spread > 0.0
    if np.any(np.abs(V[~varying, 0] - a[~varying]) > tol):
        return False
    N = V.shape[1]
    if not np.any(varying):
        return True
    Vv = V[varying]
    av = a[varying]
    m = Vv.shape[0]
    # Variables: weights lambda (N) and error bound t.
    A_ub = np.block(
        [
            [Vv, -np.ones((m, 1))],
            [-Vv, -np.ones((m, 1))],
        ]
    )
    b_ub = np.concatenate([av, -av])
    A_eq = np.concatenate([np.ones(N), [0.0]])[None, :]
    c = np.zeros(N + 1)
    c[-1] = 1.0
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=[1.0],
        bounds=[(0.0, None)] * N + [(0.0, None)],
        method="highs",
    )
    if not res.success:
        return False
    return res.x[-1] <= tol


def random_scheduling(spec: ErrorSystemSpec, rng: np.random.Generator) -> dict:
    """Draw one admissible scheduling point for the architecture."""
    if spec.architecture == "cg":
        return {}
    if spec.architecture == "cgh":
        return {"psi": rng.uniform(-np.pi, np.pi)}
    return {
        "psid": rng.uniform(-spec.psid_max, spec.psid_max),
        "psidd": rng.uniform(-spec.psidd_max, spec.psidd_max),
    }


def error_system_to_json_dict(system: PolytopicErrorSystem) -> dict:
    """JSON-ready dict (vertices, maps, bounds, labels) for external checks."""
    return {
        "vertices": [v.tolist() for v in system.vertices],
        "E": system.E.tolist(),
        "C": system.C.tolist(),
        "gamma": system.gamma,
        "dbar": system.dbar,
        "labels": list(system.labels),
    }
