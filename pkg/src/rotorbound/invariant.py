"""Ellipsoidal robust positive invariant sets for polytopic disturbance systems.

The system class is

    xdot = A(upsilon) x + E (Delta C x + d),   A in conv(A_1 .. A_N),
    ||Delta|| <= gamma,  ||d|| <= dbar.

An ellipsoid {x : x^T P x <= 1} is invariant if, for contraction rates
tau1, tau2 >= 0, every vertex satisfies the linear matrix inequality

    [[M, P E, P E], [E^T P, -tau1 I, 0], [E^T P, 0, -tau2 I]] <= 0,
    M = A_i^T P + P A_i + tau1 gamma^2 C^T C + tau2 dbar^2 P.

The minimum-volume set is found by minimizing -log det(P) subject to
the vertex LMIs, with a line search over tau2 (the constraint is affine
in (P, tau1) only for fixed tau2). Solutions are verified a posteriori
by eigendecomposition of every assembled block; solver status is never
trusted on its own.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import sdp

SYM_TOL = 1e-10
DEFAULT_FEAS_TOL = 1e-7


class EllipsoidError(ValueError):
    """Invalid ellipsoid data (asymmetric or non-positive-definite P)."""


class NonHurwitzVertexError(ValueError):
    """A vertex matrix has an eigenvalue with nonnegative real part."""


class DegenerateSystemError(ValueError):
    """Zero additive disturbance: invariant sets shrink without bound."""


class NoRpiFoundError(RuntimeError):
    """Every tau2 grid point was infeasible."""

    def __init__(self, residuals: dict[float, float]):
        self.residuals = dict(residuals)
        worst = min(residuals.values()) if residuals else float("nan")
        super().__init__(
            f"no RPI set found on the tau2 grid ({len(residuals)} points, "
            f"best phase-1 residual {worst:.3e})"
        )


@dataclass(frozen=True)
class Ellipsoid:
    """Set {x : (x - c)^T P (x - c) <= 1} with inverse shape matrix P."""

    P: np.ndarray
    c: np.ndarray | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise EllipsoidError("P must be square")
        scale = np.linalg.norm(P)
        if np.linalg.norm(P - P.T) > SYM_TOL * max(1.0, scale):
            raise EllipsoidError("P must be symmetric")
        P = 0.5 * (P + P.T)
        if np.any(np.linalg.eigvalsh(P) <= 0.0):
            raise EllipsoidError("P must be positive definite")
        c = np.zeros(P.shape[0]) if self.c is None else np.asarray(self.c, float)
        if c.shape != (P.shape[0],):
            raise EllipsoidError("center dimension mismatch")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "c", c)
        if self.labels is not None:
            if len(self.labels) != P.shape[0]:
                raise EllipsoidError("label count mismatch")
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def membership_value(self, x) -> float:
        """(x - c)^T P (x - c); inside iff <= 1."""
        r = np.asarray(x, dtype=float) - self.c
        return float(r @ self.P @ r)

    def membership_values(self, X: np.ndarray) -> np.ndarray:
        """Vectorized membership over rows of X."""
        R = np.asarray(X, dtype=float) - self.c[None, :]
        return np.einsum("ij,jk,ik->i", R, self.P, R)

    def contains(self, x, tol: float = 0.0) -> bool:
        return self.membership_value(x) <= 1.0 + tol

    def boundary_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Random points with x^T P x = 1 (uniform in the sphere preimage)."""
        u = rng.standard_normal((count, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        Lc = np.linalg.cholesky(self.P)
        return self.c[None, :] + np.linalg.solve(Lc.T, u.T).T

    def to_json_dict(self) -> dict:
        out = {"P": self.P.tolist(), "c": self.c.tolist()}
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out

    @staticmethod
    def from_json_dict(d: dict) -> "Ellipsoid":
        labels = tuple(d["labels"]) if "labels" in d and d["labels"] else None
        return Ellipsoid(np.array(d["P"], float), np.array(d["c"], float), labels)


def project_ellipsoid(e: Ellipsoid, coords) -> Ellipsoid:
    """Exact orthogonal projection onto the selected coordinates.

    The projection of {x^T P x <= 1} has inverse shape ((P^-1)_SS)^-1.
    """
    S = list(coords)
    if not S:
        raise ValueError("coordinate set must be nonempty")
    Pinv = np.linalg.inv(e.P)
    sub = Pinv[np.ix_(S, S)]
    labels = tuple(e.labels[i] for i in S) if e.labels is not None else None
    P_proj = np.linalg.inv(sub)
    return Ellipsoid(0.5 * (P_proj + P_proj.T), e.c[S], labels)


def axis_bound(e: Ellipsoid, i: int) -> float:
    """Half-width of the ellipsoid along coordinate axis i: sqrt((P^-1)_ii)."""
    Pinv = np.linalg.inv(e.P)
    return float(np.sqrt(Pinv[i, i]))


@dataclass(frozen=True)
class PolytopicErrorSystem:
    """Vertex matrices plus disturbance maps and bounds (see module docstring)."""

    vertices: list[np.ndarray]
    E: np.ndarray
    C: np.ndarray
    gamma: float
    dbar: float
    labels: tuple[str, ...] = ()
    symmetries: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.vertices) < 1:
            raise ValueError("at least one vertex matrix required")
        verts = [np.asarray(A, dtype=float) for A in self.vertices]
        n = verts[0].shape[0]
        for A in verts:
            if A.shape != (n, n):
                raise ValueError("vertex dimension mismatch")
        E = np.atleast_2d(np.asarray(self.E, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if E.shape[0] != n:
            raise ValueError("E must have n rows")
        if C.shape[1] != n:
            raise ValueError("C must have n columns")
        if self.gamma < 0.0 or self.dbar < 0.0:
            raise ValueError("gamma and dbar must be nonnegative")
        for idx, A in enumerate(verts):
            eigs = np.linalg.eigvals(A)
            worst = np.argmax(eigs.real)
            if eigs.real[worst] >= 0.0:
                raise NonHurwitzVertexError(
                    f"vertex {idx} is not Hurwitz: eigenvalue "
                    f"{eigs[worst]:.6g} has real part {eigs.real[worst]:.3e} >= 0"
                )
        labels = tuple(self.labels) if self.labels else tuple(f"x{i}" for i in range(n))
        if len(labels) != n:
            raise ValueError("label count mismatch")
        syms = [np.asarray(T, dtype=float) for T in self.symmetries]
        for T in syms:
            _check_symmetry(verts, E, C, T)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "symmetries", syms)

    @property
    def n(self) -> int:
        return self.vertices[0].shape[0]

    @property
    def p(self) -> int:
        return self.E.shape[1]


def _check_symmetry(verts, E, C, T, tol: float = 1e-9):
    """A declared symmetry T must permute the vertex set and fix E E^T, C^T C."""
    n = verts[0].shape[0]
    if T.shape != (n, n) or np.linalg.norm(T @ T.T - np.eye(n)) > tol:
        raise ValueError("symmetry must be an orthogonal n x n matrix")
    for A in verts:
        mapped = T @ A @ T.T
        if not any(np.allclose(mapped, B, atol=tol) for B in verts):
            raise ValueError("symmetry does not permute the vertex set")
    if np.linalg.norm(T @ E @ E.T @ T.T - E @ E.T) > tol:
        raise ValueError("symmetry does not preserve E E^T")
    if np.linalg.norm(T @ C.T @ C @ T.T - C.T @ C) > tol:
        raise ValueError("symmetry does not preserve C^T C")


def assemble_lmi_block(
    A: np.ndarray,
    P: np.ndarray,
    tau1: float,
    tau2: float,
    E: np.ndarray,
    C: np.ndarray,
    gamma: float,
    dbar: float,
) -> np.ndarray:
    """Vertex LMI block of size (n + 2p), exactly as written above."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    E = np.atleast_2d(np.asarray(E, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or P.shape != (n, n) or E.shape[0] != n or C.shape[1] != n:
        raise ValueError("dimension mismatch in LMI block assembly")
    if tau1 < 0.0 or tau2 < 0.0:
        raise ValueError("tau1 and tau2 must be nonnegative")
    p = E.shape[1]
    M = A.T @ P + P @ A + tau1 * gamma**2 * (C.T @ C) + tau2 * dbar**2 * P
    PE = P @ E
    block = np.zeros((n + 2 * p, n + 2 * p))
    block[:n, :n] = M
    block[:n, n : n + p] = PE
    block[:n, n + p :] = PE
    block[n : n + p, :n] = PE.T
    block[n + p :, :n] = PE.T
    block[n : n + p, n : n + p] = -tau1 * np.eye(p)
    block[n + p :, n + p :] = -tau2 * np.eye(p)
    return block


def assemble_lmi_block_reduced(
    A: np.ndarray, P: np.ndarray, tau2: float, E: np.ndarray, dbar: float
) -> np.ndarray:
    """Block with the -tau1 I slot dropped (admissible only when gamma = 0)."""
    n = A.shape[0]
    p = E.shape[1]
    M = A.T @ P + P @ A + tau2 * dbar**2 * P
    PE = P @ E
    block = np.zeros((n + p, n + p))
    block[:n, :n] = M
    block[:n, n:] = PE
    block[n:, :n] = PE.T
    block[n:, n:] = -tau2 * np.eye(p)
    return block


def vertex_blocks(
    system: PolytopicErrorSystem, P: np.ndarray, tau1: float, tau2: float
) -> list[np.ndarray]:
    """All vertex blocks; reduced form when gamma = 0 and tau1 = 0."""
    if system.gamma == 0.0 and tau1 == 0.0:
        return [
            assemble_lmi_block_reduced(A, P, tau2, system.E, system.dbar)
            for A in system.vertices
        ]
    return [
        assemble_lmi_block(
            A, P, tau1, tau2, system.E, system.C, system.gamma, system.dbar
        )
        for A in system.vertices
    ]


def lmi_residual(
    system: PolytopicErrorSystem, P: np.ndarray, tau1: float, tau2: float
) -> float:
    """Most-positive eigenvalue across all assembled vertex blocks."""
    return max(
        float(np.linalg.eigvalsh(B)[-1]) for B in vertex_blocks(system, P, tau1, tau2)
    )


@dataclass(frozen=True)
class SdpResult:
    """Certified invariant set plus the multipliers that witness it."""

    ellipsoid: Ellipsoid
    tau1: float
    tau2: float
    objective: float
    feasible: bool
    residual: float

    def to_json_dict(self) -> dict:
        out = self.ellipsoid.to_json_dict()
        out.update(
            tau1=self.tau1,
            tau2=self.tau2,
            objective=self.objective,
            residual=self.residual,
        )
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @staticmethod
    def from_json(text: str) -> "SdpResult":
        d = json.loads(text)
        return SdpResult(
            ellipsoid=Ellipsoid.from_json_dict(d),
            tau1=d["tau1"],
            tau2=d["tau2"],
            objective=d["objective"],
            feasible=True,
            residual=d["residual"],
        )


def default_tau2_grid(dbar: float, points: int = 40) -> np.ndarray:
    """Logarithmic grid over [1e-3, 10] / dbar^2 (the scalar-oracle scale)."""
    return np.logspace(-3.0, 1.0, points) / dbar**2


def _symmetrize_solution(system: PolytopicErrorSystem, P: np.ndarray) -> np.ndarray:
    """Average P over the group generated by the declared symmetries.

    Each T maps feasible solutions to feasible solutions with equal
    objective; averaging preserves feasibility (convexity) and cannot
    worsen -log det (concavity of log det).
    """
    if not system.symmetries:
        return P
    group: list[np.ndarray] = [np.eye(system.n)]
    frontier = [np.eye(system.n)]
    while frontier:
        nxt = []
        for G in frontier:
            for T in system.symmetries:
                cand = T @ G
                if not any(np.allclose(cand, H, atol=1e-12) for H in group):
                    group.append(cand)
                    nxt.append(cand)
        frontier = nxt
        if len(group) > 64:
            break
    P_avg = sum(T.T @ P @ T for T in group) / len(group)
    return 0.5 * (P_avg + P_avg.T)


def solve_rpi(
    system: PolytopicErrorSystem,
    tau2_grid=None,
    feas_tol: float = DEFAULT_FEAS_TOL,
    backend: sdp.LogDetBackend | None = None,
    refine: bool = True,
    refine_iters: int = 12,
) -> SdpResult:
    """Minimum-volume certified RPI set via SDP with a tau2 line search.

    For each tau2 in the grid the convex subproblem
    min -log det P s.t. vertex LMIs is solved; the best feasible grid
    point wins (ties broken toward smaller tau2) and is optionally
    refined by golden-section search on log tau2. Every returned
    certificate is re-verified by eigendecomposition of all blocks.
    """
    if system.dbar == 0.0:
        raise DegenerateSystemError(
            "dbar = 0: the objective is unbounded (invariant sets shrink "
            "to zero volume); certify with a positive disturbance bound"
        )
    if tau2_grid is None:
        tau2_grid = default_tau2_grid(system.dbar)
    tau2_grid = np.asarray(tau2_grid, dtype=float)
    if tau2_grid.size == 0 or np.any(tau2_grid <= 0.0):
        raise ValueError("tau2 grid must be nonempty and positive")
    be = backend if backend is not None else sdp.InteriorPointBackend()

    residuals: dict[float, float] = {}
    candidates: list[tuple[float, float, sdp.BackendSolution]] = []
    warm = None
    for tau2 in np.sort(tau2_grid):
        sol = be.solve(system, float(tau2), warm_start=warm)
        if sol.converged:
            warm = sol
            candidates.append((sol.objective, float(tau2), sol))
        residuals[float(tau2)] = sol.phase1_residual

    if not candidates:
        raise NoRpiFoundError(residuals)

    candidates.sort(key=lambda c: (c[0], c[1]))
    best_obj, best_tau2, best = candidates[0]

    if refine and tau2_grid.size >= 2:
        sorted_grid = np.sort(tau2_grid)
        idx = int(np.searchsorted(sorted_grid, best_tau2))
        lo = sorted_grid[max(idx - 1, 0)]
        hi = sorted_grid[min(idx + 1, sorted_grid.size - 1)]
        if hi > lo:
            obj, tau2_star, sol = _golden_refine(
                be, system, math.log(lo), math.log(hi), refine_iters, warm
            )
            if sol is not None and obj < best_obj:
                best_obj, best_tau2, best = obj, tau2_star, sol

    P = _symmetrize_solution(system, best.P)
    objective = -2.0 * float(np.sum(np.log(np.diag(np.linalg.cholesky(P)))))
    residual = lmi_residual(system, P, best.tau1, best_tau2)
    feasible = residual <= feas_tol * (1.0 + np.linalg.norm(P))
    if not feasible:
        raise NoRpiFoundError({best_tau2: residual})
    return SdpResult(
        ellipsoid=Ellipsoid(P, labels=system.labels or None),
        tau1=best.tau1,
        tau2=best_tau2,
        objective=objective,
        feasible=feasible,
        residual=residual,
    )


def _golden_refine(be, system, log_lo, log_hi, iters, warm):
    """Golden-section minimization of the per-tau2 objective on log tau2."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    cache: dict[float, tuple[float, object]] = {}

    def evaluate(log_t):
        t = math.exp(log_t)
        if log_t not in cache:
            sol = be.solve(system, t, warm_start=warm)
            cache[log_t] = (sol.objective if sol.converged else float("inf"), sol)
        return cache[log_t]

    a, b = log_lo, log_hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, _ = evaluate(c)
    fd, _ = evaluate(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc, _ = evaluate(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd, _ = evaluate(d)
    best_log, (best_obj, best_sol) = min(cache.items(), key=lambda kv: kv[1][0])
    if not math.isfinite(best_obj):
        return float("inf"), math.exp(best_log), None
    return best_obj, math.exp(best_log), best_sol


def worst_case_vdot(
    system: PolytopicErrorSystem,
    e: Ellipsoid,
    x: np.ndarray,
    vertex_index: int,
    boundary_tol: float = 1e-6,
) -> float:
    """Worst-case Lyapunov derivative on the boundary at one vertex.

    max over ||d|| <= dbar, ||Delta|| <= gamma of
    2 x^T P (A_i x + E (Delta C x + d))
    = 2 x^T P A_i x + 2 gamma ||E^T P x|| ||C x|| + 2 dbar ||E^T P x||.
    """
    x = np.asarray(x, dtype=float)
    m = e.membership_value(x)
    if abs(m - 1.0) > boundary_tol:
        raise ValueError(f"x is not on the ellipsoid boundary (x^T P x = {m:.8f})")
    P = e.P
    A = system.vertices[vertex_index]
    Px = P @ (x - e.c)
    EtPx = system.E.T @ Px
    return float(
        2.0 * Px @ (A @ x)
        + 2.0 * system.gamma * np.linalg.norm(EtPx) * np.linalg.norm(system.C @ x)
        + 2.0 * system.dbar * np.linalg.norm(EtPx)
    )


def worst_case_vdot_batch(
    system: PolytopicErrorSystem, e: Ellipsoid, X: np.ndarray, vertex_index: int
) -> np.ndarray:
    """Vectorized :func:`worst_case_vdot` over rows of X (assumed on boundary)."""
    P = e.P
    A = system.vertices[vertex_index]
    PX = X @ P.T
    EtPX = PX @ system.E
    CX = X @ system.C.T
    return (
        2.0 * np.sum(PX * (X @ A.T), axis=1)
        + 2.0 * system.gamma * np.linalg.norm(EtPX, axis=1) * np.linalg.norm(CX, axis=1)
        + 2.0 * system.dbar * np.linalg.norm(EtPX, axis=1)
    )
