"""Small dense interior-point solver for log-det SDPs with vertex LMI blocks.

Solves, for a fixed disturbance contraction rate tau2,

    min  -log det P    over  P = P^T,  tau1 >= 0
    s.t. Block_i(P, tau1) <= 0  for every vertex i,

where Block_i is the affine vertex LMI of the invariant-set condition
(assembled in :mod:`rotorbound.invariant`). Problem sizes are tiny
(blocks up to 21 x 21, at most 8 vertices), so a feasible-start barrier
method with exact Newton steps is adequate, deterministic and
dependency-free.

Phase 1 minimizes the uniform slack s with Block_i - s I <= 0 and exits
as soon as a comfortably interior point is found; phase 2 follows the
central path of t * (-log det P) + sum_i -log det(-Block_i). Iterates
are strictly feasible throughout, so returned certificates have
nonpositive LMI residuals by construction.

The :class:`LogDetBackend` protocol lets callers swap in an external
SDP solver without touching the invariant-set API.

When gamma = 0 the S-procedure multiplier tau1 is fixed at zero and the
corresponding block row is dropped (keeping it as a zero block would
make the LMI singular); the reduced block is then [[M, PE], [E^T P,
-tau2 I]].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_lyapunov, solve_triangular
from threadpoolctl import threadpool_limits


@dataclass
class BackendSolution:
    """Result of one fixed-tau2 solve."""

    P: np.ndarray | None
    tau1: float
    objective: float
    converged: bool
    phase1_residual: float
    message: str = ""


@runtime_checkable
class LogDetBackend(Protocol):
    """Adapter interface for the per-tau2 convex subproblem."""

    def solve(self, system, tau2: float, warm_start=None) -> BackendSolution: ...


def _vech_indices(n: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(n) for b in range(a, n)]


def _unvech(theta: np.ndarray, n: int, idx) -> np.ndarray:
    P = np.zeros((n, n))
    for k, (a, b) in enumerate(idx):
        P[a, b] = theta[k]
        P[b, a] = theta[k]
    return P


def _vech(P: np.ndarray, idx) -> np.ndarray:
    return np.array([P[a, b] for a, b in idx])


class _AffineBlock:
    """S(theta) = S0 + sum_k theta_k G_k with a log-det barrier weight."""

    def __init__(self, S0: np.ndarray, G: np.ndarray, weight: float = 1.0):
        self.S0 = S0
        self.G = np.ascontiguousarray(G)  # (K, s, s)
        self._G_flat = self.G.reshape(G.shape[0], -1)
        self.weight = weight
        self.dim = S0.shape[0]

    def with_weight(self, weight: float) -> "_AffineBlock":
        out = _AffineBlock.__new__(_AffineBlock)
        out.S0, out.G, out._G_flat = self.S0, self.G, self._G_flat
        out.weight, out.dim = weight, self.dim
        return out

    def value(self, theta: np.ndarray) -> np.ndarray:
        S = self.S0 + (theta @ self._G_flat).reshape(self.dim, self.dim)
        return 0.5 * (S + S.T)

    def chol(self, theta: np.ndarray) -> np.ndarray | None:
        S = self.value(theta)
        try:
            return np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return None

    def grad_hess(self, L: np.ndarray, grad: np.ndarray, hess: np.ndarray):
        """Accumulate -w*tr(S^-1 G_k) and w*tr(S^-1 G_k S^-1 G_l)."""
        K, s, _ = self.G.shape
        Linv = solve_triangular(L, np.eye(s), lower=True)
        # H_k = L^-1 G_k L^-T, one batched congruence.
        H = Linv[None, :, :] @ self.G @ Linv.T[None, :, :]
        grad -= self.weight * np.einsum("kii->k", H)
        V = H.reshape(K, s * s)
        hess += self.weight * (V @ V.T)


class _BarrierProblem:
    """t * (linear + logdet objective) + barriers, minimized by Newton."""

    def __init__(self, blocks: list[_AffineBlock], linear: np.ndarray):
        self.blocks = blocks
        self.linear = linear

    def evaluate(self, theta: np.ndarray):
        chols = []
        val = float(self.linear @ theta)
        for blk in self.blocks:
            L = blk.chol(theta)
            if L is None:
                return None, None
            val -= 2.0 * blk.weight * float(np.sum(np.log(np.diag(L))))
            chols.append(L)
        return val, chols

    def newton_step(self, theta: np.ndarray, chols) -> tuple[np.ndarray, np.ndarray]:
        K = theta.size
        grad = self.linear.copy()
        hess = np.zeros((K, K))
        for blk, L in zip(self.blocks, chols):
            blk.grad_hess(L, grad, hess)
        hess[np.diag_indices_from(hess)] += 1e-13 * max(1.0, np.max(np.abs(hess)))
        try:
            c = cho_factor(hess)
            step = -cho_solve(c, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.solve(
                hess + 1e-8 * np.eye(K) * max(1.0, np.max(np.abs(hess))), grad
            )
        return step, grad

    def minimize(self, theta: np.ndarray, tol: float = 1e-10, max_iter: int = 80,
                 stop_early=None) -> tuple[np.ndarray, bool]:
        val, chols = self.evaluate(theta)
        if val is None:
            raise RuntimeError("Newton started at an infeasible point")
        for _ in range(max_iter):
            if stop_early is not None and stop_early(theta):
                return theta, True
            step, grad = self.newton_step(theta, chols)
            decrement = -float(grad @ step)
            if decrement / 2.0 <= tol:
                return theta, True
            alpha = 1.0
            while True:
                cand = theta + alpha * step
                cand_val, cand_chols = self.evaluate(cand)
                if cand_val is not None and cand_val <= val + 0.25 * alpha * float(
                    grad @ step
                ):
                    theta, val, chols = cand, cand_val, cand_chols
                    break
                alpha *= 0.5
                if alpha < 1e-14:
                    return theta, False
        return theta, True


class InteriorPointBackend:
    """Feasible-start barrier method specialized to the vertex-LMI structure."""

    def __init__(
        self,
        gap_tol: float = 1e-8,
        mu: float = 50.0,
        t0: float = 1.0,
        newton_tol: float = 1e-7,
    ):
        self.gap_tol = gap_tol
        self.mu = mu
        self.t0 = t0
        self.newton_tol = newton_tol

    # -- construction of the affine LMI data ---------------------------------

    def _build(self, system, tau2: float):
        n, p = system.n, system.p
        gamma, dbar = system.gamma, system.dbar
        E, C = system.E, system.C
        idx = _vech_indices(n)
        K_P = len(idx)
        with_tau1 = gamma > 0.0
        K = K_P + (1 if with_tau1 else 0)
        s_dim = n + (2 * p if with_tau1 else p)

        blocks = []
        for A in system.vertices:
            G = np.zeros((K, s_dim, s_dim))
            for k, (a, b) in enumerate(idx):
                dP = np.zeros((n, n))
                dP[a, b] = 1.0
                dP[b, a] = 1.0
                TL = A.T @ dP + dP @ A + tau2 * dbar**2 * dP
                dPE = dP @ E
                # G_k = -dBlock_k (constraint is S = -Block > 0).
                G[k, :n, :n] = -TL
                G[k, :n, n : n + p] = -dPE
                G[k, n : n + p, :n] = -dPE.T
                if with_tau1:
                    G[k, :n, n + p :] = -dPE
                    G[k, n + p :, :n] = -dPE.T
            if with_tau1:
                G[K_P, :n, :n] = -(gamma**2) * (C.T @ C)
                G[K_P, n : n + p, n : n + p] = np.eye(p)
            S0 = np.zeros((s_dim, s_dim))
            if with_tau1:
                S0[n + p :, n + p :] = tau2 * np.eye(p)
            else:
                S0[n:, n:] = tau2 * np.eye(p)
            blocks.append(_AffineBlock(S0, G))
        return idx, K_P, with_tau1, blocks

    def _p_block(self, n: int, idx, K: int, weight: float) -> _AffineBlock:
        G = np.zeros((K, n, n))
        for k, (a, b) in enumerate(idx):
            G[k, a, b] = 1.0
            G[k, b, a] = 1.0
        return _AffineBlock(np.zeros((n, n)), G, weight=weight)

    @staticmethod
    def _with_slack(blocks: list[_AffineBlock]) -> list[_AffineBlock]:
        """Append the slack variable s: S = s I - Block."""
        out = []
        for blk in blocks:
            K, s_dim, _ = blk.G.shape
            G = np.zeros((K + 1, s_dim, s_dim))
            G[:K] = blk.G
            G[K] = np.eye(s_dim)
            out.append(_AffineBlock(blk.S0, G, weight=blk.weight))
        return out

    # -- main entry -----------------------------------------------------------

    def solve(self, system, tau2: float, warm_start: BackendSolution | None = None):
        # BLAS threading is pure overhead at these sizes (and oversubscribes
        # constrained containers); pin the pools for the whole solve.
        with threadpool_limits(limits=1):
            return self._solve(system, tau2, warm_start)

    def _solve(self, system, tau2: float, warm_start: BackendSolution | None = None):
        n = system.n
        idx, K_P, with_tau1, blocks = self._build(system, tau2)
        K = K_P + (1 if with_tau1 else 0)

        theta0 = self._initial_theta(system, idx, K, K_P, with_tau1, warm_start)
        theta, phase1_res = self._phase1(theta0, n, idx, K, K_P, blocks)
        if theta is None:
            return BackendSolution(
                P=None,
                tau1=0.0,
                objective=float("inf"),
                converged=False,
                phase1_residual=phase1_res,
                message="phase 1 could not find a strictly feasible point",
            )

        nu = float(sum(blk.dim for blk in blocks))
        t = self.t0
        ok = True
        p_obj = self._p_block(n, idx, K, weight=1.0)
        while True:
            # Minimize -log det P + barrier/t: same central point as the
            # textbook t*f0 + barrier, but the value stays O(|objective|)
            # so line-search comparisons keep full precision at large t.
            scaled = [blk.with_weight(1.0 / t) for blk in blocks]
            prob = _BarrierProblem(scaled + [p_obj], np.zeros(K))
            theta, ok = prob.minimize(theta, tol=self.newton_tol)
            if not ok:
                break
            if nu / t <= self.gap_tol * max(1.0, abs(self._objective(theta, n, idx))):
                theta, ok = prob.minimize(theta, tol=1e-12, max_iter=40)
                break
            t *= self.mu

        P = _unvech(theta[:K_P], n, idx)
        tau1 = float(theta[K_P]) if with_tau1 else 0.0
        return BackendSolution(
            P=P,
            tau1=tau1,
            objective=self._objective(theta, n, idx),
            converged=True,
            phase1_residual=phase1_res,
            message="" if ok else "Newton stalled near the central path",
        )

    # -- internals ------------------------------------------------------------

    @staticmethod
    def _objective(theta: np.ndarray, n: int, idx) -> float:
        P = _unvech(theta[: len(idx)], n, idx)
        sign, logdet = np.linalg.slogdet(P)
        return float("inf") if sign <= 0 else -float(logdet)

    def _initial_theta(self, system, idx, K, K_P, with_tau1, warm_start):
        n = system.n
        if warm_start is not None and warm_start.P is not None:
            theta = np.zeros(K)
            theta[:K_P] = _vech(warm_start.P, idx)
            if with_tau1:
                theta[K_P] = max(warm_start.tau1, 1e-6)
            return theta
        # Lyapunov shape for the first vertex as a generic starting point.
        P0 = solve_lyapunov(system.vertices[0].T, -np.eye(n))
        P0 = 0.5 * (P0 + P0.T)
        theta = np.zeros(K)
        theta[:K_P] = _vech(P0, idx)
        if with_tau1:
            theta[K_P] = 1.0
        return theta

    def _phase1(self, theta0, n, idx, K, K_P, blocks):
        """Drive the uniform slack below zero; return interior point or None."""
        margins = []
        for blk in blocks:
            S = blk.value(theta0)
            margins.append(-float(np.linalg.eigvalsh(S)[0]))
        s0 = max(margins)
        scale = 1.0 + abs(s0)
        target = -1e-3 * scale

        slack_blocks = self._with_slack(blocks)
        p_bar = self._p_block(n, idx, K + 1, weight=1.0)
        theta = np.concatenate([theta0, [s0 + 0.1 * scale]])
        # Keep P comfortably positive definite at the start.
        Pmin = np.linalg.eigvalsh(_unvech(theta[:K_P], n, idx))[0]
        if Pmin <= 1e-9:
            diag_idx = [k for k, (a, b) in enumerate(idx) if a == b]
            theta[diag_idx] += abs(Pmin) + 1e-3

        nu = float(sum(blk.dim for blk in slack_blocks) + n)
        t = 1.0 / scale
        linear = np.zeros(K + 1)
        linear[-1] = 1.0  # minimize s itself; barriers carry weight 1/t
        s_val = theta[-1]
        while True:
            scaled = [blk.with_weight(1.0 / t) for blk in slack_blocks + [p_bar]]
            prob = _BarrierProblem(scaled, linear)
            theta, ok = prob.minimize(
                theta,
                tol=self.newton_tol,
                stop_early=lambda th: th[-1] <= target,
            )
            s_val = float(theta[-1])
            if s_val <= target:
                break
            # Resolve the sign of the optimal slack to good relative accuracy
            # before declaring infeasibility.
            if not ok or nu / t <= 1e-7 * (1.0 + abs(s_val)):
                break
            t *= self.mu
        if s_val < 0.0:
            return theta[:-1], s_val
        return None, s_val
