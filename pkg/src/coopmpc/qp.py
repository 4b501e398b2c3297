"""Condensed finite-horizon QP and a projection-based operator splitting solver.

The horizon problem is condensed into the stacked input vector: states are
eliminated through the prediction operators, leaving

    min  0.5 u^T H u + g^T u + const
    s.t. box_lo <= u <= box_hi
         || Tmap_b u + tvec_b ||_2 <= radius_b     for each terminal ball

H is positive definite whenever the input weight is, so the problem is
strictly convex.  The solver is a scaled ADMM with one splitting variable
per constraint set (the box over the stacked input and one Euclidean ball
per terminal set), a penalty initialized from the diagonal of H, residual
balancing every 50 iterations, and over-relaxation.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DimensionMismatch

SOLVED = "solved"
MAX_ITERS = "max_iters"
INFEASIBLE = "infeasible"

BALL_FEAS_TOL = 1e-8


@dataclass(eq=False)
class TerminalBall:
    """Euclidean ball constraint ||Tmap u + tvec|| <= radius."""

    Tmap: np.ndarray
    tvec: np.ndarray
    radius: float


@dataclass(eq=False)
class CondensedQp:
    """Input-space condensed horizon problem.

    Phi and Gamma are the prediction operators over x(1..N):
    x_stack = Phi x0 + Gamma u_stack.  `objective` evaluates the full
    horizon cost including the constant term, so it matches the stage sum
    of the problem it was built from.
    """

    H: np.ndarray
    g: np.ndarray
    const: float
    Phi: np.ndarray
    Gamma: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray
    terminal: list
    n: int
    m: int
    N: int

    def objective(self, u):
        u = np.asarray(u, dtype=float).reshape(-1)
        return float(0.5 * u @ self.H @ u + self.g @ u + self.const)


def build_condensed(A, B, Q, P, R, N, x0, u_lo, u_hi, terminal_balls=None, x_linear=None):
    """Condense a finite-horizon problem into the stacked input vector.

    Parameters
    ----------
    A, B : arrays
        Dynamics x(k+1) = A x(k) + B u(k).
    Q, P, R : arrays
        Stage state weight, terminal state weight, stage input weight.
    N : int
        Horizon length, at least 1.
    x0 : array
        Initial state.
    u_lo, u_hi : arrays, shape (m,)
        Per-channel input bounds, repeated at every stage.
    terminal_balls : list of (indices, radius), optional
        Euclidean ball constraints on sub-vectors of x(N).
    x_linear : array, shape (N + 1, n), optional
        Extra linear stage terms 2 c_k^T x(k); row 0 applies to the fixed
        initial state and only shifts the constant.

    The stacked input is stage-major: u = [u(0); u(1); ...; u(N-1)].
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n, m = B.shape
    if A.shape != (n, n):
        raise DimensionMismatch("A must be %dx%d" % (n, n))
    N = int(N)
    if N < 1:
        raise DimensionMismatch("horizon N must be >= 1")
    Q = np.asarray(Q, dtype=float)
    P = np.asarray(P, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if Q.shape != (n, n) or P.shape != (n, n) or R.shape != (m, m):
        raise DimensionMismatch("weight shapes do not match the dynamics")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != n:
        raise DimensionMismatch("x0 must have length %d" % n)
    u_lo = np.broadcast_to(np.asarray(u_lo, dtype=float).reshape(-1), (m,))
    u_hi = np.broadcast_to(np.asarray(u_hi, dtype=float).reshape(-1), (m,))

    # Prediction operators over x(1..N).
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    Phi = np.vstack([powers[k] for k in range(1, N + 1)])
    Gamma = np.zeros((N * n, N * m))
    for k in range(1, N + 1):
        for j in range(k):
            Gamma[(k - 1) * n : k * n, j * m : (j + 1) * m] = powers[k - 1 - j] @ B

    Qbig = np.zeros((N * n, N * n))
    for k in range(N - 1):
        Qbig[k * n : (k + 1) * n, k * n : (k + 1) * n] = Q
    Qbig[(N - 1) * n :, (N - 1) * n :] = P
    Rbig = np.kron(np.eye(N), R)

    QG = Qbig @ Gamma
    H = 2.0 * (Gamma.T @ QG + Rbig)
    H = 0.5 * (H + H.T)
    px = Phi @ x0
    g = 2.0 * (QG.T @ px)
    const = float(x0 @ Q @ x0 + px @ Qbig @ px)
    if x_linear is not None:
        x_linear = np.asarray(x_linear, dtype=float)
        if x_linear.shape != (N + 1, n):
            raise DimensionMismatch("x_linear must have shape (N + 1, %d)" % n)
        c_stack = x_linear[1:].reshape(-1)
        g = g + 2.0 * (Gamma.T @ c_stack)
        const += float(2.0 * x_linear[0] @ x0 + 2.0 * c_stack @ px)

    balls = []
    if terminal_balls:
        GN = Gamma[(N - 1) * n :, :]
        pN = px[(N - 1) * n :]
        for idx, radius in terminal_balls:
            idx = np.arange(n)[idx] if isinstance(idx, slice) else np.asarray(idx, dtype=int)
            balls.append(
                TerminalBall(Tmap=GN[idx, :].copy(), tvec=pN[idx].copy(), radius=float(radius))
            )
    return CondensedQp(
        H=H,
        g=g,
        const=const,
        Phi=Phi,
        Gamma=Gamma,
        box_lo=np.tile(u_lo, N),
        box_hi=np.tile(u_hi, N),
        terminal=balls,
        n=n,
        m=m,
        N=N,
    )


@dataclass
class SolverOptions:
    eps_abs: float = 1e-8
    eps_rel: float = 1e-6
    max_iters: int = 50_000
    rho: float = None
    over_relax: float = 1.6
    balance_every: int = 50
    balance_ratio: float = 10.0
    balance_factor: float = 2.0


@dataclass(eq=False)
class QpSolution:
    """Result of a solve; also usable as a warm start for a related solve."""

    u_stack: np.ndarray
    objective: float
    iterations: int
    primal_res: float
    dual_res: float
    status: str
    w: np.ndarray = field(default=None, repr=False)
    y: np.ndarray = field(default=None, repr=False)
    rho: float = field(default=None, repr=False)


def _ball_violation(qp, u):
    worst = 0.0
    for ball in qp.terminal:
        worst = max(worst, float(np.linalg.norm(ball.Tmap @ u + ball.tvec)) - ball.radius)
    return worst


def solve_qp(qp, warm_start=None, options=None):
    """Solve a condensed QP by projection-based operator splitting.

    `warm_start` may be a previous QpSolution (full restart state) or a
    plain stacked input guess.  Termination requires the primal and dual
    residuals below their tolerances and, after clipping the iterate onto
    the box, every terminal ball satisfied to 1e-8.  A diverging dual with
    a stagnant primal residual is reported as infeasible (heuristic).
    """
    opts = options or SolverOptions()
    H = qp.H
    g = qp.g
    nu = H.shape[0]
    balls = qp.terminal
    sizes = [nu] + [b.Tmap.shape[0] for b in balls]
    total = int(np.sum(sizes))
    offs = np.concatenate(([0], np.cumsum(sizes))).astype(int)

    def apply_M(u):
        out = np.empty(total)
        out[: offs[1]] = u
        for b, ball in enumerate(balls):
            out[offs[b + 1] : offs[b + 2]] = ball.Tmap @ u
        return out

    def apply_Mt(v):
        out = v[: offs[1]].copy()
        for b, ball in enumerate(balls):
            out += ball.Tmap.T @ v[offs[b + 1] : offs[b + 2]]
        return out

    cvec = np.zeros(total)
    for b, ball in enumerate(balls):
        cvec[offs[b + 1] : offs[b + 2]] = ball.tvec

    def project(v):
        out = np.empty_like(v)
        np.clip(v[: offs[1]], qp.box_lo, qp.box_hi, out=out[: offs[1]])
        for b, ball in enumerate(balls):
            seg = v[offs[b + 1] : offs[b + 2]]
            nrm = float(np.linalg.norm(seg))
            if nrm > ball.radius:
                out[offs[b + 1] : offs[b + 2]] = seg * (ball.radius / nrm)
            else:
                out[offs[b + 1] : offs[b + 2]] = seg
        return out

    MtM = np.eye(nu)
    for ball in balls:
        MtM += ball.Tmap.T @ ball.Tmap

    if opts.rho is not None:
        rho = float(opts.rho)
    else:
        rho = max(1e-3, 0.1 * float(np.mean(np.diag(H))))

    if isinstance(warm_start, QpSolution) and warm_start.w is not None:
        u = warm_start.u_stack.astype(float).copy()
        w = warm_start.w.copy()
        y = warm_start.y.copy()
        if warm_start.rho:
            rho = float(warm_start.rho)
    else:
        if warm_start is not None:
            u = np.asarray(warm_start, dtype=float).reshape(-1).copy()
        else:
            u = np.zeros(nu)
        w = project(apply_M(u) + cvec)
        y = np.zeros(total)

    factor = cho_factor(H + rho * MtM)
    status = MAX_ITERS
    r_norm = d_norm = np.inf
    stall_r = np.inf
    iterations = opts.max_iters
    for it in range(1, opts.max_iters + 1):
        rhs = -g + rho * apply_Mt(w - cvec - y)
        u = cho_solve(factor, rhs)
        v = apply_M(u) + cvec
        v_rel = opts.over_relax * v + (1.0 - opts.over_relax) * w
        w_prev = w
        w = project(v_rel + y)
        y = y + v_rel - w

        r = v - w
        r_norm = float(np.max(np.abs(r)))
        d_norm = float(np.max(np.abs(rho * apply_Mt(w_prev - w))))
        eps_pri = opts.eps_abs + opts.eps_rel * max(
            float(np.max(np.abs(v))), float(np.max(np.abs(w)))
        )
        eps_dua = opts.eps_abs + opts.eps_rel * max(
            float(np.max(np.abs(H @ u))),
            float(np.max(np.abs(g))) if g.size else 0.0,
            float(np.max(np.abs(rho * apply_Mt(y)))),
        )
        if r_norm <= eps_pri and d_norm <= eps_dua:
            clipped = np.clip(u, qp.box_lo, qp.box_hi)
            if _ball_violation(qp, clipped) <= BALL_FEAS_TOL:
                status = SOLVED
                iterations = it
                break

        if it % opts.balance_every == 0:
            # Residual balancing; the scaled dual is rescaled so the
            # underlying multiplier rho * y stays fixed.
            scale = None
            if r_norm > opts.balance_ratio * d_norm:
                scale = opts.balance_factor
            elif d_norm > opts.balance_ratio * r_norm:
                scale = 1.0 / opts.balance_factor
            if scale is not None:
                rho *= scale
                y /= scale
                factor = cho_factor(H + rho * MtM)
            # Infeasibility heuristic: the dual grows without bound while
            # the primal residual stops improving.
            if it % (opts.balance_every * 4) == 0:
                if (
                    rho * float(np.max(np.abs(y))) > 1e9 * (1.0 + float(np.max(np.abs(cvec))))
                    and r_norm > 1e3 * opts.eps_abs
                    and r_norm > 0.95 * stall_r
                ):
                    status = INFEASIBLE
                    iterations = it
                    break
                stall_r = r_norm

    u_out = np.clip(u, qp.box_lo, qp.box_hi)
    return QpSolution(
        u_stack=u_out,
        objective=qp.objective(u_out),
        iterations=iterations,
        primal_res=r_norm,
        dual_res=d_norm,
        status=status,
        w=w,
        y=y,
        rho=rho,
    )
