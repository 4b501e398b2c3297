"""Terminal ingredient synthesis and stability certification.

Designs per-group terminal controllers, solves the closed-loop Lyapunov
equation for the ideal centralized terminal weight, certifies the decrease
condition that the block-diagonal terminal weights must satisfy, and scales
candidate weights until the certificate holds.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .errors import (
    DimensionMismatch,
    NotSchur,
    NotStabilized,
    RiccatiDiverged,
    SelectionFailed,
    SingularSystem,
)
from .linalg import (
    min_eigenvalue,
    require_square,
    spectral_norm,
    spectral_radius,
    symmetrize,
)
from .plant import CostSpec, transform_cost

LYAP_RESIDUAL_TOL = 1e-8
RICCATI_TOL = 1e-11
RICCATI_MAX_ITERS = 200_000
CERT_TOL = 1e-9
# Scaling sweep for the terminal weight selection: 1, 1.5, 2, 3, 5, 10, ...
ALPHA_MANTISSAS = (1.0, 1.5, 2.0, 3.0, 5.0)
ALPHA_MAX = 1e6


def solve_discrete_lyapunov(F, W):
    """Solve F^T P F + W = P for symmetric P by dense vectorization.

    F must be Schur stable.  The n^2 x n^2 system (I - kron(F^T, F^T))
    vec(P) = vec(W) is solved directly; the residual is checked against
    1e-8 * (1 + max-norm of P).
    """
    F = require_square(F, "F")
    W = symmetrize(require_square(W, "W"))
    if W.shape != F.shape:
        raise DimensionMismatch("F and W must have the same shape")
    if spectral_radius(F) >= 1.0 - 1e-10:
        raise NotSchur("spectral radius %.6f is not below one" % spectral_radius(F))
    n = F.shape[0]
    lhs = np.eye(n * n) - np.kron(F.T, F.T)
    try:
        vec = np.linalg.solve(lhs, W.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("vectorized Lyapunov system is singular") from exc
    P = symmetrize(vec.reshape(n, n))
    resid = np.max(np.abs(F.T @ P @ F + W - P))
    bound = LYAP_RESIDUAL_TOL * (1.0 + np.max(np.abs(P)))
    if resid > bound:
        raise SingularSystem(
            "Lyapunov residual %.3e exceeds %.3e; system too ill conditioned" % (resid, bound)
        )
    return P


def lqr_gain(A, B, Q, R, tol=RICCATI_TOL, max_iters=RICCATI_MAX_ITERS):
    """Infinite-horizon LQR gain by Riccati fixed-point iteration.

    Returns (K, P) with u = K x and K = -(R + B^T P B)^-1 B^T P A.  The
    iteration starts from P = Q and stops when successive iterates agree
    to `tol` in max norm.
    """
    A = require_square(A, "A")
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    if B.shape[0] != A.shape[0]:
        raise DimensionMismatch("A and B row counts differ")
    Q = symmetrize(Q)
    R = symmetrize(np.atleast_2d(R))
    if Q.shape != A.shape or R.shape != (B.shape[1], B.shape[1]):
        raise DimensionMismatch("weight shapes do not match the system")
    P = Q.copy()
    for _ in range(max_iters):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        Pn = symmetrize(Q + A.T @ P @ A - A.T @ P @ B @ gain)
        if np.max(np.abs(Pn - P)) < tol:
            P = Pn
            break
        P = Pn
    else:
        raise RiccatiDiverged("no convergence within %d iterations" % max_iters)
    BtP = B.T @ P
    K = -np.linalg.solve(R + BtP @ B, BtP @ A)
    if spectral_radius(A + B @ K) >= 1.0:
        raise NotStabilized("closed loop spectral radius %.6f" % spectral_radius(A + B @ K))
    return K, P


@dataclass
class BallCertificate:
    """Invariance and input admissibility of a ball terminal set."""

    radius: float
    sigma_max: float
    ball_invariant: bool
    input_margin: float
    input_admissible: bool


def verify_ball_terminal(AK, K, radius, u_max, tol=1e-10):
    """Certify a Euclidean ball of given radius as a terminal set.

    The ball is invariant under xbar+ = AK xbar iff the largest singular
    value of AK is at most one.  The terminal controller is admissible if
    every gain row satisfies ||row||_2 * radius <= u_max for its channel.
    """
    AK = np.asarray(AK, dtype=float)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    u_max = np.broadcast_to(np.asarray(u_max, dtype=float).reshape(-1), (K.shape[0],))
    sigma = float(np.linalg.norm(AK, 2))
    row_norms = np.linalg.norm(K, axis=1)
    margins = u_max - row_norms * float(radius)
    return BallCertificate(
        radius=float(radius),
        sigma_max=sigma,
        ball_invariant=bool(sigma <= 1.0 + tol),
        input_margin=float(np.min(margins)),
        input_admissible=bool(np.all(margins >= -tol)),
    )


@dataclass
class CertCheck:
    holds: bool
    margin: float


def check_prop1(Pbar, Phat, AK_global, tol=CERT_TOL):
    """Global decrease certificate for the block terminal weight.

    With Delta = Pbar - Phat, requires Delta - AK^T Delta AK to be
    positive semidefinite up to tol * (1 + ||Delta||_2).
    """
    Pbar = require_square(Pbar, "Pbar")
    Phat = require_square(Phat, "Phat")
    AK_global = require_square(AK_global, "AK_global")
    if Pbar.shape != Phat.shape or Pbar.shape != AK_global.shape:
        raise DimensionMismatch("Pbar, Phat and AK_global must share one shape")
    Delta = symmetrize(Pbar - Phat)
    S = symmetrize(Delta - AK_global.T @ Delta @ AK_global)
    margin = min_eigenvalue(S)
    holds = margin >= -tol * (1.0 + spectral_norm(Delta))
    return CertCheck(holds=bool(holds), margin=margin)


def check_prop2_blocks(Pbar, Phat, AK_list, bar_dims, tol=CERT_TOL):
    """Per-group decrease certificates on the diagonal blocks of Delta."""
    Delta = symmetrize(np.asarray(Pbar, dtype=float) - np.asarray(Phat, dtype=float))
    starts = np.concatenate(([0], np.cumsum(bar_dims)))
    out = []
    for i, AKi in enumerate(AK_list):
        s = slice(int(starts[i]), int(starts[i + 1]))
        Dii = Delta[s, s]
        Si = symmetrize(Dii - AKi.T @ Dii @ AKi)
        margin = min_eigenvalue(Si)
        holds = margin >= -tol * (1.0 + spectral_norm(Dii))
        out.append(CertCheck(holds=bool(holds), margin=margin))
    return out


def check_corollary_dd(Pbar, Phat, AK_global):
    """Entrywise diagonal dominance test on S = Delta - AK^T Delta AK.

    A nonnegative diagonal with each diagonal entry dominating the sum of
    absolute off-diagonal entries in its row is sufficient for the global
    decrease certificate.
    """
    Delta = symmetrize(np.asarray(Pbar, dtype=float) - np.asarray(Phat, dtype=float))
    AK = np.asarray(AK_global, dtype=float)
    S = symmetrize(Delta - AK.T @ Delta @ AK)
    diag = np.diag(S)
    off = np.sum(np.abs(S), axis=1) - np.abs(diag)
    slack = diag - off
    holds = bool(np.all(diag >= 0.0) and np.all(slack >= 0.0))
    return holds, float(np.min(slack))


@dataclass(eq=False)
class TerminalIngredients:
    """Everything the controllers need about the terminal sets.

    K[i] and AK[i] are the per-group terminal gain and closed loop,
    Phat the centralized Lyapunov weight, prop1 / prop2 / dd_holds the
    certificates for the selected terminal weights, and alpha the scaling
    applied during automatic selection (None for user-provided weights).
    """

    K: tuple
    AK: tuple
    Phat: np.ndarray
    ball_radius: tuple
    prop1: CertCheck
    prop2: tuple
    dd_holds: bool
    dd_slack: float
    ball_certs: tuple
    alpha: float
    lyapunov_residual: float

    @property
    def AK_global(self):
        return block_diag(*self.AK)

    @property
    def K_global(self):
        return block_diag(*self.K)

    def certified(self):
        """True when the global decrease certificate holds.

        Ball invariance and input admissibility are reported in
        `ball_certs` but deliberately kept out of this gate: a rank-one
        feedback correction cannot push the closed-loop spectral norm
        below the plant's second singular value, so a group whose
        open-loop block has two singular values above one can never pass
        the ball check, no matter the gain.  The decrease certificate is
        the load-bearing stability condition.
        """
        return bool(self.prop1.holds)


def candidate_alphas(alpha_max=ALPHA_MAX):
    """The scaling sweep 1, 1.5, 2, 3, 5, 10, 15, ... up to alpha_max."""
    out = []
    scale = 1.0
    while scale <= alpha_max:
        for m in ALPHA_MANTISSAS:
            a = m * scale
            if a <= alpha_max:
                out.append(a)
        scale *= 10.0
    if out[-1] < alpha_max:
        out.append(alpha_max)
    return out


def select_terminal_weights(cost, tplant, Phat, AK_global, alpha_max=ALPHA_MAX):
    """Pick block terminal weights that satisfy the decrease certificate.

    The centralized weight Phat is mapped back to the original ordering,
    truncated to its per-subsystem diagonal blocks, and divided by the
    priorities to give base weights P_i^0.  The candidates alpha * P_i^0
    are swept over an increasing grid until the global decrease check
    passes.  Returns (P list, alpha, certificate).
    """
    pmap = tplant.map
    T = pmap.T
    dims = pmap.dims
    M = dims.shape[0]
    row_sizes = [int(dims[i, :].sum()) for i in range(M)]
    starts = np.concatenate(([0], np.cumsum(row_sizes)))
    P_orig = symmetrize(T @ Phat @ T.T)
    base = []
    for i in range(M):
        s = slice(int(starts[i]), int(starts[i + 1]))
        base.append(symmetrize(P_orig[s, s] / cost.rho[i]))
    for alpha in candidate_alphas(alpha_max):
        P_list = tuple(alpha * Pi for Pi in base)
        trial = CostSpec(Q=cost.Q, R=cost.R, rho=cost.rho, N=cost.N, P=P_list)
        tc = transform_cost(trial, pmap)
        cert = check_prop1(tc.Pbar, Phat, AK_global)
        if cert.holds:
            return P_list, alpha, cert
    raise SelectionFailed("no scaling up to %.1e satisfied the decrease certificate" % alpha_max)


def synthesize(tplant, cost, lqr_Q, lqr_R, radii, u_max, gains=None):
    """Design terminal controllers and certified terminal weights.

    Parameters
    ----------
    tplant : TransformedPlant
    cost : CostSpec
        Terminal weights may be absent; they are then selected
        automatically and the returned cost carries them.
    lqr_Q, lqr_R : sequences of arrays
        Per-group LQR design weights.
    radii : sequence of float
        Terminal ball radius per group.
    u_max : sequence of arrays
        Symmetric per-channel input bound of each agent.
    gains : sequence of arrays, optional
        Explicit terminal gains; skips the Riccati design when given.

    Returns
    -------
    (TerminalIngredients, CostSpec, TransformedCost)
    """
    pmap = tplant.map
    M = tplant.M
    if len(radii) != M or len(u_max) != M:
        raise DimensionMismatch("need one radius and one input bound per agent")
    K = []
    AK = []
    for i in range(M):
        if gains is not None and gains[i] is not None:
            Ki = np.atleast_2d(np.asarray(gains[i], dtype=float))
        else:
            Ki, _ = lqr_gain(tplant.Abar[i], tplant.Btilde[i], lqr_Q[i], lqr_R[i])
        K.append(Ki)
        AK.append(tplant.Abar[i] + tplant.Btilde[i] @ Ki)
    AKg = block_diag(*AK)
    Kg = block_diag(*K)
    tc0 = transform_cost(CostSpec(Q=cost.Q, R=cost.R, rho=cost.rho, N=cost.N), pmap)
    W = symmetrize(tc0.Qbar + Kg.T @ tc0.Rglobal @ Kg)
    Phat = solve_discrete_lyapunov(AKg, W)
    resid = float(np.max(np.abs(AKg.T @ Phat @ AKg + W - Phat)))
    if cost.P is None:
        P_list, alpha, prop1 = select_terminal_weights(cost, tplant, Phat, AKg)
        final = CostSpec(Q=cost.Q, R=cost.R, rho=cost.rho, N=cost.N, P=P_list)
    else:
        final = cost
        alpha = None
    tcost = transform_cost(final, pmap)
    prop1 = check_prop1(tcost.Pbar, Phat, AKg)
    prop2 = tuple(check_prop2_blocks(tcost.Pbar, Phat, AK, pmap.bar_dims))
    dd_holds, dd_slack = check_corollary_dd(tcost.Pbar, Phat, AKg)
    certs = tuple(
        verify_ball_terminal(AK[i], K[i], radii[i], u_max[i]) for i in range(M)
    )
    ingredients = TerminalIngredients(
        K=tuple(K),
        AK=tuple(AK),
        Phat=Phat,
        ball_radius=tuple(float(r) for r in radii),
        prop1=prop1,
        prop2=prop2,
        dd_holds=dd_holds,
        dd_slack=dd_slack,
        ball_certs=certs,
        alpha=alpha,
        lyapunov_residual=resid,
    )
    return ingredients, final, tcost
