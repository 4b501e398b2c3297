"""Independent reference solvers used to check the production code.

Everything here is deliberately naive: enumeration and dense linear solves
only, no shared code with the package beyond numpy.
"""

import itertools

import numpy as np


def solve_box_qp_active_set(H, g, lo, hi, tol=1e-9):
    """Global minimizer of 0.5 u'Hu + g'u over the box [lo, hi].

    Enumerates candidate active sets in order of increasing size.  For
    each subset of clamped coordinates (each clamped to one side) the free
    coordinates solve the reduced normal equations; the candidate is the
    optimum iff the free part stays inside the box and the gradient on the
    clamped part points outward.  H must be positive definite, so the
    first KKT-consistent candidate is the unique solution.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float).reshape(-1)
    n = g.shape[0]
    lo = np.broadcast_to(np.asarray(lo, dtype=float).reshape(-1), (n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float).reshape(-1), (n,))
    idx = np.arange(n)
    for k in range(n + 1):
        for clamped in itertools.combinations(range(n), k):
            clamped = np.asarray(clamped, dtype=int)
            free = np.setdiff1d(idx, clamped)
            for sides in itertools.product((0, 1), repeat=k):
                u = np.empty(n)
                u[clamped] = np.where(np.asarray(sides, dtype=bool), hi[clamped], lo[clamped])
                if free.size:
                    rhs = -(g[free] + H[np.ix_(free, clamped)] @ u[clamped])
                    u[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
                    if np.any(u[free] < lo[free] - tol) or np.any(u[free] > hi[free] + tol):
                        continue
                grad = H @ u + g
                ok = True
                for c, side in zip(clamped, sides):
                    if side == 0 and grad[c] < -tol:
                        ok = False
                        break
                    if side == 1 and grad[c] > tol:
                        ok = False
                        break
                if ok:
                    return np.clip(u, lo, hi)
    raise AssertionError("active-set enumeration found no KKT point")


def horizon_cost(A, B, Q, P, R, x0, u_seq, x_linear=None):
    """Direct simulation evaluation of the finite-horizon cost.

    u_seq has shape (m, N).  Matches the condensed objective including its
    constant term (the k = 0 state cost is part of the sum).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    Q = np.asarray(Q, dtype=float)
    P = np.asarray(P, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    x = np.asarray(x0, dtype=float).reshape(-1)
    u_seq = np.asarray(u_seq, dtype=float)
    N = u_seq.shape[1]
    total = 0.0
    for k in range(N):
        u = u_seq[:, k]
        total += float(x @ Q @ x + u @ R @ u)
        if x_linear is not None:
            total += float(2.0 * np.asarray(x_linear, dtype=float)[k] @ x)
        x = A @ x + B @ u
    total += float(x @ P @ x)
    if x_linear is not None:
        total += float(2.0 * np.asarray(x_linear, dtype=float)[N] @ x)
    return total


def lyapunov_fixed_point(F, W, iters=20000):
    """Solve F'PF + W = P by plain summation of the convergent series."""
    F = np.asarray(F, dtype=float)
    P = np.asarray(W, dtype=float).copy()
    term = np.asarray(W, dtype=float).copy()
    for _ in range(iters):
        term = F.T @ term @ F
        P += term
        if np.max(np.abs(term)) < 1e-16:
            break
    return P
