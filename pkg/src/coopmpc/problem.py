"""Assembled problem bundle shared by the controllers and the harness."""

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import block_diag

from .errors import DimensionMismatch
from .linalg import block_slices
from .qp import SolverOptions


@dataclass(eq=False)
class Problem:
    """Plant, transformed data, cost, ingredients and solve settings.

    u_max[i] is the symmetric per-channel input bound of agent i; the box
    is [-u_max, u_max].  All controller entry points take this bundle plus
    a regrouped initial state.
    """

    blocks: object
    plant: object
    pmap: object
    tplant: object
    cost: object
    tcost: object
    ingredients: object
    u_max: tuple
    N: int
    solver: SolverOptions

    def __post_init__(self):
        self.u_max = tuple(
            np.broadcast_to(np.asarray(b, dtype=float).reshape(-1), (mi,)).copy()
            for b, mi in zip(self.u_max, self.m)
        )
        if len(self.u_max) != self.M:
            raise DimensionMismatch("need one input bound per agent")

    @property
    def M(self):
        return len(self.tplant.Abar)

    @property
    def m(self):
        return tuple(Bt.shape[1] for Bt in self.tplant.Btilde)

    @property
    def n(self):
        return int(sum(self.pmap.bar_dims))

    def group_slices(self):
        return self.pmap.group_slices()

    def input_slices(self):
        return block_slices(self.m)

    @property
    def A_big(self):
        return block_diag(*self.tplant.Abar)

    @property
    def B_big(self):
        return block_diag(*self.tplant.Btilde)

    def step(self, xbar, u0):
        """One plant step; u0 is the list of per-agent inputs."""
        out = np.empty_like(np.asarray(xbar, dtype=float))
        for i, s in enumerate(self.group_slices()):
            ui = np.asarray(u0[i], dtype=float).reshape(-1)
            out[s] = self.tplant.Abar[i] @ xbar[s] + self.tplant.Btilde[i] @ ui
        return out

    def simulate_group(self, i, x_i0, u_i):
        """Group-i trajectory (N+1 rows) under its own input sequence."""
        u_i = np.asarray(u_i, dtype=float)
        N = u_i.shape[1]
        traj = np.empty((N + 1, len(x_i0)))
        traj[0] = np.asarray(x_i0, dtype=float)
        for k in range(N):
            traj[k + 1] = self.tplant.Abar[i] @ traj[k] + self.tplant.Btilde[i] @ u_i[:, k]
        return traj

    def simulate(self, xbar0, seqs):
        """Full-state trajectory under an InputSequenceSet."""
        xbar0 = np.asarray(xbar0, dtype=float)
        traj = np.empty((self.N + 1, self.n))
        for i, s in enumerate(self.group_slices()):
            traj[:, s] = self.simulate_group(i, xbar0[s], seqs.u[i])
        return traj

    def separable(self):
        """Copy of the problem with the coupling residuals removed.

        The stage and terminal weights keep only their group-diagonal
        blocks, so the centralized problem splits exactly into the local
        ones.
        """
        tc = self.tcost
        sep = replace(
            tc,
            Qbar=tc.Qa.copy(),
            Pbar=tc.Pa.copy(),
            Qtilde=np.zeros_like(tc.Qbar),
            Ptilde=np.zeros_like(tc.Pbar),
        )
        return replace(self, tcost=sep)
