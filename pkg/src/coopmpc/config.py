"""Problem description files: parsing, validation, and problem assembly.

A description is a single JSON document (conventionally with a .cfg
extension) holding the block dims table, the pairwise A and B blocks, the
cost weights, the horizon, input bounds, terminal settings, the terminal
controller design weights, solver settings, and simulation defaults.
Matrices are nested arrays, row major.  Floats are parsed by the json
module, so decimals are read exactly as written regardless of locale.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import CoopMpcError, ConfigError
from .plant import CostSpec, SubsystemBlocks, build_composite, build_permutation, transform_plant
from .problem import Problem
from .qp import SolverOptions
from .synthesis import synthesize


@dataclass
class SubsystemsConfig:
    dims: list
    A: list
    B: list
    C: list = None


@dataclass
class CostConfig:
    R: list
    rho: list
    Q: list = None
    Qblocks: list = None
    P: object = "auto"


@dataclass
class LqrConfig:
    Q: list
    R: list
    K: list = None


@dataclass
class SimConfig:
    steps: int = 60
    strategy: str = "noiter"
    iters: int = 5
    x0: list = None
    seed: int = 0
    bounds: list = field(default_factory=lambda: [-8.0, 8.0])
    warmup_steps: int = 3
    draws: int = 200


@dataclass
class SolverConfig:
    eps_abs: float = 1e-8
    eps_rel: float = 1e-6
    max_iters: int = 50000


@dataclass
class ProblemConfig:
    """In-memory model of a description file.

    Values stay as parsed (plain lists and numbers); numerical assembly
    happens in build_problem.  parse -> serialize -> parse is the
    identity on this model.
    """

    subsystems: SubsystemsConfig
    cost: CostConfig
    horizon: int
    input_box: list
    terminal_radius: object
    lqr: LqrConfig
    solver: SolverConfig = field(default_factory=SolverConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def to_dict(self):
        out = asdict(self)
        # Drop optional fields left at None so the round trip is stable.
        if out["subsystems"]["C"] is None:
            del out["subsystems"]["C"]
        if out["cost"]["Q"] is None:
            del out["cost"]["Q"]
        if out["cost"]["Qblocks"] is None:
            del out["cost"]["Qblocks"]
        if out["lqr"]["K"] is None:
            del out["lqr"]["K"]
        if out["sim"]["x0"] is None:
            del out["sim"]["x0"]
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _require(mapping, key, where):
    if key not in mapping:
        raise ConfigError("%s: missing required key %r" % (where, key))
    return mapping[key]


def _expect(cond, message):
    if not cond:
        raise ConfigError(message)


def config_from_dict(doc):
    _expect(isinstance(doc, dict), "top level: expected an object")
    sub_doc = _require(doc, "subsystems", "top level")
    dims = _require(sub_doc, "dims", "subsystems")
    _expect(
        isinstance(dims, list) and dims and all(isinstance(r, list) and len(r) == len(dims) for r in dims),
        "subsystems.dims: expected a square table of block sizes",
    )
    M = len(dims)
    A = _require(sub_doc, "A", "subsystems")
    B = _require(sub_doc, "B", "subsystems")
    for name, table in (("A", A), ("B", B)):
        _expect(
            isinstance(table, list) and len(table) == M and all(len(r) == M for r in table),
            "subsystems.%s: expected an %dx%d table of blocks" % (name, M, M),
        )
    sub = SubsystemsConfig(dims=dims, A=A, B=B, C=sub_doc.get("C"))

    cost_doc = _require(doc, "cost", "top level")
    cost = CostConfig(
        R=_require(cost_doc, "R", "cost"),
        rho=_require(cost_doc, "rho", "cost"),
        Q=cost_doc.get("Q"),
        Qblocks=cost_doc.get("Qblocks"),
        P=cost_doc.get("P", "auto"),
    )
    _expect(cost.Q is not None or cost.Qblocks is not None, "cost: need Q or Qblocks")
    _expect(len(cost.R) == M, "cost.R: need one entry per agent")
    _expect(len(cost.rho) == M, "cost.rho: need one entry per agent")
    for i, r in enumerate(cost.rho):
        _expect(isinstance(r, (int, float)) and r > 0, "cost.rho[%d]: must be positive" % i)
    if cost.P != "auto":
        _expect(isinstance(cost.P, list) and len(cost.P) == M, "cost.P: 'auto' or one matrix per agent")

    horizon = _require(doc, "horizon", "top level")
    _expect(isinstance(horizon, int) and horizon >= 1, "horizon: must be an integer >= 1")

    input_box = _require(doc, "input_box", "top level")
    _expect(isinstance(input_box, list) and len(input_box) == M, "input_box: one bound per agent")

    terminal_radius = doc.get("terminal_radius", "auto")
    if terminal_radius != "auto":
        _expect(
            isinstance(terminal_radius, list) and len(terminal_radius) == M,
            "terminal_radius: 'auto' or one radius per agent",
        )

    lqr_doc = _require(doc, "lqr", "top level")
    lqr = LqrConfig(
        Q=_require(lqr_doc, "Q", "lqr"),
        R=_require(lqr_doc, "R", "lqr"),
        K=lqr_doc.get("K"),
    )
    _expect(len(lqr.Q) == M and len(lqr.R) == M, "lqr: need Q and R per agent")

    solver_doc = doc.get("solver", {})
    solver = SolverConfig(
        eps_abs=float(solver_doc.get("eps_abs", 1e-8)),
        eps_rel=float(solver_doc.get("eps_rel", 1e-6)),
        max_iters=int(solver_doc.get("max_iters", 50000)),
    )

    sim_doc = doc.get("sim", {})
    sim = SimConfig(
        steps=int(sim_doc.get("steps", 60)),
        strategy=str(sim_doc.get("strategy", "noiter")),
        iters=int(sim_doc.get("iters", 5)),
        x0=sim_doc.get("x0"),
        seed=int(sim_doc.get("seed", 0)),
        bounds=list(sim_doc.get("bounds", [-8.0, 8.0])),
        warmup_steps=int(sim_doc.get("warmup_steps", 3)),
        draws=int(sim_doc.get("draws", 200)),
    )
    _expect(sim.strategy in ("centralized", "noiter", "coop"), "sim.strategy: unknown strategy")

    return ProblemConfig(
        subsystems=sub,
        cost=cost,
        horizon=horizon,
        input_box=input_box,
        terminal_radius=terminal_radius,
        lqr=lqr,
        solver=solver,
        sim=sim,
    )


def parse_config(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("line %d column %d: %s" % (exc.lineno, exc.colno, exc.msg)) from exc
    return config_from_dict(doc)


def load_config(path):
    with open(path, "r") as fh:
        return parse_config(fh.read())


def _weight_matrix(value, size, where):
    """A weight entry is either a full matrix or a scalar meaning c * I."""
    if isinstance(value, (int, float)):
        return float(value) * np.eye(size)
    arr = np.asarray(value, dtype=float)
    _expect(arr.shape == (size, size), "%s: expected a %dx%d matrix or a scalar" % (where, size, size))
    return arr


def _assemble_Q(cfg, row_sizes):
    if cfg.cost.Q is not None:
        return [
            _weight_matrix(Qi, row_sizes[i], "cost.Q[%d]" % i)
            for i, Qi in enumerate(cfg.cost.Q)
        ]
    M = len(row_sizes)
    dims = np.asarray(cfg.subsystems.dims, dtype=int)
    out = []
    for i, blocks_row in enumerate(cfg.cost.Qblocks):
        _expect(
            isinstance(blocks_row, list) and len(blocks_row) == M,
            "cost.Qblocks[%d]: expected %d block rows" % (i, M),
        )
        rows = []
        for j in range(M):
            _expect(len(blocks_row[j]) == M, "cost.Qblocks[%d][%d]: expected %d blocks" % (i, j, M))
            rows.append([np.asarray(blocks_row[j][l], dtype=float).reshape(dims[i, j], dims[i, l]) for l in range(M)])
        out.append(np.block(rows))
    return out


def build_problem(cfg):
    """Assemble, transform and synthesize a Problem from a parsed config.

    Raises the underlying toolkit error (NotPSD, NotSchur, SelectionFailed
    and so on) untouched so callers can map them to exit codes.
    """
    dims_arr = np.asarray(cfg.subsystems.dims, dtype=int)
    M_cfg = dims_arr.shape[0]
    m_list = []
    for j in range(M_cfg):
        rows = np.nonzero(dims_arr[:, j])[0]
        _expect(rows.size > 0, "subsystems.dims: column %d has no state block" % j)
        block = np.atleast_2d(np.asarray(cfg.subsystems.B[int(rows[0])][j], dtype=float))
        if block.shape[0] != dims_arr[int(rows[0]), j]:
            block = block.T
        m_list.append(block.shape[1])
    blocks = SubsystemBlocks(
        dims=cfg.subsystems.dims,
        A=cfg.subsystems.A,
        B=cfg.subsystems.B,
        m=m_list,
        C=cfg.subsystems.C,
    )
    plant = build_composite(blocks)
    pmap = build_permutation(blocks.dims)
    tplant = transform_plant(plant, pmap)
    M = blocks.M
    dims = blocks.dims
    row_sizes = [int(dims[i, :].sum()) for i in range(M)]
    bar_sizes = list(pmap.bar_dims)
    Q = _assemble_Q(cfg, row_sizes)
    R = [_weight_matrix(Ri, blocks.m[i], "cost.R[%d]" % i) for i, Ri in enumerate(cfg.cost.R)]
    if cfg.cost.P == "auto":
        P = None
    else:
        P = [_weight_matrix(Pi, row_sizes[i], "cost.P[%d]" % i) for i, Pi in enumerate(cfg.cost.P)]
    cost = CostSpec(Q=Q, R=R, rho=cfg.cost.rho, N=cfg.horizon, P=P)
    lqr_Q = [_weight_matrix(v, bar_sizes[i], "lqr.Q[%d]" % i) for i, v in enumerate(cfg.lqr.Q)]
    lqr_R = [_weight_matrix(v, blocks.m[i], "lqr.R[%d]" % i) for i, v in enumerate(cfg.lqr.R)]
    gains = None
    if cfg.lqr.K is not None:
        gains = [
            None if Ki is None else np.asarray(Ki, dtype=float).reshape(blocks.m[i], bar_sizes[i])
            for i, Ki in enumerate(cfg.lqr.K)
        ]
    radii = (
        [1.0] * M
        if cfg.terminal_radius == "auto"
        else [float(r) for r in cfg.terminal_radius]
    )
    u_max = [np.asarray(b, dtype=float).reshape(-1) for b in cfg.input_box]
    ingredients, final_cost, tcost = synthesize(
        tplant, cost, lqr_Q, lqr_R, radii, u_max, gains=gains
    )
    solver = SolverOptions(
        eps_abs=cfg.solver.eps_abs,
        eps_rel=cfg.solver.eps_rel,
        max_iters=cfg.solver.max_iters,
    )
    return Problem(
        blocks=blocks,
        plant=plant,
        pmap=pmap,
        tplant=tplant,
        cost=final_cost,
        tcost=tcost,
        ingredients=ingredients,
        u_max=u_max,
        N=cfg.horizon,
        solver=solver,
    )


def initial_state(cfg, problem, seed=None):
    """Regrouped initial state from the sim section.

    Uses sim.x0 when present (original ordering), otherwise one uniform
    draw from sim.bounds with the given or configured seed.
    """
    if cfg.sim.x0 is not None:
        x0 = np.asarray(cfg.sim.x0, dtype=float).reshape(-1)
        if x0.shape[0] != problem.n:
            raise ConfigError("sim.x0: expected %d entries" % problem.n)
    else:
        use_seed = cfg.sim.seed if seed is None else seed
        rng = np.random.Generator(np.random.PCG64(int(use_seed)))
        lo, hi = cfg.sim.bounds
        x0 = lo + (hi - lo) * rng.random(problem.n)
    return problem.pmap.to_regrouped(x0)
