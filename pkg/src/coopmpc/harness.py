"""Closed-loop simulation, strategy comparison, and Monte-Carlo studies.

Cost accounting follows the cooperative objective split: the global cost
GC of an open-loop sequence set is the full finite-horizon sum, the
coupled cost CC is the part contributed by the coupling residuals Qtilde
and Ptilde, and GC minus CC is what the decoupled weights alone see.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .controllers import (
    StrategyConfig,
    shift_sequences,
    solve_centralized,
    solve_cooperative,
    solve_strategy,
)
from .errors import SolverFailure

MAX_CONSECUTIVE_FAILURES = 3


def evaluate_cost(problem, xbar0, seqs):
    """Global and coupled cost of an open-loop sequence set.

    Returns (GC, CC).  GC sums the stage costs over the horizon plus the
    terminal cost; CC is the same sum taken with the coupling residual
    weights only (no input term).
    """
    tc = problem.tcost
    traj = problem.simulate(xbar0, seqs)
    u_stack = seqs.stacked().reshape(problem.N, -1)
    gc = 0.0
    cc = 0.0
    for k in range(problem.N):
        x = traj[k]
        gc += float(x @ tc.Qbar @ x + u_stack[k] @ tc.Rglobal @ u_stack[k])
        cc += float(x @ tc.Qtilde @ x)
    xN = traj[problem.N]
    gc += float(xN @ tc.Pbar @ xN)
    cc += float(xN @ tc.Ptilde @ xN)
    return gc, cc


@dataclass
class StepRecord:
    t: int
    xbar: np.ndarray
    u0: tuple
    gc: float
    cc: float
    iterations: int
    millis: float
    strategy: str
    gc_ref: float = None
    cc_ref: float = None


@dataclass(eq=False)
class ClosedLoopTrace:
    steps: list
    meta: dict = field(default_factory=dict)

    def states(self):
        return np.array([rec.xbar for rec in self.steps])

    def norms(self):
        return np.array([float(np.linalg.norm(rec.xbar)) for rec in self.steps])


def run_closed_loop(problem, xbar0, strategy, steps, reference=None, meta=None):
    """Simulate the receding-horizon loop for `steps` sampling instants.

    `strategy` is a StrategyConfig or a schedule [(start_step, cfg), ...]
    switching strategies mid-run.  Warm starts follow the shifted-sequence
    protocol: the applied sequence, shifted one stage with the terminal
    controller move appended.  With `reference`, the reference strategy is
    also solved at every visited state and its costs logged alongside.

    Solver failures are logged; the run aborts after three consecutive
    ones and the truncated trace is returned with meta["aborted"] set.
    """
    schedule = strategy if isinstance(strategy, list) else [(0, strategy)]
    schedule = sorted(schedule, key=lambda sc: sc[0])
    xbar = np.asarray(xbar0, dtype=float).reshape(-1).copy()
    trace = ClosedLoopTrace(steps=[], meta=dict(meta or {}))
    trace.meta.setdefault("strategy", " / ".join(cfg.label() for _, cfg in schedule))
    warm = None
    ref_warm = None
    failures = 0
    failure_log = []
    for t in range(steps):
        cfg = None
        for start, candidate in schedule:
            if t >= start:
                cfg = candidate
        try:
            seqs, info = solve_strategy(problem, xbar, cfg, previous=warm)
        except SolverFailure as exc:
            failures += 1
            failure_log.append({"t": t, "error": str(exc)})
            if failures >= MAX_CONSECUTIVE_FAILURES:
                trace.meta["aborted"] = True
                trace.meta["failures"] = failure_log
                return trace
            warm = None
            continue
        failures = 0
        gc, cc = evaluate_cost(problem, xbar, seqs)
        rec = StepRecord(
            t=t,
            xbar=xbar.copy(),
            u0=tuple(ui[:, 0].copy() for ui in seqs.u),
            gc=gc,
            cc=cc,
            iterations=info.iterations,
            millis=info.millis,
            strategy=cfg.label(),
        )
        if reference is not None:
            ref_seqs, _ = solve_strategy(problem, xbar, reference, previous=ref_warm)
            rec.gc_ref, rec.cc_ref = evaluate_cost(problem, xbar, ref_seqs)
            ref_warm = shift_sequences(problem, xbar, ref_seqs)
        warm = shift_sequences(problem, xbar, seqs)
        xbar = problem.step(xbar, rec.u0)
        trace.steps.append(rec)
    if failure_log:
        trace.meta["failures"] = failure_log
    return trace


def replay_states(problem, trace, xbar0):
    """Recompute the state path from the logged first moves."""
    xbar = np.asarray(xbar0, dtype=float).reshape(-1).copy()
    out = [xbar.copy()]
    for rec in trace.steps:
        xbar = problem.step(xbar, rec.u0)
        out.append(xbar.copy())
    return np.array(out)


def trace_to_csv(trace, include_timing=True):
    """Render a trace in the canonical column layout.

    Columns: t, the regrouped state, the applied first input of each
    agent, GC, CC, the iteration count and, unless disabled, the solve
    time.  Numbers use shortest round-trip formatting, so two runs of the
    same configuration produce byte-identical text (timing excluded).
    """
    if not trace.steps:
        return ""
    n = len(trace.steps[0].xbar)
    header = ["t"]
    header += ["xbar_%d" % k for k in range(n)]
    for i, ui in enumerate(trace.steps[0].u0):
        if len(ui) == 1:
            header.append("u_agent%d" % (i + 1))
        else:
            header += ["u_agent%d_%d" % (i + 1, c) for c in range(len(ui))]
    header += ["GC", "CC", "iters"]
    if include_timing:
        header.append("millis")
    lines = [",".join(header)]
    for rec in trace.steps:
        row = [str(rec.t)]
        row += [repr(float(v)) for v in rec.xbar]
        for ui in rec.u0:
            row += [repr(float(v)) for v in ui]
        row += [repr(float(rec.gc)), repr(float(rec.cc)), str(rec.iterations)]
        if include_timing:
            row.append(repr(float(rec.millis)))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def timing_summary(trace):
    """Worst-case and average solve time per strategy label, in seconds."""
    groups = {}
    for rec in trace.steps:
        groups.setdefault(rec.strategy, []).append(rec.millis / 1e3)
    return [
        {"method": label, "worst_case_s": max(vals), "average_s": sum(vals) / len(vals)}
        for label, vals in groups.items()
    ]


def timing_summary_csv(rows):
    lines = ["method,worst_case_s,average_s"]
    for row in rows:
        lines.append(
            "%s,%s,%s" % (row["method"], repr(float(row["worst_case_s"])), repr(float(row["average_s"])))
        )
    return "\n".join(lines) + "\n"


@dataclass
class ComparisonRow:
    method: str
    gc: float
    gc_loss: float
    cc: float
    cc_loss: float


def compare_strategies(problem, xbar0, iter_counts=(1, 2, 3, 4, 5), warmup_steps=3):
    """Single-instant comparison of the three strategies.

    Protocol: run the closed loop under the no-iteration strategy for
    `warmup_steps` instants, then solve every strategy once at the common
    resulting state.  The cooperative runs all start from the shifted
    no-iteration sequences of the last warm-up instant, so the row for p
    iterations is the p-th iterate of one deterministic run.  Losses are
    relative to the centralized row.
    """
    xbar = np.asarray(xbar0, dtype=float).reshape(-1).copy()
    warm = None
    noiter_cfg = StrategyConfig(kind="noiter")
    for _ in range(warmup_steps):
        seqs, _ = solve_strategy(problem, xbar, noiter_cfg, previous=warm)
        warm = shift_sequences(problem, xbar, seqs)
        xbar = problem.step(xbar, tuple(ui[:, 0] for ui in seqs.u))
    rows = []
    cen_seqs, _ = solve_centralized(problem, xbar, warm=warm)
    cen_gc, cen_cc = evaluate_cost(problem, xbar, cen_seqs)
    rows.append(ComparisonRow("centralized", cen_gc, 0.0, cen_cc, 0.0))
    if iter_counts:
        p_max = max(iter_counts)
        coop_cfg = StrategyConfig(kind="coop", iters=p_max)
        _, _, history = solve_cooperative(
            problem, xbar, coop_cfg, previous=warm, keep_history=True
        )
        for p in sorted(iter_counts, reverse=True):
            gc, cc = evaluate_cost(problem, xbar, history[p - 1])
            rows.append(
                ComparisonRow(
                    "coop_%d" % p,
                    gc,
                    (gc - cen_gc) / cen_gc,
                    cc,
                    (cc - cen_cc) / cen_cc if cen_cc else 0.0,
                )
            )
    ni_seqs, _ = solve_strategy(problem, xbar, noiter_cfg)
    ni_gc, ni_cc = evaluate_cost(problem, xbar, ni_seqs)
    rows.append(
        ComparisonRow(
            "noiter",
            ni_gc,
            (ni_gc - cen_gc) / cen_gc,
            ni_cc,
            (ni_cc - cen_cc) / cen_cc if cen_cc else 0.0,
        )
    )
    return rows, xbar


def comparison_to_csv(rows):
    lines = ["method,GC,GC_loss,CC,CC_loss"]
    for row in rows:
        lines.append(
            ",".join(
                [
                    row.method,
                    repr(float(row.gc)),
                    repr(float(row.gc_loss)),
                    repr(float(row.cc)),
                    repr(float(row.cc_loss)),
                ]
            )
        )
    return "\n".join(lines) + "\n"


@dataclass(eq=False)
class MonteCarloReport:
    draws: int
    seed: int
    strategy: str
    bounds: tuple
    loss_mean: float
    loss_worst: float
    excluded: int
    per_draw_losses: list

    def to_dict(self):
        return {
            "draws": self.draws,
            "seed": self.seed,
            "strategy": self.strategy,
            "bounds": list(self.bounds),
            "loss_mean": self.loss_mean,
            "loss_worst": self.loss_worst,
            "excluded": self.excluded,
            "per_draw_losses": self.per_draw_losses,
        }


def monte_carlo(problem, draws, bounds, strategy, seed):
    """Estimate the cost loss of a strategy against the centralized solve.

    Initial states are drawn uniformly from the box `bounds` in the
    original ordering with a PCG64 generator (all draws up front, so the
    sample is a pure function of the seed) and mapped through the
    permutation.  Draws where either solve fails are excluded and
    reported as null losses at their seed-stable index.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    X0 = lo + (hi - lo) * rng.random((int(draws), problem.n))
    losses = []
    excluded = 0
    for d in range(int(draws)):
        xbar = problem.pmap.to_regrouped(X0[d])
        try:
            seqs, _ = solve_strategy(problem, xbar, strategy)
            cen, _ = solve_centralized(problem, xbar)
        except SolverFailure:
            losses.append(None)
            excluded += 1
            continue
        gc_s, _ = evaluate_cost(problem, xbar, seqs)
        gc_c, _ = evaluate_cost(problem, xbar, cen)
        losses.append((gc_s - gc_c) / gc_c)
    kept = [v for v in losses if v is not None]
    return MonteCarloReport(
        draws=int(draws),
        seed=int(seed),
        strategy=strategy.label(),
        bounds=(lo, hi),
        loss_mean=float(np.mean(kept)) if kept else float("nan"),
        loss_worst=float(np.max(kept)) if kept else float("nan"),
        excluded=excluded,
        per_draw_losses=losses,
    )


def config_digest(config_dict):
    """Stable hash of a configuration for trace metadata."""
    text = json.dumps(config_dict, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]
