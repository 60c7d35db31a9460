"""Global detection solvers: branch-and-bound with embedded cut generation, and
the outer incremental loop that alternates exact restricted MILP solves with
cut separation. Both certify a global minimizer of the one-bit ML objective.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import lp as lpmod
from .baselines import least_squares
from .loss import Cut, LossContext, make_cut
from .model import RealInstance, quantize_one_bit

# passes of optional fractional-point cuts per node visit before branching
MAX_FRACTIONAL_PASSES = 20
# objective gap accepted by the incremental loop's optimality certificate
INCREMENTAL_GAP_TOL = 1e-7

NODE_SELECTION_RULES = ("best-bound", "depth-first")
BRANCH_RULES = ("most-fractional", "lowest-index")
CUT_MODES = ("integral-only", "also-fractional")
POOL_SCOPES = ("global", "per-node")


@dataclass(frozen=True)
class SolverOptions:
    node_selection: str = "best-bound"
    branch_rule: str = "most-fractional"
    eps_int: float = 1e-6
    eps_cut: float = 1e-6
    eps_prune: float = 1e-9
    node_limit: int = 1_000_000
    time_limit: float | None = None
    cut_mode: str = "integral-only"
    pool_scope: str = "global"

    def __post_init__(self):
        if self.node_selection not in NODE_SELECTION_RULES:
            raise ValueError(f"unknown node_selection {self.node_selection!r}")
        if self.branch_rule not in BRANCH_RULES:
            raise ValueError(f"unknown branch_rule {self.branch_rule!r}")
        if self.cut_mode not in CUT_MODES:
            raise ValueError(f"unknown cut_mode {self.cut_mode!r}")
        if self.pool_scope not in POOL_SCOPES:
            raise ValueError(f"unknown pool_scope {self.pool_scope!r}")
        for name in ("eps_int", "eps_cut", "eps_prune"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.node_limit < 1:
            raise ValueError("node_limit must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


class CutPool:
    """The active tangent set S, deduplicated over (row, anchor) pairs.

    Rows are stored densely in append-only buffers so node LPs can reference
    them as read-only slices without copying.
    """

    def __init__(self, n_rows: int, n_x: int):
        self.n_rows = n_rows
        self.n_x = n_x
        self.cuts: list[Cut] = []
        self.index: dict[tuple[int, bytes], int] = {}
        cap = 64
        self._w = np.empty(cap, dtype=int)
        self._coef = np.empty((cap, n_x))
        self._off = np.empty(cap)

    def __len__(self) -> int:
        return len(self.cuts)

    @property
    def capacity(self) -> int:
        """|C| = N * 2^K, the full tangent family size."""
        return self.n_rows * (2**self.n_x)

    def ratio(self) -> float:
        return len(self.cuts) / self.capacity

    def key(self, i: int, point: np.ndarray) -> tuple[int, bytes]:
        return (i, np.ascontiguousarray(point, dtype=float).tobytes())

    def contains(self, i: int, point: np.ndarray) -> bool:
        return self.key(i, point) in self.index

    def add(self, cut: Cut) -> int | None:
        """Append a cut unless its (row, anchor) pair is already present."""
        k = self.key(cut.row, cut.point)
        if k in self.index:
            return None
        cid = len(self.cuts)
        if cid == len(self._off):
            self._grow()
        self._w[cid] = cut.row
        self._coef[cid] = cut.grad
        self._off[cid] = cut.offset
        self.cuts.append(cut)
        self.index[k] = cid
        return cid

    def _grow(self):
        cap = 2 * len(self._off)
        for name in ("_w", "_coef", "_off"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], dtype=old.dtype)
            new[: len(old)] = old
            setattr(self, name, new)

    def lp_rows(self, ids=None):
        """(row_w, coef, off) arrays for the LP; ``ids`` selects a per-node subset."""
        if ids is None:
            n = len(self.cuts)
            picked = (self._w[:n], self._coef[:n], self._off[:n])
        else:
            ids = np.asarray(ids, dtype=int)
            picked = (self._w[ids], self._coef[ids], self._off[ids])
        views = []
        for a in picked:
            v = a.view()
            v.setflags(write=False)
            views.append(v)
        return tuple(views)


@dataclass
class Node:
    """One branch-and-bound subproblem: fixed signs, inherited bound, warm state."""

    fixed_pos: tuple[int, ...]
    fixed_neg: tuple[int, ...]
    bound: float
    warm: lpmod.BasisToken | None
    depth: int
    cut_ids: tuple[int, ...] | None = None  # only used in per-node pool scope

    def __post_init__(self):
        if set(self.fixed_pos) & set(self.fixed_neg):
            raise ValueError("fixed_pos and fixed_neg must be disjoint")


@dataclass
class Incumbent:
    x_best: np.ndarray
    w_best: np.ndarray
    upper: float


class NodePool:
    """Open-node container honoring the configured selection rule."""

    def __init__(self, rule: str):
        if rule not in NODE_SELECTION_RULES:
            raise ValueError(f"unknown node selection rule {rule!r}")
        self.rule = rule
        self._heap: list = []
        self._stack: list[Node] = []
        self._counter = 0

    def push(self, node: Node):
        if self.rule == "depth-first":
            self._stack.append(node)
        else:
            heapq.heappush(self._heap, ((node.bound, -node.depth, self._counter), node))
            self._counter += 1

    def pop(self) -> Node:
        if self.rule == "depth-first":
            return self._stack.pop()
        return heapq.heappop(self._heap)[1]

    def __len__(self) -> int:
        return len(self._stack) + len(self._heap)


def select_node(nodes, rule: str) -> Node:
    """Selection contract on a plain sequence: best-bound picks the minimal bound
    (ties: deeper, then earlier insertion); depth-first picks the most recent."""
    nodes = list(nodes)
    if not nodes:
        raise ValueError("empty node pool")
    if rule == "depth-first":
        return nodes[-1]
    if rule != "best-bound":
        raise ValueError(f"unknown node selection rule {rule!r}")
    pos = min(range(len(nodes)), key=lambda t: (nodes[t].bound, -nodes[t].depth, t))
    return nodes[pos]


def select_branch_var(x_lp: np.ndarray, rule: str, eps_int: float = 1e-6) -> int:
    """Index to branch on among the fractional coordinates of the LP solution."""
    x_lp = np.asarray(x_lp, dtype=float)
    frac = np.abs(x_lp) < 1.0 - eps_int
    if not frac.any():
        raise ValueError("select_branch_var called with an integral point")
    if rule == "lowest-index":
        return int(np.flatnonzero(frac)[0])
    if rule != "most-fractional":
        raise ValueError(f"unknown branch rule {rule!r}")
    scores = np.where(frac, np.abs(x_lp), np.inf)
    return int(np.argmin(scores))


def violated_rows(ctx: LossContext, x: np.ndarray, w: np.ndarray, eps_cut: float) -> np.ndarray:
    """Indices i with w_i < g_i(x) - eps_cut."""
    return np.flatnonzero(np.asarray(w) < ctx.g_all(np.asarray(x, dtype=float)) - eps_cut)


def initial_cuts(instance: RealInstance, ctx: LossContext | None = None) -> CutPool:
    """Seed pool: one tangent per observation, all anchored at the zero-forcing point."""
    ctx = ctx or LossContext.from_instance(instance)
    x_zf = quantize_one_bit(least_squares(instance.H, instance.r))
    pool = CutPool(ctx.n, ctx.k)
    for i in range(ctx.n):
        pool.add(make_cut(ctx, i, x_zf))
    return pool


@dataclass
class SolveReport:
    """Outcome of a global solve, JSON-serializable, counters included."""

    method: str
    status: str  # optimal | node-limit | time-limit
    x_star: np.ndarray | None
    objective: float | None
    nodes_processed: int
    lp_solves: int
    cuts_added: int
    pool_size: int
    pool_capacity: int
    ratio_s_over_c: float
    wall_time: float
    options: dict
    incumbent_history: list = field(default_factory=list)
    bound_history: list = field(default_factory=list)
    outer_lower_bounds: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "status": self.status,
            "x_star": None if self.x_star is None else [int(v) for v in self.x_star],
            "objective": _json_num(self.objective),
            "nodes_processed": self.nodes_processed,
            "lp_solves": self.lp_solves,
            "cuts_added": self.cuts_added,
            "pool_size": self.pool_size,
            "pool_capacity": self.pool_capacity,
            "ratio_s_over_c": self.ratio_s_over_c,
            "wall_time": self.wall_time,
            "options": dict(self.options),
            "incumbent_history": [[n, _json_num(v)] for n, v in self.incumbent_history],
            "bound_history": [_json_num(v) for v in self.bound_history],
            "outer_lower_bounds": [_json_num(v) for v in self.outer_lower_bounds],
        }
        return d

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _json_num(v):
    if v is None or not math.isfinite(v):
        return None
    return float(v)


class _TreeSearch:
    """One branch-and-bound run over a (possibly growing) cut pool.

    With ``generate_cuts`` the search is the full global algorithm: integral
    LP optima are checked against the true per-row losses and violated
    tangents are added in place (re-solving the tightened LP). Without it the
    search solves the restricted MILP on the pool exactly, which is what the
    outer incremental loop needs.
    """

    def __init__(self, ctx, pool, opts, generate_cuts, deadline=None, node_budget=None):
        self.ctx = ctx
        self.pool = pool
        self.opts = opts
        self.generate_cuts = generate_cuts
        self.deadline = deadline
        self.node_budget = node_budget if node_budget is not None else opts.node_limit
        self.incumbent: Incumbent | None = None
        self.nodes_processed = 0
        self.lp_solves = 0
        self.incumbent_history: list = []
        self.bound_history: list = []
        self.per_node = opts.pool_scope == "per-node"

    def run(self) -> str:
        opts = self.opts
        upper = np.inf
        open_nodes = NodePool(opts.node_selection)
        root_ids = tuple(range(len(self.pool))) if self.per_node else None
        open_nodes.push(Node((), (), -np.inf, None, 0, cut_ids=root_ids))

        while len(open_nodes):
            if self.nodes_processed >= self.node_budget:
                return "node-limit"
            if self.deadline is not None and time.monotonic() > self.deadline:
                return "time-limit"
            node = open_nodes.pop()
            if node.bound >= upper - opts.eps_prune:
                continue
            self.nodes_processed += 1
            self.bound_history.append(node.bound)

            cut_ids = list(node.cut_ids) if self.per_node else None
            problem = self._build_problem(node, cut_ids)
            warm = node.warm
            frac_passes = 0
            while True:
                sol = self._solve(problem, warm)
                f_lp = sol.objective
                if f_lp >= upper - opts.eps_prune:
                    break  # case (1): bound prune
                x_lp = sol.x
                if np.all(np.abs(x_lp) >= 1.0 - opts.eps_int):
                    # a basic x can land within eps_int of +-1 without sitting
                    # exactly on the bound; tangents anchored at the rounded
                    # point are then not exactly enforced at x_lp, so resolve
                    # the coordinate by branching instead of rounding
                    not_exact = np.flatnonzero(np.abs(x_lp) != 1.0)
                    if not_exact.size:
                        j = int(not_exact[0])
                        self._branch(open_nodes, node, j, f_lp, sol.basis, cut_ids)
                        break
                    x_int = x_lp.copy()
                    if not self.generate_cuts:
                        # restricted MILP: an integral point is already optimal
                        # for this subtree at the pool's objective
                        if f_lp < upper:
                            upper = f_lp
                            self.incumbent = Incumbent(x_int, sol.w.copy(), f_lp)
                            self.incumbent_history.append((self.nodes_processed, f_lp))
                        break
                    g = self.ctx.g_all(x_int)
                    viol = np.flatnonzero(sol.w < g - opts.eps_cut)
                    if viol.size == 0:
                        # case (2.1): feasible for the true losses; store the
                        # exact objective so pruning never drifts by eps_cut
                        f_true = float(g.sum())
                        if f_true < upper:
                            upper = f_true
                            self.incumbent = Incumbent(x_int, g.copy(), f_true)
                            self.incumbent_history.append((self.nodes_processed, f_true))
                        break
                    new_rows = self._add_cuts(viol, x_int, cut_ids)
                    if not new_rows:
                        # unreachable in exact arithmetic: pooled tangents force
                        # w_i >= g_i at their own anchor; keep the honest value
                        f_true = float(g.sum())
                        if f_true < upper:
                            upper = f_true
                            self.incumbent = Incumbent(x_int, g.copy(), f_true)
                            self.incumbent_history.append((self.nodes_processed, f_true))
                        break
                    problem = lpmod.add_rows(problem, new_rows)  # case (2.2)
                    warm = sol.basis
                    continue
                if (
                    self.generate_cuts
                    and opts.cut_mode == "also-fractional"
                    and frac_passes < MAX_FRACTIONAL_PASSES
                ):
                    viol = violated_rows(self.ctx, x_lp, sol.w, opts.eps_cut)
                    new_rows = self._add_cuts(viol, x_lp, cut_ids)
                    if new_rows:
                        problem = lpmod.add_rows(problem, new_rows)
                        warm = sol.basis
                        frac_passes += 1
                        continue
                # case (3): branch
                j = select_branch_var(x_lp, opts.branch_rule, opts.eps_int)
                self._branch(open_nodes, node, j, f_lp, sol.basis, cut_ids)
                break
        return "optimal"

    def _branch(self, open_nodes, node, j, bound, warm, cut_ids):
        child_ids = tuple(cut_ids) if self.per_node else None
        open_nodes.push(Node(node.fixed_pos + (j,), node.fixed_neg, bound, warm, node.depth + 1, child_ids))
        open_nodes.push(Node(node.fixed_pos, node.fixed_neg + (j,), bound, warm, node.depth + 1, child_ids))

    def _build_problem(self, node: Node, cut_ids) -> lpmod.LpProblem:
        xl = np.full(self.ctx.k, -1.0)
        xu = np.full(self.ctx.k, 1.0)
        for j in node.fixed_pos:
            xl[j] = 1.0
        for j in node.fixed_neg:
            xu[j] = -1.0
        row_w, coef, off = self.pool.lp_rows(cut_ids)
        return lpmod.LpProblem(
            n_x=self.ctx.k,
            n_w=self.ctx.n,
            row_w=row_w,
            row_coef=coef,
            row_off=off,
            x_lower=xl,
            x_upper=xu,
            w_lower=np.zeros(self.ctx.n),
        )

    def _solve(self, problem, warm):
        sol = lpmod.solve_lp(problem, warm)
        self.lp_solves += 1
        if sol.status == "iteration-limit" and warm is not None:
            sol = lpmod.solve_lp(problem, None)  # retry cold
            self.lp_solves += 1
        if sol.status != "optimal":
            raise RuntimeError(f"node LP failed with status {sol.status}")
        return sol

    def _add_cuts(self, rows, point, cut_ids) -> list[Cut]:
        new = []
        for i in rows:
            cut = make_cut(self.ctx, int(i), point)
            cid = self.pool.add(cut)
            if cid is not None:
                new.append(cut)
                if cut_ids is not None:
                    cut_ids.append(cid)
            elif cut_ids is not None:
                existing = self.pool.index[self.pool.key(int(i), np.asarray(point, dtype=float))]
                if existing not in cut_ids:
                    cut_ids.append(existing)
                    new.append(self.pool.cuts[existing])
        return new


def solve_gobmd(instance: RealInstance, opts: SolverOptions | None = None) -> SolveReport:
    """Branch-and-bound with embedded cut generation; certifies a global minimum."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    ctx = LossContext.from_instance(instance)
    pool = initial_cuts(instance, ctx)
    n_initial = len(pool)
    deadline = None if opts.time_limit is None else time.monotonic() + opts.time_limit
    search = _TreeSearch(ctx, pool, opts, generate_cuts=True, deadline=deadline)
    status = search.run()
    wall = time.perf_counter() - t0
    inc = search.incumbent
    return SolveReport(
        method="gobmd",
        status=status,
        x_star=None if inc is None else inc.x_best,
        objective=None if inc is None else inc.upper,
        nodes_processed=search.nodes_processed,
        lp_solves=search.lp_solves,
        cuts_added=len(pool) - n_initial,
        pool_size=len(pool),
        pool_capacity=pool.capacity,
        ratio_s_over_c=pool.ratio(),
        wall_time=wall,
        options=opts.to_dict(),
        incumbent_history=search.incumbent_history,
        bound_history=search.bound_history,
    )


def solve_incremental(instance: RealInstance, opts: SolverOptions | None = None) -> SolveReport:
    """Outer loop: exact restricted MILP on the pool, then add violated tangents.

    Each restricted optimum is a global lower bound; the loop stops once the
    returned point's true objective matches that bound to INCREMENTAL_GAP_TOL,
    which certifies global optimality without trusting eps_cut-sized slack.
    """
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    ctx = LossContext.from_instance(instance)
    pool = initial_cuts(instance, ctx)
    n_initial = len(pool)
    deadline = None if opts.time_limit is None else time.monotonic() + opts.time_limit

    nodes = lps = 0
    lower_bounds: list[float] = []
    best_x = None
    best_f = np.inf
    status = "optimal"
    while True:
        search = _TreeSearch(
            ctx,
            pool,
            opts,
            generate_cuts=False,
            deadline=deadline,
            node_budget=opts.node_limit - nodes,
        )
        inner_status = search.run()
        nodes += search.nodes_processed
        lps += search.lp_solves
        if inner_status != "optimal" or search.incumbent is None:
            status = inner_status if inner_status != "optimal" else "node-limit"
            break
        x_bar = search.incumbent.x_best
        w_bar = search.incumbent.w_best
        milp_obj = search.incumbent.upper
        lower_bounds.append(milp_obj)
        g = ctx.g_all(x_bar)
        f_true = float(g.sum())
        if f_true < best_f:
            best_f, best_x = f_true, x_bar
        viol = np.flatnonzero(w_bar < g - opts.eps_cut)
        if viol.size == 0 and f_true - milp_obj <= INCREMENTAL_GAP_TOL:
            break
        if viol.size == 0:
            # certificate gap too wide: tighten with any measurable violation
            viol = np.flatnonzero(w_bar < g - 1e-12)
        added = 0
        for i in viol:
            if pool.add(make_cut(ctx, int(i), x_bar)) is not None:
                added += 1
        if added == 0:
            break  # pool already tight at x_bar; gap is LP-tolerance noise
    wall = time.perf_counter() - t0
    return SolveReport(
        method="incremental",
        status=status,
        x_star=best_x,
        objective=None if best_x is None else best_f,
        nodes_processed=nodes,
        lp_solves=lps,
        cuts_added=len(pool) - n_initial,
        pool_size=len(pool),
        pool_capacity=pool.capacity,
        ratio_s_over_c=pool.ratio(),
        wall_time=wall,
        options=opts.to_dict(),
        outer_lower_bounds=lower_bounds,
    )
