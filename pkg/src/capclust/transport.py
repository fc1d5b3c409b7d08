"""Height-vector solver for capacitated assignment over power diagrams.

Terminals carry masses summing to 1 and stations carry capacities summing
to 1. A station's *height* h_j enters the power distance
``|x - y_j|^alpha - h_j``; every terminal goes to its power-closest station.
The solver adjusts h until each station's load matches its capacity.

Heights are gauge-fixed with ``h[0] = 0``.
"""
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from . import _backend
from .errors import DisconnectedDiagramError, JacobiNotConverged, StepFailure
from .geom import build_power_diagram, site_order

METHODS = ("newton-direct", "newton-jacobi", "gradient-descent")
INITS = ("voronoi", "lifted")

# The edge-weight Hessian is the area Jacobian for supporting-plane heights
# (cell i maximises <x, y_i> + t_i). Power heights are h_i = |y_i|^2 + 2 t_i,
# so a plane-height step x is a power-height step 2x.
PLANE_TO_POWER = 2.0


@dataclass
class SolverConfig:
    method: str = "newton-direct"
    eps: float = 1.0
    dw: float = 1e-4
    max_outer: int = 1000
    inner_tol: float = 1e-8
    max_inner: int = 100_000
    alpha: float = 2.0
    init: str = "voronoi"
    min_step: float = 2.0 ** -20
    backend: Optional[str] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")
        if self.dw <= 0.0:
            raise ValueError("dw must be positive")
        if self.max_outer < 0 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")
        if self.inner_tol <= 0.0:
            raise ValueError("inner_tol must be positive")
        if self.alpha < 1.0:
            raise ValueError("alpha must be >= 1")


@dataclass
class Assignment:
    owner: np.ndarray
    loads: np.ndarray
    cost: float


class IterationRecord(NamedTuple):
    iteration: int
    mse: float
    cost: float
    step: float
    damped: int
    source: str


@dataclass
class SolveTrace:
    initial_mse: float
    initial_cost: float
    records: list = field(default_factory=list)
    status: str = "running"

    @property
    def iterations(self):
        return len(self.records)

    @property
    def converged(self):
        return self.status == "converged"


@dataclass
class SolveResult:
    heights: np.ndarray
    assignment: Assignment
    trace: SolveTrace

    def __iter__(self):
        return iter((self.heights, self.assignment, self.trace))


@dataclass
class Problem:
    """One static instance: everything the inner loop needs besides heights."""

    points: np.ndarray
    masses: np.ndarray
    sites: np.ndarray
    caps: np.ndarray
    domain: np.ndarray
    alpha: float = 2.0
    backend: Optional[str] = None
    order: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.masses = np.asarray(self.masses, dtype=np.float64).ravel()
        self.sites = np.asarray(self.sites, dtype=np.float64).reshape(-1, 2)
        self.caps = np.asarray(self.caps, dtype=np.float64).ravel()
        self.domain = np.asarray(self.domain, dtype=np.float64)
        if len(self.points) == 0 or len(self.sites) == 0:
            raise ValueError("need at least one terminal and one station")
        if len(self.masses) != len(self.points):
            raise ValueError("one mass per terminal required")
        if len(self.caps) != len(self.sites):
            raise ValueError("one capacity per station required")
        if np.any(self.masses <= 0) or np.any(self.caps <= 0):
            raise ValueError("masses and capacities must be positive")
        if abs(self.masses.sum() - 1.0) > 1e-12 or abs(self.caps.sum() - 1.0) > 1e-12:
            raise ValueError("masses and capacities must each sum to 1")
        if self.order is None:
            self.order = site_order(self.sites)

    @property
    def k(self):
        return len(self.sites)

    def assign(self, heights):
        return assign(self.points, self.masses, self.sites, heights, self.alpha, self.backend)

    def diagram(self, heights):
        return build_power_diagram(self.sites, heights, self.domain, self.order, self.backend)


def power_distance(x, site, height, alpha=2.0):
    d = math.dist(tuple(x), tuple(site))
    if alpha == 2.0:
        return d * d - height
    return d ** alpha - height


def assign(points, masses, sites, heights, alpha=2.0, backend=None):
    """Send each terminal to its power-closest station (lowest index on ties)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    masses = np.asarray(masses, dtype=np.float64).ravel()
    sites = np.asarray(sites, dtype=np.float64).reshape(-1, 2)
    owner, _ = _backend.get_kernels(backend).argmin_power(points, sites, heights, float(alpha))
    loads = np.bincount(owner, weights=masses, minlength=len(sites))
    cost = transport_cost(owner, points, masses, sites, alpha)
    return Assignment(owner, loads, cost)


def transport_cost(owner, points, masses, sites, alpha=2.0):
    """Sum of mass times distance**alpha to the owning station."""
    owner = np.asarray(owner.owner if isinstance(owner, Assignment) else owner)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    sites = np.asarray(sites, dtype=np.float64).reshape(-1, 2)
    d = points - sites[owner]
    d2 = np.einsum("ij,ij->i", d, d)
    per = d2 if alpha == 2.0 else np.sqrt(d2) ** alpha
    return float(np.dot(np.asarray(masses, dtype=np.float64), per))


def residual(assignment, caps):
    """Capacity residual caps - loads: the gradient of the convex energy."""
    loads = assignment.loads if isinstance(assignment, Assignment) else np.asarray(assignment)
    caps = np.asarray(caps, dtype=np.float64)
    if loads.shape != caps.shape:
        raise ValueError(f"{len(loads)} loads but {len(caps)} capacities")
    return caps - loads


def mse(g):
    g = np.asarray(g, dtype=np.float64)
    return float(np.mean(g * g))


def hessian(diagram):
    """Weighted graph Laplacian of the diagram adjacency (sparse, k x k)."""
    k = diagram.k
    if not diagram.edges:
        return sp.csr_matrix((k, k))
    i = np.array([e.i for e in diagram.edges])
    j = np.array([e.j for e in diagram.edges])
    w = np.array([e.w for e in diagram.edges])
    off = sp.coo_matrix((np.concatenate([-w, -w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                        shape=(k, k)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()


def _check_connected(H):
    k = H.shape[0]
    if k == 1:
        return
    adj = H.copy().tocsr()
    adj.setdiag(0)
    adj.eliminate_zeros()
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise DisconnectedDiagramError(f"diagram adjacency has {ncomp} components")


def newton_direction_direct(H, g):
    """Solve ``H x = g`` with ``x[0] = 0`` (row and column 0 removed)."""
    H = sp.csr_matrix(H)
    g = np.asarray(g, dtype=np.float64)
    k = len(g)
    x = np.zeros(k)
    if k == 1 or not np.any(g):
        return x
    _check_connected(H)
    R = H[1:, 1:].tocsc()
    rhs = g[1:]
    with np.errstate(all="ignore"):
        sol = spsolve(R, rhs) if k > 2 else rhs / R.toarray().ravel()
    sol = np.atleast_1d(sol)
    err = np.max(np.abs(R @ sol - rhs)) if np.all(np.isfinite(sol)) else np.inf
    if not err <= 1e-10 * np.max(np.abs(g)):
        raise DisconnectedDiagramError("gauge-reduced Hessian is singular")
    x[1:] = sol
    return x


def jacobi_sweep(H, g, x):
    """One synchronous sweep: ``x_i <- (sum_j w_ij x_j + g_i) / sum_j w_ij``, then ``x_0 <- 0``.

    Station i reads only its own residual and the previous values of its
    diagram neighbours (the nonzeros of row i of ``H``).
    """
    H = sp.csr_matrix(H)
    d = H.diagonal()
    return _sweep((H - sp.diags(d)).tocsr(), np.where(d > 0, d, 1.0), np.asarray(g, dtype=np.float64), x)


def _sweep(off, d, g, x):
    out = (g - off @ x) / d
    out[0] = 0.0
    return out


def newton_direction_jacobi(H, g, inner_tol=1e-8, max_inner=100_000, x0=None):
    """Solve ``H x = g`` by repeated :func:`jacobi_sweep`, station 0 anchored at 0.

    Stops once the a-posteriori error bound ``rho / (1 - rho) * |dx|`` (rho
    estimated from successive increments, measured in the diagonal-weighted
    norm) drops below ``inner_tol``. Raises JacobiNotConverged carrying the
    last iterate after ``max_inner`` sweeps.
    """
    H = sp.csr_matrix(H)
    g = np.asarray(g, dtype=np.float64)
    k = len(g)
    if k == 1:
        return np.zeros(1)
    x = np.zeros(k) if x0 is None else np.array(x0, dtype=np.float64) - x0[0]
    _check_connected(H)
    d = H.diagonal()
    if np.any(d[1:] <= 0):
        raise DisconnectedDiagramError("station with no neighbours")
    off = (H - sp.diags(d)).tocsr()
    d_safe = np.where(d > 0, d, 1.0)
    sqrt_d = np.sqrt(d)
    inv_sqrt_dmin = 1.0 / math.sqrt(d[1:].min())
    prev_step = None
    for _ in range(max_inner):
        x_new = _sweep(off, d_safe, g, x)
        step_norm = float(np.linalg.norm(sqrt_d * (x_new - x)))
        x = x_new
        if step_norm == 0.0:
            return x
        if prev_step is not None and prev_step > 0.0:
            rho = step_norm / prev_step
            if rho < 1.0 and rho / (1.0 - rho) * step_norm * inv_sqrt_dmin <= inner_tol:
                return x
        prev_step = step_norm
    res = float(np.max(np.abs((H @ x - g)[1:])))
    raise JacobiNotConverged(x, res, max_inner)


def gauge_fix(h):
    h = np.asarray(h, dtype=np.float64)
    return h - h[0]


def gradient_step(h, g, eps):
    """``h + eps * g``, re-gauged so ``h[0] = 0``."""
    return gauge_fix(np.asarray(h, dtype=np.float64) + eps * np.asarray(g, dtype=np.float64))


def damped_update(h, direction, eps, problem, min_step=2.0 ** -20):
    """Largest step ``s`` in 1, 1/2, 1/4, ... keeping every cell nonempty and lowering the residual.

    Returns ``(new_heights, s)``. The residual MSE must strictly drop: with
    piecewise-constant loads, accepting equal values lets the iteration swap
    the same terminal back and forth forever. Raises StepFailure when no
    ``s >= min_step`` qualifies.
    """
    h = np.asarray(h, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if not np.any(direction):
        return h.copy(), 1.0
    base = mse(residual(problem.assign(h), problem.caps))
    s = 1.0
    while s >= min_step:
        cand = gauge_fix(h + s * eps * direction)
        diagram = problem.diagram(cand)
        if all(c is not None for c in diagram.cells):
            if mse(residual(problem.assign(cand), problem.caps)) < base:
                return cand, s
        s *= 0.5
    raise StepFailure(f"no acceptable step down to {min_step:g}")


def _min_slack_matrix(problem, h, owner, block=1 << 18):
    # M[v, u]: smallest raise of h_u - h_v that brings some terminal of v onto u's boundary
    k = problem.k
    M = np.full((k, k), np.inf)
    scale = 1.0
    rows = max(1, block // k)
    for start in range(0, len(problem.points), rows):
        p = problem.points[start:start + rows]
        d = p[:, None, :] - problem.sites[None, :, :]
        c = np.einsum("ijk,ijk->ij", d, d)
        if problem.alpha != 2.0:
            c = np.sqrt(c) ** problem.alpha
        pw = c - h[None, :]
        scale = max(scale, float(np.max(np.abs(pw))))
        o = owner[start:start + rows]
        slack = pw - pw[np.arange(len(o)), o][:, None]
        for v in np.unique(o):
            M[v] = np.minimum(M[v], slack[o == v].min(axis=0))
    np.fill_diagonal(M, np.inf)
    return M, scale


def transfer_step(h, problem, tol=1e-12):
    """Shift one terminal's load from an overloaded to an underloaded station.

    Grows a set of stations around an underloaded station ``b``, raising
    their heights together (Dijkstra over stations, edge cost = smallest
    terminal slack) until a terminal of an overloaded station ``a`` reaches a
    cell boundary. Every other terminal on the chain from ``a`` to ``b`` is
    then on a boundary too; tiny offsets tip each one across, so loads only
    change at the two ends. Returns new heights, or None if no chain lowers
    the residual MSE.
    """
    h = np.asarray(h, dtype=np.float64)
    k = problem.k
    current = problem.assign(h)
    g = residual(current, problem.caps)
    base = mse(g)
    M, scale = _min_slack_matrix(problem, h, current.owner)
    for b in np.argsort(-g, kind="stable"):
        if g[b] <= tol:
            break
        dist = np.full(k, np.inf)
        dist[b] = 0.0
        parent = np.full(k, -1)
        done = np.zeros(k, dtype=bool)
        target = -1
        while True:
            u = int(np.argmin(np.where(done, np.inf, dist)))
            if done[u] or not np.isfinite(dist[u]):
                break
            done[u] = True
            if g[u] < -tol:
                target = u
                break
            nd = dist[u] + M[:, u]
            better = ~done & (nd < dist)
            dist[better] = nd[better]
            parent[better] = u
        if target < 0:
            continue
        chain = {target}
        u = target
        while u != b:
            u = parent[u]
            chain.add(u)
        reached = np.flatnonzero(done)
        lift = np.zeros(k)
        lift[reached] = dist[target] - dist[reached]
        # parents outrank children on the chain, children outrank parents elsewhere
        tip = np.zeros(k)
        for u in sorted(reached, key=lambda x: dist[x]):
            if u != b:
                tip[u] = tip[parent[u]] + (-1.0 if u in chain else 1.0)
        delta = 1e-9 * scale
        for _ in range(8):
            cand = gauge_fix(h + lift + delta * tip)
            if mse(residual(problem.assign(cand), problem.caps)) < base:
                return cand
            delta *= 0.1
    return None


def initial_heights(problem, init="voronoi"):
    if init == "voronoi":
        return np.zeros(problem.k)
    # supporting planes <x, y_j> through the origin, i.e. power heights |y_j|^2
    h = np.einsum("ij,ij->i", problem.sites, problem.sites)
    return gauge_fix(h)


def _newton_direction(problem, h, config):
    diagram = problem.diagram(h)
    if any(c is None for c in diagram.cells):
        raise DisconnectedDiagramError("empty power cell")
    H = hessian(diagram) / diagram.domain_area
    g = residual(problem.assign(h), problem.caps)
    if config.method == "newton-jacobi":
        try:
            x = newton_direction_jacobi(H, g, config.inner_tol, config.max_inner)
            source = "jacobi"
        except JacobiNotConverged as exc:
            x = exc.x
            source = "jacobi-partial"
    else:
        x = newton_direction_direct(H, g)
        source = "direct"
    return PLANE_TO_POWER * x, source


def solve(points, masses, sites, caps, domain, config=None, h0=None, problem=None):
    """Find heights whose power diagram loads every station to its capacity.

    Stops when the mean squared capacity residual is at most ``config.dw``;
    otherwise returns the best iterate with status "max-iterations".
    ``h0`` warm-starts the iteration.
    """
    config = config or SolverConfig()
    if problem is None:
        problem = Problem(points, masses, sites, caps, domain, config.alpha, config.backend)
    if h0 is None:
        h = initial_heights(problem, config.init)
    else:
        h = gauge_fix(np.array(h0, dtype=np.float64))
    assignment = problem.assign(h)
    g = residual(assignment, problem.caps)
    err = mse(g)
    trace = SolveTrace(err, assignment.cost)
    best = (err, h, assignment)
    damped = 0
    for it in range(1, config.max_outer + 1):
        if err <= config.dw:
            break
        if config.method == "gradient-descent":
            h = gradient_step(h, g, config.eps)
            step, source = config.eps, "gradient"
        else:
            try:
                direction, source = _newton_direction(problem, h, config)
            except DisconnectedDiagramError:
                # pull back toward the Voronoi diagram, where every cell is nonempty
                damped += 1
                h = gauge_fix(0.5 * h)
                step, source = 0.0, "damp"
            else:
                try:
                    h, step = damped_update(h, direction, config.eps, problem, config.min_step)
                except StepFailure:
                    moved = transfer_step(h, problem)
                    if moved is not None:
                        h, step, source = moved, 0.0, "transfer"
                    else:
                        h = gradient_step(h, g, config.eps)
                        step, source = config.eps, "gradient-fallback"
        assignment = problem.assign(h)
        g = residual(assignment, problem.caps)
        err = mse(g)
        trace.records.append(IterationRecord(it, err, assignment.cost, step, damped, source))
        if err < best[0]:
            best = (err, h, assignment)
    if err <= config.dw:
        trace.status = "converged"
        return SolveResult(h, assignment, trace)
    trace.status = "max-iterations"
    return SolveResult(best[1], best[2], trace)
