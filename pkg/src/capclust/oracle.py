"""Exact solvers for the discrete capacitated assignment problem.

These are slow on purpose: they give ground truth for the height solver.
``exact_assignment`` runs min-cost flow on the transportation graph
(terminals -> stations -> sink) and ``brute_force_enumerate`` tries every
capacity-feasible assignment of unit terminals.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from .errors import InfeasibleError, InstanceTooLarge, NonIntegralError, OracleError

DEFAULT_SCALE = 10 ** 6
ENUMERATION_LIMIT = 10 ** 7


@dataclass
class OracleResult:
    plan: np.ndarray            # (n, k) integer flow in scaled units
    owner: Optional[np.ndarray]  # per-terminal station when the plan is integral, else None
    cost: float                 # sum of mass * distance**alpha, unscaled
    heights: np.ndarray         # station potentials; a power diagram with these heights realizes the plan
    scale: int


def cost_matrix(points, sites, alpha=2.0):
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    s = np.asarray(sites, dtype=np.float64).reshape(-1, 2)
    d = p[:, None, :] - s[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", d, d)
    return d2 if alpha == 2.0 else np.sqrt(d2) ** alpha


def integerize(values, scale, what, total):
    """Round ``values * scale`` to integers, rejecting any rounding error above 1e-9 of ``total``."""
    v = np.asarray(values, dtype=np.float64) * scale
    r = np.rint(v)
    bad = np.flatnonzero(np.abs(v - r) > 1e-9 * total)
    if len(bad):
        i = int(bad[0])
        raise NonIntegralError(what, i, float(values[i]))
    return r.astype(np.int64)


def exact_assignment(points, masses, sites, caps, alpha=2.0, scale=DEFAULT_SCALE, backend=None):
    """Minimum-cost transport plan from terminals to capacitated stations.

    Masses and capacities share one unit (for example masses 1 and integer
    capacities summing to n, or fractions summing to 1); both are multiplied
    by ``scale`` and must then be integers. The plan is found by successive
    shortest paths, so it is a global optimum; with unit masses it is an
    assignment and ``owner`` is filled in.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    sites = np.asarray(sites, dtype=np.float64).reshape(-1, 2)
    masses = np.asarray(masses, dtype=np.float64).ravel()
    caps = np.asarray(caps, dtype=np.float64).ravel()
    if len(points) == 0 or len(sites) == 0:
        raise OracleError("need at least one terminal and one station")
    if len(masses) != len(points) or len(caps) != len(sites):
        raise OracleError("one mass per terminal and one capacity per station required")
    if np.any(masses <= 0) or np.any(caps <= 0):
        raise OracleError("masses and capacities must be positive")
    if not isinstance(scale, (int, np.integer)) or scale < 1:
        raise OracleError("scale must be a positive integer")
    total = float(masses.sum()) * scale
    supply = integerize(masses, scale, "mass", total)
    demand = integerize(caps, scale, "cap", total)
    if supply.sum() != demand.sum():
        raise InfeasibleError(f"total supply {supply.sum()} != total demand {demand.sum()} (scaled by {scale})")
    C = cost_matrix(points, sites, alpha)
    flow, pot = _backend.get_kernels(backend).transport_ssp(supply, demand, C)
    heights = pot - pot[0]
    integral = np.all((flow == 0) | (flow == supply[:, None]), axis=1)
    if np.all(integral):
        owner = np.argmax(flow, axis=1)
        cost = float(np.dot(masses, C[np.arange(len(points)), owner]))
    else:
        owner = None
        cost = float(np.sum(flow * C)) / scale
    return OracleResult(flow, owner, cost, heights, int(scale))


def count_assignments(n, caps):
    """Number of ways to split n labelled terminals into groups of sizes ``caps``."""
    out = math.factorial(n)
    for c in caps:
        out //= math.factorial(int(c))
    return out


def brute_force_enumerate(points, sites, caps, alpha=2.0, limit=ENUMERATION_LIMIT):
    """Cheapest assignment of unit-mass terminals by trying all of them.

    ``caps`` are integer counts summing to the number of terminals. Returns
    ``(owner, cost)`` with cost in the same units (each terminal weighs 1).
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    sites = np.asarray(sites, dtype=np.float64).reshape(-1, 2)
    n, k = len(points), len(sites)
    caps = np.asarray(caps, dtype=np.float64).ravel()
    if len(caps) != k:
        raise OracleError("one capacity per station required")
    caps = integerize(caps, 1, "cap", 1.0)
    if np.any(caps < 0):
        raise OracleError("capacities must be nonnegative")
    if caps.sum() != n:
        raise InfeasibleError(f"capacities sum to {caps.sum()}, not {n}")
    count = count_assignments(n, caps)
    if count > limit:
        raise InstanceTooLarge(f"{count} assignments exceed the limit of {limit}")
    C = cost_matrix(points, sites, alpha).tolist()
    best_cost = math.inf
    best = None
    owner = [0] * n
    left = caps.tolist()

    def walk(i, acc):
        nonlocal best_cost, best
        if acc >= best_cost:
            return
        if i == n:
            best_cost, best = acc, owner.copy()
            return
        row = C[i]
        for j in range(k):
            if left[j]:
                left[j] -= 1
                owner[i] = j
                walk(i + 1, acc + row[j])
                left[j] += 1

    walk(0, 0.0)
    best = np.array(best, dtype=np.int64)
    # report the cost summed in terminal order, like every other cost in the package
    cost = float(sum(C[i][j] for i, j in enumerate(best.tolist())))
    return best, cost

