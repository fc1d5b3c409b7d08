"""Solve a sequence of snapshots of moving terminals and stations.

Each snapshot reuses the previous snapshot's heights as its starting point.
With a capacity tolerance ``tau > 0`` the previous heights are first applied
to the new positions as they are; the solver only runs when some station
ends up loaded above ``(1 + tau) * cap``.
"""
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import CapclustError, SnapshotError
from .transport import Assignment, Problem, SolverConfig, SolveTrace, mse, residual, solve, transport_cost

CARRY_MODES = ("heights", "owners")


class Trajectory:
    """Piecewise-linear path through ``(time, point)`` waypoints on [0, 1].

    Before the first and after the last waypoint the position is held.
    """

    def __init__(self, times, points, kind="waypoints"):
        self.times = np.asarray(times, dtype=np.float64).ravel()
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        self.kind = kind
        if len(self.times) == 0 or len(self.times) != len(self.points):
            raise ValueError("a trajectory needs matching, nonempty times and points")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("waypoint times must be strictly increasing")
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.points))):
            raise ValueError("trajectory values must be finite")

    @classmethod
    def static(cls, p):
        return cls([0.0], [p], "static")

    @classmethod
    def linear(cls, p, q):
        """``p + (q - p) * t``."""
        return cls([0.0, 1.0], [p, q], "linear")

    @classmethod
    def from_waypoints(cls, waypoints):
        times = [w[0] for w in waypoints]
        points = [w[1] for w in waypoints]
        return cls(times, points, "waypoints")

    def at(self, t):
        if self.kind == "linear":
            p, q = self.points
            return p + (q - p) * t
        return np.array([np.interp(t, self.times, self.points[:, 0]),
                         np.interp(t, self.times, self.points[:, 1])])

    def __eq__(self, other):
        return (isinstance(other, Trajectory) and self.kind == other.kind
                and np.array_equal(self.times, other.times) and np.array_equal(self.points, other.points))

    def __repr__(self):
        return f"Trajectory({self.kind}, {len(self.times)} waypoints)"


class _Motion:
    # evaluates many trajectories at once; linear ones are vectorized
    def __init__(self, base, trajectories):
        self.base = np.asarray(base, dtype=np.float64).reshape(-1, 2)
        self.lin_idx = np.zeros(0, dtype=np.int64)
        self.other = []
        if trajectories is None:
            return
        if len(trajectories) != len(self.base):
            raise ValueError("one trajectory (or None) per entity required")
        lin, p, q = [], [], []
        for i, tr in enumerate(trajectories):
            if tr is None or tr.kind == "static":
                if tr is not None:
                    self.base[i] = tr.points[0]
                continue
            if tr.kind == "linear":
                lin.append(i)
                p.append(tr.points[0])
                q.append(tr.points[1])
            else:
                self.other.append((i, tr))
        self.lin_idx = np.asarray(lin, dtype=np.int64)
        if lin:
            self.lin_p = np.asarray(p)
            self.lin_d = np.asarray(q) - self.lin_p

    @property
    def moving(self):
        return len(self.lin_idx) > 0 or len(self.other) > 0

    def at(self, t):
        out = self.base.copy()
        if len(self.lin_idx):
            out[self.lin_idx] = self.lin_p + self.lin_d * t
        for i, tr in self.other:
            out[i] = tr.at(t)
        return out


@dataclass
class Scenario:
    """Everything a kinetic run needs. Masses and caps are fractions summing to 1."""

    domain: np.ndarray
    station_positions: np.ndarray
    caps: np.ndarray
    terminal_positions: np.ndarray
    masses: np.ndarray
    snapshots: int = 1
    tolerance: float = 0.0
    config: SolverConfig = field(default_factory=SolverConfig)
    station_trajectories: Optional[Sequence] = None
    terminal_trajectories: Optional[Sequence] = None

    def __post_init__(self):
        self.domain = np.asarray(self.domain, dtype=np.float64)
        self.caps = np.asarray(self.caps, dtype=np.float64).ravel()
        self.masses = np.asarray(self.masses, dtype=np.float64).ravel()
        if self.snapshots < 1:
            raise ValueError("need at least one snapshot")
        if not 0.0 <= self.tolerance < 1.0:
            raise ValueError("tolerance must lie in [0, 1)")
        self._stations = _Motion(self.station_positions, self.station_trajectories)
        self._terminals = _Motion(self.terminal_positions, self.terminal_trajectories)
        if len(self.caps) != len(self._stations.base) or len(self.masses) != len(self._terminals.base):
            raise ValueError("one cap per station and one mass per terminal required")

    @property
    def n(self):
        return len(self.masses)

    @property
    def k(self):
        return len(self.caps)

    @property
    def moving(self):
        return self._stations.moving or self._terminals.moving

    def times(self):
        if self.snapshots == 1:
            return np.zeros(1)
        return np.arange(self.snapshots) / (self.snapshots - 1)


@dataclass
class SnapshotResult:
    t: float
    heights: np.ndarray
    assignment: Assignment
    trace: SolveTrace
    resolved: bool
    changed_terminals: int
    wall_time: float = field(default=0.0, compare=False)

    @property
    def outer_iterations(self):
        return self.trace.iterations if self.resolved else 0


def snapshot_at(scenario, t):
    """Terminal and station positions at time ``t`` in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"snapshot time {t} outside [0, 1]")
    return scenario._terminals.at(t), scenario._stations.at(t)


def _carried(problem, previous, carry):
    if carry == "heights":
        return problem.assign(previous.heights)
    owner = previous.assignment.owner
    loads = np.bincount(owner, weights=problem.masses, minlength=problem.k)
    cost = transport_cost(owner, problem.points, problem.masses, problem.sites, problem.alpha)
    return Assignment(owner.copy(), loads, cost)


def kinetic_solve(scenario, warm_start=True, carry="heights", backend=None):
    """Solve every snapshot of ``scenario`` in time order.

    ``carry`` decides what a kept snapshot reuses when ``tolerance > 0``:
    "heights" reapplies the previous heights at the new positions, "owners"
    keeps the previous terminal-to-station map verbatim.
    """
    if carry not in CARRY_MODES:
        raise ValueError(f"carry must be one of {CARRY_MODES}")
    config = scenario.config
    if backend is not None:
        config = SolverConfig(**{**config.__dict__, "backend": backend})
    tau = scenario.tolerance
    results: List[SnapshotResult] = []
    for s, t in enumerate(scenario.times()):
        start = time.perf_counter()
        points, sites = snapshot_at(scenario, float(t))
        try:
            problem = Problem(points, scenario.masses, sites, scenario.caps, scenario.domain,
                              config.alpha, config.backend)
            previous = results[-1] if results else None
            if previous is not None and tau > 0.0:
                kept = _carried(problem, previous, carry)
                if np.all(kept.loads <= (1.0 + tau) * problem.caps):
                    changed = int(np.count_nonzero(kept.owner != previous.assignment.owner))
                    trace = SolveTrace(mse(residual(kept, problem.caps)), kept.cost, status="kept")
                    results.append(SnapshotResult(float(t), previous.heights.copy(), kept, trace, False,
                                                  changed, time.perf_counter() - start))
                    continue
            h0 = previous.heights if (previous is not None and warm_start) else None
            heights, assignment, trace = solve(None, None, None, None, None, config, h0=h0, problem=problem)
        except CapclustError as exc:
            raise SnapshotError(s, exc) from exc
        except ValueError as exc:
            raise SnapshotError(s, exc) from exc
        changed = 0 if previous is None else int(np.count_nonzero(assignment.owner != previous.assignment.owner))
        results.append(SnapshotResult(float(t), heights, assignment, trace, True, changed,
                                      time.perf_counter() - start))
    return results


def count_changes(results):
    """Total and per-snapshot number of terminals whose station changed."""
    if not results:
        raise ValueError("no snapshot results")
    per = [0]
    for prev, cur in zip(results, results[1:]):
        per.append(int(np.count_nonzero(prev.assignment.owner != cur.assignment.owner)))
    return sum(per), per
