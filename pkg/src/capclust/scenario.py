"""Scenario documents (JSON) and the seeded instance generators behind them.

A document looks like::

    {
      "schema_version": 1,
      "domain": {"disk": {"segments": 64}},          # or a list of [x, y] vertices
      "stations": [{"pos": [x, y], "cap": 1}, ...],  # caps are weights, normalized on load
      "terminals": {"kind": "uniform", "n": 100, "seed": 7, "params": {}},
      "solver": {"method": "newton-direct", "dw": 0.0001},
      "kinetic": {"snapshots": 15, "tolerance": 0.0}
    }

``terminals`` may instead be an explicit list of ``{"pos", "mass"}``
objects. Stations and explicit terminals can carry a ``trajectory``:
``{"kind": "linear", "p": [..], "q": [..]}`` or
``{"kind": "waypoints", "points": [[t, [x, y]], ...]}``.
"""
import json
import math
from dataclasses import dataclass, field
from typing import Any, List, Optional, Union

import numpy as np

from .errors import ScenarioError
from .geom import as_polygon, contains, normalize_to_unit_domain, regular_polygon
from .kinetic import Scenario, Trajectory
from .transport import METHODS, SolverConfig

SCHEMA_VERSION = 1
DISTRIBUTIONS = ("uniform", "perturbed-grid", "train", "linear")
SOLVER_KEYS = ("method", "eps", "dw", "alpha", "max_outer")

TRAIN_DEFAULTS = {"fraction": 0.3, "length": 0.4, "width": 0.1, "start": -0.75, "end": 0.75}
GRID_DEFAULTS = {"jitter": 0.25}


# ---------------------------------------------------------------- sampling

def _bbox(domain):
    return domain.min(axis=0), domain.max(axis=0)


def sample_uniform(n, rng, domain):
    """``n`` points uniform in a convex polygon, by rejection from its bounding box."""
    lo, hi = _bbox(domain)
    out = np.empty((0, 2))
    while len(out) < n:
        batch = rng.uniform(lo, hi, size=(max(2 * (n - len(out)), 16), 2))
        out = np.vstack([out, batch[contains(domain, batch, 0.0)]])
    return out[:n]


def sample_perturbed_grid(n, rng, domain, jitter=0.25):
    """Jittered square grid: each point moves up to ``jitter`` grid spacings per axis.

    The grid is the smallest one over the bounding box with at least ``n``
    points inside the domain; a seeded subset of ``n`` of them is kept.
    """
    lo, hi = _bbox(domain)
    m = max(1, math.ceil(math.sqrt(n)))
    while True:
        step = (hi - lo) / m
        gx, gy = np.meshgrid(np.arange(m) + 0.5, np.arange(m) + 0.5, indexing="xy")
        grid = lo + np.column_stack([gx.ravel(), gy.ravel()]) * step
        pts = grid + rng.uniform(-jitter, jitter, size=grid.shape) * step
        pts = pts[contains(domain, pts, 0.0)]
        if len(pts) >= n:
            break
        m += 1
    if len(pts) > n:
        pts = pts[np.sort(rng.choice(len(pts), n, replace=False))]
    return pts


def place_stations(k, rng, domain, shrink=0.8):
    """``k`` distinct stations uniform in the domain shrunk by ``shrink`` about its box centre."""
    lo, hi = _bbox(domain)
    center = 0.5 * (lo + hi)
    inner = center + shrink * (domain - center)
    while True:
        s = sample_uniform(k, rng, inner)
        if k == 1 or np.min(np.linalg.norm(s[:, None] - s[None], axis=2) + np.eye(k)) > 1e-6:
            return s


def train_terminals(n, rng, domain, fraction=0.3, length=0.4, width=0.1, start=-0.75, end=0.75):
    """Static crowd plus a dense block of riders moving left to right.

    ``length``, ``width``, ``start`` and ``end`` are in units of the
    domain's bounding-box half-width, measured from the box centre.
    """
    lo, hi = _bbox(domain)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    riders = int(round(fraction * n))
    crowd = sample_uniform(n - riders, rng, domain)
    offset = rng.uniform([-0.5 * length, -0.5 * width], [0.5 * length, 0.5 * width], size=(riders, 2)) * half
    p = center + np.array([start * half[0], 0.0]) + offset
    q = center + np.array([end * half[0], 0.0]) + offset
    if not (np.all(contains(domain, p, 0.0)) and np.all(contains(domain, q, 0.0))):
        raise ScenarioError("terminals.params", "train leaves the domain; shorten its run or its size")
    points = np.vstack([crowd, p])
    trajectories = [None] * len(crowd) + [Trajectory.linear(a, b) for a, b in zip(p, q)]
    return points, trajectories


def linear_terminals(n, rng, domain):
    """Every terminal moves from ``p`` to ``q``, both uniform in the domain."""
    p = sample_uniform(n, rng, domain)
    q = sample_uniform(n, rng, domain)
    return p, [Trajectory.linear(a, b) for a, b in zip(p, q)]


def generate_terminals(kind, n, seed, params, domain):
    """Positions and trajectories (None when static) of a generated terminal set."""
    rng = np.random.default_rng([seed, 0])
    if kind == "uniform":
        return sample_uniform(n, rng, domain), None
    if kind == "perturbed-grid":
        return sample_perturbed_grid(n, rng, domain, **{**GRID_DEFAULTS, **params}), None
    if kind == "train":
        return train_terminals(n, rng, domain, **{**TRAIN_DEFAULTS, **params})
    if kind == "linear":
        return linear_terminals(n, rng, domain)
    raise ScenarioError("terminals.kind", f"unknown distribution {kind!r}")


# ---------------------------------------------------------------- documents

@dataclass
class Entity:
    pos: List[Any]
    weight: Any
    trajectory: Optional[Trajectory] = None


@dataclass
class GeneratedTerminals:
    kind: str
    n: int
    seed: int
    params: dict = field(default_factory=dict)


@dataclass
class ScenarioDoc:
    domain: Union[int, List[List[Any]]]  # an int is the segment count of a unit disk
    stations: List[Entity]
    terminals: Union[List[Entity], GeneratedTerminals]
    solver: dict = field(default_factory=dict)
    kinetic: Optional[dict] = None

    def domain_polygon(self):
        if isinstance(self.domain, int):
            return regular_polygon(self.domain)
        return as_polygon(self.domain)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _num(v, path, positive=False, integer=False):
    if not _is_num(v) or (integer and not isinstance(v, int)):
        raise ScenarioError(path, f"expected {'an integer' if integer else 'a number'}, got {v!r}")
    if positive and v <= 0:
        raise ScenarioError(path, f"must be positive, got {v!r}")
    return v


def _point(v, path):
    if not isinstance(v, list) or len(v) != 2:
        raise ScenarioError(path, f"expected [x, y], got {v!r}")
    return [_num(v[0], f"{path}[0]"), _num(v[1], f"{path}[1]")]


def _object(v, path, allowed, required=()):
    if not isinstance(v, dict):
        raise ScenarioError(path, "expected an object")
    for key in v:
        if key not in allowed:
            raise ScenarioError(f"{path}.{key}", "unknown field")
    for key in required:
        if key not in v:
            raise ScenarioError(f"{path}.{key}", "missing")
    return v


def _trajectory_from(v, path):
    _object(v, path, ("kind", "p", "q", "points"), ("kind",))
    kind = v["kind"]
    try:
        if kind == "linear":
            _object(v, path, ("kind", "p", "q"), ("p", "q"))
            return Trajectory.linear(_point(v["p"], f"{path}.p"), _point(v["q"], f"{path}.q"))
        if kind == "waypoints":
            _object(v, path, ("kind", "points"), ("points",))
            pts = v["points"]
            if not isinstance(pts, list) or not pts:
                raise ScenarioError(f"{path}.points", "expected a nonempty list")
            way = []
            for i, w in enumerate(pts):
                if not isinstance(w, list) or len(w) != 2:
                    raise ScenarioError(f"{path}.points[{i}]", "expected [t, [x, y]]")
                t = _num(w[0], f"{path}.points[{i}][0]")
                if not 0.0 <= t <= 1.0:
                    raise ScenarioError(f"{path}.points[{i}][0]", "time outside [0, 1]")
                way.append((t, _point(w[1], f"{path}.points[{i}][1]")))
            return Trajectory.from_waypoints(way)
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(path, str(exc)) from None
    raise ScenarioError(f"{path}.kind", f"expected 'linear' or 'waypoints', got {kind!r}")


def _trajectory_to(tr):
    if tr.kind == "linear":
        return {"kind": "linear", "p": tr.points[0].tolist(), "q": tr.points[1].tolist()}
    return {"kind": "waypoints", "points": [[float(t), p.tolist()] for t, p in zip(tr.times, tr.points)]}


def _entities(v, path, weight_key):
    if not isinstance(v, list) or not v:
        raise ScenarioError(path, "expected a nonempty list")
    out = []
    for i, e in enumerate(v):
        p = f"{path}[{i}]"
        _object(e, p, ("pos", weight_key, "trajectory"), ("pos", weight_key))
        tr = _trajectory_from(e["trajectory"], f"{p}.trajectory") if "trajectory" in e else None
        out.append(Entity(_point(e["pos"], f"{p}.pos"), _num(e[weight_key], f"{p}.{weight_key}", positive=True), tr))
    return out


def doc_from_dict(d):
    _object(d, "", ("schema_version", "domain", "stations", "terminals", "solver", "kinetic"),
            ("schema_version", "domain", "stations", "terminals"))
    if d["schema_version"] != SCHEMA_VERSION:
        raise ScenarioError("schema_version", f"unsupported version {d['schema_version']!r}")

    dom = d["domain"]
    if isinstance(dom, dict):
        _object(dom, "domain", ("disk",), ("disk",))
        _object(dom["disk"], "domain.disk", ("segments",), ("segments",))
        domain = _num(dom["disk"]["segments"], "domain.disk.segments", positive=True, integer=True)
        if domain < 3:
            raise ScenarioError("domain.disk.segments", "need at least 3 segments")
    elif isinstance(dom, list):
        domain = [_point(p, f"domain[{i}]") for i, p in enumerate(dom)]
        try:
            as_polygon(domain)
        except ValueError as exc:
            raise ScenarioError("domain", str(exc)) from None
    else:
        raise ScenarioError("domain", "expected a vertex list or {\"disk\": {\"segments\": m}}")

    stations = _entities(d["stations"], "stations", "cap")
    t = d["terminals"]
    if isinstance(t, dict):
        _object(t, "terminals", ("kind", "n", "seed", "params"), ("kind", "n", "seed"))
        if t["kind"] not in DISTRIBUTIONS:
            raise ScenarioError("terminals.kind", f"expected one of {DISTRIBUTIONS}, got {t['kind']!r}")
        params = t.get("params", {})
        if not isinstance(params, dict):
            raise ScenarioError("terminals.params", "expected an object")
        allowed = {"train": TRAIN_DEFAULTS, "perturbed-grid": GRID_DEFAULTS}.get(t["kind"], {})
        for key, val in params.items():
            if key not in allowed:
                raise ScenarioError(f"terminals.params.{key}", "unknown field")
            _num(val, f"terminals.params.{key}")
        terminals = GeneratedTerminals(t["kind"], _num(t["n"], "terminals.n", positive=True, integer=True),
                                       _num(t["seed"], "terminals.seed", integer=True), params)
        if terminals.seed < 0:
            raise ScenarioError("terminals.seed", "must be nonnegative")
    else:
        terminals = _entities(t, "terminals", "mass")

    solver = d.get("solver", {})
    _object(solver, "solver", SOLVER_KEYS)
    for key, val in solver.items():
        if key == "method":
            if val not in METHODS:
                raise ScenarioError("solver.method", f"expected one of {METHODS}, got {val!r}")
        else:
            _num(val, f"solver.{key}", positive=True, integer=(key == "max_outer"))

    kinetic = d.get("kinetic")
    if kinetic is not None:
        _object(kinetic, "kinetic", ("snapshots", "tolerance"), ("snapshots",))
        _num(kinetic["snapshots"], "kinetic.snapshots", positive=True, integer=True)
        tau = _num(kinetic.get("tolerance", 0), "kinetic.tolerance")
        if not 0 <= tau < 1:
            raise ScenarioError("kinetic.tolerance", "must lie in [0, 1)")
    return ScenarioDoc(domain, stations, terminals, dict(solver), None if kinetic is None else dict(kinetic))


def _entity_dict(e, weight_key):
    out = {"pos": e.pos, weight_key: e.weight}
    if e.trajectory is not None:
        out["trajectory"] = _trajectory_to(e.trajectory)
    return out


def doc_to_dict(doc):
    d = {"schema_version": SCHEMA_VERSION}
    d["domain"] = {"disk": {"segments": doc.domain}} if isinstance(doc.domain, int) else doc.domain
    d["stations"] = [_entity_dict(e, "cap") for e in doc.stations]
    if isinstance(doc.terminals, GeneratedTerminals):
        t = doc.terminals
        d["terminals"] = {"kind": t.kind, "n": t.n, "seed": t.seed, "params": t.params}
    else:
        d["terminals"] = [_entity_dict(e, "mass") for e in doc.terminals]
    if doc.solver:
        d["solver"] = doc.solver
    if doc.kinetic is not None:
        d["kinetic"] = doc.kinetic
    return d


def dumps(doc):
    """Serialize with one station or terminal per line."""
    d = doc_to_dict(doc)
    lines = ["{"]
    items = list(d.items())
    for idx, (key, val) in enumerate(items):
        comma = "," if idx + 1 < len(items) else ""
        if isinstance(val, list) and key in ("stations", "terminals", "domain"):
            lines.append(f"  {json.dumps(key)}: [")
            for j, item in enumerate(val):
                lines.append("    " + json.dumps(item) + ("," if j + 1 < len(val) else ""))
            lines.append("  ]" + comma)
        else:
            lines.append(f"  {json.dumps(key)}: {json.dumps(val)}{comma}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def loads(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return doc_from_dict(d)


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def save(doc, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(doc))


# ---------------------------------------------------------------- building

@dataclass
class LoadedScenario:
    scenario: Scenario
    transform: Any
    weights: np.ndarray        # terminal masses as written (before normalization)
    cap_weights: np.ndarray    # station caps as written

    def cost_in_original_units(self, cost):
        return cost * self.transform.cost_factor(self.scenario.config.alpha)


def _transform_trajectories(trs, transform):
    if trs is None:
        return None
    return [None if tr is None else Trajectory(tr.times, transform.apply(tr.points), tr.kind) for tr in trs]


def build(doc, **solver_overrides):
    """Turn a document into a normalized Scenario (unit-disk domain, fractions summing to 1)."""
    domain = doc.domain_polygon()
    st_pos = np.array([e.pos for e in doc.stations], dtype=np.float64)
    caps = np.array([e.weight for e in doc.stations], dtype=np.float64)
    st_tr = [e.trajectory for e in doc.stations]
    if all(t is None for t in st_tr):
        st_tr = None
    if isinstance(doc.terminals, GeneratedTerminals):
        g = doc.terminals
        t_pos, t_tr = generate_terminals(g.kind, g.n, g.seed, g.params, domain)
        weights = np.ones(g.n)
    else:
        t_pos = np.array([e.pos for e in doc.terminals], dtype=np.float64)
        weights = np.array([e.weight for e in doc.terminals], dtype=np.float64)
        t_tr = [e.trajectory for e in doc.terminals]
        if all(t is None for t in t_tr):
            t_tr = None
    inside = contains(domain, st_pos, 1e-9)
    if not np.all(inside):
        raise ScenarioError(f"stations[{int(np.flatnonzero(~inside)[0])}].pos", "outside the domain")
    transform, t_norm, dom_norm = normalize_to_unit_domain(t_pos, domain)
    settings = {**doc.solver, **{k: v for k, v in solver_overrides.items() if v is not None}}
    try:
        config = SolverConfig(**settings)
    except (TypeError, ValueError) as exc:
        raise ScenarioError("solver", str(exc)) from None
    kinetic = doc.kinetic or {}
    scenario = Scenario(
        domain=dom_norm,
        station_positions=transform.apply(st_pos),
        caps=caps / caps.sum(),
        terminal_positions=t_norm,
        masses=weights / weights.sum(),
        snapshots=kinetic.get("snapshots", 1),
        tolerance=kinetic.get("tolerance", 0.0),
        config=config,
        station_trajectories=_transform_trajectories(st_tr, transform),
        terminal_trajectories=_transform_trajectories(t_tr, transform),
    )
    return LoadedScenario(scenario, transform, weights, caps)


def generate(dist, n, k, seed, domain="disk", segments=64, snapshots=None, tolerance=0.0, solver=None,
             explicit=False, params=None):
    """Document for a seeded random instance with ``k`` equal-capacity stations."""
    if dist not in DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {dist!r}")
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    if domain == "disk":
        dom_spec = segments
    elif domain == "square":
        dom_spec = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    else:
        raise ValueError(f"unknown domain {domain!r}")
    doc = ScenarioDoc(dom_spec, [], GeneratedTerminals(dist, n, seed, dict(params or {})), dict(solver or {}))
    poly = doc.domain_polygon()
    stations = place_stations(k, np.random.default_rng([seed, 1]), poly)
    doc.stations = [Entity(p.tolist(), 1) for p in stations]
    if snapshots is not None:
        doc.kinetic = {"snapshots": snapshots, "tolerance": tolerance}
    if explicit:
        pos, trs = generate_terminals(dist, n, seed, doc.terminals.params, poly)
        trs = trs or [None] * n
        doc.terminals = [Entity(p.tolist(), 1, tr) for p, tr in zip(pos, trs)]
    return doc
