import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from capclust import transport as T
from capclust.errors import DisconnectedDiagramError, JacobiNotConverged, StepFailure
from capclust.geom import build_power_diagram, regular_polygon
from capclust.oracle import exact_assignment

from conftest import UNIT_SQUARE, disk_points, near_equal_caps, spread_sites

DISK = regular_polygon(64)


def grid_in_square(m):
    g = (np.arange(m) + 0.5) / m
    x, y = np.meshgrid(g, g)
    return np.column_stack([x.ravel(), y.ravel()])


def random_problem(seed, n=300, k=6):
    rng = np.random.default_rng(seed)
    pts = disk_points(rng, n)
    sites = spread_sites(rng, k, min_gap=0.05)
    caps = near_equal_caps(n, k) / n
    return T.Problem(pts, np.full(n, 1 / n), sites, caps, DISK)


def random_laplacian(rng, k):
    sites = spread_sites(rng, k)
    d = build_power_diagram(sites, np.zeros(k), DISK)
    return T.hessian(d)


# ---------------------------------------------------------------- small operations

def test_power_distance_examples():
    assert T.power_distance((0, 0), (3, 4), 0.0) == 25
    assert T.power_distance((0, 0), (3, 4), 5.0) == 20
    assert T.power_distance((1.5, -2), (1.5, -2), 0.7) == -0.7
    assert T.power_distance((0, 0), (3, 4), 0.0, alpha=1.0) == 5


def test_assign_single_station_takes_everything():
    a = T.assign([[0, 0], [1, 1], [-1, 0.5]], [0.2, 0.3, 0.5], [[0.1, 0.1]], [0.0])
    assert a.owner.tolist() == [0, 0, 0]
    assert a.loads.tolist() == [1.0]


def test_assign_tie_goes_to_lowest_index():
    a = T.assign([[0, 0]], [1.0], [[-1, 0], [1, 0]], [0.0, 0.0])
    assert a.owner.tolist() == [0]


def test_assign_uses_heights():
    a = T.assign([[0, 0]], [1.0], [[-1, 0], [1, 0]], [0.0, 0.5])
    assert a.owner.tolist() == [1]


@given(st.integers(0, 2 ** 32 - 1))
def test_assign_owner_minimizes_power_distance(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, (50, 2))
    sites = rng.uniform(-1, 1, (5, 2))
    h = rng.uniform(-0.5, 0.5, 5)
    a = T.assign(pts, np.full(50, 0.02), sites, h)
    for x, o in zip(pts, a.owner):
        pw = [T.power_distance(x, s, hj) for s, hj in zip(sites, h)]
        assert pw[o] == min(pw)
        assert o == pw.index(min(pw))
    assert abs(a.loads.sum() - 1.0) <= 1e-12


@given(st.integers(0, 2 ** 32 - 1), st.integers(-8, 8))
def test_uniform_height_shift_keeps_owners(seed, c):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, (200, 2))
    sites = rng.uniform(-1, 1, (6, 2))
    h = rng.integers(-64, 64, 6) / 64.0
    a = T.assign(pts, np.full(200, 1 / 200), sites, h)
    b = T.assign(pts, np.full(200, 1 / 200), sites, h + c)
    assert np.array_equal(a.owner, b.owner)


def test_residual_examples():
    assert np.array_equal(T.residual(np.array([0.5, 0.5]), [0.5, 0.5]), [0, 0])
    assert np.allclose(T.residual(np.array([0.6, 0.4]), [0.5, 0.5]), [-0.1, 0.1])
    with pytest.raises(ValueError):
        T.residual(np.array([0.5, 0.5]), [1.0])


def test_residual_sums_to_zero():
    p = random_problem(1)
    g = T.residual(p.assign(np.zeros(p.k)), p.caps)
    assert abs(g.sum()) <= 1e-12


def test_transport_cost_examples():
    assert T.transport_cost(np.array([0, 1]), [[1, 1], [2, 2]], [0.5, 0.5], [[1, 1], [2, 2]]) == 0.0
    assert T.transport_cost(np.array([0]), [[0, 0]], [1.0], [[3, 4]]) == 25.0


def test_transport_cost_matches_per_station_sum():
    p = random_problem(2)
    a = p.assign(np.zeros(p.k))
    total = 0.0
    for j in range(p.k):
        members = np.flatnonzero(a.owner == j)
        for i in members:
            total += p.masses[i] * float(np.sum((p.points[i] - p.sites[j]) ** 2))
    assert a.cost == pytest.approx(total, rel=1e-12)


# ---------------------------------------------------------------- Hessian

def test_hessian_two_site_square():
    d = build_power_diagram([[0.25, 0.5], [0.75, 0.5]], [0, 0], UNIT_SQUARE)
    assert np.allclose(T.hessian(d).toarray(), [[2, -2], [-2, 2]])


def test_hessian_single_site():
    d = build_power_diagram([[0.5, 0.5]], [0], UNIT_SQUARE)
    assert T.hessian(d).toarray().tolist() == [[0.0]]


@pytest.mark.parametrize("seed", range(10))
def test_hessian_is_psd_laplacian(seed):
    H = random_laplacian(np.random.default_rng(seed), 5).toarray()
    assert np.allclose(H, H.T)
    assert np.max(np.abs(H.sum(axis=1))) <= 1e-12
    assert np.linalg.eigvalsh(H).min() >= -1e-9


def test_hessian_empty_cell_row_is_zero():
    d = build_power_diagram([[-0.5, 0], [0, 0], [0.5, 0]], [0, -5.0, 0], DISK)
    H = T.hessian(d).toarray()
    assert np.all(H[1] == 0) and np.all(H[:, 1] == 0)


@pytest.mark.parametrize("seed", range(5))
def test_hessian_matches_finite_difference_of_areas(seed):
    rng = np.random.default_rng(100 + seed)
    sites = spread_sites(rng, 5, min_gap=0.1)
    h = rng.uniform(0, 0.05, 5)
    d = build_power_diagram(sites, h, DISK)
    delta = 1e-5
    for e in d.edges:
        if e.shared_len < 1e-3:
            continue
        # a supporting-plane height step of delta is a power-height step of 2 * delta
        hp, hm = h.copy(), h.copy()
        hp[e.j] += T.PLANE_TO_POWER * delta
        hm[e.j] -= T.PLANE_TO_POWER * delta
        da = (build_power_diagram(sites, hp, DISK).areas[e.i]
              - build_power_diagram(sites, hm, DISK).areas[e.i]) / (2 * delta)
        assert -da == pytest.approx(e.w, rel=5e-3)


# ---------------------------------------------------------------- Newton directions

def test_direct_two_site():
    x = T.newton_direction_direct(sp.csr_matrix([[2.0, -2.0], [-2.0, 2.0]]), [-0.1, 0.1])
    assert np.allclose(x, [0, 0.05])
    assert 2 * x[1] == pytest.approx(0.1)


def test_direct_zero_gradient():
    H = random_laplacian(np.random.default_rng(0), 4)
    assert np.array_equal(T.newton_direction_direct(H, np.zeros(4)), np.zeros(4))


@pytest.mark.parametrize("seed", range(10))
def test_direct_matches_dense_solve(seed):
    rng = np.random.default_rng(seed)
    H = random_laplacian(rng, 6)
    g = rng.normal(size=6)
    g -= g.mean()
    x = T.newton_direction_direct(H, g)
    dense = np.linalg.solve(H.toarray()[1:, 1:], g[1:])
    assert x[0] == 0.0
    assert np.max(np.abs(x[1:] - dense)) <= 1e-9
    assert np.max(np.abs((H @ x - g)[1:])) <= 1e-10 * np.max(np.abs(g))


def test_direct_rejects_disconnected():
    H = sp.block_diag([sp.csr_matrix([[1.0, -1.0], [-1.0, 1.0]])] * 2).tocsr()
    with pytest.raises(DisconnectedDiagramError):
        T.newton_direction_direct(H, [0.1, -0.1, 0.1, -0.1])
    with pytest.raises(DisconnectedDiagramError):
        T.newton_direction_jacobi(H, [0.1, -0.1, 0.1, -0.1])


def test_jacobi_two_site_within_100_sweeps():
    H = sp.csr_matrix([[2.0, -2.0], [-2.0, 2.0]])
    x = T.newton_direction_jacobi(H, [-0.1, 0.1], inner_tol=1e-8, max_inner=100)
    assert np.max(np.abs(x - [0, 0.05])) <= 1e-8


def test_jacobi_zero_gradient_stays_zero():
    H = random_laplacian(np.random.default_rng(1), 5)
    assert np.array_equal(T.newton_direction_jacobi(H, np.zeros(5)), np.zeros(5))


@pytest.mark.parametrize("seed", range(10))
def test_jacobi_matches_direct(seed):
    rng = np.random.default_rng(seed)
    H = random_laplacian(rng, 8)
    g = rng.normal(size=8)
    g -= g.mean()
    xj = T.newton_direction_jacobi(H, g, inner_tol=1e-8)
    xd = T.newton_direction_direct(H, g)
    assert np.max(np.abs(xj - xd)) <= 1e-6


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 16))
def test_jacobi_within_ten_inner_tol_of_direct(seed, k):
    rng = np.random.default_rng(seed)
    H = random_laplacian(rng, k)
    g = rng.normal(size=k) * 0.01
    g -= g.mean()
    tol = 1e-9
    xj = T.newton_direction_jacobi(H, g, inner_tol=tol)
    xd = T.newton_direction_direct(H, g)
    assert np.max(np.abs(xj - xd)) <= 10 * tol


def test_jacobi_sweep_reads_only_neighbours():
    rng = np.random.default_rng(4)
    H = random_laplacian(rng, 10)
    g = rng.normal(size=10)
    x = rng.normal(size=10)
    base = T.jacobi_sweep(H, g, x)
    dense = H.toarray()
    for i in range(1, 10):
        for j in range(10):
            if j == i or dense[i, j] != 0:
                continue
            y = x.copy()
            y[j] += 1.0
            assert T.jacobi_sweep(H, g, y)[i] == base[i]


def test_jacobi_not_converged_carries_iterate():
    H = random_laplacian(np.random.default_rng(2), 8)
    g = np.linspace(-1, 1, 8)
    with pytest.raises(JacobiNotConverged) as exc:
        T.newton_direction_jacobi(H, g, inner_tol=1e-14, max_inner=3)
    assert exc.value.x.shape == (8,)
    assert exc.value.sweeps == 3
    assert exc.value.residual_norm > 0


# ---------------------------------------------------------------- steps

def test_gradient_step_examples():
    assert np.allclose(T.gradient_step([0, 0], [-0.1, 0.1], 0.5), [0, 0.1])
    assert np.array_equal(T.gradient_step([0, 0.3], [0, 0], 0.5), [0, 0.3])


def test_gradient_step_lowers_overloaded_station():
    h = np.array([0.0, 0.2, 0.1])
    g = np.array([0.05, -0.1, 0.05])  # station 1 overloaded
    new = T.gradient_step(h, g, 0.1)
    assert new[1] - new[2] < h[1] - h[2]
    assert new[1] - new[0] < h[1] - h[0]


def two_site_problem(caps=(0.55, 0.45)):
    pts = grid_in_square(20)
    return T.Problem(pts, np.full(len(pts), 1 / len(pts)), [[0.25, 0.5], [0.75, 0.5]], caps, UNIT_SQUARE)


def test_damped_update_zero_direction():
    p = two_site_problem()
    h, s = T.damped_update(np.zeros(2), np.zeros(2), 1.0, p)
    assert s == 1.0 and np.array_equal(h, np.zeros(2))


def test_damped_update_takes_full_step_on_mild_imbalance():
    p = two_site_problem()
    direction, _ = T._newton_direction(p, np.zeros(2), T.SolverConfig())
    h, s = T.damped_update(np.zeros(2), direction, 1.0, p)
    assert s == 1.0
    assert all(c is not None for c in p.diagram(h).cells)
    assert T.mse(T.residual(p.assign(h), p.caps)) < T.mse(T.residual(p.assign(np.zeros(2)), p.caps))


def test_damped_update_backs_off_when_a_cell_would_vanish():
    pts = grid_in_square(30)
    sites = [[0.2, 0.5], [0.8, 0.5], [0.5, 0.55]]
    p = T.Problem(pts, np.full(len(pts), 1 / len(pts)), sites, [0.45, 0.45, 0.1], UNIT_SQUARE)
    h0 = np.zeros(3)
    direction, _ = T._newton_direction(p, h0, T.SolverConfig())
    direction[2] = -10.0
    assert p.diagram(T.gauge_fix(h0 + direction)).cells[2] is None
    h, s = T.damped_update(h0, direction, 1.0, p)
    assert s < 1.0
    assert p.diagram(h).cells[2] is not None


def test_damped_update_fails_on_useless_direction():
    p = two_site_problem()
    with pytest.raises(StepFailure):
        # pushes load the wrong way at every step length
        T.damped_update(np.zeros(2), np.array([0.0, 1.0]), 1.0, p, min_step=2.0 ** -6)


# ---------------------------------------------------------------- solve

def test_symmetric_instance_keeps_zero_heights():
    pts = grid_in_square(20)
    corners = UNIT_SQUARE * 0.98 + 0.01
    h, a, trace = T.solve(pts, np.full(400, 1 / 400), corners, np.full(4, 0.25), UNIT_SQUARE)
    assert trace.converged
    assert np.max(np.abs(h)) <= 1e-6
    assert np.allclose(a.loads, 0.25)


def test_single_station_converges_immediately():
    pts = grid_in_square(5)
    h, a, trace = T.solve(pts, np.full(25, 1 / 25), [[0.5, 0.5]], [1.0], UNIT_SQUARE)
    assert trace.iterations == 0 and trace.converged
    assert a.loads[0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("method", T.METHODS)
def test_every_method_converges(method):
    p = random_problem(5)
    eps = 0.1 if method == "gradient-descent" else 1.0
    cfg = T.SolverConfig(method=method, eps=eps, dw=1e-5, max_outer=5000)
    h, a, trace = T.solve(None, None, None, None, None, cfg, problem=p)
    assert trace.converged
    assert h[0] == 0.0
    g = T.residual(a, p.caps)
    assert np.max(np.abs(g)) <= math.sqrt(p.k * cfg.dw)
    assert trace.iterations <= cfg.max_outer


def test_returned_assignment_is_induced_by_heights():
    p = random_problem(6)
    h, a, _ = T.solve(None, None, None, None, None, T.SolverConfig(dw=1e-8), problem=p)
    assert np.array_equal(p.assign(h).owner, a.owner)


def test_newton_records_strictly_decrease_mse():
    p = random_problem(7, n=1000, k=8)
    _, _, trace = T.solve(None, None, None, None, None, T.SolverConfig(dw=1e-9), problem=p)
    prev = trace.initial_mse
    for r in trace.records:
        assert r.source in ("direct", "transfer")
        assert r.mse < prev
        prev = r.mse


def test_max_iterations_returns_best_iterate():
    p = random_problem(8)
    cfg = T.SolverConfig(method="gradient-descent", eps=0.01, dw=1e-12, max_outer=5)
    h, a, trace = T.solve(None, None, None, None, None, cfg, problem=p)
    assert trace.status == "max-iterations" and trace.iterations == 5
    best = min([trace.initial_mse] + [r.mse for r in trace.records])
    assert T.mse(T.residual(a, p.caps)) == best


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32 - 1))
def test_converged_heights_meet_residual_bound(seed):
    p = random_problem(seed, n=200, k=4)
    cfg = T.SolverConfig(dw=1e-6)
    _, a, trace = T.solve(None, None, None, None, None, cfg, problem=p)
    assert trace.converged
    assert np.max(np.abs(T.residual(a, p.caps))) <= math.sqrt(p.k * cfg.dw)


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32 - 1))
def test_capacitated_cost_never_beats_voronoi(seed):
    # the Voronoi assignment minimizes cost without capacities, so the cost
    # trace starting from zero heights cannot decrease below its first value
    p = random_problem(seed, n=200, k=4)
    _, a, trace = T.solve(None, None, None, None, None, T.SolverConfig(dw=1e-6), problem=p)
    assert all(r.cost >= trace.initial_cost - 1e-12 for r in trace.records)


@settings(max_examples=15)
@given(st.integers(0, 2 ** 32 - 1))
def test_converged_cost_close_to_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.choice([50, 100, 200]))
    k = int(rng.choice([2, 4, 8]))
    pts = disk_points(rng, n)
    sites = spread_sites(rng, k, min_gap=0.05)
    caps = near_equal_caps(n, k)
    _, a, trace = T.solve(pts, np.full(n, 1 / n), sites, caps / n, DISK, T.SolverConfig(dw=1e-6))
    exact = exact_assignment(pts, np.ones(n), sites, caps)
    assert exact.cost / n <= a.cost + 1e-12
    assert a.cost <= 1.01 * exact.cost / n


def test_transfer_step_moves_a_single_unit():
    # at the discrete endgame Newton steps overshoot; the transfer step must still make progress
    rng = np.random.default_rng(11)
    n, k = 60, 4
    pts = disk_points(rng, n)
    sites = spread_sites(rng, k, min_gap=0.1)
    p = T.Problem(pts, np.full(n, 1 / n), sites, near_equal_caps(n, k) / n, DISK)
    h = np.zeros(k)
    base = T.mse(T.residual(p.assign(h), p.caps))
    new = T.transfer_step(h, p)
    assert new is not None
    after = T.residual(p.assign(new), p.caps)
    assert T.mse(after) < base
    moved = np.abs(p.assign(new).loads - p.assign(h).loads) * n
    assert np.allclose(np.sort(moved)[-2:], 1.0) and np.sum(moved) == pytest.approx(2.0)


def test_config_validation():
    with pytest.raises(ValueError):
        T.SolverConfig(method="simplex")
    with pytest.raises(ValueError):
        T.SolverConfig(eps=0)
    with pytest.raises(ValueError):
        T.SolverConfig(dw=-1)
    with pytest.raises(ValueError):
        T.SolverConfig(alpha=0.5)


def test_problem_rejects_unnormalized_masses():
    with pytest.raises(ValueError):
        T.Problem([[0, 0]], [0.5], [[0, 0]], [1.0], DISK)
