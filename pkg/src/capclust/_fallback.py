"""Pure-Python implementations of the hot kernels.

These are the reference semantics for ``capclust._kernels``; both modules expose
the same three functions with the same signatures and return types.
"""
import heapq
import math

import numpy as np

# points closer than this to a clipping line count as on it
EPS = 1e-12

_ASSIGN_BLOCK = 1 << 20


def power_cells(sites, heights, domain, order):
    """Clip ``domain`` to the power cell of every site.

    ``order[i]`` lists all site indices sorted by distance to site ``i``; it
    lets the loop stop once no farther bisector can reach the current cell.
    Returns one ``(vertices, labels)`` pair per site, or ``None`` for an empty
    cell. ``labels[e]`` names the source of the edge from vertex ``e`` to
    ``e + 1``: the neighbouring site index, or -1 for the domain boundary.
    """
    sites = np.asarray(sites, dtype=np.float64)
    heights = np.asarray(heights, dtype=np.float64)
    domain = np.asarray(domain, dtype=np.float64)
    k = sites.shape[0]
    hmax = float(heights.max())
    sx = sites[:, 0].tolist()
    sy = sites[:, 1].tolist()
    hl = heights.tolist()
    dom_x = domain[:, 0].tolist()
    dom_y = domain[:, 1].tolist()
    order = np.asarray(order).tolist()
    cells = []
    for i in range(k):
        xi, yi, hi = sx[i], sy[i], hl[i]
        xs = [x - xi for x in dom_x]
        ys = [y - yi for y in dom_y]
        labels = [-1] * len(xs)
        slack = hmax - hi
        for j in order[i]:
            if j == i:
                continue
            dx = sx[j] - xi
            dy = sy[j] - yi
            r2 = dx * dx + dy * dy
            r = math.sqrt(r2)
            lower = 0.5 * (r - slack / r)
            if lower > 0.0:
                far = 0.0
                for x, y in zip(xs, ys):
                    d2 = x * x + y * y
                    if d2 > far:
                        far = d2
                if lower * lower > far:
                    break
            c = r2 + hi - hl[j]
            inv = 1.0 / (2.0 * r)
            xs, ys, labels = _clip(xs, ys, labels, dx, dy, c, inv, j)
            if not xs:
                break
        if len(xs) < 3:
            cells.append(None)
            continue
        verts = np.empty((len(xs), 2))
        verts[:, 0] = xs
        verts[:, 1] = ys
        verts[:, 0] += xi
        verts[:, 1] += yi
        cells.append((verts, np.asarray(labels, dtype=np.int64)))
    return cells


def _clip(xs, ys, labels, dx, dy, c, inv, label):
    # keep {q : (2 q.d - c) / (2|d|) <= EPS}, coordinates relative to the site
    n = len(xs)
    f = [(2.0 * (x * dx + y * dy) - c) * inv for x, y in zip(xs, ys)]
    if max(f) <= EPS:
        return xs, ys, labels
    if min(f) > EPS:
        return [], [], []
    ox, oy, ol = [], [], []
    for e in range(n):
        q = e + 1 if e + 1 < n else 0
        fp, fq = f[e], f[q]
        p_in = fp <= EPS
        q_in = fq <= EPS
        if p_in:
            ox.append(xs[e])
            oy.append(ys[e])
            ol.append(labels[e])
            if not q_in:
                t = fp / (fp - fq)
                ox.append(xs[e] + t * (xs[q] - xs[e]))
                oy.append(ys[e] + t * (ys[q] - ys[e]))
                ol.append(label)
        elif q_in:
            t = fp / (fp - fq)
            ox.append(xs[e] + t * (xs[q] - xs[e]))
            oy.append(ys[e] + t * (ys[q] - ys[e]))
            ol.append(labels[e])
    return ox, oy, ol


def argmin_power(points, sites, heights, alpha):
    """Index of the power-closest site per point (lowest index on ties) and its power distance."""
    points = np.asarray(points, dtype=np.float64)
    sites = np.asarray(sites, dtype=np.float64)
    heights = np.asarray(heights, dtype=np.float64)
    n = points.shape[0]
    k = sites.shape[0]
    owner = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    block = max(1, _ASSIGN_BLOCK // max(k, 1))
    for start in range(0, n, block):
        p = points[start:start + block]
        dx = p[:, 0, None] - sites[None, :, 0]
        dy = p[:, 1, None] - sites[None, :, 1]
        d2 = dx * dx + dy * dy
        if alpha == 2.0:
            pw = d2 - heights[None, :]
        else:
            pw = np.sqrt(d2) ** alpha - heights[None, :]
        idx = np.argmin(pw, axis=1)
        owner[start:start + block] = idx
        best[start:start + block] = pw[np.arange(len(idx)), idx]
    return owner, best


def transport_ssp(supply, demand, cost):
    """Min-cost transportation plan by successive shortest paths.

    ``supply`` (n,) and ``demand`` (k,) are nonnegative integers with equal
    sums; ``cost`` is (n, k). Returns ``(flow, station_potential)`` where
    ``flow`` is an (n, k) integer array and the potentials make
    ``cost[i, j] - station_potential[j]`` minimal over ``j`` wherever
    ``flow[i, j] > 0`` (they are power-diagram heights for the plan).
    """
    supply = np.asarray(supply, dtype=np.int64)
    demand = np.asarray(demand, dtype=np.int64)
    cost = np.asarray(cost, dtype=np.float64)
    n, k = cost.shape
    c = cost.tolist()
    rs = supply.tolist()
    rd = demand.tolist()
    flow = [[0] * k for _ in range(n)]
    # node ids: terminals 0..n-1, stations n..n+k-1, sink n+k; the source keeps potential 0
    sink = n + k
    pot = [0.0] * (n + k + 1)
    inf = math.inf
    remaining = sum(rs)
    while remaining > 0:
        dist = [inf] * (n + k + 1)
        prev = [-1] * (n + k + 1)
        done = [False] * (n + k + 1)
        heap = []
        for i in range(n):
            if rs[i] > 0:
                d = -pot[i]
                if d < 0.0:
                    d = 0.0
                dist[i] = d
                heap.append((d, i))
        heapq.heapify(heap)
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if u == sink:
                break
            pu = pot[u]
            if u < n:
                row = c[u]
                for j in range(k):
                    v = n + j
                    if done[v]:
                        continue
                    nd = row[j] + pu - pot[v]
                    if nd < 0.0:
                        nd = 0.0
                    nd += d
                    if nd < dist[v]:
                        dist[v] = nd
                        prev[v] = u
                        heapq.heappush(heap, (nd, v))
            else:
                j = u - n
                if rd[j] > 0 and not done[sink]:
                    nd = pu - pot[sink]
                    if nd < 0.0:
                        nd = 0.0
                    nd += d
                    if nd < dist[sink]:
                        dist[sink] = nd
                        prev[sink] = u
                        heapq.heappush(heap, (nd, sink))
                for i in range(n):
                    if flow[i][j] > 0 and not done[i]:
                        nd = -c[i][j] + pu - pot[i]
                        if nd < 0.0:
                            nd = 0.0
                        nd += d
                        if nd < dist[i]:
                            dist[i] = nd
                            prev[i] = u
                            heapq.heappush(heap, (nd, i))
        if not done[sink]:
            raise RuntimeError("no augmenting path; supply and demand are inconsistent")
        dt = dist[sink]
        for v in range(n + k + 1):
            pot[v] += dist[v] if done[v] else dt
        # walk back from the sink to find the bottleneck
        j = prev[sink] - n
        amount = rd[j]
        v = prev[sink]
        while True:
            i = prev[v]
            if i == -1:
                raise RuntimeError("broken shortest-path tree")
            u = prev[i]
            if u == -1:
                if rs[i] < amount:
                    amount = rs[i]
                break
            if flow[i][u - n] < amount:
                amount = flow[i][u - n]
            v = u
        # apply
        rd[j] -= amount
        v = prev[sink]
        while True:
            i = prev[v]
            flow[i][v - n] += amount
            u = prev[i]
            if u == -1:
                rs[i] -= amount
                break
            flow[i][u - n] -= amount
            v = u
        remaining -= amount
    return np.array(flow, dtype=np.int64).reshape(n, k), np.array(pot[n:n + k])
