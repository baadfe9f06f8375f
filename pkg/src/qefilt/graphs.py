"""Graphs, shift operators, spectra, and random edge-sampling (RES) models.

Everything here is dense and immutable: graphs are small enough at desk
scale that dense symmetric matrices keep the Gram/Gramian machinery simple.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConnectivityError, GraphFormatError, GraphValidationError


class ShiftKind(Enum):
    ADJACENCY = "adjacency"
    LAPLACIAN = "laplacian"
    SCALED_LAPLACIAN = "scaled_laplacian"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph on nodes 0..n-1.

    Edges are normalized to (u, v, w) with u < v and sorted, so two graphs
    with the same edge set compare equal.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n < 1:
            raise GraphValidationError(f"need at least one node, got n={self.n}")
        norm = []
        seen = set()
        for u, v, w in self.edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphValidationError(f"edge ({u},{v}) out of range for n={self.n}")
            if u == v:
                raise GraphValidationError(f"self-loop at node {u}")
            if not math.isfinite(w):
                raise GraphValidationError(f"non-finite weight on edge ({u},{v})")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphValidationError(f"duplicate edge ({key[0]},{key[1]})")
            seen.add(key)
            norm.append((key[0], key[1], float(w)))
        norm.sort()
        object.__setattr__(self, "edges", tuple(norm))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degree_sequence(self):
        deg = [0] * self.n
        for u, v, _ in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        adj = [[] for _ in range(self.n)]
        for u, v, _ in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        seen = {0}
        stack = [0]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == self.n


@dataclass(frozen=True)
class ShiftOperator:
    """Dense symmetric shift matrix with a spectral-radius bound rho.

    rho is an upper bound on the spectral norm; for sampled realizations it
    is the base graph's bound, not the realization's own norm.
    """

    matrix: np.ndarray
    rho: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise GraphValidationError(f"shift matrix must be square, got {m.shape}")
        if not np.array_equal(m, m.T):
            raise GraphValidationError("shift matrix must be exactly symmetric")
        m = np.ascontiguousarray(m)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition S = U diag(values) U^T with orthonormal U."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class ResModel:
    """Random edge-sampling model: each undirected edge of `graph` survives
    independently with probability p in every realization.

    One Bernoulli draw per undirected edge is applied to both directions so
    realizations stay symmetric. Laplacian-style realizations recompute
    degrees from the surviving edges; the scaled variant divides by the
    *base* graph's largest Laplacian eigenvalue so realizations remain
    affine in the edge indicators and bounded by the base rho.
    """

    graph: Graph
    p: float
    kind: ShiftKind = ShiftKind.ADJACENCY

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise GraphValidationError(f"survival probability must be in [0,1], got {self.p}")
        if self.kind is ShiftKind.CUSTOM:
            raise GraphValidationError("edge sampling needs a graph-derived shift kind")
        if any(w <= 0 for _, _, w in self.graph.edges):
            raise GraphValidationError("edge sampling requires positive edge weights")


@dataclass(frozen=True)
class EdgeArrays:
    """Per-edge contribution arrays used by the simulation kernels.

    Realized shifts are sums of per-edge terms: for adjacency-style shifts
    an edge (u,v,w) contributes w to entries (u,v) and (v,u); for
    Laplacian-style shifts it also contributes +w to both diagonals with
    the off-diagonals negated.
    """

    n: int
    eu: np.ndarray  # int32 (E,)
    ev: np.ndarray  # int32 (E,)
    ew: np.ndarray  # float64 (E,), scaling already applied
    laplacian_style: bool


def load_graph(path) -> Graph:
    """Read the edge-list text format: header `N M`, then M lines `u v w`.

    Lines starting with `#` are comments and ignored.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    data = [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]
    if not data:
        raise GraphFormatError(f"{path}: empty graph file")
    head = data[0].split()
    if len(head) != 2:
        raise GraphFormatError(f"{path}: header must be 'N M', got {data[0]!r}")
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError as exc:
        raise GraphFormatError(f"{path}: bad header {data[0]!r}") from exc
    if len(data) - 1 != m:
        raise GraphFormatError(f"{path}: header announces {m} edges, file has {len(data) - 1}")
    edges = []
    for ln in data[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise GraphFormatError(f"{path}: bad edge line {ln!r}")
        try:
            edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise GraphFormatError(f"{path}: bad edge line {ln!r}") from exc
    return Graph(n=n, edges=tuple(edges))


def save_graph(graph: Graph, path) -> None:
    """Write the edge-list format; edges come out sorted by (u, v)."""
    out = [f"{graph.n} {graph.num_edges}"]
    for u, v, w in graph.edges:
        out.append(f"{u} {v} {w!r}")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def generate_sensor_graph(n: int, radius: float | None = None, seed: int = 0,
                          *, target_edges: int | None = None,
                          max_attempts: int = 50) -> Graph:
    """Random geometric graph on the unit square, deterministic per seed.

    Either pass a connection `radius`, or pass `target_edges` to pick the
    smallest radius that yields (about) that many edges while staying
    connected. Unit edge weights.
    """
    if n < 2:
        raise GraphValidationError("sensor graph needs n >= 2")
    if (radius is None) == (target_edges is None):
        raise GraphValidationError("pass exactly one of radius / target_edges")

    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        pts = rng.random((n, 2))
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        if target_edges is not None:
            thresh = max(_connectivity_threshold(dist), _kth_distance(dist, target_edges))
        else:
            thresh = float(radius)
        iu, iv = np.triu_indices(n, k=1)
        keep = dist[iu, iv] <= thresh
        edges = tuple((int(u), int(v), 1.0) for u, v in zip(iu[keep], iv[keep]))
        g = Graph(n=n, edges=edges)
        if g.is_connected():
            return g
        if target_edges is not None:
            # threshold includes the connectivity bound, so this cannot happen
            raise ConnectivityError("internal error: threshold graph disconnected")
    raise ConnectivityError(
        f"no connected graph with n={n}, radius={radius} after {max_attempts} attempts")


def _kth_distance(dist: np.ndarray, k: int) -> float:
    """k-th smallest pairwise distance (1-based), i.e. the radius giving k edges."""
    iu, iv = np.triu_indices(dist.shape[0], k=1)
    d = np.sort(dist[iu, iv])
    k = min(max(k, 1), d.size)
    return float(d[k - 1])


def _connectivity_threshold(dist: np.ndarray) -> float:
    """Longest edge of the Euclidean MST: the minimal radius that connects."""
    n = dist.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    best = dist[0].copy()
    in_tree[0] = True
    best[0] = np.inf
    longest = 0.0
    for _ in range(n - 1):
        j = int(np.argmin(best))
        longest = max(longest, float(best[j]))
        in_tree[j] = True
        best = np.minimum(best, dist[j])
        best[in_tree] = np.inf
    return longest


def adjacency_matrix(graph: Graph) -> np.ndarray:
    a = np.zeros((graph.n, graph.n))
    for u, v, w in graph.edges:
        a[u, v] = w
        a[v, u] = w
    return a


def laplacian_matrix(graph: Graph) -> np.ndarray:
    a = adjacency_matrix(graph)
    return np.diag(a.sum(axis=1)) - a


def build_shift(graph: Graph, kind: ShiftKind) -> ShiftOperator:
    """Construct the shift matrix for `kind` with its spectral-radius bound.

    SCALED_LAPLACIAN divides the Laplacian by its largest eigenvalue so the
    spectrum lies in [0, 1].
    """
    if kind is ShiftKind.ADJACENCY:
        m = adjacency_matrix(graph)
    elif kind is ShiftKind.LAPLACIAN:
        m = laplacian_matrix(graph)
    elif kind is ShiftKind.SCALED_LAPLACIAN:
        lap = laplacian_matrix(graph)
        lam_max = float(np.linalg.eigvalsh(lap)[-1])
        m = lap / lam_max if lam_max > 0 else lap
    else:
        raise GraphValidationError("use custom_shift() for custom matrices")
    m = (m + m.T) / 2.0
    rho = float(np.max(np.abs(np.linalg.eigvalsh(m))))
    return ShiftOperator(matrix=m, rho=rho)


def custom_shift(matrix, rho: float | None = None) -> ShiftOperator:
    """Wrap a user-provided symmetric matrix as a shift operator."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise GraphValidationError(f"custom shift must be square, got {m.shape}")
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    if asym > 1e-8 * max(scale, 1.0):
        raise GraphValidationError("custom shift matrix is not symmetric")
    m = (m + m.T) / 2.0
    if rho is None:
        rho = float(np.max(np.abs(np.linalg.eigvalsh(m))))
    return ShiftOperator(matrix=m, rho=float(rho))


def spectral_decompose(shift: ShiftOperator) -> Spectrum:
    """Symmetric eigendecomposition, eigenvalues ascending."""
    vals, vecs = np.linalg.eigh(shift.matrix)
    return Spectrum(eigenvalues=vals, eigenvectors=vecs)


def laplacian_scale(graph: Graph) -> float:
    """Largest Laplacian eigenvalue of the base graph (the SCALED_LAPLACIAN divisor)."""
    lam = float(np.linalg.eigvalsh(laplacian_matrix(graph))[-1])
    return lam if lam > 0 else 1.0


def edge_arrays(model: ResModel) -> EdgeArrays:
    """Kernel-ready per-edge arrays for sampling realized shifts."""
    g = model.graph
    eu = np.ascontiguousarray([e[0] for e in g.edges], dtype=np.int32)
    ev = np.ascontiguousarray([e[1] for e in g.edges], dtype=np.int32)
    ew = np.ascontiguousarray([e[2] for e in g.edges], dtype=np.float64)
    if model.kind is ShiftKind.ADJACENCY:
        return EdgeArrays(g.n, eu, ev, ew, laplacian_style=False)
    if model.kind is ShiftKind.SCALED_LAPLACIAN:
        ew = ew / laplacian_scale(g)
    return EdgeArrays(g.n, eu, ev, ew, laplacian_style=True)


def realized_shift_matrix(model: ResModel, keep: np.ndarray) -> np.ndarray:
    """Dense realized shift for a boolean edge-survival vector."""
    arr = edge_arrays(model)
    n = arr.n
    m = np.zeros((n, n))
    keep = np.asarray(keep, dtype=bool)
    for u, v, w, k in zip(arr.eu, arr.ev, arr.ew, keep):
        if not k:
            continue
        if arr.laplacian_style:
            m[u, u] += w
            m[v, v] += w
            m[u, v] -= w
            m[v, u] -= w
        else:
            m[u, v] += w
            m[v, u] += w
    return m


def sample_res(model: ResModel, rng: np.random.Generator) -> ShiftOperator:
    """Draw one realization: one Bernoulli per undirected edge, applied
    symmetrically, shift rebuilt on the surviving edge set."""
    keep = rng.random(model.graph.num_edges) < model.p
    m = realized_shift_matrix(model, keep)
    base = build_shift(model.graph, model.kind)
    return ShiftOperator(matrix=m, rho=base.rho)


def mean_shift(model: ResModel) -> np.ndarray:
    """Expected realized shift: p times the base shift (all supported kinds
    are linear in the edge indicators, including the Laplacian degree term)."""
    return model.p * build_shift(model.graph, model.kind).matrix
