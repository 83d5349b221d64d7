"""Spatial graphs, Laplacians and a deterministic Jacobi eigensolver."""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError, InvalidInputError, InvalidParameterError
from .validation import check_finite, check_symmetric

EARTH_RADIUS_KM = 6371.0

LAPLACIAN_KINDS = ("combinatorial", "normalized")


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph given by a symmetric, non-negative adjacency."""

    adjacency: np.ndarray
    node_labels: list = field(default=None)

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InvalidInputError(f"adjacency must be a non-empty square matrix, got {a.shape}")
        check_finite(a, "adjacency")
        if not np.array_equal(a, a.T):
            raise InvalidInputError("adjacency must be exactly symmetric")
        if np.any(a < 0):
            raise InvalidInputError("adjacency must be non-negative")
        if np.any(np.diag(a) != 0):
            raise InvalidInputError("adjacency diagonal must be zero")
        if self.node_labels is not None and len(self.node_labels) != a.shape[0]:
            raise InvalidInputError("node_labels length does not match adjacency")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n_nodes(self):
        return self.adjacency.shape[0]

    def is_connected(self):
        n = self.n_nodes
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            i = frontier.pop()
            for j in np.flatnonzero(self.adjacency[i] > 0):
                if not seen[j]:
                    seen[j] = True
                    frontier.append(j)
        return bool(seen.all())


@dataclass(frozen=True)
class GraphSpectrum:
    """Ascending eigenvalues and orthonormal eigenvectors (columns of ``eigenvectors``)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    laplacian_kind: str = "combinatorial"

    @property
    def n_nodes(self):
        return self.eigenvalues.shape[0]

    @classmethod
    def from_graph(cls, graph, kind="normalized"):
        spec = eigendecompose(laplacian(graph, kind))
        return cls(spec.eigenvalues, spec.eigenvectors, kind)

    @classmethod
    def identity(cls, n):
        """Spectrum of an edgeless graph: U = I, all eigenvalues zero."""
        return cls(np.zeros(n), np.eye(n), "combinatorial")


def haversine_distance(a, b):
    """Great-circle distance in km between two ``(lat, lon)`` points in degrees."""
    lat1, lon1 = (float(v) for v in a)
    lat2, lon2 = (float(v) for v in b)
    if not all(math.isfinite(v) for v in (lat1, lon1, lat2, lon2)):
        raise InvalidInputError("coordinates must be finite")
    if abs(lat1) > 90 or abs(lat2) > 90:
        raise InvalidInputError("latitude must lie in [-90, 90]")
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    h = min(1.0, max(0.0, h))
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def pairwise_distances(coords, metric="euclidean"):
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 1:
        raise InvalidInputError(f"coords must be an N x 2 array, got {coords.shape}")
    check_finite(coords, "coords")
    n = coords.shape[0]
    if metric == "euclidean":
        diff = coords[:, None, :] - coords[None, :, :]
        return np.sqrt(np.sum(diff ** 2, axis=-1))
    if metric == "haversine":
        d = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                d[i, j] = d[j, i] = haversine_distance(coords[i], coords[j])
        return d
    raise InvalidParameterError(f"unknown distance metric {metric!r}")


def build_gaussian_kernel_graph(coords, distance_metric="euclidean", sigma_sq=1.0,
                                epsilon=0.0, node_labels=None):
    """Thresholded Gaussian kernel graph, ``A_ij = exp(-d_ij^2 / sigma_sq)`` kept when ``>= epsilon``."""
    if not (math.isfinite(sigma_sq) and sigma_sq > 0):
        raise InvalidParameterError(f"sigma_sq must be positive, got {sigma_sq}")
    if not (0 <= epsilon <= 1):
        raise InvalidParameterError(f"epsilon must lie in [0, 1], got {epsilon}")
    d = pairwise_distances(coords, distance_metric)
    w = np.exp(-(d ** 2) / sigma_sq)
    w[w < epsilon] = 0.0
    np.fill_diagonal(w, 0.0)
    # exp is evaluated per entry, so symmetry holds only up to the distance computation
    w = np.triu(w, 1)
    return Graph(w + w.T, node_labels)


def random_geometric_graph(n, rng, sigma_sq=0.1, epsilon=0.1, max_tries=1000):
    """Gaussian kernel graph on uniform points in the unit square, resampled until connected."""
    for _ in range(max_tries):
        coords = rng.uniform(0.0, 1.0, size=(n, 2))
        g = build_gaussian_kernel_graph(coords, "euclidean", sigma_sq, epsilon)
        if g.is_connected():
            return g, coords
    raise InvalidParameterError(
        f"no connected graph after {max_tries} draws; increase sigma_sq or lower epsilon")


def laplacian(g, kind="combinatorial"):
    """Combinatorial ``D - A`` or symmetric-normalized ``I - D^-1/2 A D^-1/2`` Laplacian.

    Zero-degree nodes get ``D^-1/2 = 0`` under normalization, which leaves a unit
    diagonal entry and no coupling.
    """
    a = g.adjacency if isinstance(g, Graph) else Graph(g).adjacency
    deg = a.sum(axis=1)
    if kind == "combinatorial":
        return np.diag(deg) - a
    if kind in ("normalized", "symmetric-normalized"):
        inv_sqrt = np.zeros_like(deg)
        nz = deg > 0
        inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
        lap = np.eye(a.shape[0]) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
        return 0.5 * (lap + lap.T)
    raise InvalidParameterError(f"unknown Laplacian kind {kind!r}")


def _fix_signs(vecs, tol=1e-12):
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        idx = np.flatnonzero(np.abs(col) > tol)
        if idx.size and col[idx[0]] < 0:
            vecs[:, j] = -col
    return vecs


def _round_robin(n):
    """Rounds of disjoint ``(p, q)`` pairs covering every pair once (circle method)."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = sorted((min(p, q), max(p, q)) for p, q in pairs if p < n and q < n)
        if pairs:
            rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def eigendecompose(matrix, tol=1e-12, max_sweeps=100, kind="combinatorial"):
    """Eigenpairs of a real symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every ``(p, q)`` pair once in round-robin order; the
    rotations of one round act on disjoint index pairs, so they commute and are
    applied together. Sweeps stop once the off-diagonal Frobenius norm drops to
    ``tol * ||A||_F``. Eigenpairs are sorted ascending (stable, so exact ties
    keep their column order) and each eigenvector is flipped so that its first
    component above 1e-12 in magnitude is positive.

    Raises
    ------
    InvalidInputError
        If ``matrix`` is not symmetric within 1e-10.
    ConvergenceError
        If ``max_sweeps`` sweeps do not reach the tolerance.
    """
    a = check_symmetric(matrix, 1e-10, "matrix").copy()
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    target = tol * np.linalg.norm(a)
    rounds = _round_robin(n)

    def off_norm(m):
        return float(np.linalg.norm(m - np.diag(np.diag(m))))

    off = off_norm(a)
    sweeps = 0
    while off > target:
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps (off-norm {off:.3e})", off)
        for p, q in rounds:
            apq = a[p, q]
            live = apq != 0.0
            safe = np.where(live, apq, 1.0)
            theta = (a[q, q] - a[p, p]) / (2.0 * safe)
            t = np.where(live, np.copysign(1.0, theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0)),
                         0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rp, rq = a[p, :], a[q, :]
            a[p, :], a[q, :] = c[:, None] * rp - s[:, None] * rq, s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p], a[:, q]
            a[:, p], a[:, q] = cp * c - cq * s, cp * s + cq * c
            a[p, q] = np.where(live, 0.0, a[p, q])
            a[q, p] = a[p, q]
            vp, vq = v[:, p], v[:, q]
            v[:, p], v[:, q] = vp * c - vq * s, vp * s + vq * c
        sweeps += 1
        off = off_norm(a)

    vals = np.diag(a).copy()
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = _fix_signs(v[:, order].copy())
    return GraphSpectrum(vals, vecs, kind)
