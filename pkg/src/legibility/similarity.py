"""Segment-similarity structure: covariance of pre-softmax vectors,
cross-segment affinity, greedy modularity clustering, and 2D layouts.

Two similarity matrices live here. The covariance matrix treats every
image's logit vector as an observation and asks which segment columns move
together. The affinity matrix P is probability mass: P[i, j] is the mean
probability the model puts on j for images truly from i, plus the mean it
puts on i for images from j - symmetric by construction, in [0, 2], and
the basis for both the survey question pool and the clustering graph
(edge weights A = P off-diagonal).

Clustering is greedy modularity optimization: repeated local single-node
moves to the best neighboring community, then aggregation of communities
into supernodes, until modularity stops improving. A final single-node
polish pass on the original graph guarantees the returned partition is a
genuine local optimum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DataError
from .nnet import EvalResult


# ---------------------------------------------------------------------------
# matrices

def covariance(logit_matrix: np.ndarray) -> np.ndarray:
    """Unbiased sample covariance between segment columns of an (N, S)
    pre-softmax matrix; exactly symmetric."""
    x = np.asarray(logit_matrix, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"expected a 2-D matrix, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise DataError(f"need at least 2 rows, got {n}")
    if not np.all(np.isfinite(x)):
        raise DataError("logit matrix contains non-finite values")
    centered = x - x.mean(axis=0)
    q = centered.T @ centered / (n - 1)
    return (q + q.T) / 2.0


def logit_matrix(eval_result: EvalResult) -> np.ndarray:
    """Recover pre-softmax rows (up to the shift softmax ignores) as
    log-probabilities."""
    return np.log(np.maximum(eval_result.probs, 1e-300))


@dataclass
class SegmentAffinity:
    """Symmetric cross-segment probability-mass affinity."""

    matrix: np.ndarray       # (S, S), entries in [0, 2]
    counts: np.ndarray       # per-segment evaluated sample counts
    class_segments: list     # class index -> segment id


def affinity(eval_result: EvalResult) -> SegmentAffinity:
    """P[i, j] = mean prob of j over i's samples + mean prob of i over j's.

    The diagonal is twice the mean self-confidence. Every segment needs at
    least one evaluated sample.
    """
    s = eval_result.probs.shape[1]
    counts = np.bincount(eval_result.labels, minlength=s)
    for cls in range(s):
        if counts[cls] == 0:
            raise DataError(
                f"segment {eval_result.class_segments[cls]} has no evaluated samples")
    mean_probs = np.zeros((s, s), dtype=np.float64)
    for cls in range(s):
        mean_probs[cls] = eval_result.probs[eval_result.labels == cls].mean(axis=0)
    return SegmentAffinity(matrix=mean_probs + mean_probs.T, counts=counts,
                           class_segments=list(eval_result.class_segments))


def top_pairs(aff: SegmentAffinity, n: int) -> list:
    """The n highest-affinity unordered pairs (i != j), sorted descending;
    ties break on (min id, max id) ascending. n beyond the pair count is
    clamped with a warning."""
    p = aff.matrix
    s = p.shape[0]
    all_pairs = [(i, j) for i in range(s) for j in range(i + 1, s)]
    if n > len(all_pairs):
        warnings.warn(f"requested {n} pairs but only {len(all_pairs)} exist; clamping")
        n = len(all_pairs)
    all_pairs.sort(key=lambda ij: (-p[ij[0], ij[1]], ij[0], ij[1]))
    return all_pairs[:n]


# ---------------------------------------------------------------------------
# modularity clustering

@dataclass
class SimilarityGraph:
    """Weighted undirected graph over segments: symmetric adjacency,
    non-negative weights, diagonal = self-loop weight (counted once in 2m)."""

    adjacency: np.ndarray
    node_ids: list = field(default_factory=list)

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DataError(f"adjacency must be square, got {a.shape}")
        if not np.allclose(a, a.T):
            raise DataError("adjacency must be symmetric")
        if (a < 0).any():
            raise DataError("edge weights must be non-negative")
        self.adjacency = (a + a.T) / 2.0
        if not self.node_ids:
            self.node_ids = list(range(a.shape[0]))

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def total_weight_2m(self) -> float:
        return float(self.adjacency.sum())


def graph_from_affinity(aff: SegmentAffinity) -> SimilarityGraph:
    """Clustering graph: edge weights are the off-diagonal affinities."""
    a = aff.matrix.copy()
    np.fill_diagonal(a, 0.0)
    return SimilarityGraph(adjacency=a, node_ids=list(aff.class_segments))


def graph_from_covariance(q: np.ndarray, node_ids=None) -> SimilarityGraph:
    """Covariance as edge weights, negatives clipped to zero, diagonal dropped."""
    a = np.maximum(np.asarray(q, dtype=np.float64), 0.0)
    a = (a + a.T) / 2.0
    np.fill_diagonal(a, 0.0)
    return SimilarityGraph(adjacency=a, node_ids=list(node_ids) if node_ids else [])


def modularity(graph: SimilarityGraph, communities: np.ndarray) -> float:
    """Newman modularity: (1/2m) sum_ij [A_ij - k_i k_j / 2m] delta(c_i, c_j)."""
    a = graph.adjacency
    two_m = graph.total_weight_2m
    if two_m <= 0.0:
        raise DataError("graph has no edges")
    communities = np.asarray(communities)
    k = graph.degrees
    same = communities[:, None] == communities[None, :]
    return float(((a - np.outer(k, k) / two_m) * same).sum() / two_m)


def _community_sums(graph: SimilarityGraph, communities: np.ndarray, comm: int):
    """(sigma_in, sigma_tot) for one community: internal ordered-pair weight
    (incl. self-loops) and total incident degree."""
    members = communities == comm
    a = graph.adjacency
    sigma_in = float(a[np.ix_(members, members)].sum())
    sigma_tot = float(graph.degrees[members].sum())
    return sigma_in, sigma_tot


def delta_q(graph: SimilarityGraph, communities: np.ndarray, node: int,
            target: int) -> float:
    """Modularity gain of inserting an isolated node into a community.

    `communities[node]` must currently place the node alone (two-step
    move semantics: remove first, then insert). Matches a full modularity
    recomputation to floating-point accuracy.
    """
    communities = np.asarray(communities)
    if (communities == communities[node]).sum() != 1:
        raise DataError("node must be isolated in its own community before insertion")
    if target < 0:
        raise DataError(f"unknown target community {target}")
    # an unpopulated target is a fresh singleton community (gain 0 for
    # self-loop-free nodes); populated targets use their member sums
    a = graph.adjacency
    two_m = graph.total_weight_2m
    k_i = float(graph.degrees[node])
    members = communities == target
    members_wo_node = members.copy()
    members_wo_node[node] = False
    k_i_in = float(a[node, members_wo_node].sum())
    sigma_in = float(a[np.ix_(members_wo_node, members_wo_node)].sum())
    sigma_tot = float(graph.degrees[members_wo_node].sum())
    after = (sigma_in + 2.0 * k_i_in + a[node, node]) / two_m \
        - ((sigma_tot + k_i) / two_m) ** 2
    before = sigma_in / two_m - (sigma_tot / two_m) ** 2 - (k_i / two_m) ** 2
    return after - before


@dataclass
class CommunityPartition:
    """Louvain output: community label per node and the modularity trace."""

    communities: np.ndarray   # label per node, relabeled 0..C-1
    q: float
    q_trace: list             # modularity after each pass
    node_ids: list

    def as_dict(self) -> dict:
        return {str(nid): int(c) for nid, c in zip(self.node_ids, self.communities)}


def _insert_gain(k_in: float, self_loop: float, sigma_tot: float,
                 k_i: float, two_m: float) -> float:
    """Exact modularity gain of inserting an isolated node: the two-bracket
    formula collapses to (2*k_in + a_ii)/2m - 2*sigma_tot*k_i/(2m)^2."""
    return (2.0 * k_in + self_loop) / two_m - 2.0 * sigma_tot * k_i / (two_m * two_m)


def _local_moves(adjacency: np.ndarray, communities: np.ndarray,
                 rng: np.random.Generator, gain_eps: float = 1e-12) -> bool:
    """Local-move phase in place; returns True if any node moved.

    Each node is detached and re-inserted where the insertion gain is
    maximal, candidates being its old community, communities of neighbors,
    and a fresh singleton. Ties break to the lowest community id (a fresh
    community loses all ties); a node moves only when it beats returning
    home by more than gain_eps.
    """
    n = adjacency.shape[0]
    two_m = adjacency.sum()
    degrees = adjacency.sum(axis=1)
    sigma_tot = np.zeros(n)
    counts = np.zeros(n, dtype=int)
    for node, c in enumerate(communities):
        sigma_tot[c] += degrees[node]
        counts[c] += 1

    moved_any = False
    sweeping = True
    while sweeping:
        sweeping = False
        for node in rng.permutation(n):
            c_old = communities[node]
            k_i = degrees[node]
            sigma_tot[c_old] -= k_i
            counts[c_old] -= 1
            communities[node] = -1

            k_in: dict = {c_old: 0.0}
            for j in np.flatnonzero(adjacency[node] > 0):
                cj = communities[j]
                if cj >= 0:
                    k_in[cj] = k_in.get(cj, 0.0) + adjacency[node, j]
            self_loop = adjacency[node, node]

            best_c = c_old
            best_gain = _insert_gain(k_in[c_old], self_loop, sigma_tot[c_old], k_i, two_m)
            for c in sorted(k_in):
                if c == c_old:
                    continue
                gain = _insert_gain(k_in[c], self_loop, sigma_tot[c], k_i, two_m)
                if gain > best_gain + gain_eps or (gain > best_gain - gain_eps and c < best_c):
                    best_c, best_gain = c, gain
            if counts[c_old] > 0:  # node could also strike out on its own
                fresh_gain = _insert_gain(0.0, self_loop, 0.0, k_i, two_m)
                if fresh_gain > best_gain + gain_eps:
                    best_c = int(np.flatnonzero(counts == 0)[0])
                    best_gain = fresh_gain

            communities[node] = best_c
            sigma_tot[best_c] += k_i
            counts[best_c] += 1
            if best_c != c_old:
                sweeping = True
                moved_any = True
    return moved_any


def _relabel(communities: np.ndarray) -> np.ndarray:
    """Compact labels to 0..C-1, ordered by first appearance."""
    mapping: dict = {}
    out = np.empty_like(communities)
    for i, c in enumerate(communities):
        if c not in mapping:
            mapping[c] = len(mapping)
        out[i] = mapping[c]
    return out


def _aggregate(adjacency: np.ndarray, communities: np.ndarray) -> np.ndarray:
    """Collapse communities into supernodes; intra weight becomes a self-loop."""
    n_comm = int(communities.max()) + 1
    onehot = np.zeros((adjacency.shape[0], n_comm))
    onehot[np.arange(adjacency.shape[0]), communities] = 1.0
    return onehot.T @ adjacency @ onehot


def louvain(graph: SimilarityGraph, seed: int = 0,
            pass_eps: float = 1e-9) -> CommunityPartition:
    """Greedy modularity optimization with seeded node visit order.

    Alternates local-move phases with community aggregation until the
    modularity gain of a pass drops below pass_eps, then runs one polish
    phase of single-node moves on the original graph so the returned
    partition is a true local optimum (no single-node move improves Q
    beyond ~1e-12). The modularity trace is non-decreasing.
    """
    if graph.total_weight_2m <= 0.0:
        raise DataError("graph has no edges")
    rng = np.random.default_rng(seed)
    orig = graph.adjacency
    n = orig.shape[0]

    node_to_comm = np.arange(n)   # original node -> current community label
    current = orig.copy()         # aggregated adjacency, one node per community
    q_trace = [modularity(graph, node_to_comm)]

    while True:
        comm = np.arange(current.shape[0])
        _local_moves(current, comm, rng)
        comm = _relabel(comm)
        node_to_comm = comm[node_to_comm]
        q_now = modularity(graph, node_to_comm)
        q_trace.append(q_now)
        if q_now - q_trace[-2] < pass_eps:
            break
        current = _aggregate(current, comm)

    polish = node_to_comm.copy()
    if _local_moves(orig, polish, rng):
        node_to_comm = _relabel(polish)
        q_trace.append(modularity(graph, node_to_comm))

    return CommunityPartition(communities=_relabel(node_to_comm),
                              q=q_trace[-1], q_trace=q_trace,
                              node_ids=list(graph.node_ids))


# ---------------------------------------------------------------------------
# 2D layout

def layout2d(matrix: np.ndarray, seed: int = 0) -> np.ndarray:
    """Classical metric MDS on dissimilarity d = max(P) - P.

    Returns (S, 2) coordinates, deterministic (the seed is accepted for
    interface symmetry; eigendecomposition needs no randomness, and signs
    are fixed by making each axis's largest-magnitude coordinate positive).
    """
    p = np.asarray(matrix, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise DataError(f"expected a square matrix, got {p.shape}")
    s = p.shape[0]
    if s < 2:
        raise DataError("need at least 2 nodes to lay out")
    if not np.allclose(p, p.T):
        raise DataError("matrix must be symmetric")

    d = p.max() - p
    np.fill_diagonal(d, 0.0)
    d2 = d * d
    j = np.eye(s) - np.ones((s, s)) / s
    b = -0.5 * j @ d2 @ j
    eigvals, eigvecs = scipy.linalg.eigh(b)
    order = np.argsort(eigvals)[::-1][:2]
    coords = np.zeros((s, 2))
    for axis, idx in enumerate(order):
        lam = max(eigvals[idx], 0.0)
        vec = eigvecs[:, idx]
        flip = np.argmax(np.abs(vec))
        if vec[flip] < 0:
            vec = -vec
        coords[:, axis] = vec * np.sqrt(lam)
    return coords


def save_matrix_csv(matrix: np.ndarray, node_ids, path) -> None:
    """CSV with a header row/column of segment ids."""
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["segment_id"] + [str(i) for i in node_ids])
        for i, row in zip(node_ids, np.asarray(matrix)):
            w.writerow([str(i)] + [repr(float(v)) for v in row])


def load_matrix_csv(path):
    import csv
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    node_ids = [int(v) for v in rows[0][1:]]
    matrix = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return matrix, node_ids


def save_layout_csv(coords: np.ndarray, node_ids, path) -> None:
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["segment_id", "x", "y"])
        for nid, (x, y) in zip(node_ids, coords):
            w.writerow([str(nid), repr(float(x)), repr(float(y))])
