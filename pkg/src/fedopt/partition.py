"""Assignment of examples to simulated nodes, and per-coordinate sparsity statistics."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError
from .model import Dataset


class Partition:
    """Disjoint, non-empty index blocks P_1..P_K covering [0, n)."""

    def __init__(self, blocks, n: int):
        blocks = tuple(np.sort(np.asarray(b, dtype=np.int64).reshape(-1)) for b in blocks)
        if len(blocks) < 1:
            raise DomainError("a partition needs at least one block")
        if any(b.size == 0 for b in blocks):
            raise DomainError("partition blocks must be non-empty")
        allidx = np.concatenate(blocks)
        if allidx.size != n or not np.array_equal(np.sort(allidx), np.arange(n)):
            raise DomainError("blocks must be disjoint and cover [0, n)")
        for b in blocks:
            b.setflags(write=False)
        self.blocks = blocks
        self.n = int(n)

    @property
    def K(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([b.size for b in self.blocks], dtype=np.int64)

    def is_balanced(self) -> bool:
        return bool(np.all(self.sizes * self.K == self.n))

    def node_of(self) -> np.ndarray:
        out = np.empty(self.n, dtype=np.int64)
        for k, b in enumerate(self.blocks):
            out[b] = k
        return out

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.n == other.n and self.K == other.K and all(
            np.array_equal(a, b) for a, b in zip(self.blocks, other.blocks))

    def __repr__(self):
        return f"Partition(K={self.K}, n={self.n}, sizes={self.sizes.tolist()})"


class PartitionKind(enum.Enum):
    CLUSTERED = "clustered"
    RESHUFFLED = "reshuffled"
    POWER_LAW = "power-law"


@dataclass(frozen=True)
class PartitionSpec:
    """How to split a dataset over ``K`` nodes.

    ``exponent`` is only read by POWER_LAW (0 gives balanced sizes).
    RESHUFFLED builds the CLUSTERED partition and then re-populates its
    blocks at random, keeping the sizes.
    """

    kind: PartitionKind
    K: int
    exponent: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", PartitionKind(self.kind))
        if self.K < 1:
            raise DomainError("K must be >= 1")
        if self.exponent < 0:
            raise DomainError("power-law exponent must be >= 0")


def partition_clustered(dataset: Dataset, spec: PartitionSpec) -> Partition:
    """Whole groups to nodes.

    With ``K`` equal to the number of groups every node holds exactly one
    group (node k gets the k-th smallest group id). With fewer nodes, groups
    are dealt round-robin in a seeded random order, so each group still lives
    on a single node.
    """
    if dataset.groups is None:
        raise DomainError("clustered partitioning needs per-example group ids")
    gids, inverse = np.unique(dataset.groups, return_inverse=True)
    G = gids.size
    if spec.K > G:
        raise DomainError(f"{spec.K} nodes requested but only {G} groups")
    if spec.K > dataset.n:
        raise DomainError("more nodes than examples")
    if spec.K == G:
        owner = np.arange(G)
    else:
        rng = np.random.default_rng(spec.seed)
        owner = np.empty(G, dtype=np.int64)
        owner[rng.permutation(G)] = np.arange(G) % spec.K
    node = owner[inverse]
    return Partition([np.flatnonzero(node == k) for k in range(spec.K)], dataset.n)


def partition_reshuffled(dataset: Dataset, base: Partition, seed: int) -> Partition:
    """Same block sizes as ``base``; members drawn by a seeded permutation of [0, n)."""
    if base.n != dataset.n:
        raise DomainError("base partition does not match dataset size")
    perm = np.random.default_rng(seed).permutation(base.n)
    cuts = np.cumsum(base.sizes)[:-1]
    return Partition(np.split(perm, cuts), base.n)


def power_law_sizes(n: int, K: int, exponent: float) -> np.ndarray:
    """Block sizes proportional to k^-exponent, summing to n, each at least 1.

    Largest-remainder rounding (ties to the lower node index); any empty
    block then takes one example from the currently largest block.
    """
    if exponent < 0:
        raise DomainError("power-law exponent must be >= 0")
    if not 1 <= K <= n:
        raise DomainError("need 1 <= K <= n")
    weights = np.arange(1, K + 1, dtype=np.float64) ** (-exponent)
    raw = n * weights / weights.sum()
    sizes = np.floor(raw + 1e-9).astype(np.int64)
    frac = raw - sizes
    short = n - int(sizes.sum())
    if short > 0:
        order = np.lexsort((np.arange(K), -frac))
        sizes[order[:short]] += 1
    elif short < 0:
        order = np.lexsort((np.arange(K), frac))
        sizes[order[:-short]] -= 1
    for k in np.flatnonzero(sizes == 0):
        sizes[np.argmax(sizes)] -= 1
        sizes[k] = 1
    return sizes


def partition_power_law(dataset: Dataset, K: int, exponent: float, seed: int) -> Partition:
    sizes = power_law_sizes(dataset.n, K, exponent)
    perm = np.random.default_rng(seed).permutation(dataset.n)
    return Partition(np.split(perm, np.cumsum(sizes)[:-1]), dataset.n)


def make_partition(dataset: Dataset, spec: PartitionSpec) -> Partition:
    if spec.kind is PartitionKind.CLUSTERED:
        return partition_clustered(dataset, spec)
    if spec.kind is PartitionKind.RESHUFFLED:
        return partition_reshuffled(dataset, partition_clustered(dataset, spec), spec.seed)
    return partition_power_law(dataset, spec.K, spec.exponent, spec.seed)


@dataclass(frozen=True, eq=False)
class SparsityStats:
    """Nonzero counts per coordinate, globally and per node, plus derived scalings.

    ``s[k, j] = phi[j] / phi_node[k, j]`` (0 where node k never sees j) and
    ``a[j] = K / omega[j]`` (0 where j never appears).
    """

    global_count: np.ndarray  # n^j, shape (d,)
    node_count: np.ndarray    # n_k^j, shape (K, d)
    node_sizes: np.ndarray    # n_k, shape (K,)
    n: int

    @property
    def K(self) -> int:
        return self.node_count.shape[0]

    @property
    def dim(self) -> int:
        return self.global_count.shape[0]

    @cached_property
    def phi_global(self) -> np.ndarray:
        return self.global_count / self.n

    @cached_property
    def phi_node(self) -> np.ndarray:
        return self.node_count / self.node_sizes[:, None]

    @cached_property
    def s(self) -> np.ndarray:
        out = np.zeros(self.node_count.shape)
        seen = self.node_count > 0
        num = np.broadcast_to(self.phi_global, out.shape)
        out[seen] = num[seen] / self.phi_node[seen]
        return out

    @cached_property
    def omega(self) -> np.ndarray:
        return np.count_nonzero(self.node_count, axis=0)

    @cached_property
    def a(self) -> np.ndarray:
        out = np.zeros(self.dim)
        present = self.omega > 0
        out[present] = self.K / self.omega[present]
        return out


def compute_stats(dataset: Dataset, partition: Partition) -> SparsityStats:
    if partition.n != dataset.n:
        raise DomainError("partition does not match dataset size")
    d = dataset.dim
    node_count = np.zeros((partition.K, d), dtype=np.int64)
    lens = np.diff(dataset.indptr)
    for k, rows in enumerate(partition.blocks):
        starts = dataset.indptr[rows]
        total = int(lens[rows].sum())
        if total:
            pos = np.repeat(starts - np.cumsum(lens[rows]) + lens[rows], lens[rows]) + np.arange(total)
            node_count[k] = np.bincount(dataset.indices[pos], minlength=d)
    global_count = np.bincount(dataset.indices, minlength=d).astype(np.int64)
    return SparsityStats(global_count, node_count, partition.sizes, dataset.n)


def write_partition(partition: Partition, stream) -> None:
    """One line per node: its example indices, space separated."""
    for b in partition.blocks:
        stream.write(" ".join(map(str, b.tolist())) + "\n")


def read_partition(stream, n: int | None = None) -> Partition:
    blocks = []
    for lineno, line in enumerate(stream, 1):
        line = line.strip()
        if not line:
            continue
        try:
            blocks.append([int(tok) for tok in line.split()])
        except ValueError:
            raise DomainError(f"partition file line {lineno}: non-integer index") from None
    if n is None:
        n = sum(len(b) for b in blocks)
    return Partition(blocks, n)
