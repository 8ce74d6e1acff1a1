"""Neighbor graphs: the binary structure underneath a contiguity matrix."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InvalidValue


@dataclass(frozen=True)
class NeighborGraph:
    """Undirected, irreflexive neighbor structure over an ordered id list.

    ``adjacency[i]`` is the sorted tuple of neighbor *indices* of
    ``region_ids[i]``.
    """

    region_ids: tuple[str, ...]
    adjacency: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        n = len(self.region_ids)
        if len(self.adjacency) != n:
            raise InvalidValue("adjacency length does not match region_ids")
        if len(set(self.region_ids)) != n:
            raise InvalidValue("region ids must be unique")
        for i, nbrs in enumerate(self.adjacency):
            for j in nbrs:
                if j == i:
                    raise InvalidValue(f"region {self.region_ids[i]!r} lists itself as a neighbor")
                if not 0 <= j < n:
                    raise InvalidValue(f"neighbor index {j} out of range")
                if i not in self.adjacency[j]:
                    raise InvalidValue(
                        f"asymmetric neighbors: {self.region_ids[i]!r} -> "
                        f"{self.region_ids[j]!r} has no reverse link"
                    )

    @classmethod
    def from_edges(cls, region_ids: Sequence[str], edges: Iterable[tuple[int, int]]) -> "NeighborGraph":
        n = len(region_ids)
        sets: list[set[int]] = [set() for _ in range(n)]
        for i, j in edges:
            if i == j:
                continue
            sets[i].add(j)
            sets[j].add(i)
        return cls(tuple(region_ids), tuple(tuple(sorted(s)) for s in sets))

    @classmethod
    def from_neighbor_ids(cls, mapping: dict[str, Iterable[str]], order: Sequence[str] | None = None) -> "NeighborGraph":
        ids = tuple(order) if order is not None else tuple(mapping)
        index = {r: i for i, r in enumerate(ids)}
        adj = tuple(tuple(sorted(index[j] for j in mapping.get(r, ()))) for r in ids)
        return cls(ids, adj)

    @property
    def n(self) -> int:
        return len(self.region_ids)

    def edges(self) -> set[tuple[int, int]]:
        """Undirected edge set as ``(i, j)`` pairs with ``i < j``."""
        return {(i, j) for i, nbrs in enumerate(self.adjacency) for j in nbrs if i < j}

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def neighbors(self, region_id: str) -> tuple[str, ...]:
        i = self.region_ids.index(region_id)
        return tuple(self.region_ids[j] for j in self.adjacency[i])

    def islands(self) -> tuple[str, ...]:
        return tuple(r for r, a in zip(self.region_ids, self.adjacency) if not a)

    def higher_order(self, order: int, cumulative: bool = True) -> "NeighborGraph":
        """Neighbors within graph distance ``order`` (or exactly ``order``)."""
        if order < 1:
            raise InvalidValue("order must be a positive integer")
        if order == 1:
            return self
        out: list[tuple[int, ...]] = []
        for src in range(self.n):
            dist = {src: 0}
            queue = deque([src])
            while queue:
                v = queue.popleft()
                if dist[v] == order:
                    continue
                for u in self.adjacency[v]:
                    if u not in dist:
                        dist[u] = dist[v] + 1
                        queue.append(u)
            if cumulative:
                keep = [v for v, d in dist.items() if 0 < d <= order]
            else:
                keep = [v for v, d in dist.items() if d == order]
            out.append(tuple(sorted(keep)))
        return NeighborGraph(self.region_ids, tuple(out))

    def reorder(self, order: Sequence[str]) -> "NeighborGraph":
        mapping = {r: self.neighbors(r) for r in self.region_ids}
        if set(order) != set(self.region_ids):
            raise InvalidValue("reorder requires the same id set")
        return NeighborGraph.from_neighbor_ids(mapping, order)
