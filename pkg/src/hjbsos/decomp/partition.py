"""Uniform grid partitions with checkerboard coloring."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..hjb import Box

UNSHADED = 0
SHADED = 1


@dataclass(frozen=True)
class SharedFacet:
    """Face ``x_axis = value`` between region ``lower`` (below) and ``upper``."""

    lower: int
    upper: int
    axis: int
    value: float


@dataclass(frozen=True)
class Partition:
    domain: Box
    counts: tuple[int, ...]
    regions: tuple[Box, ...]
    grid_index: tuple[tuple[int, ...], ...]
    facets: tuple[SharedFacet, ...]
    colors: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.regions)

    def of_color(self, color: int) -> list[int]:
        return [i for i, c in enumerate(self.colors) if c == color]

    def locate(self, x, tol: float = 1e-12) -> int:
        """Lowest-index region containing x."""
        for i, r in enumerate(self.regions):
            if r.contains(x, tol):
                return i
        raise ValueError(f"point {list(np.asarray(x, dtype=float))} lies outside the domain")


def make_grid_partition(domain: Box, counts: int | Sequence[int]) -> Partition:
    """Uniform grid; region ids run with the first axis fastest."""
    n = domain.nvars
    if isinstance(counts, int):
        counts = (counts,) * n
    counts = tuple(int(c) for c in counts)
    if len(counts) != n or any(c < 1 for c in counts):
        raise ValueError("need one positive region count per dimension")
    edges = [np.linspace(domain.lower[a], domain.upper[a], counts[a] + 1) for a in range(n)]
    # Pin the outer edges exactly so facet tests against the domain are exact.
    for a in range(n):
        edges[a][0], edges[a][-1] = domain.lower[a], domain.upper[a]
    indices = [tuple(reversed(t)) for t in itertools.product(*[range(c) for c in reversed(counts)])]
    pos = {idx: k for k, idx in enumerate(indices)}
    regions = tuple(
        Box(tuple(edges[a][idx[a]] for a in range(n)), tuple(edges[a][idx[a] + 1] for a in range(n)))
        for idx in indices
    )
    facets = []
    for k, idx in enumerate(indices):
        for a in range(n):
            if idx[a] + 1 < counts[a]:
                nb = idx[:a] + (idx[a] + 1,) + idx[a + 1:]
                facets.append(SharedFacet(k, pos[nb], a, float(edges[a][idx[a] + 1])))
    colors = tuple(sum(idx) % 2 for idx in indices)
    return Partition(domain, counts, regions, tuple(indices), tuple(facets), colors)
