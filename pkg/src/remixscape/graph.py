"""Design inheritance (remix) network and remix analytics.

Edges point from a remix (child) to each design it derives from (parent).
"""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, rankdata

from .corpus import DesignRecord
from .errors import CycleDetected, DegenerateGroups, DuplicateId, UnknownDesign

log = logging.getLogger(__name__)

ERROR = "error"
BREAK = "break"

EXACT_LIMIT = 20  # exact U distribution while both groups are smaller than this


@dataclass(frozen=True, eq=False)
class InheritanceGraph:
    nodes: tuple[DesignRecord, ...]
    edges: tuple[tuple[str, str], ...]
    dangling: tuple[tuple[str, str], ...] = ()
    removed: tuple[tuple[str, str], ...] = ()  # edges dropped to break cycles
    time_violations: tuple[tuple[str, str], ...] = ()  # child older than parent
    _parents: dict = field(default=None, repr=False)
    _children: dict = field(default=None, repr=False)
    _depth: dict = field(default=None, repr=False)

    def __post_init__(self):
        parents = {r.id: [] for r in self.nodes}
        children = {r.id: [] for r in self.nodes}
        for c, p in self.edges:
            parents[c].append(p)
            children[p].append(c)
        object.__setattr__(self, "_parents", parents)
        object.__setattr__(self, "_children", children)
        object.__setattr__(self, "_depth", _longest_paths(self.nodes, parents, children))

    def __contains__(self, design_id) -> bool:
        return design_id in self._parents

    def _check(self, design_id):
        if design_id not in self._parents:
            raise UnknownDesign(f"unknown design {design_id!r}")

    def parents(self, design_id) -> list[str]:
        self._check(design_id)
        return list(self._parents[design_id])

    def children(self, design_id) -> list[str]:
        self._check(design_id)
        return list(self._children[design_id])

    def record(self, design_id) -> DesignRecord:
        self._check(design_id)
        return next(r for r in self.nodes if r.id == design_id)

    def edges_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["child_id", "parent_id"])
        w.writerows(self.edges)
        return out.getvalue()


def _longest_paths(nodes, parents, children):
    """Depth of every node (longest path to a root) in topological order."""
    pending = {r.id: len(parents[r.id]) for r in nodes}
    queue = deque(r.id for r in nodes if pending[r.id] == 0)
    depth = {i: 0 for i in queue}
    while queue:
        p = queue.popleft()
        for c in children[p]:
            depth[c] = max(depth.get(c, 0), depth[p] + 1)
            pending[c] -= 1
            if pending[c] == 0:
                queue.append(c)
    return depth


def find_cycle(order, parents) -> list[str] | None:
    """One directed cycle as [v0, v1, ..., v0], or None.  Deterministic."""
    state = dict.fromkeys(order, 0)  # 0 new, 1 on stack, 2 done
    for root in order:
        if state[root]:
            continue
        stack = [(root, iter(parents[root]))]
        path = [root]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
                path.pop()
            elif state[nxt] == 1:
                return path[path.index(nxt):] + [nxt]
            elif state[nxt] == 0:
                state[nxt] = 1
                stack.append((nxt, iter(parents[nxt])))
                path.append(nxt)
    return None


def build_graph(records, cycle_policy: str = ERROR) -> InheritanceGraph:
    if cycle_policy not in (ERROR, BREAK):
        raise ValueError(f"cycle_policy must be {ERROR!r} or {BREAK!r}")
    records = tuple(records)
    by_id = {}
    for r in records:
        if r.id in by_id:
            raise DuplicateId(r.id)
        by_id[r.id] = r
    edges, dangling = [], []
    for r in records:
        for p in r.parents:
            (edges if p in by_id else dangling).append((r.id, p))

    order = [r.id for r in records]
    removed = []
    while True:
        parents = {i: [] for i in order}
        for c, p in edges:
            parents[c].append(p)
        cycle = find_cycle(order, parents)
        if cycle is None:
            break
        if cycle_policy == ERROR:
            raise CycleDetected(cycle)
        pairs = list(zip(cycle[:-1], cycle[1:]))
        victim = min(pairs, key=lambda e: (by_id[e[0]].timestamp, e[0]))
        log.warning("breaking inheritance cycle %s by removing edge %s -> %s",
                    " -> ".join(cycle), *victim)
        edges.remove(victim)
        removed.append(victim)

    violations = [(c, p) for c, p in edges if by_id[c].timestamp < by_id[p].timestamp]
    if violations:
        log.warning("%d edge(s) where the remix predates its parent", len(violations))
    return InheritanceGraph(records, tuple(edges), tuple(dangling), tuple(removed),
                            tuple(violations))


def remix_depth(graph: InheritanceGraph, design_id: str) -> int:
    graph._check(design_id)
    return graph._depth[design_id]


def descendant_count(graph: InheritanceGraph, design_id: str) -> int:
    """Number of transitive remixes of ``design_id``."""
    graph._check(design_id)
    seen = {design_id}
    queue = deque([design_id])
    while queue:
        for c in graph._children[queue.popleft()]:
            if c not in seen:
                seen.add(c)
                queue.append(c)
    return len(seen) - 1


def _component_count(graph):
    parent = {r.id: r.id for r in graph.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for c, p in graph.edges:
        parent[find(c)] = find(p)
    return len({find(i) for i in parent})


def graph_summary(graph: InheritanceGraph) -> dict:
    return {
        "node_count": len(graph.nodes),
        "edge_count": len(graph.edges),
        "root_count": sum(1 for r in graph.nodes if not graph._parents[r.id]),
        "max_depth": max(graph._depth.values(), default=0),
        "dangling_count": len(graph.dangling),
        "component_count": _component_count(graph),
    }


# ---------------------------------------------------------------------------
# remix vs. interest


def _exact_sf_mid(pooled, n1, observed2):
    """Mid-p P(S > s) + P(S = s)/2 for doubled rank sum S of a random n1-subset."""
    twice = np.rint(2 * rankdata(pooled)).astype(np.int64)
    top = int(twice.sum())
    counts = np.zeros((n1 + 1, top + 1), dtype=np.float64)
    counts[0, 0] = 1.0
    for r in twice:
        counts[1:, r:] += counts[:-1, : top + 1 - r].copy()
    dist = counts[n1]
    total = dist.sum()
    return (dist[observed2 + 1:].sum() + 0.5 * dist[observed2]) / total


def mann_whitney_greater(x, y, method: str = "auto"):
    """U of ``x`` over ``y`` and the one-sided p-value for "x tends larger".

    Exact: permutation distribution of the (mid)rank sum conditional on the
    observed ties, reported as a mid-p value.  Normal: tie-corrected
    variance, no continuity correction.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n1, n2 = len(x), len(y)
    pooled = np.concatenate([x, y])
    ranks = rankdata(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2)
    if method == "auto":
        method = "exact" if max(n1, n2) < EXACT_LIMIT else "normal"
    if method == "exact":
        observed2 = int(round(2 * ranks[:n1].sum()))
        p = _exact_sf_mid(pooled, n1, observed2)
    elif method == "normal":
        n = n1 + n2
        _, t = np.unique(pooled, return_counts=True)
        var = n1 * n2 / 12 * ((n + 1) - (t ** 3 - t).sum() / (n * (n - 1)))
        p = 0.5 if var <= 0 else float(norm.sf((u - n1 * n2 / 2) / math.sqrt(var)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return u, float(min(max(p, 0.0), 1.0)), method


def remix_interest_stat(graph: InheritanceGraph, method: str = "auto") -> dict:
    """Do remixes attract more popularity than originals?

    A remix is any design that declares at least one parent (present in
    the corpus or not); an original declares none.
    """
    remix = [r.popularity for r in graph.nodes if r.parents]
    original = [r.popularity for r in graph.nodes if not r.parents]
    if not remix or not original:
        raise DegenerateGroups(
            f"need at least one remix and one original (got {len(remix)} and {len(original)})"
        )
    u, p, _ = mann_whitney_greater(remix, original, method)
    n1, n2 = len(remix), len(original)
    return {
        "n_remix": n1,
        "n_original": n2,
        "U": u,
        "p_one_sided": p,
        "rank_biserial": 2 * u / (n1 * n2) - 1,
    }
