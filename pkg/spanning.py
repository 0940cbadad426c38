"""Weighted spanning trees and forests: box exhaustions, Wilson's algorithm, exact oracles.

Graphs are networkx multigraphs whose edges are keyed by an integer tag and carry
a `conductance` attribute, so parallel edges to the wired vertex stay distinct.
"""

import math
from bisect import bisect_right
from collections.abc import Hashable, Iterable
from dataclasses import dataclass, field, replace
from functools import cached_property, partial
from itertools import combinations, product
from typing import Literal

import networkx as nx
import numpy as np
from loguru import logger
from networkx.utils import UnionFind

from config import Budget, RunDefaults
from errors import BudgetExceededError, DomainError, require_dimension, require_lambda
from lattice import conductance
from models import EstimatorReport, Lattice, LatticePoint
from monte_carlo import alpha_table
from seeding import run_trials, trial_generator

Boundary = Literal["free", "wired"]
BoxShape = Literal["box", "ball"]
Vertex = Hashable

WIRED = "wired"

# Uniforms drawn per refill while a loop-erased walk runs
UNIFORM_BLOCK = 256


@dataclass(frozen=True)
class Edge:
    tag: int
    a: Vertex
    b: Vertex
    conductance: float


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """A connected, frozen multigraph with positive conductances.

    `root` names the vertex that plays the wired boundary ∂_n, if any;
    box metadata (d, n, lam, boundary) is None for hand-built graphs.
    """

    graph: nx.MultiGraph
    root: Vertex | None = None
    d: int | None = None
    n: int | None = None
    lam: float | None = None
    boundary: Boundary | None = None

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[tuple[Vertex, Vertex, float]],
        root: Vertex | None = None,
        **metadata,
    ) -> "WeightedGraph":
        graph = nx.MultiGraph()
        for tag, (a, b, c) in enumerate(edges):
            if a == b:
                raise DomainError(f"self-loop at {a}", vertex=str(a))
            if not c > 0:
                raise DomainError(f"conductance must be positive, got {c}", tag=tag)
            graph.add_edge(a, b, key=tag, conductance=float(c))
        if graph.number_of_nodes() == 0 or not nx.is_connected(graph):
            raise DomainError("weighted graph must be nonempty and connected")
        if root is not None and root not in graph:
            raise DomainError(f"root {root} is not a vertex", root=str(root))
        return cls(graph=nx.freeze(graph), root=root, **metadata)

    @cached_property
    def vertices(self) -> list[Vertex]:
        return list(self.graph.nodes)

    @cached_property
    def edges(self) -> list[Edge]:
        """Edges ordered by tag."""
        return sorted(
            (
                Edge(tag=key, a=a, b=b, conductance=data["conductance"])
                for a, b, key, data in self.graph.edges(keys=True, data=True)
            ),
            key=lambda edge: edge.tag,
        )

    @property
    def is_multigraph(self) -> bool:
        return any(
            self.graph.number_of_edges(a, b) > 1 for a, b in set(self.graph.edges())
        )

    def edge(self, tag: int) -> Edge:
        return self.edges[tag]

    @cached_property
    def walk_table(
        self,
    ) -> tuple[dict[Vertex, int], list[tuple[list[int], list[int], list[float]]]]:
        """Per vertex index: (neighbor indices, edge tags, cumulative conductances)."""
        index = {v: i for i, v in enumerate(self.vertices)}
        table = []
        for v in self.vertices:
            targets, tags, cumulative, total = [], [], [], 0.0
            for _, w, key, c in sorted(
                self.graph.edges(v, keys=True, data="conductance"), key=lambda e: e[2]
            ):
                total += c
                targets.append(index[w])
                tags.append(key)
                cumulative.append(total)
            table.append((targets, tags, cumulative))
        return index, table


@dataclass(frozen=True, eq=False)
class ForestSample:
    """A spanning tree of `graph`; components are those of the tree with the root removed."""

    graph: WeightedGraph
    chosen_edges: frozenset[int]
    root: Vertex | None = None
    components: tuple[frozenset[Vertex], ...] = field(default=())

    def is_spanning_tree(self) -> bool:
        if len(self.chosen_edges) != len(self.graph.vertices) - 1:
            return False
        return _is_acyclic(self.graph, self.chosen_edges)


@dataclass(frozen=True)
class ForestStats:
    component_count: int
    component_sizes: tuple[int, ...]


@dataclass(frozen=True)
class CutLaw:
    """Empirical law of the deleted edge on the wired ℤ¹ cycle, with the exact finite-n law."""

    counts: dict[int, int]
    exact: dict[int, float]
    trials: int
    master_seed: int

    def frequency(self, i: int) -> float:
        return self.counts.get(i, 0) / self.trials

    def rows(self) -> list[tuple[int, int, float, float]]:
        """(outcome, count, frequency, exact_value) for every cut position."""
        return [
            (i, self.counts.get(i, 0), self.frequency(i), self.exact[i])
            for i in sorted(self.exact)
        ]


@dataclass(frozen=True)
class TreeCountReport:
    lower_bound_k: int
    alpha_table: dict[int, EstimatorReport]
    alpha_doubled: dict[int, EstimatorReport]
    starts: tuple[LatticePoint, ...]

    def relative_decay(self, k: int) -> float:
        """(α_H − α_2H) / α_H, or inf when α_H = 0."""
        at_horizon = self.alpha_table[k].point_estimate
        doubled = self.alpha_doubled[k].point_estimate
        assert isinstance(at_horizon, float) and isinstance(doubled, float)
        if at_horizon == 0.0:
            return math.inf
        return (at_horizon - doubled) / at_horizon


def _is_acyclic(g: WeightedGraph, tags: Iterable[int]) -> bool:
    sets = UnionFind()
    for tag in tags:
        edge = g.edge(tag)
        if sets[edge.a] == sets[edge.b]:
            return False
        sets.union(edge.a, edge.b)
    return True


def build_box(
    d: int,
    n: int,
    lam: float,
    boundary: Boundary = "wired",
    shape: BoxShape = "box",
) -> WeightedGraph:
    """The cube [−n, n]^d (or the ball B_G(n)) with conductances λ^(−|e|).

    Wired boxes glue every outside vertex into WIRED, keeping one parallel edge
    per boundary-crossing lattice edge.
    """
    d = require_dimension(d)
    lam = require_lambda(lam, allow_reference=True)
    if n < 1:
        raise DomainError(f"box size must be at least 1, got {n}", n=n)
    if boundary not in ("free", "wired"):
        raise DomainError(f"unknown boundary {boundary!r}", boundary=boundary)
    if shape not in ("box", "ball"):
        raise DomainError(f"unknown box shape {shape!r}", shape=shape)

    lattice = Lattice(d)
    inside = list(lattice.box(n) if shape == "box" else lattice.ball(n))
    members = set(inside)

    edges: list[tuple[Vertex, Vertex, float]] = []
    for x in inside:
        for y in lattice.neighbors(x):
            if y in members:
                if x < y:
                    edges.append((x, y, conductance(x, y, lam)))
            elif boundary == "wired":
                edges.append((x, WIRED, conductance(x, y, lam)))

    g = WeightedGraph.from_edges(
        edges,
        root=WIRED if boundary == "wired" else None,
        d=d,
        n=n,
        lam=lam,
        boundary=boundary,
    )
    logger.debug(
        "Box built",
        d=d,
        n=n,
        boundary=boundary,
        shape=shape,
        vertices=len(g.vertices),
        edges=len(g.edges),
    )
    return g


def wilson_ust(
    g: WeightedGraph,
    root: Vertex | None = None,
    seed: int = RunDefaults.SEED,
    *,
    rng: np.random.Generator | None = None,
) -> ForestSample:
    """Sample a spanning tree with probability ∝ Π c(e) by loop-erased walks to the tree."""
    walk_root = root if root is not None else g.root
    if walk_root is None:
        walk_root = g.vertices[0]
    if walk_root not in g.graph:
        raise DomainError(f"root {walk_root} is not a vertex", root=str(walk_root))
    rng = rng or trial_generator(seed)

    index, table = g.walk_table
    size = len(g.vertices)
    in_tree = [False] * size
    in_tree[index[walk_root]] = True
    next_vertex = [-1] * size
    next_tag = [-1] * size

    uniforms = rng.random(UNIFORM_BLOCK)
    used = 0
    for start in range(size):
        u = start
        while not in_tree[u]:
            if used == UNIFORM_BLOCK:
                uniforms, used = rng.random(UNIFORM_BLOCK), 0
            targets, tags, cumulative = table[u]
            j = bisect_right(cumulative, uniforms[used] * cumulative[-1])
            j = min(j, len(targets) - 1)
            used += 1
            next_vertex[u], next_tag[u] = targets[j], tags[j]
            u = targets[j]
        u = start
        while not in_tree[u]:
            in_tree[u] = True
            u = next_vertex[u]

    chosen = frozenset(tag for tag in next_tag if tag >= 0)
    return ForestSample(
        graph=g,
        chosen_edges=chosen,
        root=g.root,
        components=_components(g, chosen),
    )


def _components(g: WeightedGraph, chosen: frozenset[int]) -> tuple[frozenset, ...]:
    tree = nx.Graph()
    tree.add_nodes_from(g.vertices)
    for tag in chosen:
        edge = g.edge(tag)
        tree.add_edge(edge.a, edge.b)
    if g.root is not None:
        tree.remove_node(g.root)
    parts = [frozenset(part) for part in nx.connected_components(tree)]
    return tuple(sorted(parts, key=lambda part: (-len(part), sorted(map(str, part)))))


def _wilson_trial(trial: int, *, g: WeightedGraph, master_seed: int) -> frozenset[int]:
    return wilson_ust(g, rng=trial_generator(master_seed, trial)).chosen_edges


def ust_samples(
    g: WeightedGraph,
    trials: int,
    master_seed: int = RunDefaults.SEED,
    workers: int = RunDefaults.WORKERS,
) -> dict[frozenset[int], int]:
    """Counts of sampled spanning trees over independent Wilson runs."""
    trial = partial(_wilson_trial, g=g, master_seed=master_seed)
    counts: dict[frozenset[int], int] = {}
    for tree in run_trials(trial, trials, workers):
        counts[tree] = counts.get(tree, 0) + 1
    return counts


def ust_exact(g: WeightedGraph, budget: Budget | None = None) -> dict[frozenset[int], float]:
    """Exact UST law by enumerating edge subsets of size |V| − 1."""
    budget = budget or Budget()
    size = len(g.vertices)
    if size > budget.max_exact_tree_vertices:
        raise BudgetExceededError(
            f"exact spanning-tree enumeration is limited to "
            f"{budget.max_exact_tree_vertices} vertices, graph has {size}",
            vertices=size,
        )

    weights: dict[frozenset[int], float] = {}
    for tags in combinations(range(len(g.edges)), size - 1):
        if _is_acyclic(g, tags):
            weights[frozenset(tags)] = math.prod(g.edge(t).conductance for t in tags)
    total = math.fsum(weights.values())
    return {tree: weight / total for tree, weight in weights.items()}


def _laplacian(g: WeightedGraph) -> np.ndarray:
    return (
        nx.laplacian_matrix(g.graph, nodelist=g.vertices, weight="conductance")
        .toarray()
        .astype(np.float64)
    )


def tree_weight_total(g: WeightedGraph) -> float:
    """Σ_T Ξ(T) by the weighted matrix-tree theorem."""
    reduced = _laplacian(g)[1:, 1:]
    if reduced.size == 0:
        return 1.0
    sign, logdet = np.linalg.slogdet(reduced)
    return float(sign * np.exp(logdet))


def edge_inclusion_probabilities(g: WeightedGraph) -> dict[int, float]:
    """P(e ∈ T) = c(e)·R_eff(e) under the UST, from the Laplacian pseudo-inverse."""
    inverse = np.linalg.pinv(_laplacian(g))
    index = {v: i for i, v in enumerate(g.vertices)}
    probabilities = {}
    for edge in g.edges:
        a, b = index[edge.a], index[edge.b]
        resistance = inverse[a, a] + inverse[b, b] - 2.0 * inverse[a, b]
        probabilities[edge.tag] = edge.conductance * float(resistance)
    return probabilities


def wsf_z1_exact(lam: float, i: int) -> float:
    """P[𝔉 = {T_{i−1}^−, T_i^+}] = ½(1−λ)λ^(|i|∧|i−1|)."""
    lam = require_lambda(lam)
    return 0.5 * (1.0 - lam) * lam ** min(abs(i), abs(i - 1))


def wsf_z1_finite(lam: float, n: int) -> dict[int, float]:
    """Exact law of the deleted edge on the wired box [−n, n] ⊂ ℤ¹.

    Outcome i ∈ [−n+1, n] is the edge {i−1, i}; i = −n and i = n+1 are the
    boundary edges {−n, ∂} and {n, ∂}. Each edge is deleted with probability ∝ 1/c(e).
    """
    lam = require_lambda(lam, allow_reference=True)
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}", n=n)
    weights = {i: lam ** min(abs(i), abs(i - 1)) for i in range(-n, n + 2)}
    total = math.fsum(weights.values())
    return {i: w / total for i, w in weights.items()}


def _cut_position(edge: Edge) -> int:
    """Cut label of an edge of the wired ℤ¹ box."""
    if edge.a == WIRED or edge.b == WIRED:
        inner = edge.b if edge.a == WIRED else edge.a
        assert isinstance(inner, LatticePoint)
        x = inner.coords[0]
        return x + 1 if x > 0 else x
    assert isinstance(edge.a, LatticePoint) and isinstance(edge.b, LatticePoint)
    return max(edge.a.coords[0], edge.b.coords[0])


def _z1_trial(trial: int, *, g: WeightedGraph, master_seed: int) -> int:
    sample = wilson_ust(g, rng=trial_generator(master_seed, trial))
    (deleted,) = set(range(len(g.edges))) - sample.chosen_edges
    return _cut_position(g.edge(deleted))


def wsf_z1_sample(
    lam: float,
    n: int,
    trials: int,
    seed: int = RunDefaults.SEED,
    workers: int = RunDefaults.WORKERS,
) -> CutLaw:
    g = build_box(1, n, lam, "wired")
    trial = partial(_z1_trial, g=g, master_seed=seed)
    counts: dict[int, int] = {}
    for i in run_trials(trial, trials, workers):
        counts[i] = counts.get(i, 0) + 1
    logger.info("Sampled wired forests on Z", lam=lam, n=n, trials=trials)
    return CutLaw(
        counts=counts, exact=wsf_z1_finite(lam, n), trials=trials, master_seed=seed
    )


def forest_stats(sample: ForestSample) -> ForestStats:
    """Components of the tree once the wired vertex is removed."""
    if sample.root is None:
        raise DomainError("forest statistics need a wired sample with a root vertex")
    degree = sum(
        1
        for tag in sample.chosen_edges
        if sample.root in (sample.graph.edge(tag).a, sample.graph.edge(tag).b)
    )
    sizes = tuple(len(part) for part in sample.components)
    assert degree == len(sizes)
    return ForestStats(component_count=degree, component_sizes=sizes)


def orthant_starts(d: int, k: int, r: int) -> list[LatticePoint]:
    """k distinct starts: copy c of orthant s sits at s·r(c+1)·(1, …, 1)."""
    d = require_dimension(d)
    if k < 1 or r < 1:
        raise DomainError(f"need k ≥ 1 and r ≥ 1, got k={k}, r={r}")
    signs = list(product((1, -1), repeat=d))
    starts = []
    for j in range(k):
        copy, orthant = divmod(j, len(signs))
        scale = r * (copy + 1)
        starts.append(LatticePoint(tuple(s * scale for s in signs[orthant])))
    return starts


def tree_count_estimate(
    d: int,
    lam: float,
    horizon: int,
    trials: int,
    seed: int = RunDefaults.SEED,
    k_max: int | None = None,
    start_distance: int | None = None,
    decay_tolerance: float = RunDefaults.DECAY_TOLERANCE,
    confidence: float = RunDefaults.CONFIDENCE,
    workers: int = RunDefaults.WORKERS,
) -> TreeCountReport:
    """Largest k whose non-intersection probability stays visibly positive.

    α is estimated for k = 1..k_max walkers started in distinct orthants at
    horizon H and 2H from the same trials. k counts toward the lower bound
    while its CI excludes 0 and α drops by at most `decay_tolerance` from H to 2H.
    """
    d = require_dimension(d)
    if d < 2:
        raise DomainError("tree counts are estimated for d ≥ 2", d=d)
    if horizon < 1:
        raise DomainError(f"horizon must be positive, got {horizon}")
    k_max = k_max if k_max is not None else 2**d + 1
    r = start_distance if start_distance is not None else math.ceil(math.sqrt(horizon))
    starts = orthant_starts(d, k_max, r)

    table = alpha_table(d, lam, starts, (horizon, 2 * horizon), trials, seed, workers)
    report = TreeCountReport(
        lower_bound_k=0,
        alpha_table={k: reports[horizon] for k, reports in table.items()},
        alpha_doubled={k: reports[2 * horizon] for k, reports in table.items()},
        starts=tuple(starts),
    )

    lower_bound = 0
    for k in range(1, k_max + 1):
        positive = report.alpha_table[k].excludes_zero(confidence)
        if not positive:
            logger.warning("Alpha interval reaches zero", k=k, horizon=horizon, trials=trials)
            break
        if report.relative_decay(k) > decay_tolerance:
            break
        lower_bound = k
    logger.info(
        "Tree count estimated", d=d, lam=lam, horizon=horizon, lower_bound_k=lower_bound
    )
    return replace(report, lower_bound_k=lower_bound)
