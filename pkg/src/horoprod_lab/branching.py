"""Random-tree laws and boundary measures.

Finite-depth estimators stand in for the almost-sure limits: every
estimate records the depth it was computed at. Mass ratios use exact
rational arithmetic (``fractions.Fraction``) whenever the law's
probabilities are rational, which they always are here since floats are
binary rationals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Tuple, Union

import numpy as np

from . import rng as _rng
from .errors import (
    ConfigError,
    DeadEnd,
    HorizonExceeded,
    InsufficientSamples,
    PreconditionViolated,
    ResourceLimit,
)
from .trees import PointedTree, RootedTree, canonical_code

LAW_FORMAT = "horoprod-law/1"

DEFAULT_VERTEX_CAP = 20_000_000


@dataclass(frozen=True)
class OffspringLaw:
    """Finite-support offspring distribution {p_k}.

    Standing assumptions: no extinction (p_0 = 0) and at least two support
    points; both can be lifted with ``override=True`` for degenerate test
    cases. The x*log(x) moment condition is automatic for finite support,
    so accepted laws always satisfy it.
    """

    probs: Dict[int, Fraction]
    override: bool = False

    def __post_init__(self):
        probs = {int(k): Fraction(v) for k, v in self.probs.items() if Fraction(v) != 0}
        if not probs:
            raise ConfigError("offspring law must have nonempty support")
        if any(k < 0 for k in probs):
            raise ConfigError("offspring counts must be >= 0")
        total = sum(probs.values())
        if abs(total - 1) > Fraction(1, 10**12):
            raise ConfigError(f"probabilities sum to {float(total)}, not 1")
        if total != 1:  # exact renormalization within tolerance
            probs = {k: v / total for k, v in probs.items()}
        if not self.override:
            if 0 in probs:
                raise ConfigError(
                    "p_0 must be 0 (no extinction); pass override=True to permit"
                )
            if len(probs) < 2:
                raise ConfigError(
                    "support must contain at least two points (rigidity); "
                    "pass override=True for deterministic laws"
                )
        object.__setattr__(self, "probs", dict(sorted(probs.items())))

    @staticmethod
    def mean_of(probs: Dict[int, Fraction]) -> Fraction:
        return sum(Fraction(k) * p for k, p in probs.items())

    @property
    def mean(self) -> Fraction:
        """m, the expected offspring count."""
        return self.mean_of(self.probs)

    @property
    def exponent(self) -> float:
        """The conformal exponent log m."""
        return math.log(self.mean)

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(self.probs)

    @property
    def kesten_stigum(self) -> bool:
        """Sum k log k p_k < infinity; always true for finite support."""
        return True

    def is_deterministic(self) -> bool:
        return len(self.probs) == 1

    def document(self) -> dict:
        doc = {
            "format": LAW_FORMAT,
            "probs": {str(k): float(v) for k, v in self.probs.items()},
        }
        if self.override:
            doc["override"] = True
        return doc

    @classmethod
    def from_document(cls, doc: dict, override: bool = False) -> "OffspringLaw":
        if not isinstance(doc, dict) or doc.get("format") != LAW_FORMAT:
            raise ConfigError(f"not a {LAW_FORMAT} document")
        probs = {int(k): Fraction(v) for k, v in doc["probs"].items()}
        # the override flag may live in the document itself (e.g. shipped
        # deterministic laws for homogeneous-tree products)
        return cls(probs, override=override or bool(doc.get("override", False)))

    @classmethod
    def from_probs(cls, probs: Dict[int, Union[float, str, Fraction]], override=False):
        return cls({int(k): Fraction(v) for k, v in probs.items()}, override=override)

    def _sampling_arrays(self):
        ks = np.array(self.support, dtype=np.int64)
        ps = np.array([float(v) for v in self.probs.values()])
        ps /= ps.sum()
        return ks, ps


@dataclass
class BoundaryMassEstimate:
    """Finite-depth boundary-mass ratio |count| / m^n."""

    value: Fraction
    depth: int
    apex: Optional[tuple] = None

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("boundary mass must be >= 0")

    @property
    def value_float(self) -> float:
        return float(self.value)


@dataclass
class DoublyRootedTree:
    """Tree with two adjacent distinguished roots.

    ``tree`` is rooted at the principal root; the secondary root is its
    first child, so the two roots are at distance 1 by construction.
    """

    tree: RootedTree
    primary_root: tuple = ()
    secondary_root: tuple = (1,)

    def __post_init__(self):
        if self.tree.distance(self.primary_root, self.secondary_root) != 1:
            raise PreconditionViolated("roots must be at distance 1")


# -- samplers ----------------------------------------------------------


def _sample_generation_counts(law, depth, rng, root_count, max_vertices):
    """Offspring counts per generation, BFS order; one batch draw per
    generation so results are independent of how they are consumed."""
    ks, ps = law._sampling_arrays()
    if root_count is not None:
        first = np.asarray([root_count], dtype=np.int64)
    elif law.is_deterministic():
        first = ks.copy()
    else:
        first = rng.choice(ks, size=1, p=ps)
    gens = [first]
    total = 1
    width = int(first.sum())
    for _ in range(1, depth + 1):
        total += width
        if total > max_vertices:
            raise ResourceLimit(f"tree exceeds vertex cap {max_vertices}")
        if width == 0:
            break
        if law.is_deterministic():
            draw = np.full(width, ks[0], dtype=np.int64)
        else:
            draw = rng.choice(ks, size=width, p=ps)
        gens.append(draw)
        width = int(draw.sum())
    return gens


def _tree_from_generations(gens, depth) -> RootedTree:
    """Assemble a RootedTree from per-generation BFS offspring arrays.

    Vectorized BFS-to-preorder conversion via subtree sizes: the preorder
    position of a child is its parent's position plus one plus the sizes of
    its elder siblings' subtrees.
    """
    offspring_bfs = np.concatenate(gens[: depth + 1])
    n = offspring_bfs.size
    gen_sizes = [g.size for g in gens[: depth + 1]]
    starts = np.concatenate(([0], np.cumsum(gen_sizes)))
    # parent (BFS ids) per generation
    parent_bfs = np.full(n, -1, dtype=np.int64)
    depth_bfs = np.zeros(n, dtype=np.int64)
    child_rank = np.zeros(n, dtype=np.int64)
    for g in range(1, len(gen_sizes)):
        lo, hi = starts[g], starts[g + 1]
        prev = np.arange(starts[g - 1], starts[g])
        counts = offspring_bfs[prev]
        parent_bfs[lo:hi] = np.repeat(prev, counts)
        depth_bfs[lo:hi] = g
        # 1-based rank within the family
        fam_end = np.cumsum(counts)
        idx = np.arange(hi - lo)
        child_rank[lo:hi] = idx - np.repeat(fam_end - counts, counts) + 1
    # subtree sizes bottom-up
    size = np.ones(n, dtype=np.int64)
    for g in range(len(gen_sizes) - 1, 0, -1):
        lo, hi = starts[g], starts[g + 1]
        np.add.at(size, parent_bfs[lo:hi], size[lo:hi])
    # preorder position top-down: pos(child) = pos(parent) + 1 + elder sizes
    pos = np.zeros(n, dtype=np.int64)
    for g in range(1, len(gen_sizes)):
        lo, hi = starts[g], starts[g + 1]
        prev = np.arange(starts[g - 1], starts[g])
        counts = offspring_bfs[prev]
        csz = np.cumsum(size[lo:hi])
        # elder-sibling subtree mass within each family: cumulative size up
        # to each child minus the cumulative size before its family start
        elder = csz - size[lo:hi]
        fam_offset = np.concatenate(([0], np.cumsum(counts)))[:-1]
        fam_prefix_total = np.repeat(np.concatenate(([0], csz))[fam_offset], counts)
        within = elder - fam_prefix_total
        pos[lo:hi] = pos[np.repeat(prev, counts)] + 1 + within
    offspring_pre = np.empty(n, dtype=np.int64)
    offspring_pre[pos] = offspring_bfs
    parent_pre = np.full(n, -1, dtype=np.int64)
    mask = parent_bfs >= 0
    parent_pre[pos[mask]] = pos[parent_bfs[mask]]
    depth_pre = np.empty(n, dtype=np.int64)
    depth_pre[pos] = depth_bfs
    rank_pre = np.empty(n, dtype=np.int64)
    rank_pre[pos] = child_rank
    return RootedTree(
        offspring_pre, depth, _derived=(parent_pre, depth_pre, rank_pre)
    )


def sample_gw(
    law: OffspringLaw,
    depth: int,
    seed: int,
    *,
    max_vertices: int = DEFAULT_VERTEX_CAP,
) -> RootedTree:
    """Galton-Watson tree truncated at ``depth``; deterministic given seed."""
    if depth < 0:
        raise ConfigError("depth must be >= 0")
    gens = _sample_generation_counts(law, depth, _rng.make_rng(seed), None, max_vertices)
    return _tree_from_generations(gens, depth)


def sample_augmented(
    law: OffspringLaw,
    depth: int,
    seed: int,
    *,
    max_vertices: int = DEFAULT_VERTEX_CAP,
) -> RootedTree:
    """Augmented GW tree: the root's offspring count is increased by one."""
    if depth < 0:
        raise ConfigError("depth must be >= 0")
    rng = _rng.make_rng(seed)
    ks, ps = law._sampling_arrays()
    k = int(ks[0]) if law.is_deterministic() else int(rng.choice(ks, p=ps))
    gens = _sample_generation_counts(law, depth, rng, k + 1, max_vertices)
    return _tree_from_generations(gens, depth)


def sphere_sizes(law: OffspringLaw, depth: int, seed: int, *, augmented=False,
                 max_vertices: int = DEFAULT_VERTEX_CAP) -> np.ndarray:
    """|S^n| for n = 0..depth, drawn exactly as the corresponding sampler
    draws them (same generator, same batch order)."""
    rng = _rng.make_rng(seed)
    if augmented:
        ks, ps = law._sampling_arrays()
        k = int(ks[0]) if law.is_deterministic() else int(rng.choice(ks, p=ps))
        gens = _sample_generation_counts(law, depth, rng, k + 1, max_vertices)
    else:
        gens = _sample_generation_counts(law, depth, rng, None, max_vertices)
    sizes = np.zeros(depth + 1, dtype=np.int64)
    sizes[0] = 1
    for g, arr in enumerate(gens):
        if g + 1 <= depth:
            sizes[g + 1] = int(arr.sum())
    return sizes


# -- estimators --------------------------------------------------------


def estimate_L(t: RootedTree, law: OffspringLaw, n: int) -> BoundaryMassEstimate:
    """Normalized sphere mass |S^n| / m^n, the finite-depth martingale value."""
    count = t.sphere(n).size
    return BoundaryMassEstimate(Fraction(count) / law.mean**n, depth=n)


def branching_measure(
    t: RootedTree, law: OffspringLaw, apex, n: int
) -> BoundaryMassEstimate:
    """Finite-depth shadow mass: |S^n intersect shadow(apex)| / m^n."""
    a = t.resolve(apex)
    count = t.shadow_sphere_count(a, n)
    return BoundaryMassEstimate(
        Fraction(count) / law.mean**n, depth=n, apex=t.address_of(a)
    )


@dataclass
class ConformalCheck:
    """Both sides of the finite-depth Radon-Nikodym identity."""

    from_neighbor: Fraction  # mass of the shadow seen from y at depth n-1
    transported: Fraction  # m^{-busemann(o,y)} * mass seen from the root at depth n
    exact_equal: bool = field(init=False)

    def __post_init__(self):
        self.exact_equal = self.from_neighbor == self.transported


def check_conformal(t: RootedTree, law: OffspringLaw, y, apex, n: int) -> ConformalCheck:
    """Finite-depth conformality: the shadow mass measured from the root's
    neighbor y toward the shadow equals the root mass transported by
    m^{-beta} with beta = -1.

    The left side is computed by independent distance enumeration, the
    right side through subtree interval counting; equality must be exact.
    """
    yi = t.resolve(y)
    ai = t.resolve(apex)
    if int(t.depth[yi]) != 1:
        raise PreconditionViolated("y must be a neighbor of the root")
    if not (t.is_descendant(ai, yi) and ai != yi):
        raise PreconditionViolated("apex must be a strict descendant of y")
    if n > t.depth_limit:
        raise HorizonExceeded(f"depth {n} exceeds horizon {t.depth_limit}")
    if n < int(t.depth[ai]):
        raise PreconditionViolated("n must be >= depth(apex)")
    size = t.subtree_sizes()
    lo, hi = ai, ai + int(size[ai])
    # independent route: graph distance from y inside the shadow
    count_y = 0
    for v in range(lo, hi):
        if t.distance(yi, v) == n - 1:
            count_y += 1
    lhs = Fraction(count_y) / law.mean ** (n - 1)
    # busemann(root, y) = -1 for every end through apex (confluence is y)
    rhs = law.mean * (Fraction(t.shadow_sphere_count(ai, n)) / law.mean**n)
    return ConformalCheck(lhs, rhs)


@dataclass
class RaySample:
    """Boundary ray drawn proportionally to finite-depth shadow masses."""

    pointed: PointedTree
    weight: Fraction  # total boundary-mass estimate |S^n|/m^n of the tree


def sample_boundary_ray(
    t: RootedTree, law: OffspringLaw, depth_budget: int, seed: int
) -> RaySample:
    """Descend from the root, choosing each child with probability
    proportional to its shadow mass at the residual depth budget.

    The recorded importance weight is the tree's total mass estimate, for
    self-normalized reweighting downstream.
    """
    if depth_budget > t.depth_limit:
        raise HorizonExceeded(
            f"depth budget {depth_budget} exceeds horizon {t.depth_limit}"
        )
    rng = _rng.make_rng(seed)
    spine = []
    v = 0
    for _ in range(depth_budget):
        kids = t.children(v)
        if kids.size == 0:
            raise DeadEnd(f"vertex {v} has no realized children")
        weights = np.array(
            [t.shadow_sphere_count(int(c), depth_budget) for c in kids], dtype=float
        )
        total = weights.sum()
        if total == 0:
            raise DeadEnd(f"all child shadow masses vanish at vertex {v}")
        j = int(rng.choice(len(kids), p=weights / total))
        spine.append(j + 1)
        v = int(kids[j])
    weight = Fraction(int(t.sphere(depth_budget).size)) / law.mean**depth_budget
    pointed = PointedTree(t, spine)
    return RaySample(pointed, weight)


@dataclass
class MassMeanReport:
    estimate: float
    std_err: float
    n_samples: int
    depth: int
    seed: int
    expected: Optional[float] = None

    def document(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_err": self.std_err,
            "n_samples": self.n_samples,
            "depth": self.depth,
            "seed": self.seed,
            "expected": self.expected,
        }


def mass_mean(
    law: OffspringLaw,
    depth: int,
    replicas: int,
    seed: int,
    *,
    augmented: bool = True,
) -> MassMeanReport:
    """Mean of |S^n|/m^n over seeded replicas, with standard error.

    Augmented sampling targets 1 + 1/m; plain sampling targets 1. Replica i
    uses seed ^ i; aggregation order is fixed by replica index.
    """
    m_n = float(law.mean**depth)
    vals = np.empty(replicas, dtype=float)
    for i in range(replicas):
        sizes = sphere_sizes(law, depth, seed ^ i, augmented=augmented)
        vals[i] = sizes[depth] / m_n
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    expected = float(1 + 1 / law.mean) if augmented else 1.0
    return MassMeanReport(est, se, replicas, depth, seed, expected)


def augmented_mass_mean(law, depth, replicas, seed) -> MassMeanReport:
    return mass_mean(law, depth, replicas, seed, augmented=True)


# -- invariance of (1/deg) P' -----------------------------------------


def _doubly_rooted_join(law, r, seed) -> DoublyRootedTree:
    """Two independent GW trees whose roots are joined by an edge.

    The joined tree is rooted at the principal root; the secondary subtree
    (sampled to depth r) becomes its first child, so the secondary root has
    address (1,).
    """
    primary = sample_gw(law, r + 1, seed)
    secondary = sample_gw(law, r, _rng.derived_rng(seed, 0x5EC0).integers(2**63))
    off_p = primary.offspring
    off_s = secondary.offspring
    joined = np.concatenate(
        ([off_p[0] + 1], off_s, off_p[1:])
    )
    tree = RootedTree(joined, r + 1)
    return DoublyRootedTree(tree)


def doubly_rooted_code(d: DoublyRootedTree, r: int, *, swap: bool = False) -> bytes:
    """Canonical code of the doubly rooted r-ball: the ball of radius r
    around the root edge, rooted at the principal root with the secondary
    root marked. ``swap`` applies the root-exchanging involution (the ball
    is symmetric in the two roots, so only the rooting and mark move)."""
    t = d.tree
    prim = t.resolve(d.primary_root)
    sec = t.resolve(d.secondary_root)
    dist_p = _bfs_dist(t, prim, r)
    dist_s = _bfs_dist(t, sec, r)
    ball = set(dist_p) | set(dist_s)
    adj = {v: [] for v in ball}
    for v in ball:
        if v != 0 and int(t.parent[v]) in ball:
            p = int(t.parent[v])
            adj[v].append(p)
            adj[p].append(v)
    from .trees import _ahu_code

    if swap:
        prim, sec = sec, prim
    return _ahu_code(adj, prim, sec)


def _bfs_dist(t: RootedTree, start: int, radius: int):
    dist = {start: 0}
    frontier = [start]
    while frontier:
        nxt = []
        for v in frontier:
            if dist[v] == radius:
                continue
            nbrs = [int(c) for c in t.children(v)]
            if v != 0:
                nbrs.append(int(t.parent[v]))
            for w in nbrs:
                if w not in dist:
                    dist[w] = dist[v] + 1
                    nxt.append(w)
        frontier = nxt
    return dist


@dataclass
class InvarianceReport:
    tv_root_weighted_vs_joined: float
    chi2_p_root_weighted_vs_joined: float
    tv_joined_vs_swapped: float
    chi2_p_joined_vs_swapped: float
    n_samples: int
    radius: int
    seed: int
    n_codes: int

    def document(self) -> dict:
        return {
            "tv_root_weighted_vs_joined": self.tv_root_weighted_vs_joined,
            "chi2_p_root_weighted_vs_joined": self.chi2_p_root_weighted_vs_joined,
            "tv_joined_vs_swapped": self.tv_joined_vs_swapped,
            "chi2_p_joined_vs_swapped": self.chi2_p_joined_vs_swapped,
            "n_samples": self.n_samples,
            "radius": self.radius,
            "seed": self.seed,
            "n_codes": self.n_codes,
        }


def invariance_test(law: OffspringLaw, r: int, replicas: int, seed: int) -> InvarianceReport:
    """Statistical test of root-degree-weighted invariance.

    Side A samples augmented trees and emits one doubly rooted r-ball per
    (root, neighbor) pair; the 1/deg weighting is realized by rejection
    (each pair is kept with probability 1/deg), so the kept samples are
    unweighted draws from the weighted law. Side B joins two independent
    GW trees by an edge. A must match B, and B must match its root-swapped
    image.
    """
    from collections import Counter

    if r < 1:
        raise PreconditionViolated("radius must be >= 1")
    counts_a: Counter = Counter()
    counts_b: Counter = Counter()
    counts_b_swap: Counter = Counter()
    for i in range(replicas):
        rep_seed = seed ^ i
        # side A: augmented tree, one pair per root neighbor, kept w.p. 1/deg
        t = sample_augmented(law, r + 1, rep_seed)
        root_kids = t.children(0)
        deg = root_kids.size
        coins = _rng.derived_rng(rep_seed, 0xACCE).random(deg)
        for j, c in enumerate(root_kids):
            if coins[j] * deg < 1.0:
                d = DoublyRootedTree(t, (), (int(t.child_rank[c]),))
                counts_a[doubly_rooted_code(d, r)] += 1
        # side B: two independent GW trees joined by an edge
        d = _doubly_rooted_join(law, r, rep_seed ^ 0x0B0B0B0B)
        counts_b[doubly_rooted_code(d, r)] += 1
        counts_b_swap[doubly_rooted_code(d, r, swap=True)] += 1

    tv_ab, p_ab = _two_sample_stats(counts_a, counts_b)
    tv_bs, p_bs = _two_sample_stats(counts_b, counts_b_swap)
    n_codes = len(set(counts_a) | set(counts_b) | set(counts_b_swap))
    return InvarianceReport(tv_ab, p_ab, tv_bs, p_bs, replicas, r, seed, n_codes)


def _two_sample_stats(counts_x, counts_y):
    """Total-variation distance between normalized empirical distributions
    and the chi-square homogeneity p-value."""
    from scipy.stats import chi2_contingency

    keys = sorted(set(counts_x) | set(counts_y))
    x = np.array([counts_x.get(k, 0) for k in keys], dtype=float)
    y = np.array([counts_y.get(k, 0) for k in keys], dtype=float)
    if x.sum() == 0 or y.sum() == 0:
        raise InsufficientSamples("one side has no samples")
    if min(x.min(), y.min()) < 5:
        raise InsufficientSamples(
            "a chi-square cell has fewer than 5 observations"
        )
    tv = 0.5 * float(np.abs(x / x.sum() - y / y.sum()).sum())
    if len(keys) == 1:
        return tv, 1.0
    _, p, _, _ = chi2_contingency(np.vstack([x, y]))
    return tv, float(p)
