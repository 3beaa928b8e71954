"""Deterministic tree geometry.

Trees are finite truncations of rooted locally finite trees. A tree is
encoded by its preorder offspring sequence (one nonnegative integer per
vertex, depth-first, children in index order) together with a generation
horizon ``depth_limit``. Vertices at the horizon carry their offspring
count but their children are not expanded; the ``truncated`` flag marks
them apart from true leaves.

Vertices are addressed externally by Ulam-Harris paths (tuples of 1-based
child indices) and internally by integer indices into the preorder array.
Preorder index order coincides with lexicographic order of addresses.
"""
from __future__ import annotations

import json
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    DepthViolation,
    HorizonExceeded,
    MalformedEncoding,
    ParseError,
    UnknownVertex,
)

Address = tuple  # Ulam-Harris path, 1-based child indices; () is the root
VertexRef = Union[int, Sequence[int]]

TREE_FORMAT = "horoprod-tree/1"


class RootedTree:
    """Finite truncation of a rooted tree.

    Immutable after construction; all operations are pure, so instances are
    safe to share across parallel workers.
    """

    __slots__ = (
        "offspring",
        "depth_limit",
        "parent",
        "depth",
        "child_rank",
        "child_ptr",
        "child_idx",
        "truncated",
        "n_vertices",
        "_subtree_size",
        "_depth_order",
        "_depth_start",
    )

    def __init__(self, offspring: Iterable[int], depth_limit: int, *, _derived=None):
        if depth_limit < 0:
            raise DepthViolation(f"depth_limit must be >= 0, got {depth_limit}")
        self.depth_limit = int(depth_limit)
        self.offspring = np.ascontiguousarray(offspring, dtype=np.int64)
        if self.offspring.ndim != 1 or self.offspring.size == 0:
            raise MalformedEncoding("offspring sequence must be a nonempty 1-d sequence")
        if np.any(self.offspring < 0):
            raise MalformedEncoding("offspring counts must be nonnegative")
        self.n_vertices = int(self.offspring.size)
        if _derived is not None:
            parent, depth, child_rank = _derived
            self.parent = parent
            self.depth = depth
            self.child_rank = child_rank
        else:
            self.parent, self.depth, self.child_rank = _decode_preorder(
                self.offspring, self.depth_limit
            )
        # every horizon vertex is truncated: its continuation is unknown
        # even when the stored offspring count is zero
        self.truncated = self.depth == self.depth_limit
        self._build_children()
        self._subtree_size = None
        self._depth_order = None
        self._depth_start = None

    def _build_children(self):
        realized = np.where(self.depth < self.depth_limit, self.offspring, 0)
        ptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.cumsum(realized, out=ptr[1:])
        if ptr[-1] != self.n_vertices - 1:
            raise MalformedEncoding(
                "vertex count inconsistent with realized offspring counts"
            )
        if self.n_vertices > 1:
            order = np.lexsort((self.child_rank[1:], self.parent[1:]))
            self.child_idx = (np.arange(1, self.n_vertices, dtype=np.int64))[order]
        else:
            self.child_idx = np.zeros(0, dtype=np.int64)
        self.child_ptr = ptr

    # -- addressing ----------------------------------------------------

    def children(self, v: int) -> np.ndarray:
        return self.child_idx[self.child_ptr[v] : self.child_ptr[v + 1]]

    def resolve(self, x: VertexRef) -> int:
        """Turn an address (or an index) into a preorder index."""
        if isinstance(x, (int, np.integer)):
            i = int(x)
            if not 0 <= i < self.n_vertices:
                raise UnknownVertex(f"vertex index {i} out of range")
            return i
        v = 0
        for k in x:
            kids = self.children(v)
            if not 1 <= k <= kids.size:
                raise UnknownVertex(f"address {tuple(x)} not in tree")
            v = int(kids[k - 1])
        return v

    def address_of(self, v: int) -> Address:
        v = self.resolve(v)
        path = []
        while v != 0:
            path.append(int(self.child_rank[v]))
            v = int(self.parent[v])
        return tuple(reversed(path))

    def subtree_sizes(self) -> np.ndarray:
        """Number of realized vertices in the subtree of each vertex."""
        if self._subtree_size is None:
            size = np.ones(self.n_vertices, dtype=np.int64)
            for d in range(int(self.depth.max()), 0, -1):
                layer = np.flatnonzero(self.depth == d)
                np.add.at(size, self.parent[layer], size[layer])
            self._subtree_size = size
        return self._subtree_size

    def _depth_index(self):
        # per-depth sorted lists of preorder indices, for interval counting
        if self._depth_order is None:
            self._depth_order = np.argsort(self.depth, kind="stable")
            counts = np.bincount(self.depth, minlength=self.depth_limit + 2)
            self._depth_start = np.concatenate(([0], np.cumsum(counts)))
        return self._depth_order, self._depth_start

    def is_descendant(self, v: int, ancestor: int) -> bool:
        size = self.subtree_sizes()
        return ancestor <= v < ancestor + int(size[ancestor])

    # -- metric --------------------------------------------------------

    def distance(self, x: VertexRef, y: VertexRef) -> int:
        """Graph distance, via the confluence of address prefixes."""
        a, b = self.resolve(x), self.resolve(y)
        da, db = int(self.depth[a]), int(self.depth[b])
        u, v, du, dv = a, b, da, db
        while du > dv:
            u = int(self.parent[u])
            du -= 1
        while dv > du:
            v = int(self.parent[v])
            dv -= 1
        while u != v:
            u, v = int(self.parent[u]), int(self.parent[v])
            du -= 1
        return da + db - 2 * du

    def sphere(self, n: int) -> np.ndarray:
        """Preorder indices of all vertices at distance exactly n from the root."""
        if n > self.depth_limit:
            raise HorizonExceeded(
                f"sphere radius {n} exceeds horizon {self.depth_limit}"
            )
        if n < 0:
            raise HorizonExceeded(f"sphere radius must be >= 0, got {n}")
        return np.flatnonzero(self.depth == n)

    def shadow_sphere_count(self, apex: VertexRef, n: int) -> int:
        """Number of depth-n vertices descending from ``apex``."""
        a = self.resolve(apex)
        if n > self.depth_limit:
            raise HorizonExceeded(
                f"sphere radius {n} exceeds horizon {self.depth_limit}"
            )
        if n < int(self.depth[a]):
            raise HorizonExceeded(
                f"sphere radius {n} is above the apex depth {int(self.depth[a])}"
            )
        size = self.subtree_sizes()
        order, start = self._depth_index()
        block = order[start[n] : start[n + 1]]  # ascending preorder indices at depth n
        lo = np.searchsorted(block, a, side="left")
        hi = np.searchsorted(block, a + int(size[a]), side="left")
        return int(hi - lo)

    # -- serialization -------------------------------------------------

    def document(self) -> dict:
        return {
            "format": TREE_FORMAT,
            "depth_limit": self.depth_limit,
            "offspring": self.offspring.tolist(),
        }

    def __eq__(self, other):
        return (
            isinstance(other, RootedTree)
            and self.depth_limit == other.depth_limit
            and np.array_equal(self.offspring, other.offspring)
        )

    def __hash__(self):
        return hash((self.depth_limit, self.offspring.tobytes()))

    def __repr__(self):
        return f"RootedTree(n={self.n_vertices}, depth_limit={self.depth_limit})"


def _decode_preorder(offspring: np.ndarray, depth_limit: int):
    """Parent/depth/child-rank arrays from a preorder offspring sequence.

    Raises MalformedEncoding when the sequence over- or under-runs the
    self-delimiting preorder structure.
    """
    n = offspring.size
    parent = np.empty(n, dtype=np.int64)
    depth = np.empty(n, dtype=np.int64)
    child_rank = np.empty(n, dtype=np.int64)
    parent[0] = -1
    depth[0] = 0
    child_rank[0] = 0
    # stack entries: [vertex, children remaining]
    stack = []
    if depth_limit > 0 and offspring[0] > 0:
        stack.append([0, int(offspring[0])])
    for i in range(1, n):
        if not stack:
            raise MalformedEncoding(f"offspring sequence overruns at position {i}")
        p, remaining = stack[-1]
        parent[i] = p
        depth[i] = depth[p] + 1
        child_rank[i] = int(offspring[p]) - remaining + 1
        if remaining == 1:
            stack.pop()
        else:
            stack[-1][1] = remaining - 1
        if depth[i] < depth_limit and offspring[i] > 0:
            stack.append([i, int(offspring[i])])
    if stack:
        raise MalformedEncoding(
            f"offspring sequence underruns: {len(stack)} open vertices at end"
        )
    return parent, depth, child_rank


def build_tree(offspring_preorder: Iterable[int], depth_limit: int) -> RootedTree:
    """Validated tree from a preorder offspring sequence."""
    return RootedTree(offspring_preorder, depth_limit)


class PointedTree:
    """Rooted tree with a distinguished spine ray descending toward the
    boundary point it is pointed at.

    Sign convention shared by all modules: moving toward the boundary point
    along the spine decreases the Busemann level, so the k-th spine vertex
    sits at level -k and off-spine branches climb back up.
    """

    __slots__ = ("tree", "spine", "spine_vertices", "on_spine", "branch_depth", "level")

    def __init__(self, tree: RootedTree, spine: Sequence[int]):
        self.tree = tree
        self.spine = tuple(int(k) for k in spine)
        if len(self.spine) > tree.depth_limit:
            raise DepthViolation(
                f"spine length {len(self.spine)} exceeds horizon {tree.depth_limit}"
            )
        sv = [0]
        v = 0
        for step, k in enumerate(self.spine):
            kids = tree.children(v)
            if not 1 <= k <= kids.size:
                raise MalformedEncoding(
                    f"spine step {step}: child index {k} invalid at vertex {v}"
                )
            v = int(kids[k - 1])
            sv.append(v)
        self.spine_vertices = np.asarray(sv, dtype=np.int64)
        self.on_spine = np.zeros(tree.n_vertices, dtype=bool)
        self.on_spine[self.spine_vertices] = True
        self.branch_depth = self._compute_branch_depth()
        self.level = tree.depth - 2 * self.branch_depth

    def _compute_branch_depth(self) -> np.ndarray:
        """Depth of the deepest spine vertex on the root path of each vertex."""
        t = self.tree
        s = np.zeros(t.n_vertices, dtype=np.int64)
        s[self.spine_vertices] = t.depth[self.spine_vertices]
        # one pass per depth layer: a non-spine vertex inherits its parent's value
        for d in range(1, int(t.depth.max()) + 1):
            layer = np.flatnonzero(t.depth == d)
            off = layer[~self.on_spine[layer]]
            s[off] = s[t.parent[off]]
        return s

    @property
    def spine_len(self) -> int:
        return len(self.spine)

    def busemann(self, x: VertexRef, y: VertexRef) -> int:
        """Busemann cocycle toward the spine end: level(y) - level(x)."""
        a, b = self.tree.resolve(x), self.tree.resolve(y)
        return int(self.level[b] - self.level[a])

    def horosphere(self, k: int) -> np.ndarray:
        """All known vertices at Busemann level k (may be empty near the horizon)."""
        return np.flatnonzero(self.level == k)

    # neighbor structure in the Busemann orientation -------------------

    def down_neighbor(self, v: int) -> Optional[int]:
        """The unique neighbor one level closer to the boundary point, if known."""
        t = self.tree
        if self.on_spine[v]:
            d = int(t.depth[v])
            if d < self.spine_len:
                return int(self.spine_vertices[d + 1])
            return None  # spine continues past the horizon
        return int(t.parent[v])

    def up_neighbors(self, v: int) -> list:
        """Known neighbors one level farther from the boundary point.

        Incomplete for truncated vertices (their children are unknown).
        """
        t = self.tree
        out = []
        if self.on_spine[v]:
            if v != 0:
                out.append(int(t.parent[v]))
            d = int(t.depth[v])
            skip = self.spine_vertices[d + 1] if d < self.spine_len else -1
            for c in t.children(v):
                if c != skip:
                    out.append(int(c))
        else:
            out.extend(int(c) for c in t.children(v))
        return out

    def document(self) -> dict:
        doc = self.tree.document()
        doc["spine"] = list(self.spine)
        return doc

    def __eq__(self, other):
        return (
            isinstance(other, PointedTree)
            and self.tree == other.tree
            and self.spine == other.spine
        )

    def __repr__(self):
        return (
            f"PointedTree(n={self.tree.n_vertices}, "
            f"depth_limit={self.tree.depth_limit}, spine_len={self.spine_len})"
        )


def busemann(pt: PointedTree, x: VertexRef, y: VertexRef) -> int:
    return pt.busemann(x, y)


def horosphere(pt: PointedTree, k: int) -> np.ndarray:
    return pt.horosphere(k)


def distance(t: RootedTree, x: VertexRef, y: VertexRef) -> int:
    return t.distance(x, y)


def sphere(t: RootedTree, n: int) -> np.ndarray:
    return t.sphere(n)


def shadow_sphere_count(t: RootedTree, apex: VertexRef, n: int) -> int:
    return t.shadow_sphere_count(apex, n)


# -- canonical codes ---------------------------------------------------


def _ball_vertices(t: RootedTree, center: int, radius: int):
    """BFS ball; raises if a truncated vertex strictly inside would hide edges."""
    dist = {center: 0}
    frontier = [center]
    while frontier:
        nxt = []
        for v in frontier:
            dv = dist[v]
            if dv == radius:
                continue
            if t.truncated[v]:
                raise HorizonExceeded(
                    f"ball of radius {radius} around {center} crosses the horizon"
                )
            nbrs = [int(c) for c in t.children(v)]
            if v != 0:
                nbrs.append(int(t.parent[v]))
            for w in nbrs:
                if w not in dist:
                    dist[w] = dv + 1
                    nxt.append(w)
        frontier = nxt
    return dist


def _ahu_code(adj: dict, root: int, marked=None) -> bytes:
    """AHU canonical form of a rooted graph-tree given by adjacency lists.

    Two rooted balls get equal codes iff they are isomorphic as rooted
    (marked) trees; children codes are sorted so the input child order is
    irrelevant. Iterative post-order to avoid recursion limits.
    """
    order = []
    parent = {root: None}
    stack = [root]
    while stack:
        v = stack.pop()
        order.append(v)
        for w in adj[v]:
            if w != parent[v]:
                parent[w] = v
                stack.append(w)
    code = {}
    for v in reversed(order):
        kids = sorted(code[w] for w in adj[v] if w != parent[v])
        mark = b"*" if marked is not None and v == marked else b""
        code[v] = mark + b"(" + b"".join(kids) + b")"
    return code[root]


def canonical_code(t: RootedTree, center: VertexRef, radius: int, *, marked: Optional[VertexRef] = None) -> bytes:
    """Canonical code of the rooted ball of given radius around ``center``.

    Equal codes iff the balls are isomorphic as rooted graphs. ``marked``
    optionally distinguishes one extra vertex (used for doubly rooted
    trees).
    """
    c = t.resolve(center)
    dist = _ball_vertices(t, c, radius)
    adj = {v: [] for v in dist}
    for v in dist:
        if v != 0:
            p = int(t.parent[v])
            if p in dist:
                adj[v].append(p)
                adj[p].append(v)
    m = t.resolve(marked) if marked is not None else None
    if m is not None and m not in dist:
        raise UnknownVertex("marked vertex outside the coded ball")
    return _ahu_code(adj, c, m)


# -- text documents ----------------------------------------------------


def serialize(obj: Union[RootedTree, PointedTree]) -> str:
    """Tree document (JSON-shaped text); round-trips through deserialize."""
    return json.dumps(obj.document(), separators=(",", ":"))


def deserialize(text: str) -> Union[RootedTree, PointedTree]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", position=e.pos) from e
    if not isinstance(doc, dict):
        raise ParseError("tree document must be a JSON object")
    if doc.get("format") != TREE_FORMAT:
        raise ParseError(f"unknown format {doc.get('format')!r}")
    for key in ("depth_limit", "offspring"):
        if key not in doc:
            raise ParseError(f"missing field {key!r}")
    depth_limit = doc["depth_limit"]
    offspring = doc["offspring"]
    if not isinstance(depth_limit, int):
        raise ParseError("depth_limit must be an integer")
    if not isinstance(offspring, list) or not all(
        isinstance(c, int) for c in offspring
    ):
        raise ParseError("offspring must be a list of integers")
    try:
        tree = RootedTree(offspring, depth_limit)
    except (MalformedEncoding, DepthViolation) as e:
        raise ParseError(str(e)) from e
    if "spine" in doc and doc["spine"] is not None:
        spine = doc["spine"]
        if not isinstance(spine, list) or not all(isinstance(k, int) for k in spine):
            raise ParseError("spine must be a list of integers")
        try:
            return PointedTree(tree, spine)
        except (MalformedEncoding, DepthViolation) as e:
            raise ParseError(str(e)) from e
    return tree


def edge_list(t: RootedTree) -> str:
    """One "u v" pair per line using preorder indices, root = 0."""
    lines = [f"{int(t.parent[v])} {v}" for v in range(1, t.n_vertices)]
    return "\n".join(lines) + ("\n" if lines else "")
