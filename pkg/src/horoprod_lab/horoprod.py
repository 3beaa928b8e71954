"""Finite windows of the horospheric product of two pointed trees.

The window is the connected component of the origin pair among
level-matched pairs (b(x) + b'(x') = 0) with |level| <= H and both
coordinates inside their horizons. Construction is a vectorized BFS over
pair codes; finished windows are immutable and safe to share.

Interior flags are the contract for downstream consumers: a vertex is
interior only when every tree-neighbor of both coordinates is known and
the corresponding product neighbor lies in the window. Spectral and
isoperimetric code must treat non-interior vertices as absorbing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import EmptyWindow, HorizonExceeded, UnknownVertex
from .trees import PointedTree


@dataclass(frozen=True)
class HoroVertex:
    """One level-matched pair; levels satisfy b(left) + b'(right) = 0."""

    left: tuple
    right: tuple
    level: int


class _Orientation:
    """Busemann-oriented neighbor arrays of a pointed tree.

    Every vertex has at most one known "down" neighbor (toward the
    boundary point, level - 1) and a CSR list of "up" neighbors
    (level + 1). ``complete`` marks vertices whose full neighbor set is
    known: not truncated, and not the end of the recorded spine.
    """

    __slots__ = ("down", "up_ptr", "up_idx", "complete", "level", "tree_degree")

    def __init__(self, pt: PointedTree):
        t = pt.tree
        n = t.n_vertices
        down = np.full(n, -1, dtype=np.int64)
        sv = pt.spine_vertices
        # off-spine: down is the parent
        off = ~pt.on_spine
        off[0] = False
        down[off] = t.parent[off]
        # on-spine: down is the next spine vertex
        down[sv[:-1]] = sv[1:]

        ids = np.arange(1, n, dtype=np.int64)
        non_spine_child = ~pt.on_spine[ids]
        src_a = t.parent[ids][non_spine_child]
        dst_a = ids[non_spine_child]
        src_b = sv[1:]
        dst_b = t.parent[sv[1:]]
        src = np.concatenate((src_a, src_b))
        dst = np.concatenate((dst_a, dst_b))
        order = np.argsort(src, kind="stable")
        src, dst = src[order], dst[order]
        counts = np.bincount(src, minlength=n)
        self.up_ptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        self.up_idx = dst.astype(np.int64)

        complete = ~t.truncated
        complete[sv[-1]] = False  # spine continuation unknown
        self.complete = complete
        self.down = down
        self.level = pt.level
        realized = np.diff(t.child_ptr)
        self.tree_degree = realized + (np.arange(n) != 0)


class HoroWindow:
    """Connected origin component of the level-matched product, as arrays.

    Vertex ids are BFS order from the origin with lexicographic
    tie-breaking on (left address, right address) inside each layer, which
    coincides with (left preorder index, right preorder index) order.
    """

    __slots__ = (
        "left",
        "right",
        "height_bound",
        "vleft",
        "vright",
        "level",
        "interior",
        "indptr",
        "indices",
        "origin",
        "_orient_l",
        "_orient_r",
    )

    def __init__(self, left, right, height_bound, vleft, vright, level, interior,
                 indptr, indices, orient_l, orient_r):
        self.left = left
        self.right = right
        self.height_bound = height_bound
        self.vleft = vleft
        self.vright = vright
        self.level = level
        self.interior = interior
        self.indptr = indptr
        self.indices = indices
        self.origin = 0
        self._orient_l = orient_l
        self._orient_r = orient_r

    @property
    def n_vertices(self) -> int:
        return self.vleft.size

    @property
    def n_edges(self) -> int:
        return self.indices.size // 2

    def neighbors(self, v: int) -> np.ndarray:
        if not 0 <= v < self.n_vertices:
            raise UnknownVertex(f"window vertex {v} out of range")
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        if not 0 <= v < self.n_vertices:
            raise UnknownVertex(f"window vertex {v} out of range")
        return int(self.indptr[v + 1] - self.indptr[v])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def interior_degree_formula(self) -> np.ndarray:
        """(deg_T(x) - 1) + (deg_T'(x') - 1) per window vertex."""
        return (
            self._orient_l.tree_degree[self.vleft]
            + self._orient_r.tree_degree[self.vright]
            - 2
        )

    def vertex(self, v: int) -> HoroVertex:
        return HoroVertex(
            self.left.tree.address_of(int(self.vleft[v])),
            self.right.tree.address_of(int(self.vright[v])),
            int(self.level[v]),
        )

    def find(self, left_ref, right_ref) -> int:
        """Window id of a coordinate pair; UnknownVertex if absent."""
        xl = self.left.tree.resolve(left_ref)
        xr = self.right.tree.resolve(right_ref)
        code = xl * self.right.tree.n_vertices + xr
        codes = self.vleft.astype(np.int64) * self.right.tree.n_vertices + self.vright
        hits = np.flatnonzero(codes == code)
        if hits.size == 0:
            raise UnknownVertex("pair not in window")
        return int(hits[0])

    def __repr__(self):
        return (
            f"HoroWindow(n={self.n_vertices}, m={self.n_edges}, "
            f"H={self.height_bound})"
        )


def _expand(rows_code, coord, sel, up_ptr, up_idx, partner_down, rn, left_side):
    """Vectorized one-sided expansion: up-neighbors on one coordinate times
    the unique down-neighbor on the other."""
    rows = rows_code[sel]
    x = coord[sel]
    counts = (up_ptr[x + 1] - up_ptr[x]).astype(np.int64)
    total = int(counts.sum())
    if total == 0:
        e = np.zeros(0, dtype=np.int64)
        return e, e
    base = up_ptr[x]
    starts = np.cumsum(counts) - counts
    within = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
    ups = up_idx[np.repeat(base, counts) + within]
    partners = np.repeat(partner_down[sel], counts)
    src = np.repeat(rows, counts)
    if left_side:
        dst = ups * rn + partners
    else:
        dst = partners * rn + ups
    return src, dst


def build_window(left: PointedTree, right: PointedTree, H: int) -> HoroWindow:
    """BFS the component of (o, o') over legal moves, |level| <= H."""
    if H < 0:
        raise EmptyWindow("height bound must be >= 0")
    if H > min(left.tree.depth_limit, right.tree.depth_limit):
        raise HorizonExceeded("height bound exceeds a tree horizon")
    if left.spine_len < H or right.spine_len < H:
        raise HorizonExceeded("spines shorter than the height bound")

    ol, orr = _Orientation(left), _Orientation(right)
    rn = right.tree.n_vertices
    lvl_l = ol.level
    origin = np.array([0], dtype=np.int64)

    visited = origin.copy()
    layers = [origin.copy()]
    edge_src, edge_dst = [], []
    frontier = origin
    while frontier.size:
        xl = frontier // rn
        xr = frontier % rn
        lv = lvl_l[xl]
        # move up-left / down-right: level + 1
        sel_a = (orr.down[xr] >= 0) & (lv + 1 <= H)
        s, d = _expand(frontier, xl, sel_a, ol.up_ptr, ol.up_idx, orr.down[xr], rn, True)
        edge_src.append(s)
        edge_dst.append(d)
        cand = [d]
        # move down-left / up-right: level - 1
        sel_b = (ol.down[xl] >= 0) & (lv - 1 >= -H)
        s, d = _expand(frontier, xr, sel_b, orr.up_ptr, orr.up_idx, ol.down[xl], rn, False)
        edge_src.append(s)
        edge_dst.append(d)
        cand.append(d)
        cand = np.unique(np.concatenate(cand))
        pos = np.searchsorted(visited, cand)
        pos = np.minimum(pos, visited.size - 1)
        new = cand[visited[pos] != cand]
        if new.size:
            layers.append(new)
            visited = np.union1d(visited, new)
        frontier = new

    codes = np.concatenate(layers)
    n = codes.size
    order = np.argsort(codes, kind="stable")
    sorted_codes = codes[order]

    src = np.concatenate(edge_src)
    dst = np.concatenate(edge_dst)
    src_id = order[np.searchsorted(sorted_codes, src)]
    dst_id = order[np.searchsorted(sorted_codes, dst)]
    lo = np.minimum(src_id, dst_id)
    hi = np.maximum(src_id, dst_id)
    eorder = np.lexsort((hi, lo))
    lo, hi = lo[eorder], hi[eorder]
    if lo.size:
        keep = np.concatenate(([True], (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])))
        lo, hi = lo[keep], hi[keep]

    both_src = np.concatenate((lo, hi))
    both_dst = np.concatenate((hi, lo))
    adj_order = np.argsort(both_src, kind="stable")
    indices = both_dst[adj_order].astype(np.int64)
    counts = np.bincount(both_src, minlength=n)
    indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)

    vleft = (codes // rn).astype(np.int64)
    vright = (codes % rn).astype(np.int64)
    level = lvl_l[vleft].astype(np.int64)
    interior = (
        ol.complete[vleft]
        & orr.complete[vright]
        & (np.abs(level) <= H - 1)
    )
    return HoroWindow(
        left, right, H, vleft, vright, level, interior, indptr, indices, ol, orr
    )


def degree(w: HoroWindow, v: int) -> int:
    return w.degree(v)


def export(w: HoroWindow, fmt: str = "edge-list") -> str:
    """Deterministic text export; same window (same seeds) gives identical
    bytes."""
    if fmt == "edge-list":
        return _export_edge_list(w)
    if fmt == "dot":
        return _export_dot(w)
    raise ValueError(f"unknown export format {fmt!r}")


def _addr_str(addr: tuple) -> str:
    return ".".join(str(k) for k in addr) if addr else "-"


def _export_edge_list(w: HoroWindow) -> str:
    lines = [
        f"# horoprod-window/1 H={w.height_bound} n={w.n_vertices} m={w.n_edges}"
    ]
    for v in range(w.n_vertices):
        for u in w.neighbors(v):
            if v < u:
                lines.append(f"{v} {u}")
    for v in range(w.n_vertices):
        hv = w.vertex(v)
        lines.append(
            f"{v} {hv.level} {_addr_str(hv.left)} {_addr_str(hv.right)} "
            f"{int(bool(w.interior[v]))}"
        )
    return "\n".join(lines) + "\n"


def _export_dot(w: HoroWindow) -> str:
    lines = ["graph horoprod {", "  rankdir=TB;"]
    levels = {}
    for v in range(w.n_vertices):
        levels.setdefault(int(w.level[v]), []).append(v)
    for lv in sorted(levels, reverse=True):
        ids = " ".join(f"v{v};" for v in levels[lv])
        lines.append(f"  {{ rank=same; {ids} }}")
    for v in range(w.n_vertices):
        hv = w.vertex(v)
        shape = "circle" if w.interior[v] else "square"
        lines.append(
            f'  v{v} [label="{_addr_str(hv.left)}|{_addr_str(hv.right)}" '
            f"shape={shape}];"
        )
    for v in range(w.n_vertices):
        for u in w.neighbors(v):
            if v < u:
                lines.append(f"  v{v} -- v{u};")
    lines.append("}")
    return "\n".join(lines) + "\n"
