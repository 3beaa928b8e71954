"""Random-walk and isoperimetric diagnostics on horospheric-product windows.

Every infinite-graph quantity reported here is a bracketed bound: the
Dirichlet eigenvalue of a finite window is a lower bound for the spectral
radius of the infinite graph, and Følner-style ratios are upper bounds for
the isoperimetric constant. Reports name the bound direction. Walks are
killed (not reflected) at non-interior vertices so that return-probability
estimates stay valid lower bounds.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import (
    EmptyWindow,
    HorizonExceeded,
    NoConvergence,
    NonInteriorMember,
    PreconditionViolated,
)
from .horoprod import HoroWindow
from .rng import make_rng

POWER_MAX_ITERS = 100_000
POWER_TOL = 1e-10
STAGNATION_LIMIT = 200


@dataclass
class WalkReport:
    """Return-probability estimates for the killed simple random walk."""

    steps: int
    n_samples: int
    seed: int
    p2k: List[float]  # index k: empirical p_{2k}(origin, origin)
    ci_lo: List[float]
    ci_hi: List[float]
    mc_radius: List[float]  # p_{2k}^{1/(2k)}, k >= 1
    dirichlet: Optional[float] = None
    window_params: dict = field(default_factory=dict)

    def document(self) -> dict:
        return {
            "format": "horoprod-walk-report/1",
            "bound_direction": "lower",
            "steps": self.steps,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "p2k": self.p2k,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "mc_radius": self.mc_radius,
            "dirichlet": self.dirichlet,
            "window": self.window_params,
        }

    def to_json(self) -> str:
        return json.dumps(self.document(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        lines = ["k,p_2k,ci_lo,ci_hi"]
        for k, (p, lo, hi) in enumerate(zip(self.p2k, self.ci_lo, self.ci_hi)):
            lines.append(f"{k},{p!r},{lo!r},{hi!r}")
        return "\n".join(lines) + "\n"


@dataclass
class IsoReport:
    """Isoperimetric ratio of a candidate set: |dA|/|A|, an upper bound
    for the window's Cheeger-type constant on the sets explored."""

    description: str
    size: int
    boundary_size: int
    ratio: float
    method: str
    members: Optional[np.ndarray] = None
    window_params: dict = field(default_factory=dict)

    def document(self) -> dict:
        return {
            "format": "horoprod-iso-report/1",
            "bound_direction": "upper",
            "description": self.description,
            "size": self.size,
            "boundary_size": self.boundary_size,
            "ratio": self.ratio,
            "method": self.method,
            "window": self.window_params,
        }

    def to_json(self) -> str:
        return json.dumps(self.document(), indent=2, sort_keys=True)


def simulate_walk(w: HoroWindow, steps: int, replicas: int, seed: int) -> WalkReport:
    """Run simple random walks from the origin, uniform over window
    neighbors, killed on arrival at a non-interior vertex."""
    if w.n_vertices == 0:
        raise EmptyWindow("window has no vertices")
    if steps < 0 or replicas <= 0:
        raise PreconditionViolated("steps >= 0 and replicas > 0 required")
    rng = make_rng(seed)
    n_half = steps // 2

    pos = np.zeros(replicas, dtype=np.int64)
    alive = np.full(replicas, bool(w.interior[w.origin]), dtype=bool)
    returns = np.zeros(n_half + 1, dtype=np.int64)
    returns[0] = replicas

    indptr, indices = w.indptr, w.indices
    interior = w.interior
    for t in range(1, steps + 1):
        u = rng.random(replicas)
        deg = indptr[pos + 1] - indptr[pos]
        step_ok = alive & (deg > 0)
        pick = indptr[pos] + np.minimum((u * deg).astype(np.int64), deg - 1)
        pos = np.where(step_ok, indices[pick], pos)
        alive = step_ok
        if t % 2 == 0:
            returns[t // 2] = int(np.count_nonzero(alive & (pos == w.origin)))
        # killed on arrival at a non-interior vertex: may be observed there
        # this step, but never steps again
        alive = alive & interior[pos]

    p = returns / replicas
    half = 1.959963984540054 * np.sqrt(p * (1.0 - p) / replicas)
    mc = [float(p[k] ** (1.0 / (2 * k))) if p[k] > 0 else 0.0
          for k in range(1, n_half + 1)]
    return WalkReport(
        steps=steps,
        n_samples=replicas,
        seed=seed,
        p2k=[float(x) for x in p],
        ci_lo=[float(max(0.0, x)) for x in p - half],
        ci_hi=[float(min(1.0, x)) for x in p + half],
        mc_radius=mc,
        window_params=_window_params(w),
    )


def walk_matrix_powers(w: HoroWindow, steps: int) -> List[float]:
    """Exact p_{2k} by dynamic programming with the interior-restricted
    transition matrix; oracle counterpart of simulate_walk."""
    P = _interior_operator(w, symmetric=False)
    I = np.flatnonzero(w.interior)
    if I.size == 0 or not w.interior[w.origin]:
        return [1.0] + [0.0] * (steps // 2)
    o = int(np.searchsorted(I, w.origin))
    mu = np.zeros(I.size)
    mu[o] = 1.0
    out = [1.0]
    for t in range(1, steps + 1):
        mu = P.T @ mu
        if t % 2 == 0:
            out.append(float(mu[o]))
    return out


def _interior_operator(w: HoroWindow, symmetric: bool) -> sp.csr_matrix:
    n = w.n_vertices
    I = np.flatnonzero(w.interior)
    A = sp.csr_matrix(
        (np.ones(w.indices.size), w.indices, w.indptr), shape=(n, n)
    )
    Aii = A[I][:, I]
    deg = np.diff(w.indptr)[I].astype(float)
    deg[deg == 0] = 1.0
    if symmetric:
        d = sp.diags(1.0 / np.sqrt(deg))
        return (d @ Aii @ d).tocsr()
    return (sp.diags(1.0 / deg) @ Aii).tocsr()


def dirichlet_spectral_radius(
    w: HoroWindow,
    tol: float = POWER_TOL,
    max_iters: int = POWER_MAX_ITERS,
    method: str = "power",
) -> float:
    """Top eigenvalue of the walk operator killed outside the interior —
    a certified lower bound for the spectral radius of the infinite graph.

    The default is power iteration from the indicator of the origin with
    relative-change stopping. method="lanczos" computes the same quantity
    with a Krylov eigensolver; it exists because power iteration needs
    O(1/gap) matvecs and large near-critical windows have tiny gaps.
    """
    I = np.flatnonzero(w.interior)
    if I.size == 0:
        raise PreconditionViolated("window has no interior vertices")
    S = _interior_operator(w, symmetric=True)

    if method == "lanczos":
        if I.size == 1:
            return float(S[0, 0])
        from scipy.sparse.linalg import eigsh

        val = eigsh(S, k=1, which="LA", return_eigenvectors=False,
                    tol=min(tol, 1e-9), maxiter=max_iters)
        return float(val[0])
    if method != "power":
        raise PreconditionViolated(f"unknown method {method!r}")

    x = np.zeros(I.size)
    if w.interior[w.origin]:
        x[np.searchsorted(I, w.origin)] = 1.0
    else:
        x[:] = 1.0 / math.sqrt(I.size)
    prev = None
    # iterate the squared operator: window graphs are bipartite by level
    # parity, so the spectrum is symmetric and plain iteration stalls
    for _ in range(max_iters):
        y = S @ x
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            return 0.0
        z = S @ y
        nz = float(np.linalg.norm(z))
        if nz == 0.0:
            return 0.0
        x = z / nz
        if prev is not None and abs(lam - prev) <= tol * max(abs(lam), 1.0):
            return lam
        prev = lam
    raise NoConvergence(
        f"power iteration did not reach relative tolerance {tol} "
        f"in {max_iters} iterations"
    )


def _neighbor_in_count(w: HoroWindow, in_a: np.ndarray) -> np.ndarray:
    """Per-vertex count of window neighbors inside the set."""
    src = np.repeat(np.arange(w.n_vertices), np.diff(w.indptr))
    return np.bincount(
        src, weights=in_a[w.indices].astype(float), minlength=w.n_vertices
    ).astype(np.int64)


def iso_ratio(w: HoroWindow, members: Sequence[int],
              description: str = "custom set", method: str = "direct") -> IsoReport:
    """Exact |dA|/|A| where dA is the set of members with a neighbor
    outside A. Members must be interior vertices."""
    A = np.unique(np.asarray(list(members), dtype=np.int64))
    if A.size == 0:
        raise PreconditionViolated("candidate set is empty")
    if A.min() < 0 or A.max() >= w.n_vertices:
        raise NonInteriorMember("vertex id out of range")
    if not np.all(w.interior[A]):
        raise NonInteriorMember("candidate set contains non-interior vertices")
    in_a = np.zeros(w.n_vertices, dtype=bool)
    in_a[A] = True
    deg = np.diff(w.indptr)
    inner = _neighbor_in_count(w, in_a)
    boundary = int(np.count_nonzero(inner[A] < deg[A]))
    return IsoReport(
        description=description,
        size=int(A.size),
        boundary_size=boundary,
        ratio=boundary / A.size,
        method=method,
        members=A,
        window_params=_window_params(w),
    )


def _up_reach(orient, start: int, max_level: int) -> np.ndarray:
    """Tree vertices reachable from `start` by up-moves while the Busemann
    level stays <= max_level; returns a boolean mask."""
    n = orient.level.size
    mask = np.zeros(n, dtype=bool)
    mask[start] = True
    frontier = np.array([start], dtype=np.int64)
    while frontier.size:
        ptr, idx = orient.up_ptr, orient.up_idx
        counts = ptr[frontier + 1] - ptr[frontier]
        total = int(counts.sum())
        if total == 0:
            break
        starts = np.cumsum(counts) - counts
        within = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
        nxt = idx[np.repeat(ptr[frontier], counts) + within]
        nxt = nxt[(orient.level[nxt] <= max_level) & ~mask[nxt]]
        nxt = np.unique(nxt)
        mask[nxt] = True
        frontier = nxt
    return mask


def folner_slab(w: HoroWindow, n: int) -> np.ndarray:
    """Level-matched tetrahedron product: left coordinates ascend from the
    n-th left-spine vertex, right coordinates ascend from the right root,
    window levels in [-n, 0]."""
    if n < 0 or n > w.height_bound:
        raise HorizonExceeded("slab parameter outside the window height")
    if w.left.spine_len < n:
        raise HorizonExceeded("left spine shorter than slab parameter")
    tip = int(w.left.spine_vertices[n])
    left_mask = _up_reach(w._orient_l, tip, 0)
    right_mask = _up_reach(w._orient_r, 0, n)
    sel = (
        left_mask[w.vleft]
        & right_mask[w.vright]
        & (w.level >= -n)
        & (w.level <= 0)
    )
    members = np.flatnonzero(sel)
    if members.size == 0:
        raise HorizonExceeded("slab is empty in this window")
    if not np.all(w.interior[members]):
        raise HorizonExceeded(
            "slab touches non-interior vertices; deepen the window"
        )
    return members


def _interior_ball(w: HoroWindow, radius: int) -> Optional[np.ndarray]:
    """Interior vertices within graph distance `radius` of the origin,
    provided the whole ball is interior."""
    if not w.interior[w.origin]:
        return None
    seen = {w.origin: 0}
    frontier = [w.origin]
    for d in range(1, radius + 1):
        nxt = []
        for v in frontier:
            for u in w.neighbors(v):
                u = int(u)
                if u not in seen:
                    seen[u] = d
                    nxt.append(u)
        frontier = nxt
    members = np.array(sorted(seen), dtype=np.int64)
    if not np.all(w.interior[members]):
        return None
    return members


class _SetState:
    """Mutable candidate set with O(deg) boundary updates."""

    def __init__(self, w: HoroWindow, members: np.ndarray):
        self.w = w
        self.deg = np.diff(w.indptr)
        self.in_a = np.zeros(w.n_vertices, dtype=bool)
        self.in_a[members] = True
        self.inner = _neighbor_in_count(w, self.in_a)
        self.size = int(members.size)
        on_b = self.in_a & (self.inner < self.deg)
        self.boundary = int(np.count_nonzero(on_b))

    @property
    def ratio(self) -> float:
        return self.boundary / self.size

    def _is_boundary(self, v) -> bool:
        return bool(self.in_a[v] and self.inner[v] < self.deg[v])

    def delta_add(self, v: int) -> float:
        """Ratio after adding v, without mutating."""
        nb = self.w.indices[self.w.indptr[v] : self.w.indptr[v + 1]]
        db = 0
        for u in nb:
            if self.in_a[u] and self.inner[u] + 1 == self.deg[u]:
                db -= 1  # u leaves the boundary
        if self.inner[v] < self.deg[v]:
            db += 1  # v itself joins the boundary
        return (self.boundary + db) / (self.size + 1)

    def delta_remove(self, v: int) -> float:
        nb = self.w.indices[self.w.indptr[v] : self.w.indptr[v + 1]]
        db = -1 if self._is_boundary(v) else 0
        for u in nb:
            if self.in_a[u] and self.inner[u] == self.deg[u]:
                db += 1  # u acquires an outside neighbor
        return (self.boundary + db) / (self.size - 1)

    def apply(self, kind: str, v: int):
        nb = self.w.indices[self.w.indptr[v] : self.w.indptr[v + 1]]
        if kind == "add":
            r = self.delta_add(v)
            self.in_a[v] = True
            self.inner[nb] += 1
            self.size += 1
        else:
            r = self.delta_remove(v)
            self.in_a[v] = False
            self.inner[nb] -= 1
            self.size -= 1
        self.boundary = round(r * self.size)

    def members(self) -> np.ndarray:
        return np.flatnonzero(self.in_a)


def folner_search(w: HoroWindow, budget: int, seed: int) -> IsoReport:
    """Greedy local search for small boundary-to-size ratio, seeded with
    tetrahedron slabs and interior balls; never worse than the best seed."""
    if budget <= 0:
        raise PreconditionViolated("budget must be positive")
    rng = make_rng(seed)

    candidates: List[Tuple[str, np.ndarray]] = []
    for n in range(w.height_bound, -1, -1):
        try:
            candidates.append((f"slab(n={n})", folner_slab(w, n)))
        except HorizonExceeded:
            continue
    for r in range(3, 0, -1):
        ball = _interior_ball(w, r)
        if ball is not None:
            candidates.append((f"ball(r={r})", ball))
    if not candidates:
        if not w.interior[w.origin]:
            raise PreconditionViolated("no interior seed set available")
        candidates.append(("origin", np.array([w.origin], dtype=np.int64)))

    best_desc, best_members = min(
        candidates,
        key=lambda c: iso_ratio(w, c[1], method="seed").ratio,
    )
    best = iso_ratio(w, best_members, description=best_desc, method="seed")

    state = _SetState(w, best_members)
    current = state.ratio
    stagnation = 0
    spent = 0
    while spent < budget:
        spent += 1
        move = None  # (ratio, kind, vertex); ties broken by smallest id
        touch = np.flatnonzero((state.inner > 0) & ~state.in_a & w.interior)
        for v in touch:
            r = state.delta_add(int(v))
            if move is None or r < move[0] - 1e-12:
                move = (r, "add", int(v))
        if state.size > 1:
            on_b = np.flatnonzero(
                state.in_a & (state.inner < state.deg)
            )
            for v in on_b:
                r = state.delta_remove(int(v))
                if move is not None and r >= move[0] - 1e-12:
                    continue
                state.apply("remove", int(v))
                ok = _connected_after(w, state.in_a)
                state.apply("add", int(v))
                if ok:
                    move = (r, "remove", int(v))
        if move is None:
            break
        r, kind, v = move
        improved = r < current - 1e-12
        if not improved:
            stagnation += 1
            if stagnation > STAGNATION_LIMIT:
                break
        else:
            stagnation = 0
        state.apply(kind, v)
        current = state.ratio
        if current < best.ratio - 1e-12:
            best = iso_ratio(
                w, state.members(),
                description=f"search from {best_desc}", method="greedy",
            )
    return best


def _connected_after(w: HoroWindow, in_a: np.ndarray) -> bool:
    members = np.flatnonzero(in_a)
    if members.size == 0:
        return False
    seen = {int(members[0])}
    stack = [int(members[0])]
    target = members.size
    while stack:
        v = stack.pop()
        for u in w.indices[w.indptr[v] : w.indptr[v + 1]]:
            u = int(u)
            if in_a[u] and u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == target


def _window_params(w: HoroWindow) -> dict:
    return {
        "height_bound": int(w.height_bound),
        "n_vertices": int(w.n_vertices),
        "n_edges": int(w.n_edges),
        "left_depth_limit": int(w.left.tree.depth_limit),
        "right_depth_limit": int(w.right.tree.depth_limit),
    }
