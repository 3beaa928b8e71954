"""Experiment orchestration: config documents in, report documents out.

Every run is fully determined by its config document; reports embed the
config hash and master seed and re-running a config byte-reproduces every
payload except the wall-time field. The service and the command line are
both thin wrappers around run_config.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import branching, dynamics, horoprod, trees
from .branching import OffspringLaw
from .errors import ConfigError, PartialFailure, PreconditionViolated
from .rng import make_rng

CONFIG_FORMAT = "horoprod-config/1"
REPORT_FORMAT = "horoprod-report/1"

EXPERIMENT_KINDS = (
    "sample-tree",
    "mass-mean",
    "conformal",
    "invariance",
    "build-window",
    "walk",
    "folner",
    "sweep",
)


@dataclass
class ExperimentResult:
    report: dict
    files: Dict[str, str] = field(default_factory=dict)
    ok: bool = True  # False when a mathematical check failed


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing required field {key!r}")
    return cfg[key]


def _law_from(cfg_value) -> OffspringLaw:
    if not isinstance(cfg_value, dict):
        raise ConfigError("law must be a law document (JSON object)")
    try:
        return OffspringLaw.from_document(cfg_value)
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"invalid law document: {e}") from e


def _pointed(law: OffspringLaw, depth: int, seed: int) -> trees.PointedTree:
    t = branching.sample_augmented(law, depth=depth, seed=seed)
    # leftmost spine: always valid because p_0 = 0 laws have no dead ends
    return trees.PointedTree(t, (1,) * depth)


def _window_from(cfg: dict, seed: int) -> horoprod.HoroWindow:
    left = _law_from(_require(cfg, "left"))
    right = _law_from(_require(cfg, "right"))
    depth = cfg.get("depth")
    ld = cfg.get("left_depth", depth)
    rd = cfg.get("right_depth", depth)
    if ld is None or rd is None:
        raise ConfigError("window config needs depth or left_depth/right_depth")
    ld, rd = int(ld), int(rd)
    height = int(_require(cfg, "height"))
    pl = _pointed(left, ld, seed)
    pr = _pointed(right, rd, seed ^ 0x9E3779B9)
    return horoprod.build_window(pl, pr, height)


# -- individual experiments --------------------------------------------


def _run_sample_tree(cfg: dict) -> ExperimentResult:
    law = _law_from(_require(cfg, "law"))
    depth = int(_require(cfg, "depth"))
    seed = int(_require(cfg, "seed"))
    if cfg.get("augmented", False):
        t = branching.sample_augmented(law, depth=depth, seed=seed)
    else:
        t = branching.sample_gw(law, depth=depth, seed=seed)
    report = {
        "n_vertices": t.n_vertices,
        "depth_limit": t.depth_limit,
        "sphere_sizes": [int(t.sphere(k).size) for k in range(depth + 1)],
    }
    files = {"tree.json": trees.serialize(t)}
    if cfg.get("export") == "edge-list":
        files["tree.edges"] = trees.edge_list(t)
    return ExperimentResult(report, files)


def _run_mass_mean(cfg: dict) -> ExperimentResult:
    law = _law_from(_require(cfg, "law"))
    rep = branching.mass_mean(
        law,
        depth=int(_require(cfg, "depth")),
        replicas=int(_require(cfg, "replicas")),
        seed=int(_require(cfg, "seed")),
        augmented=bool(cfg.get("augmented", True)),
    )
    return ExperimentResult(rep.document())


def _conformal_trial(law: OffspringLaw, rng) -> branching.ConformalCheck:
    depth = int(rng.integers(3, 7))
    t = branching.sample_gw(law, depth=depth, seed=int(rng.integers(1 << 62)))
    roots_children = t.children(0)
    y = int(roots_children[rng.integers(roots_children.size)])
    size = int(t.subtree_sizes()[y])
    apex = y + 1 + int(rng.integers(size - 1))  # strict descendant of y
    n = int(rng.integers(int(t.depth[apex]), depth + 1))
    return branching.check_conformal(t, law, y, apex, n)


def _run_conformal(cfg: dict) -> ExperimentResult:
    law = _law_from(_require(cfg, "law"))
    trials = int(_require(cfg, "trials"))
    seed = int(_require(cfg, "seed"))
    rng = make_rng(seed)
    exact = 0
    failures: List[dict] = []
    for i in range(trials):
        chk = _conformal_trial(law, rng)
        if chk.exact_equal:
            exact += 1
        else:
            failures.append(
                {
                    "trial": i,
                    "from_neighbor": str(chk.from_neighbor),
                    "transported": str(chk.transported),
                }
            )
    report = {
        "trials": trials,
        "exact": exact,
        "message": f"{exact}/{trials} exact",
        "failures": failures[:20],
    }
    return ExperimentResult(report, ok=(exact == trials))


def _run_invariance(cfg: dict) -> ExperimentResult:
    law = _law_from(_require(cfg, "law"))
    rep = branching.invariance_test(
        law,
        r=int(cfg.get("radius", 1)),
        replicas=int(_require(cfg, "replicas")),
        seed=int(_require(cfg, "seed")),
    )
    tv_max = float(cfg.get("tv_max", 0.02))
    p_min = float(cfg.get("p_min", 0.001))
    doc = rep.document()
    doc["tv_max"] = tv_max
    doc["p_min"] = p_min
    ok = (
        rep.tv_root_weighted_vs_joined <= tv_max
        and rep.chi2_p_root_weighted_vs_joined >= p_min
        and rep.tv_joined_vs_swapped <= tv_max
        and rep.chi2_p_joined_vs_swapped >= p_min
    )
    return ExperimentResult(doc, ok=ok)


def _run_build_window(cfg: dict) -> ExperimentResult:
    seed = int(_require(cfg, "seed"))
    w = _window_from(cfg, seed)
    deg = w.degrees()
    interior = np.flatnonzero(w.interior)
    formula = w.interior_degree_formula()
    formula_ok = bool(np.all(deg[interior] == formula[interior]))
    level_ok = bool(np.all(np.abs(w.level) <= w.height_bound))
    report = {
        "n_vertices": w.n_vertices,
        "n_edges": w.n_edges,
        "n_interior": int(interior.size),
        "origin_degree": w.degree(w.origin),
        "interior_degree_formula_ok": formula_ok,
        "level_bound_ok": level_ok,
        "height_bound": w.height_bound,
    }
    files = {}
    fmt = cfg.get("export")
    if fmt == "dot":
        files["window.dot"] = horoprod.export(w, "dot")
    elif fmt == "edge-list":
        files["window.edges"] = horoprod.export(w, "edge-list")
    return ExperimentResult(report, files, ok=formula_ok and level_ok)


def _run_walk(cfg: dict) -> ExperimentResult:
    seed = int(_require(cfg, "seed"))
    w = _window_from(cfg, seed)
    steps = int(cfg.get("steps", 0))
    files = {}
    if steps > 0:
        rep = dynamics.simulate_walk(
            w, steps, int(_require(cfg, "replicas")), seed
        )
    else:
        rep = dynamics.WalkReport(
            steps=0, n_samples=0, seed=seed, p2k=[1.0], ci_lo=[1.0],
            ci_hi=[1.0], mc_radius=[],
            window_params=dynamics._window_params(w),
        )
    if cfg.get("dirichlet", False):
        rep.dirichlet = dynamics.dirichlet_spectral_radius(
            w,
            tol=float(cfg.get("tol", dynamics.POWER_TOL)),
            method=cfg.get("method", "power"),
        )
    if steps > 0:
        files["walk.csv"] = rep.to_csv()
    return ExperimentResult(rep.document(), files)


def _run_folner(cfg: dict) -> ExperimentResult:
    seed = int(_require(cfg, "seed"))
    w = _window_from(cfg, seed)
    mode = cfg.get("mode", "slab")
    if mode == "slab":
        n = int(_require(cfg, "n"))
        members = dynamics.folner_slab(w, n)
        rep = dynamics.iso_ratio(
            w, members, description=f"slab(n={n})", method="slab"
        )
    elif mode == "search":
        rep = dynamics.folner_search(w, int(cfg.get("budget", 500)), seed)
    else:
        raise ConfigError(f"unknown folner mode {mode!r}")
    return ExperimentResult(rep.document())


_CELL_METRICS = {
    "mass-mean": ("estimate", "std_err"),
    "folner": ("ratio", "size", "boundary_size"),
    "walk": ("dirichlet",),
    "build-window": ("n_vertices", "n_edges", "n_interior"),
    "conformal": ("exact", "trials"),
    "invariance": (
        "tv_root_weighted_vs_joined",
        "chi2_p_root_weighted_vs_joined",
    ),
}


def _run_sweep(cfg: dict) -> ExperimentResult:
    kind = _require(cfg, "experiment")
    if kind not in EXPERIMENT_KINDS or kind == "sweep":
        raise ConfigError(f"sweep cannot run experiment kind {kind!r}")
    grid = _require(cfg, "grid")
    if not isinstance(grid, list) or not grid:
        raise ConfigError("sweep grid must be a non-empty list of cells")
    base = dict(cfg.get("base", {}))
    master_seed = int(_require(cfg, "seed"))
    metrics = _CELL_METRICS.get(kind, ())

    rows = []
    statuses = {}
    cells = []
    any_failed = False
    all_ok = True
    for idx, cell in enumerate(grid):
        cell_cfg = dict(base)
        cell_cfg.update(cell)
        cell_cfg.setdefault("seed", master_seed + idx)
        try:
            res = _RUNNERS[kind](cell_cfg)
            statuses[idx] = "ok" if res.ok else "check-failed"
            all_ok = all_ok and res.ok
            row = {m: res.report.get(m) for m in metrics}
            cells.append(
                {"cell": idx, "params": cell, "status": statuses[idx],
                 "report": res.report}
            )
        except (ConfigError, PartialFailure):
            raise
        except Exception as e:  # keep the sweep resumable cell by cell
            statuses[idx] = f"error: {type(e).__name__}: {e}"
            any_failed = True
            row = {m: None for m in metrics}
            cells.append({"cell": idx, "params": cell,
                          "status": statuses[idx], "report": None})
        rows.append((idx, cell, statuses[idx], row))

    header = ["cell", "params", "status", *metrics]
    lines = [",".join(header)]
    for idx, cell, status, row in rows:
        params = json.dumps(cell, sort_keys=True).replace('"', "'")
        vals = [
            "" if row[m] is None else repr(row[m]) for m in metrics
        ]
        lines.append(",".join([str(idx), f'"{params}"', f'"{status}"', *vals]))
    csv_text = "\n".join(lines) + "\n"

    report = {"experiment": kind, "cells": cells, "n_cells": len(grid)}
    result = ExperimentResult(report, {"sweep.csv": csv_text}, ok=all_ok)
    if any_failed:
        err = PartialFailure(
            f"{sum(1 for s in statuses.values() if s.startswith('error'))} "
            f"of {len(grid)} sweep cells failed",
            cell_status=statuses,
        )
        err.partial_result = result
        raise err
    return result


_RUNNERS = {
    "sample-tree": _run_sample_tree,
    "mass-mean": _run_mass_mean,
    "conformal": _run_conformal,
    "invariance": _run_invariance,
    "build-window": _run_build_window,
    "walk": _run_walk,
    "folner": _run_folner,
    "sweep": _run_sweep,
}


def run_config(cfg: dict) -> ExperimentResult:
    """Execute one experiment config; the report embeds the config hash,
    master seed, and wall time."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    fmt = cfg.get("format", CONFIG_FORMAT)
    if fmt != CONFIG_FORMAT:
        raise ConfigError(f"unsupported config format {fmt!r}")
    kind = _require(cfg, "kind")
    if kind not in _RUNNERS:
        raise ConfigError(
            f"unknown experiment kind {kind!r}; expected one of "
            f"{', '.join(EXPERIMENT_KINDS)}"
        )
    chash = config_hash(cfg)
    t0 = time.monotonic()
    try:
        result = _RUNNERS[kind](cfg)
    except PartialFailure as e:
        partial = getattr(e, "partial_result", None)
        if partial is not None:
            partial.report = _envelope(kind, cfg, chash, partial, t0)
        raise
    result.report = _envelope(kind, cfg, chash, result, t0)
    return result


def _envelope(kind, cfg, chash, result, t0) -> dict:
    return {
        "format": REPORT_FORMAT,
        "kind": kind,
        "config_hash": chash,
        "seed": cfg.get("seed"),
        "ok": result.ok,
        "wall_time_ms": round((time.monotonic() - t0) * 1000.0, 3),
        "payload": result.report,
    }


def report_json(result: ExperimentResult) -> str:
    return json.dumps(result.report, indent=2, sort_keys=True) + "\n"
