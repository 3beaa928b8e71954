"""Command-line experiment runner.

The CLI is a thin client over the FastAPI service: by default it mounts
the app in-process (no network), so a run is still one process; pass
--server to talk to a remote instance instead. Exit codes: 0 success,
2 mathematical check failed, 1 operational error.
"""
from __future__ import annotations

import json
import os
import sys

# cap parallelism (BLAS/OpenMP thread pools) before numpy loads
_threads = os.environ.get("HOROPROD_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import click
import httpx


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # in-process mount of the service app: one process, no network
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _load_json(path: str, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise click.ClickException(f"{what} file not found: {path}")
    except json.JSONDecodeError as e:
        raise click.ClickException(f"{what} file {path} is not valid JSON: {e}")


def _run(ctx, kind: str, params: dict):
    """Merge config file and flags (flags win), post, write outputs."""
    cfg = dict(ctx.obj.get("config") or {})
    cfg.update({k: v for k, v in params.items() if v is not None})
    server = ctx.obj.get("server")
    outdir = ctx.obj.get("outdir") or "."
    try:
        with _client(server) as client:
            resp = client.post(f"/v1/{kind}", json=cfg)
    except httpx.HTTPError as e:
        click.echo(f"error: cannot reach service: {e}", err=True)
        sys.exit(1)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        click.echo(f"error: {detail}", err=True)
        sys.exit(1)
    body = resp.json()
    os.makedirs(outdir, exist_ok=True)
    for name, content in body.get("files", {}).items():
        path = os.path.join(outdir, name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(content)
        click.echo(f"wrote {path}", err=True)
    click.echo(json.dumps(body["report"], indent=2, sort_keys=True))
    if body.get("error"):
        click.echo(f"error: {body['error']}", err=True)
    sys.exit(body.get("exit_code", 1))


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL; default runs in-process.")
@click.option("--config", "config_path", default=None, metavar="PATH",
              help="JSON config file; explicit flags take precedence.")
@click.option("--outdir", default=".", metavar="DIR", show_default=True,
              help="Directory for report artifacts.")
@click.pass_context
def main(ctx, server, config_path, outdir):
    """Experiments on random trees and horospheric products."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server
    ctx.obj["outdir"] = outdir
    ctx.obj["config"] = (
        _load_json(config_path, "config") if config_path else {}
    )


def _law_option(name):
    return click.option(
        f"--{name}", f"{name}_path", default=None, metavar="PATH",
        help=f"Offspring-law document for {name!r}.",
    )


def _maybe_law(path):
    return _load_json(path, "law") if path else None


@main.command("sample-tree")
@_law_option("law")
@click.option("--depth", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--augmented/--plain", default=False)
@click.option("--export", type=click.Choice(["edge-list"]), default=None)
@click.pass_context
def sample_tree(ctx, law_path, depth, seed, augmented, export):
    """Sample one tree and write its document."""
    _run(ctx, "sample-tree", {
        "law": _maybe_law(law_path), "depth": depth, "seed": seed,
        "augmented": augmented, "export": export,
    })


@main.command("mass-mean")
@_law_option("law")
@click.option("--depth", type=int, default=None)
@click.option("--replicas", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--augmented/--plain", default=True,
              help="Augmented sampling targets 1 + 1/m; plain targets 1.")
@click.pass_context
def mass_mean(ctx, law_path, depth, replicas, seed, augmented):
    """Estimate the mean normalized boundary mass."""
    _run(ctx, "mass-mean", {
        "law": _maybe_law(law_path), "depth": depth,
        "replicas": replicas, "seed": seed, "augmented": augmented,
    })


@main.command("conformal")
@_law_option("law")
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
def conformal(ctx, law_path, trials, seed):
    """Check the exact finite-depth conformality identity; exit 2 if any
    trial is not an exact rational equality."""
    _run(ctx, "conformal", {
        "law": _maybe_law(law_path), "trials": trials, "seed": seed,
    })


@main.command("invariance")
@_law_option("law")
@click.option("--replicas", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--radius", type=int, default=None)
@click.option("--tv-max", type=float, default=None)
@click.option("--p-min", type=float, default=None)
@click.pass_context
def invariance(ctx, law_path, replicas, seed, radius, tv_max, p_min):
    """Test degree-weighted root invariance against two-sided sampling."""
    _run(ctx, "invariance", {
        "law": _maybe_law(law_path), "replicas": replicas, "seed": seed,
        "radius": radius, "tv_max": tv_max, "p_min": p_min,
    })


def _window_options(f):
    for opt in (
        _law_option("left"),
        _law_option("right"),
        click.option("--height", type=int, default=None),
        click.option("--depth", type=int, default=None),
        click.option("--left-depth", type=int, default=None),
        click.option("--right-depth", type=int, default=None),
        click.option("--seed", type=int, default=None),
    ):
        f = opt(f)
    return f


def _window_params(left_path, right_path, height, depth, left_depth,
                   right_depth, seed):
    return {
        "left": _maybe_law(left_path), "right": _maybe_law(right_path),
        "height": height, "depth": depth, "left_depth": left_depth,
        "right_depth": right_depth, "seed": seed,
    }


@main.command("build-window")
@_window_options
@click.option("--export", type=click.Choice(["edge-list", "dot"]),
              default=None)
@click.pass_context
def build_window(ctx, left_path, right_path, height, depth, left_depth,
                 right_depth, seed, export):
    """Build a horospheric-product window and export it."""
    params = _window_params(left_path, right_path, height, depth,
                            left_depth, right_depth, seed)
    params["export"] = export
    _run(ctx, "build-window", params)


@main.command("walk")
@_window_options
@click.option("--steps", type=int, default=None)
@click.option("--replicas", type=int, default=None)
@click.option("--dirichlet/--no-dirichlet", default=False,
              help="Also compute the killed-walk spectral estimate.")
@click.option("--tol", type=float, default=None)
@click.option("--method", type=click.Choice(["power", "lanczos"]),
              default=None)
@click.pass_context
def walk(ctx, left_path, right_path, height, depth, left_depth,
         right_depth, seed, steps, replicas, dirichlet, tol, method):
    """Simulate killed random walks on a window."""
    params = _window_params(left_path, right_path, height, depth,
                            left_depth, right_depth, seed)
    params.update({"steps": steps, "replicas": replicas,
                   "dirichlet": dirichlet, "tol": tol, "method": method})
    _run(ctx, "walk", params)


@main.command("folner")
@_window_options
@click.option("--mode", type=click.Choice(["slab", "search"]), default=None)
@click.option("--n", type=int, default=None,
              help="Slab parameter (slab mode).")
@click.option("--budget", type=int, default=None,
              help="Greedy move budget (search mode).")
@click.pass_context
def folner(ctx, left_path, right_path, height, depth, left_depth,
           right_depth, seed, mode, n, budget):
    """Evaluate isoperimetric candidate sets on a window."""
    params = _window_params(left_path, right_path, height, depth,
                            left_depth, right_depth, seed)
    params.update({"mode": mode, "n": n, "budget": budget})
    _run(ctx, "folner", params)


@main.command("sweep")
@click.option("--experiment", default=None,
              help="Experiment kind to run per cell.")
@click.option("--grid", "grid_path", default=None, metavar="PATH",
              help="JSON file: list of per-cell parameter objects.")
@click.option("--base", "base_path", default=None, metavar="PATH",
              help="JSON file with parameters shared by every cell.")
@click.option("--seed", type=int, default=None)
@click.pass_context
def sweep(ctx, experiment, grid_path, base_path, seed):
    """Run a parameter grid; one CSV row per cell."""
    grid = None
    if grid_path:
        grid = _load_json(grid_path, "grid")
    base = _load_json(base_path, "base") if base_path else None
    _run(ctx, "sweep", {
        "experiment": experiment, "grid": grid, "base": base, "seed": seed,
    })


if __name__ == "__main__":
    main()
