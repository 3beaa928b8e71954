import warnings

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from horoprod_lab.service import app

P13 = {"format": "horoprod-law/1", "probs": {"1": 0.5, "3": 0.5}}
DET2 = {"format": "horoprod-law/1", "probs": {"2": 1.0}, "override": True}


@pytest.fixture(scope="module")
def client():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with TestClient(app) as c:
            yield c


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json()["status"] == "ok"


def test_sample_tree_endpoint(client):
    r = client.post(
        "/v1/sample-tree",
        json={"law": P13, "depth": 4, "seed": 1, "export": "edge-list"},
    )
    assert r.status_code == 200
    body = r.json()
    assert body["ok"] and body["exit_code"] == 0
    assert "tree.json" in body["files"] and "tree.edges" in body["files"]


def test_mass_mean_endpoint(client):
    r = client.post(
        "/v1/mass-mean",
        json={"law": DET2, "depth": 5, "replicas": 4, "seed": 1},
    )
    body = r.json()
    assert body["exit_code"] == 0
    assert body["report"]["payload"]["estimate"] == 1.5


def test_build_window_endpoint(client):
    r = client.post(
        "/v1/build-window",
        json={"left": DET2, "right": DET2, "depth": 6, "height": 2,
              "seed": 1, "export": "edge-list"},
    )
    body = r.json()
    assert body["exit_code"] == 0
    assert "window.edges" in body["files"]


def test_walk_endpoint_with_dirichlet(client):
    r = client.post(
        "/v1/walk",
        json={"left": DET2, "right": DET2, "depth": 8, "height": 3,
              "seed": 1, "steps": 6, "replicas": 500, "dirichlet": True},
    )
    body = r.json()
    assert body["exit_code"] == 0
    payload = body["report"]["payload"]
    assert 0.0 < payload["dirichlet"] < 1.0
    assert len(payload["p2k"]) == 4


def test_folner_endpoint_slab(client):
    r = client.post(
        "/v1/folner",
        json={"left": DET2, "right": DET2, "depth": 12, "height": 6,
              "seed": 1, "mode": "slab", "n": 3},
    )
    body = r.json()
    assert body["exit_code"] == 0
    assert body["report"]["payload"]["ratio"] == pytest.approx(0.5)


def test_validation_error_is_422(client):
    # malformed law document: probabilities do not sum to 1
    bad = {"format": "horoprod-law/1", "probs": {"1": 0.5, "3": 0.2}}
    r = client.post(
        "/v1/mass-mean", json={"law": bad, "depth": 4, "replicas": 2, "seed": 1}
    )
    assert r.status_code == 422


def test_domain_error_is_400(client):
    # height exceeds the sampled depth: the window cannot be built
    r = client.post(
        "/v1/build-window",
        json={"left": DET2, "right": DET2, "depth": 3, "height": 9, "seed": 1},
    )
    assert r.status_code == 400
    assert "HorizonExceeded" in r.json()["detail"]


def test_check_failure_is_exit_code_2(client):
    # impossibly strict thresholds turn a sound run into a failed check
    r = client.post(
        "/v1/invariance",
        json={"law": P13, "replicas": 400, "seed": 1,
              "tv_max": 0.0, "p_min": 1.0},
    )
    assert r.status_code == 200
    body = r.json()
    assert body["ok"] is False and body["exit_code"] == 2


def test_raw_config_endpoint(client):
    r = client.post(
        "/v1/run",
        json={"format": "horoprod-config/1", "kind": "sample-tree",
              "law": P13, "depth": 3, "seed": 2},
    )
    assert r.status_code == 200
    assert r.json()["report"]["kind"] == "sample-tree"


def test_raw_config_needs_kind(client):
    r = client.post("/v1/run", json={"law": P13})
    assert r.status_code == 422


def test_sweep_partial_failure_is_exit_code_1(client):
    r = client.post(
        "/v1/sweep",
        json={
            "experiment": "mass-mean",
            "seed": 5,
            "base": {"law": P13, "replicas": 3},
            "grid": [{"depth": 3}, {"depth": -1}],
        },
    )
    assert r.status_code == 200
    body = r.json()
    assert body["exit_code"] == 1
    assert body["cell_status"]["0"] == "ok"
    assert body["cell_status"]["1"].startswith("error")
